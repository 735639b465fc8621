"""Fock basis of the conserved weighted-photon-number sectors.

A sector ``M`` collects every occupation vector ``(n0, occ_1, ..., occ_K)``
with ``n0 + sum_k order_k * occ_k == M``. States are stored as rows of an
integer array whose first column is the fundamental-mode count and whose
remaining columns follow the harmonic orders in ascending order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

__all__ = [
    "ModeSet",
    "OccupationVector",
    "SectorBasis",
    "SectorWeight",
    "enumerate_sector",
    "sector_weights",
    "coherent_log_amplitude",
]


@dataclass(frozen=True)
class ModeSet:
    """Harmonic orders of the HH modes; the fundamental (order 1) is implicit."""

    orders: tuple[int, ...]

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        if not orders:
            raise ValueError("ModeSet needs at least one harmonic order")
        if any(n < 2 for n in orders):
            raise ValueError(f"harmonic orders must be >= 2, got {orders}")
        if len(set(orders)) != len(orders):
            raise ValueError(f"harmonic orders must be distinct, got {orders}")
        object.__setattr__(self, "orders", tuple(sorted(orders)))

    def __len__(self):
        return len(self.orders)

    def __iter__(self):
        return iter(self.orders)

    def column(self, mode: int) -> int:
        """Column of ``mode`` in a basis array (0 is the fundamental)."""
        if mode == 0:
            return 0
        try:
            return 1 + self.orders.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode {mode!r}; known modes are 0 and {self.orders}") from None

    @property
    def labels(self) -> tuple[int, ...]:
        return (0,) + self.orders


@dataclass(frozen=True)
class OccupationVector:
    n0: int
    occ: tuple[int, ...]

    def __post_init__(self):
        if self.n0 < 0 or any(k < 0 for k in self.occ):
            raise ValueError("occupation numbers must be non-negative")

    def weighted_number(self, modes: ModeSet) -> int:
        return self.n0 + sum(n * k for n, k in zip(modes.orders, self.occ))


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Canonically ordered basis of one sector.

    Ordering is lexicographic in the occupation of the highest order first,
    down to the lowest order; ``n0`` is then fixed by ``M``. The first state
    is therefore always ``|M, 0, ..., 0>``.
    """

    modes: ModeSet
    M: int
    states: np.ndarray
    _keys: np.ndarray = field(repr=False)
    _strides: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.dimension

    def _encode(self, occ: np.ndarray) -> np.ndarray:
        return np.asarray(occ, dtype=np.int64) @ self._strides

    def positions(self, occ: np.ndarray) -> np.ndarray:
        """Vectorized reverse lookup; ``occ`` has one row per HH occupation vector.

        Returns -1 where the occupation is not part of this sector.
        """
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        valid = np.all(occ >= 0, axis=1)
        valid &= occ @ np.asarray(self.modes.orders, dtype=np.int64) <= self.M
        keys = self._encode(np.where(valid[:, None], occ, 0))
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self.dimension - 1)
        found = valid & (self._keys[pos] == keys)
        return np.where(found, pos, -1)

    def index(self, state) -> int:
        """Position of an occupation vector (``OccupationVector`` or full row ``(n0, *occ)``)."""
        if isinstance(state, OccupationVector):
            n0, occ = state.n0, state.occ
        else:
            n0, *occ = state
        if len(occ) != len(self.modes):
            raise KeyError(state)
        if n0 + sum(n * k for n, k in zip(self.modes.orders, occ)) != self.M:
            raise KeyError(state)
        pos = int(self.positions(np.asarray(occ))[0])
        if pos < 0:
            raise KeyError(state)
        return pos

    def occupation(self, i: int) -> OccupationVector:
        row = self.states[i]
        return OccupationVector(int(row[0]), tuple(int(k) for k in row[1:]))

    def __iter__(self):
        return (self.occupation(i) for i in range(self.dimension))


def _compositions(orders: tuple[int, ...], budget: int) -> list[tuple[int, ...]]:
    # orders given highest first; yields occupations in lexicographic order
    if not orders:
        return [()]
    n, rest = orders[0], orders[1:]
    out = []
    for k in range(budget // n + 1):
        for tail in _compositions(rest, budget - n * k):
            out.append((k,) + tail)
    return out


def enumerate_sector(modes: ModeSet, M: int) -> SectorBasis:
    """All occupation vectors with weighted photon number exactly ``M``."""
    M = int(M)
    if M < 0:
        raise ValueError(f"sector label must be non-negative, got {M}")
    desc = modes.orders[::-1]
    occ_desc = np.array(_compositions(desc, M), dtype=np.int64).reshape(-1, len(desc))
    occ = occ_desc[:, ::-1]
    n0 = M - occ @ np.asarray(modes.orders, dtype=np.int64)
    states = np.column_stack([n0, occ])

    # mixed radix key, highest order most significant -> ascending in canonical order
    radices = np.array([M // n + 1 for n in modes.orders], dtype=np.int64)
    strides = np.empty(len(modes), dtype=np.int64)
    acc = 1
    for i in range(len(modes)):
        strides[i] = acc
        acc *= radices[i]
    keys = occ @ strides
    if np.any(np.diff(keys) <= 0):
        raise AssertionError("sector enumeration is not in canonical order")
    return SectorBasis(modes=modes, M=M, states=states, _keys=keys, _strides=strides)


@dataclass(frozen=True)
class SectorWeight:
    M: int
    amplitude: complex

    @property
    def probability(self) -> float:
        return abs(self.amplitude) ** 2


def coherent_log_amplitude(alpha0: complex, M: int | np.ndarray):
    """``log|<M|alpha0>|`` computed through log-Gamma; -inf for alpha0 = 0, M > 0."""
    r = abs(alpha0)
    M = np.asarray(M, dtype=float)
    if r == 0.0:
        return np.where(M == 0, 0.0, -np.inf)
    from scipy.special import gammaln

    return -0.5 * r * r + M * math.log(r) - 0.5 * gammaln(M + 1.0)


def sector_weights(alpha0: complex, epsilon: float = 1e-8) -> list[SectorWeight]:
    """Smallest contiguous set of sectors whose discarded Poisson mass is at most ``epsilon``.

    The search starts at ``round(|alpha0|^2)`` and grows towards whichever
    neighbour carries more mass. Discarded mass on both sides comes from the
    Poisson tail functions, so ``epsilon`` may lie far below machine precision.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    alpha0 = complex(alpha0)
    if alpha0 == 0:
        return [SectorWeight(0, 1.0 + 0j)]
    lam = abs(alpha0) ** 2

    def log_prob(m):
        return 2.0 * float(coherent_log_amplitude(alpha0, m))

    lo = hi = int(round(lam))
    left = poisson.cdf(lo - 1, lam)
    right = poisson.sf(hi, lam)
    while left + right > epsilon:
        p_lo = log_prob(lo - 1) if lo > 0 else -math.inf
        p_hi = log_prob(hi + 1)
        if p_hi >= p_lo:
            hi += 1
            right = poisson.sf(hi, lam)
        else:
            lo -= 1
            left = poisson.cdf(lo - 1, lam) if lo > 0 else 0.0

    phase = math.atan2(alpha0.imag, alpha0.real)
    out = []
    for m in range(lo, hi + 1):
        mag = math.exp(float(coherent_log_amplitude(alpha0, m)))
        out.append(SectorWeight(m, mag * complex(math.cos(m * phase), math.sin(m * phase))))
    return out
