"""Coupling constants and the sector-restricted interaction matrix.

All energies are in units of the fundamental frequency, so the matrix built
here is ``H_I / (hbar omega)`` and times are the dimensionless ``tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .fock_basis import ModeSet, SectorBasis

__all__ = [
    "CouplingSet",
    "SparseSymmetric",
    "plateau_couplings",
    "experimental_couplings",
    "explicit_couplings",
    "interaction_matrix",
    "sqrt_falling_factorial",
]

# above this photon number the falling factorial is accumulated in log space
LOG_PATH_THRESHOLD = 10_000


@dataclass(frozen=True)
class CouplingSet:
    chi: dict[int, float]
    provenance: str = "explicit"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        chi = {int(n): float(c) for n, c in self.chi.items()}
        for n, c in chi.items():
            if not math.isfinite(c):
                raise ValueError(f"coupling chi_{n} is not finite: {c}")
        object.__setattr__(self, "chi", dict(sorted(chi.items())))

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(self.chi)

    def modes(self) -> ModeSet:
        return ModeSet(self.orders)

    def __getitem__(self, n: int) -> float:
        return self.chi[n]

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.chi.values())


def _orders_of(modes) -> tuple[int, ...]:
    return modes.orders if isinstance(modes, ModeSet) else ModeSet(tuple(modes)).orders


def plateau_couplings(p: float, alpha0: complex, modes) -> CouplingSet:
    """``chi_n = p / (sqrt(n) |alpha0|^n)``: equal irradiated energy in every harmonic."""
    r = abs(alpha0)
    if r == 0:
        raise ValueError("plateau couplings need a non-zero alpha0")
    if not p > 0:
        raise ValueError(f"plateau parameter p must be positive, got {p}")
    chi = {n: p * math.exp(-0.5 * math.log(n) - n * math.log(r)) for n in _orders_of(modes)}
    return CouplingSet(chi, "plateau", {"p": float(p)})


def experimental_couplings(
    h: Mapping[int, float],
    reference: int,
    alpha0: complex,
    chi_reference: float | None = None,
    p: float = 1.0,
) -> CouplingSet:
    """Couplings reproducing measured relative peak heights ``h_n``.

    Only ratios are fixed by the heights; the overall scale is ``chi_reference``
    (by default the plateau value ``p / (sqrt(ref) |alpha0|^ref)``).
    """
    h = {int(n): float(v) for n, v in h.items()}
    reference = int(reference)
    if reference not in h:
        raise ValueError(f"relative heights lack the reference order {reference}")
    if any(not v > 0 for v in h.values()):
        raise ValueError(f"relative heights must be positive, got {h}")
    if not math.isclose(h[reference], 1.0, rel_tol=1e-12):
        raise ValueError(f"h[{reference}] must equal 1, got {h[reference]}")
    r = abs(alpha0)
    if r == 0:
        raise ValueError("experimental couplings need a non-zero alpha0")
    ModeSet(tuple(h))
    if chi_reference is None:
        chi_reference = plateau_couplings(p, alpha0, (reference,))[reference]
    log_r = math.log(r)
    chi = {}
    for n, hn in h.items():
        # chi_ref / chi_n = sqrt(n) r^n / (sqrt(h_n ref) r^ref)
        log_ratio = 0.5 * math.log(hn * reference) + reference * log_r - 0.5 * math.log(n) - n * log_r
        chi[n] = chi_reference * math.exp(log_ratio)
    details = {"h": dict(sorted(h.items())), "reference": reference, "chi_reference": float(chi_reference)}
    return CouplingSet(chi, "experimental", details)


def explicit_couplings(chi: Mapping[int, float]) -> CouplingSet:
    ModeSet(tuple(int(n) for n in chi))
    return CouplingSet(dict(chi), "explicit")


@dataclass(frozen=True, eq=False)
class SparseSymmetric:
    """Real symmetric matrix kept as its upper triangle (``row <= col``)."""

    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_csr(self) -> sp.csr_matrix:
        n = self.dimension
        upper = sp.coo_matrix((self.values, (self.rows, self.cols)), shape=(n, n))
        diag = sp.diags(upper.diagonal())
        return (upper + upper.T - diag).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def dump(self, path) -> None:
        """Write ``row col value`` triplets (upper triangle, 0-based)."""
        with open(path, "w") as fh:
            fh.write(f"# dimension {self.dimension}\n")
            for r, c, v in self.entries:
                fh.write(f"{r} {c} {v!r}\n")


def sqrt_falling_factorial(n0: np.ndarray, n: int) -> np.ndarray:
    """``sqrt(n0! / (n0 - n)!)`` for each entry of ``n0`` (entries must be >= n)."""
    n0 = np.asarray(n0, dtype=np.int64)
    out = np.empty(n0.shape, dtype=float)
    big = n0 > LOG_PATH_THRESHOLD
    small = ~big
    if np.any(small):
        prod = np.ones(int(small.sum()))
        base = n0[small].astype(float)
        for i in range(n):
            prod *= base - i
        out[small] = np.sqrt(prod)
    if np.any(big):
        base = n0[big].astype(float)
        logs = np.zeros(base.shape)
        for i in range(n):
            logs += np.log(base - i)
        out[big] = np.exp(0.5 * logs)
    return out


def interaction_matrix(basis: SectorBasis, couplings: CouplingSet) -> SparseSymmetric:
    """Matrix of ``sum_n chi_n (a_n^dag A^n + h.c.)`` within one sector.

    The coupling ``a_n^dag A^n`` maps ``(n0, occ_n)`` to ``(n0 - n, occ_n + 1)``
    with amplitude ``chi_n sqrt(occ_n + 1) sqrt(n0! / (n0 - n)!)``. The target
    always sits later in canonical order, so every entry lands above the diagonal.
    """
    if couplings.orders != basis.modes.orders:
        raise ValueError(
            f"couplings cover orders {couplings.orders} but the basis has {basis.modes.orders}"
        )
    states = basis.states
    occ = states[:, 1:]
    rows, cols, vals = [], [], []
    for k, n in enumerate(basis.modes.orders):
        chi = couplings[n]
        if chi == 0.0:
            continue
        src = np.nonzero(states[:, 0] >= n)[0]
        if len(src) == 0:
            continue
        target = occ[src].copy()
        target[:, k] += 1
        dst = basis.positions(target)
        if np.any(dst < 0):
            raise AssertionError("ladder action left the sector")
        amp = chi * np.sqrt(occ[src, k] + 1.0) * sqrt_falling_factorial(states[src, 0], n)
        rows.append(src)
        cols.append(dst)
        vals.append(amp)
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    return SparseSymmetric(basis.dimension, r, c, v)
