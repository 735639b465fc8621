"""Time evolution of the multimode state sector by sector.

Inside a sector only the interaction acts; the free part contributes the
global phase ``exp(-i tau M)`` which is applied when sectors are merged, so
inter-sector coherences (quadratures, Wigner functions) come out right.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .fock_basis import ModeSet, SectorBasis, enumerate_sector, sector_weights
from .hamiltonian import CouplingSet, SparseSymmetric, interaction_matrix

__all__ = [
    "PropagatorConfig",
    "PropagationError",
    "SolverStats",
    "QuantumState",
    "evolve_sector",
    "evolve_full",
    "StreamingEvolution",
    "initial_state",
]

log = logging.getLogger(__name__)

EIGEN_MAX_DIMENSION = 2000


class PropagationError(RuntimeError):
    """The inner solver could not reach the requested accuracy."""


@dataclass(frozen=True)
class PropagatorConfig:
    method: str = "krylov"
    krylov_dim: int = 30
    step_tol: float = 1e-10
    max_step: float = math.inf

    def __post_init__(self):
        if self.method not in ("krylov", "eigen"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be at least 2")
        if not self.step_tol > 0:
            raise ValueError("step_tol must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass
class SolverStats:
    method: str = ""
    steps: int = 0
    rejected: int = 0
    matvecs: int = 0
    max_error_estimate: float = 0.0

    def merge(self, other: "SolverStats") -> None:
        self.steps += other.steps
        self.rejected += other.rejected
        self.matvecs += other.matvecs
        self.max_error_estimate = max(self.max_error_estimate, other.max_error_estimate)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "steps": self.steps,
            "rejected": self.rejected,
            "matvecs": self.matvecs,
            "max_error_estimate": self.max_error_estimate,
        }


def _lanczos(H, v, m):
    """Lanczos with full reorthogonalization.

    Returns the basis ``V`` (n x k), diagonal ``a``, off-diagonal ``b`` and the
    residual norm ``beta_k`` (zero on an invariant subspace).
    """
    n = v.shape[0]
    m = min(m, n)
    V = np.zeros((n, m), dtype=complex)
    a = np.zeros(m)
    b = np.zeros(m)
    nrm = np.linalg.norm(v)
    V[:, 0] = v / nrm
    k = m
    residual = 0.0
    for j in range(m):
        w = H @ V[:, j]
        a[j] = np.vdot(V[:, j], w).real
        w -= a[j] * V[:, j]
        if j > 0:
            w -= b[j - 1] * V[:, j - 1]
        # two passes of Gram-Schmidt against the whole basis
        for _ in range(2):
            w -= V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        beta = np.linalg.norm(w)
        if beta <= 1e-13 * max(1.0, abs(a[j])):
            k, residual = j + 1, 0.0
            break
        if j == m - 1:
            k, residual = m, beta
            break
        b[j] = beta
        V[:, j + 1] = w / beta
    return V[:, :k], a[:k], b[: k - 1], residual, k


def _tridiagonal_eigh(a, b):
    if len(a) == 1:
        return a.copy(), np.ones((1, 1))
    try:
        return eigh_tridiagonal(a, b)
    except np.linalg.LinAlgError:
        # stemr occasionally fails on nearly decoupled Lanczos matrices
        T = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
        return eigh(T)


class _KrylovStepper:
    def __init__(self, H, config: PropagatorConfig, span: float, stats: SolverStats):
        self.H = H
        self.cfg = config
        self.span = max(span, 1e-300)
        self.stats = stats
        self.norm_estimate = None
        self.dt = None

    def run(self, v0, targets):
        """Evolve ``v0`` from 0 through the non-negative, ascending ``targets``."""
        out = []
        t = 0.0
        v = v0.astype(complex)
        i = 0
        while i < len(targets) and targets[i] == 0.0:
            out.append(v.copy())
            i += 1
        while i < len(targets):
            V, a, b, residual, k = _lanczos(self.H, v, self.cfg.krylov_dim)
            self.stats.matvecs += k
            evals, evecs = _tridiagonal_eigh(a, b)
            coeff0 = evecs[0, :].copy()
            vnorm = np.linalg.norm(v)

            def small_exp(dt):
                return evecs @ (np.exp(-1j * dt * evals) * coeff0)

            if self.dt is None:
                spread = float(np.max(np.abs(evals))) if k else 1.0
                self.dt = 1.0 / max(spread, 1e-12)
            remaining = targets[-1] - t
            dt = min(self.dt, self.cfg.max_step, remaining)
            if residual == 0.0:
                dt = min(self.cfg.max_step, remaining)
            while True:
                y = small_exp(dt)
                err = residual * abs(y[-1]) * vnorm if residual else 0.0
                allowed = self.cfg.step_tol * dt / self.span
                if err <= allowed:
                    break
                self.stats.rejected += 1
                shrink = 0.9 * (allowed / err) ** (1.0 / k) if err > 0 else 0.5
                dt *= min(0.5, max(shrink, 0.05))
                if dt < 1e-14 * self.span:
                    raise PropagationError(
                        f"Krylov step underflow at tau={t:.6g} (error estimate {err:.3g})"
                    )
            self.stats.max_error_estimate = max(self.stats.max_error_estimate, err)
            self.stats.steps += 1
            t_new = t + dt
            while i < len(targets) and targets[i] <= t_new * (1 + 1e-15):
                out.append(vnorm * (V @ small_exp(targets[i] - t)))
                i += 1
            v = vnorm * (V @ y)
            t = t_new
            if err > 0:
                grow = 0.9 * (allowed / err) ** (1.0 / k)
                self.dt = dt * min(2.0, max(grow, 1.0))
            else:
                self.dt = 2.0 * dt
        return out


def _evolve_sector(H: SparseSymmetric, v0, taus, config: PropagatorConfig):
    v0 = np.asarray(v0, dtype=complex)
    taus = np.asarray(taus, dtype=float)
    if v0.shape != (H.dimension,):
        raise ValueError(f"state length {v0.shape} does not match matrix dimension {H.dimension}")
    if np.any(np.diff(taus) < 0):
        raise ValueError("taus must be ascending")
    stats = SolverStats(method=config.method)
    out = [None] * len(taus)

    if H.nnz == 0:
        return [v0.copy() for _ in taus], stats

    if config.method == "eigen" or H.dimension <= 2:
        if H.dimension > EIGEN_MAX_DIMENSION:
            raise PropagationError(
                f"eigen method limited to dimension {EIGEN_MAX_DIMENSION}, got {H.dimension}"
            )
        evals, evecs = eigh(H.to_dense())
        c = evecs.T @ v0
        for j, tau in enumerate(taus):
            out[j] = evecs @ (np.exp(-1j * tau * evals) * c)
        stats.steps = 1
        return out, stats

    Hc = H.to_csr()
    span = float(np.max(np.abs(taus))) if len(taus) else 0.0
    neg = np.nonzero(taus < 0)[0]
    pos = np.nonzero(taus >= 0)[0]
    if len(pos):
        res = _KrylovStepper(Hc, config, span, stats).run(v0, taus[pos])
        for j, v in zip(pos, res):
            out[j] = v
    if len(neg):
        # exp(-i(-s)H) = exp(-is(-H)): march with the negated matrix
        back = neg[::-1]
        res = _KrylovStepper(-Hc, config, span, stats).run(v0, -taus[back])
        for j, v in zip(back, res):
            out[j] = v
    return out, stats


def evolve_sector(H: SparseSymmetric, v0, taus, config: PropagatorConfig | None = None):
    """``exp(-i tau H) v0`` for every ``tau`` in the ascending list ``taus``.

    Negative times are allowed. The sector phase ``exp(-i tau M)`` is not applied.
    """
    return _evolve_sector(H, v0, taus, config or PropagatorConfig())[0]


@dataclass
class QuantumState:
    """Snapshot of the truncated multimode state at time ``tau``.

    ``sectors`` maps the weighted photon number ``M`` to its basis and
    amplitude vector (sector phases included).
    """

    modes: ModeSet
    tau: float
    sectors: dict[int, tuple[SectorBasis, np.ndarray]]

    def norm_squared(self) -> float:
        return float(sum(np.vdot(v, v).real for _, v in self.sectors.values()))

    def sector_norms(self) -> dict[int, float]:
        return {M: float(np.linalg.norm(v)) for M, (_, v) in self.sectors.items()}

    def expect_weighted_number(self) -> float:
        return float(sum(M * np.vdot(v, v).real for M, (_, v) in self.sectors.items()))

    def iter_sectors(self):
        for M in sorted(self.sectors):
            yield M, self.sectors[M][0], self.sectors[M][1]


@dataclass
class EvolutionResult:
    states: list[QuantumState]
    weights: dict[int, complex]
    dimensions: dict[int, int]
    stats: SolverStats = field(default_factory=SolverStats)

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]


def initial_state(alpha0: complex, modes: ModeSet, epsilon: float = 1e-8) -> QuantumState:
    sectors = {}
    for w in sector_weights(alpha0, epsilon):
        basis = enumerate_sector(modes, w.M)
        v = np.zeros(basis.dimension, dtype=complex)
        v[0] = w.amplitude
        sectors[w.M] = (basis, v)
    return QuantumState(modes, 0.0, sectors)


class StreamingEvolution:
    """Snapshots of ``|alpha0> (x) |0> ... |0>`` produced a block of times at a time.

    Sector matrices are built once; the sector vectors are then marched from
    block to block, so at most ``block`` snapshots live in memory. With
    ``max_bytes`` the block length is chosen so the amplitudes of one block fit
    that budget; by default all times form one block.
    """

    def __init__(
        self,
        alpha0: complex,
        modes,
        couplings: CouplingSet,
        taus,
        epsilon: float = 1e-8,
        config: PropagatorConfig | None = None,
        threads: int = 1,
        matrix_hook=None,
        max_bytes: int | None = None,
    ):
        self.config = config or PropagatorConfig()
        self.modes = modes if isinstance(modes, ModeSet) else ModeSet(tuple(modes))
        self.taus = np.asarray(taus, dtype=float)
        if self.taus.ndim != 1 or np.any(np.diff(self.taus) < 0):
            raise ValueError("taus must be a one-dimensional ascending sequence")
        self.threads = threads
        self._weights = sector_weights(alpha0, epsilon)

        def build(w):
            basis = enumerate_sector(self.modes, w.M)
            H = interaction_matrix(basis, couplings)
            if matrix_hook is not None:
                matrix_hook(w.M, H)
            return basis, H

        self._sectors = self._map(build, self._weights)
        self.weights = {w.M: w.amplitude for w in self._weights}
        self.dimensions = {w.M: b.dimension for w, (b, _) in zip(self._weights, self._sectors)}
        total = sum(self.dimensions.values())
        if max_bytes is None:
            self.block = max(1, len(self.taus))
        else:
            self.block = max(1, int(max_bytes) // (16 * max(total, 1)))
        self.stats = SolverStats(method=self.config.method)

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(x) for x in items]
        workers = None if self.threads == 0 else self.threads
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def __len__(self):
        return len(self.taus)

    def __iter__(self):
        current = []
        for basis, _ in self._sectors:
            v0 = np.zeros(basis.dimension, dtype=complex)
            v0[0] = 1.0
            current.append(v0)
        t_cur = 0.0
        order = sorted(range(len(self._weights)), key=lambda i: self._weights[i].M)
        for lo in range(0, len(self.taus), self.block):
            chunk = self.taus[lo : lo + self.block]

            def job(i, chunk=chunk, t_cur=t_cur):
                w = self._weights[i]
                try:
                    return _evolve_sector(self._sectors[i][1], current[i], chunk - t_cur, self.config)
                except PropagationError as exc:
                    raise PropagationError(f"sector M={w.M}: {exc}") from exc

            results = self._map(job, range(len(self._weights)))
            for _, stats in results:
                self.stats.merge(stats)
            for j, tau in enumerate(chunk):
                sectors = {}
                for i in order:
                    w = self._weights[i]
                    sectors[w.M] = (self._sectors[i][0], w.amplitude * np.exp(-1j * tau * w.M) * results[i][0][j])
                yield QuantumState(self.modes, float(tau), sectors)
            current = [vecs[-1] for vecs, _ in results]
            t_cur = float(chunk[-1])


def evolve_full(
    alpha0: complex,
    modes,
    couplings: CouplingSet,
    taus,
    epsilon: float = 1e-8,
    config: PropagatorConfig | None = None,
    threads: int = 1,
    matrix_hook=None,
) -> EvolutionResult:
    """Evolve ``|alpha0> (x) |0> ... |0>`` and return one snapshot per ``tau``.

    ``threads`` > 1 (or 0 for one per CPU) runs sectors concurrently; the merge
    is keyed by sector label so the result does not depend on completion order.
    ``matrix_hook(M, matrix)`` is called for every assembled sector matrix.
    """
    stream = StreamingEvolution(alpha0, modes, couplings, taus, epsilon, config, threads, matrix_hook)
    states = list(stream)
    return EvolutionResult(states=states, weights=stream.weights, dimensions=stream.dimensions, stats=stream.stats)
