"""Single-mode observables of a multimode ``QuantumState``.

Mode labels: ``0`` is the fundamental, any other integer is a harmonic order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .propagator import QuantumState

__all__ = [
    "ModeDensityMatrix",
    "PhotonDistribution",
    "WignerGrid",
    "CutoffWarning",
    "reduced_density",
    "photon_distribution",
    "moments",
    "mandel_q",
    "purity",
    "quadratures",
    "wigner",
    "wigner_grid",
]


class CutoffWarning(UserWarning):
    pass


@dataclass
class ModeDensityMatrix:
    mode: int
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.entries).real.copy()

    def truncated(self, dim: int) -> "ModeDensityMatrix":
        return ModeDensityMatrix(self.mode, self.entries[:dim, :dim].copy())


@dataclass
class PhotonDistribution:
    mode: int
    probabilities: np.ndarray

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def mean(self) -> float:
        return moments(self)[0]


@dataclass
class WignerGrid:
    mode: int
    points: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        """Riemann sum of ``W d^2 alpha`` on a rectangular (re, im) grid."""
        pts = self.points
        if pts.ndim != 2:
            raise ValueError("integral needs a 2D meshgrid of points")
        dx = abs(pts[0, 1].real - pts[0, 0].real) if pts.shape[1] > 1 else 1.0
        dy = abs(pts[1, 0].imag - pts[0, 0].imag) if pts.shape[0] > 1 else 1.0
        return float(self.values.sum() * dx * dy)


def _column(state: QuantumState, mode: int) -> int:
    return state.modes.column(mode)


def photon_distribution(state: QuantumState, mode: int) -> PhotonDistribution:
    """Photon-number probabilities of one mode, summed directly from amplitudes."""
    col = _column(state, mode)
    counts, weights = [], []
    for _, basis, amps in state.iter_sectors():
        counts.append(basis.states[:, col])
        weights.append(np.abs(amps) ** 2)
    counts = np.concatenate(counts)
    weights = np.concatenate(weights)
    return PhotonDistribution(mode, np.bincount(counts, weights=weights))


def reduced_density(state: QuantumState, mode: int) -> ModeDensityMatrix:
    """Partial trace of ``|Psi><Psi|`` over every mode except ``mode``.

    Amplitudes from different sectors that share the occupation of all the
    other modes interfere, which fills the off-diagonals.
    """
    col = _column(state, mode)
    occ, rest, amps = [], [], []
    for _, basis, v in state.iter_sectors():
        occ.append(basis.states[:, col])
        rest.append(np.delete(basis.states, col, axis=1))
        amps.append(v)
    occ = np.concatenate(occ)
    rest = np.concatenate(rest)
    amps = np.concatenate(amps)
    _, key = np.unique(rest, axis=0, return_inverse=True)
    key = key.ravel()
    dim = int(occ.max()) + 1
    C = sp.csr_matrix((amps, (key, occ)), shape=(int(key.max()) + 1, dim))
    rho = (C.T @ C.conj()).toarray()
    rho = 0.5 * (rho + rho.conj().T)
    return ModeDensityMatrix(mode, rho)


def moments(dist: PhotonDistribution) -> tuple[float, float]:
    """Mean and second moment, normalized to the retained probability mass."""
    p = dist.probabilities
    total = p.sum()
    if total <= 0:
        raise ValueError("empty photon distribution")
    m = np.arange(len(p))
    return float(m @ p / total), float((m * m) @ p / total)


def mandel_q(dist: PhotonDistribution) -> float:
    """``Q = (<m^2> - <m>^2) / <m> - 1``.

    Evaluated through the factorial moment ``<m(m-1)>`` to avoid one
    cancellation; undefined (``ValueError``) for a distribution with zero mean.
    """
    p = dist.probabilities
    total = p.sum()
    if total <= 0:
        raise ValueError("empty photon distribution")
    m = np.arange(len(p), dtype=float)
    mean = float(m @ p / total)
    if mean <= 0.0:
        raise ValueError(f"Mandel parameter undefined for zero mean (mode {dist.mode})")
    fact = float((m * (m - 1.0)) @ p / total)
    return (fact - mean * mean) / mean


def purity(rho: ModeDensityMatrix) -> float:
    """``Tr rho^2``."""
    return float(np.sum(np.abs(rho.entries) ** 2))


def quadratures(state_or_rho, mode: int | None = None) -> tuple[float, float]:
    """``(<X>, <Y>)`` with ``X = (a^dag + a)/2`` and ``Y = i(a^dag - a)/2``."""
    if isinstance(state_or_rho, ModeDensityMatrix):
        rho = state_or_rho
    else:
        rho = reduced_density(state_or_rho, mode)
    r = rho.entries
    if rho.dim < 2:
        return 0.0, 0.0
    k = np.arange(1, rho.dim)
    a = complex(np.sum(np.sqrt(k) * np.diagonal(r, offset=-1)))
    return a.real, a.imag


def _tail_cutoff(rho: ModeDensityMatrix, tail_tol: float) -> int:
    diag = rho.diagonal()
    tail = np.cumsum(diag[::-1])[::-1]
    # smallest d with sum_{m >= d} p_m < tail_tol
    below = np.nonzero(tail < tail_tol)[0]
    return int(below[0]) if len(below) else rho.dim


def _displaced_parity_sums(r: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``sum_{j,k} r_jk (-1)^j <k|D(beta)|j>`` for every ``beta``.

    Along each diagonal offset ``d = k - j`` the elements are
    ``e^{i d arg beta} f_j`` with the normalized Laguerre functions
    ``f_j = (-1)^j sqrt(j!/(j+d)!) x^{d/2} e^{-x/2} L_j^{(d)}(x)``, ``x = |beta|^2``,
    advanced by the forward three-term recurrence
    ``f_{j+1} = [(x - 2j - 1 - d) f_j - sqrt(j(j+d)) f_{j-1}] / sqrt((j+1)(j+1+d))``.
    A per-point log scale absorbs the ``x^{d/2} e^{-x/2}`` prefactor.
    """
    dim = r.shape[0]
    x = np.abs(beta) ** 2
    phase = np.exp(1j * np.angle(beta))
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    total = np.zeros(beta.shape, dtype=complex)
    for d in range(dim):
        coeffs = np.diagonal(r, offset=d)
        if not np.any(coeffs):
            continue
        if d == 0:
            logscale = -0.5 * x
        else:
            logscale = np.where(x > 0, 0.5 * d * logx - 0.5 * x - 0.5 * math.lgamma(d + 1), -np.inf)
        f_prev = np.zeros(beta.shape)
        f_cur = np.ones(beta.shape)
        acc = coeffs[0] * f_cur
        for j in range(len(coeffs) - 1):
            f_next = ((x - 2 * j - 1 - d) * f_cur - math.sqrt(j * (j + d)) * f_prev) / math.sqrt(
                (j + 1) * (j + 1 + d)
            )
            f_prev, f_cur = f_cur, f_next
            acc = acc + coeffs[j + 1] * f_cur
            big = np.abs(f_cur)
            if np.any(big > 1e100):
                s = np.where(big > 1e100, big, 1.0)
                f_prev, f_cur, acc = f_prev / s, f_cur / s, acc / s
                logscale = logscale + np.log(s)
        term = acc * np.exp(logscale)
        if d == 0:
            total += term.real
        else:
            total += 2.0 * np.real(term * phase**d)
    return total.real


def wigner(rho: ModeDensityMatrix, grid, tail_tol: float = 1e-20, deficit_warn: float = 1e-6) -> WignerGrid:
    """``W(alpha) = (2/pi) Tr[rho D(alpha) P D^dag(alpha)]``, normalized to 1 over the plane.

    Uses ``D(alpha) P D^dag(alpha) = D(2 alpha) P``. ``rho`` is trimmed to the
    smallest photon number beyond which its diagonal carries less than
    ``tail_tol``; a ``CutoffWarning`` is raised when ``rho`` itself misses
    more than ``deficit_warn`` of probability.
    """
    points = np.asarray(grid, dtype=complex)
    if not np.all(np.isfinite(points)):
        raise ValueError("Wigner grid must be finite")
    deficit = 1.0 - rho.trace()
    if deficit > deficit_warn:
        warnings.warn(
            f"reduced density matrix of mode {rho.mode} misses probability {deficit:.3g}",
            CutoffWarning,
            stacklevel=2,
        )
    dim = max(1, _tail_cutoff(rho, tail_tol))
    values = (2.0 / math.pi) * _displaced_parity_sums(rho.entries[:dim, :dim], 2.0 * points.ravel())
    return WignerGrid(rho.mode, points, values.reshape(points.shape))


def wigner_grid(re_range, im_range) -> np.ndarray:
    """Meshgrid of complex points from ``(start, stop, count)`` triples; rows follow Im."""
    x = np.linspace(*re_range[:2], int(re_range[2]))
    y = np.linspace(*im_range[:2], int(im_range[2]))
    X, Y = np.meshgrid(x, y)
    return X + 1j * Y
