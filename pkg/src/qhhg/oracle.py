"""Short-time series for the exact dynamics, used as independent checks.

Every series here contains only even powers of ``tau``: the initial state is
invariant under the product of the harmonic-mode parities, and the
interaction anticommutes with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import CouplingSet

__all__ = ["ShortTimeExpansion", "q2_leading", "loglog_slope", "hh_q_order_check", "OrderCheck"]


@dataclass(frozen=True)
class ShortTimeExpansion:
    couplings: CouplingSet
    alpha0: complex

    @property
    def terms(self) -> dict[str, float]:
        """Coefficients of ``tau^0`` and ``tau^2`` of each fundamental-mode series."""
        r2 = abs(self.alpha0) ** 2
        s_mean = s_second = s_q = 0.0
        for n, chi in self.couplings.chi.items():
            w = chi**2 * r2**n
            s_mean += n * w
            s_second += w * (n * n + 2 * n * r2)
            s_q += (n * n - n) * chi**2 * r2 ** (n - 1)
        return {
            "mean_0": r2,
            "mean_2": -s_mean,
            "second_0": r2 * r2 + r2,
            "second_2": -s_second,
            "q0_2": -s_q,
        }

    def fundamental_mean(self, tau):
        t = self.terms
        return t["mean_0"] + t["mean_2"] * np.asarray(tau, dtype=float) ** 2

    def fundamental_second_moment(self, tau):
        t = self.terms
        return t["second_0"] + t["second_2"] * np.asarray(tau, dtype=float) ** 2

    def q0_leading(self, tau):
        return self.terms["q0_2"] * np.asarray(tau, dtype=float) ** 2

    def hh_mean_leading(self, tau, n: int):
        return self.couplings[n] ** 2 * abs(self.alpha0) ** (2 * n) * np.asarray(tau, dtype=float) ** 2


def q2_leading(tau, chi2: float, alpha0: complex):
    """Leading ``tau^4`` term of the Mandel parameter for a lone second harmonic."""
    return -(4.0 / 3.0) * np.asarray(tau, dtype=float) ** 4 * chi2**4 * abs(alpha0) ** 4


def loglog_slope(taus, values) -> float:
    taus = np.asarray(taus, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if len(taus) < 2 or np.any(taus <= 0) or np.any(values <= 0):
        raise ValueError("log-log slope needs positive times and non-zero values")
    slope, _ = np.polyfit(np.log(taus), np.log(values), 1)
    return float(slope)


@dataclass(frozen=True)
class OrderCheck:
    slope: float
    expected: float
    tolerance: float
    skipped: bool = False

    @property
    def passed(self) -> bool:
        return self.skipped or abs(self.slope - self.expected) <= self.tolerance


def hh_q_order_check(taus, q_values, expected: float = 4.0, tolerance: float = 0.2) -> OrderCheck:
    """Fit the log-log slope of ``|Q|`` on an early window (at least 8 points).

    An identically zero series (no coupling) skips the check.
    """
    q = np.asarray(q_values, dtype=float)
    if len(q) < 8:
        raise ValueError("slope fits need at least 8 time points")
    if np.all(q == 0):
        return OrderCheck(float("nan"), expected, tolerance, skipped=True)
    return OrderCheck(loglog_slope(taus, q), expected, tolerance)
