"""Closed-form parametric approximation and the pulsed-excitation field model.

With the fundamental replaced by its free coherent amplitude, each harmonic
``n`` is a driven oscillator whose state stays coherent with parameter
``beta_n(tau) = -i tau chi_n alpha0^n exp(-i n tau)``.

Field units use ``hbar = 2 eps0 V = 1`` so the single-photon field of a mode
at frequency ``nu`` is ``sqrt(nu)``. Every frequency is in units of the
fundamental ``omega``. The multimode harmonic field assumes each exciting
component feeds its own harmonic independently, so its output is only
qualitative.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import CouplingSet

__all__ = [
    "ParametricPrediction",
    "PulseSpec",
    "coherent_parameter",
    "photon_number",
    "predict",
    "plateau_check",
    "gaussian_pulse",
    "fit_pulse",
    "fit_gaussian_pulse",
    "fundamental_field",
    "harmonic_field",
    "harmonic_envelope",
]


def _alpha_power(alpha0: complex, n: int) -> complex:
    r, phi = abs(alpha0), cmath.phase(alpha0)
    return (r**n) * cmath.exp(1j * n * phi)


def coherent_parameter(tau, n: int, couplings: CouplingSet, alpha0: complex):
    """``-i tau chi_n alpha0^n exp(-i n tau)``; vectorized over ``tau``."""
    tau = np.asarray(tau, dtype=float)
    chi = couplings[n]
    out = -1j * tau * chi * _alpha_power(alpha0, n) * np.exp(-1j * n * tau)
    return out if out.ndim else complex(out)


def photon_number(tau, n: int, couplings: CouplingSet, alpha0: complex):
    """Quadratic photon-number law ``tau^2 chi_n^2 |alpha0|^(2n)``."""
    tau = np.asarray(tau, dtype=float)
    out = tau**2 * couplings[n] ** 2 * abs(alpha0) ** (2 * n)
    return out if out.ndim else float(out)


@dataclass
class ParametricPrediction:
    n: int
    tau: np.ndarray
    beta: np.ndarray
    nbar: np.ndarray

    @property
    def weighted(self) -> np.ndarray:
        return self.n * self.nbar


def predict(taus, n: int, couplings: CouplingSet, alpha0: complex) -> ParametricPrediction:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    beta = np.atleast_1d(coherent_parameter(taus, n, couplings, alpha0))
    return ParametricPrediction(n, taus, beta, np.abs(beta) ** 2)


def plateau_check(a: ParametricPrediction, b: ParametricPrediction) -> np.ndarray:
    """``n nbar_n / (n' nbar_n')`` at every time where both are non-zero."""
    if not np.array_equal(a.tau, b.tau):
        raise ValueError("predictions must share the same time grid")
    num, den = a.weighted, b.weighted
    ok = (num != 0) & (den != 0)
    return num[ok] / den[ok]


@dataclass
class PulseSpec:
    """Discrete multimode coherent excitation.

    ``mode_scale`` selects the single-photon field amplitude: ``"sqrt"``
    uses ``sqrt(nu)``; ``"narrowband"`` freezes it at the nearest harmonic of
    ``carrier`` (``sqrt(k * carrier)`` with ``k = round(nu / carrier)``), the
    quasi-monochromatic limit in which the Gaussian-pulse harmonic
    waveform is exactly Gaussian.
    """

    frequencies: np.ndarray
    amplitudes: np.ndarray
    mode_scale: str = "sqrt"
    carrier: float = 1.0
    residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.frequencies.shape != self.amplitudes.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and amplitudes must be 1D arrays of equal length")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("pulse frequency grid must be strictly ascending")
        if np.any(self.frequencies <= 0):
            raise ValueError("pulse frequencies must be positive")
        if self.mode_scale not in ("sqrt", "narrowband"):
            raise ValueError(f"unknown mode_scale {self.mode_scale!r}")

    def scale(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        if self.mode_scale == "sqrt":
            return np.sqrt(nu)
        k = np.maximum(np.rint(nu / self.carrier), 1.0)
        return np.sqrt(k * self.carrier)

    def harmonic_scale(self, n: int) -> np.ndarray:
        """Single-photon field of the ``n``-th harmonic of every grid component.

        ``sqrt(n w_m)`` for ``"sqrt"``; for ``"narrowband"`` the harmonic of a
        component is pinned to ``n`` times its nearest carrier harmonic.
        """
        if self.mode_scale == "sqrt":
            return np.sqrt(n * self.frequencies)
        return math.sqrt(n) * self.scale(self.frequencies)

    def to_dict(self) -> dict:
        return {
            "type": "spec",
            "frequencies": self.frequencies.tolist(),
            "amplitudes_re": self.amplitudes.real.tolist(),
            "amplitudes_im": self.amplitudes.imag.tolist(),
            "mode_scale": self.mode_scale,
            "carrier": self.carrier,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSpec":
        amps = np.asarray(d["amplitudes_re"], dtype=float) + 1j * np.asarray(d["amplitudes_im"], dtype=float)
        return cls(d["frequencies"], amps, d.get("mode_scale", "sqrt"), float(d.get("carrier", 1.0)))


def gaussian_pulse(t, E0: float, tau_p: float, omega: float = 1.0):
    """``E0 exp(-t^2 / tau_p^2) sin(omega t)``."""
    t = np.asarray(t, dtype=float)
    return E0 * np.exp(-(t**2) / tau_p**2) * np.sin(omega * t)


def fundamental_field(pulse: PulseSpec, taus) -> np.ndarray:
    """``i sum_m E(w_m) [alpha_m e^{-i w_m tau} - c.c.]``, i.e. ``-2 sum E Im(alpha e^{-i w tau})``."""
    taus = np.asarray(taus, dtype=float)
    phase = np.exp(-1j * np.outer(taus, pulse.frequencies))
    return -2.0 * np.imag(phase * pulse.amplitudes) @ pulse.scale(pulse.frequencies)


def fit_pulse(times, samples, frequencies, mode_scale: str = "sqrt", carrier: float = 1.0) -> PulseSpec:
    """Least-squares mode amplitudes reproducing a sampled waveform.

    Each mode contributes ``2 E(w) (a sin(w t) - b cos(w t))`` for
    ``alpha = a + i b``; the real system is solved with ``numpy.linalg.lstsq``.
    The maximum absolute residual at the samples is stored on the result.
    """
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    freqs = np.asarray(frequencies, dtype=float)
    if len(np.unique(freqs)) != len(freqs):
        raise ValueError("pulse frequency grid contains duplicate frequencies")
    order = np.argsort(freqs)
    freqs = freqs[order]
    probe = PulseSpec(freqs, np.zeros(len(freqs)), mode_scale, carrier)
    if times.shape != samples.shape:
        raise ValueError("times and samples must have the same shape")
    if not np.any(samples):
        probe.residual = 0.0
        return probe
    s = probe.scale(freqs)
    wt = np.outer(times, freqs)
    design = np.hstack([2.0 * s * np.sin(wt), -2.0 * s * np.cos(wt)])
    coef, *_ = np.linalg.lstsq(design, samples, rcond=None)
    k = len(freqs)
    pulse = PulseSpec(freqs, coef[:k] + 1j * coef[k:], mode_scale, carrier)
    pulse.residual = float(np.max(np.abs(design @ coef - samples)))
    return pulse


def fit_gaussian_pulse(
    E0: float,
    tau_p: float,
    frequencies,
    omega: float = 1.0,
    mode_scale: str = "sqrt",
    window: float | None = None,
    samples_per_mode: int = 4,
) -> PulseSpec:
    """Fit a Gaussian-enveloped sine on a symmetric sampling window.

    The default window is one full period ``2 pi / d_omega`` of the grid, on
    which the mode functions are orthogonal.
    """
    freqs = np.sort(np.asarray(frequencies, dtype=float))
    if len(freqs) < 2:
        raise ValueError("need at least two frequencies")
    dw = float(np.min(np.diff(freqs)))
    if window is None:
        window = 2.0 * math.pi / dw
    count = max(samples_per_mode * len(freqs), int(4 * window * freqs[-1] / math.pi) + 1)
    t = np.linspace(-window / 2, window / 2, count, endpoint=False)
    pulse = fit_pulse(t, gaussian_pulse(t, E0, tau_p, omega), freqs, mode_scale, omega)
    pulse.meta.update({"E0": E0, "tau_p": tau_p, "omega": omega, "window": window})
    return pulse


def harmonic_envelope(pulse: PulseSpec, n: int, chi_n: float, taus) -> np.ndarray:
    """Complex signal ``tau chi_n sum_m E_n(w_m) alpha_m^n e^{-i n w_m tau}``.

    ``E_n(w_m)`` is ``PulseSpec.harmonic_scale(n)``.

    Its real part times two is the harmonic field; its modulus is the envelope.
    """
    taus = np.asarray(taus, dtype=float)
    weights = pulse.harmonic_scale(n) * pulse.amplitudes**n
    phase = np.exp(-1j * n * np.outer(taus, pulse.frequencies))
    return taus * chi_n * (phase @ weights)


def harmonic_field(pulse: PulseSpec, n: int, chi_n: float, taus) -> np.ndarray:
    """``<E_n>(tau) = tau chi_n sum_m E(n w_m) [alpha_m^n e^{-i n w_m tau} + c.c.]``."""
    return 2.0 * np.real(harmonic_envelope(pulse, n, chi_n, taus))
