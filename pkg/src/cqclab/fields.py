"""Heavy scalar fields as the collapse noise: mapping constants and grid checks.

One field per time slice of length tau = 1/M.  With C = M sqrt(2 lam) the
per-slice vacuum overlap exp(-(M/2C^2) int phi^2) multiplies up to the white
noise vacuum weight exp(-(4 lam)^{-1} sum_t tau int phi^2).

The slice operators b_t combine into frequency modes
b(omega) = (2 pi)^{-1/2} sum_t tau e^{i omega t} b_t / sqrt(tau), whose
commutator kernel is K(omega, omega') = (2 pi)^{-1} sum_t tau e^{i(omega-omega')t}.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import ValidationError


def field_mapping_constants(M: float, lam: float) -> dict:
    if not (M > 0 and lam > 0):
        raise ValidationError("M and lambda must be positive")
    C = M * math.sqrt(2.0 * lam)
    field_coef = M / (2.0 * C * C)
    tau = 1.0 / M
    per_time = field_coef / tau
    return {
        "C": C,
        "tau": tau,
        "field_coefficient": field_coef,  # M/(2C^2) = tau/(4 lam)
        "per_time_coefficient": per_time,  # (4 lam)^{-1}
        "identity_residual": abs(2.0 * per_time - 1.0 / (2.0 * lam)),
    }


def vacuum_overlap_log(phi: np.ndarray, M: float, lam: float, dx: float = 1.0, product: bool = True) -> float:
    """log <phi|0> for slice fields phi[t, x].

    ``product`` multiplies the per-slice Gaussians exp(-(M/2C^2) int phi_t^2);
    otherwise the time-summed form -(4 lam)^{-1} sum_t tau int phi^2 is used.
    """
    k = field_mapping_constants(M, lam)
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if product:
        return float(sum(-k["field_coefficient"] * np.sum(row**2) * dx for row in phi))
    return float(-k["per_time_coefficient"] * k["tau"] * np.sum(phi**2) * dx)


def mode_kernel(n_times: int, tau: float, omegas, omegas2=None) -> np.ndarray:
    """K(omega, omega') on centred slice times t_j = (j - (n-1)/2) tau."""
    t = (np.arange(n_times) - 0.5 * (n_times - 1)) * tau
    w1 = np.asarray(omegas, dtype=float)
    w2 = w1 if omegas2 is None else np.asarray(omegas2, dtype=float)
    e1 = np.exp(1j * np.outer(w1, t))
    e2 = np.exp(1j * np.outer(w2, t))
    return tau * (e1 @ e2.conj().T) / (2.0 * np.pi)


def dft_frequencies(n: int, tau: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(n, d=tau)


def discrete_mode_commutator_check(n_times: int, n_freqs: int, tau: float, omega_max: float = 5.0) -> dict:
    """Deviation of the mode commutator from the identity / delta function.

    ``dft_deviation``: on the n_times-point DFT frequency grid K * d omega is
    exactly the identity matrix (every row checked up to 512 points, 16 rows
    beyond).  ``continuum_deviation``: K applied to the test function g(omega) = e^{-|omega|} (whose transform 2/(1+t^2) is used
    analytically) against g itself on n_freqs points of [-omega_max, omega_max];
    finite total time T = n tau makes this O(1/T).
    """
    if n_times < 8 or n_freqs < 8:
        raise ValidationError("grid sizes must be >= 8")
    if not tau > 0:
        raise ValidationError("tau must be positive")
    w_dft = dft_frequencies(n_times, tau)
    d_omega = 2.0 * np.pi / (n_times * tau)
    # full matrix for small grids, a fixed spread of rows otherwise (O(n^2) not O(n^3))
    rows = np.arange(n_times) if n_times <= 512 else np.unique(np.linspace(0, n_times - 1, 16).astype(int))
    k = mode_kernel(n_times, tau, w_dft[rows], w_dft) * d_omega
    dft_dev = float(np.max(np.abs(k - np.eye(n_times)[rows])))

    t = (np.arange(n_times) - 0.5 * (n_times - 1)) * tau
    g_hat = 2.0 / (1.0 + t * t)
    w = np.linspace(-omega_max, omega_max, n_freqs)
    kg = (np.exp(1j * np.outer(w, t)) @ (tau * g_hat)) / (2.0 * np.pi)
    cont_dev = float(np.max(np.abs(kg - np.exp(-np.abs(w)))))
    return {
        "n_times": n_times,
        "n_freqs": n_freqs,
        "tau": tau,
        "dft_deviation": dft_dev,
        "continuum_deviation": cont_dev,
        "total_time": n_times * tau,
    }


def refinement_study(n_times: int, n_freqs: int, tau: float, levels: int = 3) -> dict:
    """Continuum deviation under repeated doubling of n_times; ratios ~ 2 mean order 1."""
    devs = [discrete_mode_commutator_check(n_times * 2**i, n_freqs, tau)["continuum_deviation"] for i in range(levels)]
    ratios = [devs[i] / devs[i + 1] for i in range(levels - 1)]
    order = float(np.mean(np.log2(ratios)))
    return {"deviations": devs, "ratios": ratios, "order": order}
