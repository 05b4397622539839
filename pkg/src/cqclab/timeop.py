"""Time-operator statistics T = B/N in the diagonal (H_A = 0) case.

With coupling profile A(t') = a_k A_scale t'^s in sector k, everything
reduces to three numbers per sector:

    Z  = lam int_0^t A^2 dt'              (collapse exposure)
    R1 = int t' A^2 / int A^2             (center of time)
    R2 = int t'^2 A^2 / int A^2

and the auxiliary function f(z) = int_0^z (e^u - 1)/u du.  The N = 0 (vacuum)
sector is assigned T = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .energy import CharacteristicFunction, Distribution
from .linalg import NumericalError, ValidationError

MAX_TERMS = 500
EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class TimeOpSpec:
    alpha: np.ndarray
    a: np.ndarray
    lam: float
    t: float
    s: float | None = None
    A_scale: float = 1.0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=complex).reshape(-1)
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if alpha.size != a.size:
            raise ValidationError("alpha and a differ in length")
        if abs(np.sum(np.abs(alpha) ** 2) - 1.0) > 1e-12:
            raise ValidationError("amplitudes must be normalized")
        if not self.t > 0:
            raise ValidationError("t must be positive")
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if self.s is not None and self.s < 0:
            raise ValidationError("s must be >= 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "a", a)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2

    @property
    def exponent(self) -> float:
        return 0.0 if self.s is None else float(self.s)

    def sector_z(self) -> np.ndarray:
        s = self.exponent
        return self.lam * (self.A_scale * self.a) ** 2 * self.t ** (2 * s + 1) / (2 * s + 1)

    def r1(self) -> float:
        s = self.exponent
        return self.t * (2 * s + 1) / (2 * s + 2)

    def r2(self) -> float:
        s = self.exponent
        return self.t**2 * (2 * s + 1) / (2 * s + 3)


# --- f(z) ------------------------------------------------------------------------


def _f_series(z: float) -> float:
    # sum_{k>=1} z^k / (k k!)
    total, term, k = 0.0, 1.0, 0
    while True:
        k += 1
        term *= z / k
        inc = term / k
        total += inc
        if abs(inc) < 1e-17 * max(abs(total), 1e-300) or k > 200:
            return total


def f_aux(z: float) -> float:
    """f(z) = int_0^z (e^u - 1)/u du: series below 1, adaptive quadrature above.

    Overflows past z ~ 700; use log_f_aux / g_aux there.
    """
    z = float(z)
    if z < 0:
        raise ValidationError("f(z) needs z >= 0")
    if z < 1.0:
        return _f_series(z)
    if z > 700:
        raise NumericalError("f(z) overflows for z > 700; use the log-domain form")
    val, err = integrate.quad(lambda u: math.expm1(u) / u if u > 0 else 1.0, 0.0, z, limit=200, epsrel=1e-13)
    return val


def f_aux_asymptote(z: float) -> float:
    return math.exp(z) / z


def g_aux(z: float) -> float:
    """e^{-z} f(z), finite for all z >= 0 (~ 1/z for large z)."""
    z = float(z)
    if z < 1.0:
        return math.exp(-z) * _f_series(z)

    # e^{-z} (e^u - 1)/u, integrated in v = z - u so the mass sits near v = 0
    def integrand(v):
        u = z - v
        if u < 1.0:
            return math.exp(-z) * (math.expm1(u) / u if u > 0 else 1.0)
        return (math.exp(-v) - math.exp(-z)) / u

    pts = [min(z / 2, 50.0)] if z > 2 else None
    val, _ = integrate.quad(integrand, 0.0, z, points=pts, limit=400, epsrel=1e-13, epsabs=1e-300)
    return val


def log_f_aux(z: float) -> float:
    z = float(z)
    if z == 0:
        return -math.inf
    return z + math.log(g_aux(z))


def f_aux_expi(z: float) -> float:
    """Closed form Ei(z) - ln z - gamma_E; an independent cross-check."""
    return float(special.expi(z) - math.log(z) - EULER_GAMMA) if z > 0 else 0.0


# --- characteristic function -------------------------------------------------------


def _series_length(z: float, tol: float) -> int:
    if z == 0:
        return 0
    for m in range(1, MAX_TERMS + 1):
        if m * math.log(z) - math.lgamma(m + 1) + z < math.log(tol):
            return m
    raise NumericalError(f"series remainder bound not below {tol:g} within {MAX_TERMS} terms (z={z:g})")


def charfn_T_diag(spec: TimeOpSpec, beta_grid, series_tol: float = 1e-12, extra_terms: int = 0) -> CharacteristicFunction:
    """<e^{-i beta T}> = sum_k |alpha_k|^2 e^{-z}[1 + e^{-i beta t/2} sum_m z^m/m! sinc(beta t/2m)^m]."""
    if not series_tol > 0:
        raise ValidationError("series_tol must be positive")
    if spec.s not in (None, 0, 0.0):
        raise ValidationError("charfn_T_diag covers the constant-coupling case only")
    b = np.asarray(beta_grid, dtype=float)
    t = spec.t
    vals = np.zeros(b.shape, dtype=complex)
    for pk, z in zip(spec.weights, spec.sector_z()):
        if z == 0:
            vals += pk
            continue
        m_max = _series_length(z, series_tol) + extra_terms
        acc = np.zeros(b.shape, dtype=complex)
        for m in range(1, m_max + 1):
            x = b * t / (2 * m)
            coef = math.exp(m * math.log(z) - math.lgamma(m + 1) - z)
            acc += coef * np.sinc(x / np.pi) ** m
        vals += pk * (math.exp(-z) + np.exp(-0.5j * b * t) * acc)
    return CharacteristicFunction(b, vals)


# --- moments -----------------------------------------------------------------------


def mean_T(spec: TimeOpSpec) -> float:
    """sum_k |alpha_k|^2 R1 (1 - e^{-Z_k}); for s = 0 this is (t/2)[1 - sum |alpha|^2 e^{-lam t a^2}]."""
    z = spec.sector_z()
    return float(spec.r1() * np.sum(spec.weights * -np.expm1(-z)))


def _power_law_integrals(s: float, t: float) -> tuple[float, float, float]:
    kw = dict(limit=200, epsabs=0.0, epsrel=1e-13)
    i0 = integrate.quad(lambda u: u ** (2 * s), 0.0, t, **kw)[0]
    i1 = integrate.quad(lambda u: u ** (2 * s + 1), 0.0, t, **kw)[0]
    i2 = integrate.quad(lambda u: u ** (2 * s + 2), 0.0, t, **kw)[0]
    return i0, i1, i2


def mean_T_power_law(s: float, lam: float, A_scale: float, t: float) -> dict:
    """Single-sector mean of T for A(t') = A_scale t'^s by quadrature of the profile.

    Returns the exact value, the asymptote t(2s+1)/(2s+2) and their relative gap.
    """
    if s < 0 or not t > 0:
        raise ValidationError("need s >= 0 and t > 0")
    i0, i1, _ = _power_law_integrals(s, t)
    if not (np.isfinite(i0) and i0 > 0):
        raise NumericalError("profile quadrature failed")
    z = lam * A_scale**2 * i0
    exact = (i1 / i0) * -math.expm1(-z)
    asym = t * (2 * s + 1) / (2 * s + 2)
    return {"exact": exact, "asymptote": asym, "relative_gap": abs(exact - asym) / asym, "Z": z}


def second_moment_T(spec: TimeOpSpec) -> float:
    """<T^2> = sum_k |alpha_k|^2 {R1^2 [1 - e^{-Z}(1 + f(Z))] + R2 e^{-Z} f(Z)}."""
    r1, r2 = spec.r1(), spec.r2()
    total = 0.0
    for pk, z in zip(spec.weights, spec.sector_z()):
        if z == 0:
            continue
        g = g_aux(z)
        total += pk * (r1 * r1 * (-math.expm1(-z) - g) + r2 * g)
    return float(total)


def variance_T(spec: TimeOpSpec) -> float:
    """Var T in the cancellation-free form (R2 - R1^2) sum p g + R1^2 [sum p(1-e^{-Z}) - (sum p(1-e^{-Z}))^2]."""
    r1, r2 = spec.r1(), spec.r2()
    z = spec.sector_z()
    p = spec.weights
    g = np.array([g_aux(zz) if zz > 0 else 0.0 for zz in z])
    q = -np.expm1(-z)
    mq = float(np.sum(p * q))
    return float((r2 - r1 * r1) * np.sum(p * g) + r1 * r1 * (mq - mq * mq))


def fractional_deviation(spec: TimeOpSpec) -> float:
    return variance_T(spec) / mean_T(spec) ** 2


def fractional_deviation_asymptote(spec: TimeOpSpec) -> float:
    """Leading large-Z behaviour of Var T / <T>^2 for a single nonzero sector:
    1 / ((2s+3) lam A^2 t^{2s+1})."""
    s = spec.exponent
    nz = spec.a != 0
    p = spec.weights[nz]
    inv = np.sum(p / (spec.A_scale * spec.a[nz]) ** 2) / np.sum(p)
    return float(inv / ((2 * s + 3) * spec.lam * spec.t ** (2 * s + 1)))


def second_moment_T_truncated_asymptote(spec: TimeOpSpec) -> float:
    """The large-t form R1^2 [1 + (2s+2)^2/((2s+3) lam t^{2s+1}) sum |alpha|^2/a^2].

    Kept for comparison only: it omits the -R1^2 e^{-Z} f(Z) contribution and so
    overstates the variance by a factor (2s+2)^2 (see variance_T).
    """
    s = spec.exponent
    nz = spec.a != 0
    corr = np.sum(spec.weights[nz] / (spec.A_scale * spec.a[nz]) ** 2)
    return float(spec.r1() ** 2 * (1 + (2 * s + 2) ** 2 / ((2 * s + 3) * spec.lam * spec.t ** (2 * s + 1)) * corr))


def dist_T_large_t_diag(spec: TimeOpSpec, tau_grid=None) -> Distribution:
    """Point masses: nonzero sectors at the center of time R1, the vacuum sector at 0."""
    p = spec.weights
    nz = spec.a != 0
    masses = []
    if np.any(~nz):
        masses.append((0.0, float(np.sum(p[~nz]))))
    if np.any(nz):
        masses.append((spec.r1(), float(np.sum(p[nz]))))
    grid = np.asarray([] if tau_grid is None else tau_grid, dtype=float)
    return Distribution(grid, np.zeros_like(grid), masses, 0.0)


def to_csv(grid, values, label: str = "beta") -> str:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        rows = [f"{label},re,im"] + [f"{float(x)!r},{float(v.real)!r},{float(v.imag)!r}" for x, v in zip(grid, values)]
    else:
        rows = [f"{label},value"] + [f"{float(x)!r},{float(v)!r}" for x, v in zip(grid, values)]
    return "\n".join(rows) + "\n"
