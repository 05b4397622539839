"""Energy characteristic functions, their inversions and first moments.

Conventions: hbar = 1, and a characteristic function of an observable X is
f(beta) = <exp(-i beta X)>, so <X> = i f'(0) and <X^2> = -f''(0).  The
free-particle heating rate lam*hbar/2m therefore appears as lam/2m.

Point masses (delta(E) terms) are never rasterized; they are carried beside
the continuous density as (location, weight) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .density import MasterEvolutionSpec, master_path
from .linalg import (
    DensityMatrix,
    HermitianOperator,
    NumericalError,
    StateVector,
    ValidationError,
    expm_scaled,
)

HALVING_TOL = 1e-8


@dataclass(frozen=True)
class CharacteristicFunction:
    beta_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta_grid, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if b.size != v.size:
            raise ValidationError("beta grid and values differ in length")
        object.__setattr__(self, "beta_grid", b)
        object.__setattr__(self, "values", v)

    def at_zero_defect(self) -> float:
        idx = np.flatnonzero(self.beta_grid == 0.0)
        return float(np.max(np.abs(self.values[idx] - 1.0))) if idx.size else float("nan")

    def hermitian_defect(self) -> float:
        """max |f(-beta) - f(beta)^*| over grid points whose mirror is also on the grid."""
        lookup = {float(b): v for b, v in zip(self.beta_grid, self.values)}
        worst = 0.0
        for b, v in lookup.items():
            if -b in lookup:
                worst = max(worst, abs(lookup[-b] - np.conj(v)))
        return float(worst)


@dataclass
class Distribution:
    """Continuous density on a grid plus symbolic point masses.

    ``tail_mass`` is the continuous probability outside the grid.
    """

    grid: np.ndarray
    density: np.ndarray
    point_masses: list = field(default_factory=list)
    tail_mass: float = 0.0
    pdf: Callable | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if d.size and d.min() < -1e-6:
            raise ValidationError(f"density dips to {d.min():.3e}, below the ripple floor")
        self.density = np.clip(d, 0.0, None)

    def grid_mass(self) -> float:
        return float(integrate.trapezoid(self.density, self.grid)) if self.grid.size > 1 else 0.0

    def point_mass_total(self) -> float:
        return float(sum(w for _, w in self.point_masses))

    def total_mass(self) -> float:
        return self.grid_mass() + self.tail_mass + self.point_mass_total()

    def mean_of_point_masses(self) -> float:
        tot = self.point_mass_total()
        return float(sum(x * w for x, w in self.point_masses) / tot) if tot else float("nan")


EnergyDistribution = Distribution


def _weights(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=complex)
    p = np.abs(alpha) ** 2
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"amplitudes must be normalized (sum |alpha|^2 = {p.sum()!r})")
    return p


# --- H_A = 0 closed forms --------------------------------------------------------


def charfn_total_diag(alpha, a, lam: float, beta_grid) -> CharacteristicFunction:
    """Total energy: sum_n |alpha_n|^2 exp(-(lam/2) a_n^2 |beta|), time independent."""
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    b = np.asarray(beta_grid, dtype=float)
    vals = np.exp(-0.5 * lam * np.abs(b)[:, None] * a[None, :] ** 2) @ p
    return CharacteristicFunction(b, vals)


def _lorentzian(e, width):
    return width / (np.pi * (e * e + width * width))


def _cauchy_tail(width, lo, hi):
    # mass of a centred Cauchy outside [lo, hi]
    return 1.0 - (np.arctan(hi / width) - np.arctan(lo / width)) / np.pi


def lorentzian_mixture(weights, centers, widths, e_grid) -> Distribution:
    """sum_n w_n Cauchy(center_n, width_n); zero widths become point masses."""
    e = np.asarray(e_grid, dtype=float)
    weights = np.asarray(weights, dtype=float)
    centers = np.broadcast_to(np.asarray(centers, dtype=float), weights.shape)
    widths = np.asarray(widths, dtype=float)
    dens = np.zeros_like(e)
    point, tail = {}, 0.0
    for w, c, g in zip(weights, centers, widths):
        if w == 0:
            continue
        if g == 0:
            point[float(c)] = point.get(float(c), 0.0) + float(w)
            continue
        dens += w * _lorentzian(e - c, g)
        if e.size:
            tail += w * _cauchy_tail(g, e[0] - c, e[-1] - c)
    pm = sorted(point.items())

    def pdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, c, g in zip(weights, centers, widths):
            if g > 0:
                out = out + w * _lorentzian(x - c, g)
        return out

    return Distribution(e, dens, pm, float(tail), pdf)


def dist_total_diag(alpha, a, lam: float, e_grid) -> Distribution:
    """Cauchy mixture with half-widths lam a_n^2 / 2; a_n = 0 terms are point masses at 0."""
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    return lorentzian_mixture(p, 0.0, 0.5 * lam * a * a, e_grid)


def charfn_w_diag(alpha, a, lam: float, t: float, beta_grid) -> CharacteristicFunction:
    """Field energy: exp(-lam a^2 t) for |beta| >= t, exp(-lam a^2 |beta|) inside."""
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    b = np.abs(np.asarray(beta_grid, dtype=float))
    g = lam * a * a
    outer = np.exp(-g * t)[None, :] * np.ones_like(b)[:, None]
    inner = np.exp(-b[:, None] * g[None, :])
    vals = np.where((b < t)[:, None], inner, outer) @ p
    return CharacteristicFunction(np.asarray(beta_grid, dtype=float), vals)


def _w_continuous(e, g, t):
    """Continuous part of the field-energy density for one component (no 1/pi... included)."""
    e = np.asarray(e, dtype=float)
    if g == 0:
        return np.zeros_like(e)
    damp = np.exp(-g * t)
    sinc_t = t * np.sinc(e * t / np.pi)  # sin(Et)/E with the E -> 0 limit
    denom = e * e + g * g
    osc = -sinc_t + (e * np.sin(e * t) - g * np.cos(e * t)) / denom
    return (damp * osc + g / denom) / np.pi


def dist_w_diag(alpha, a, lam: float, t: float, e_grid) -> Distribution:
    """Field-energy density at time t; the delta(E) weight sum |alpha|^2 e^{-lam a^2 t} is a point mass."""
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    e = np.asarray(e_grid, dtype=float)
    g = lam * a * a
    dens = np.zeros_like(e)
    point = 0.0
    for pn, gn in zip(p, g):
        point += pn * (np.exp(-gn * t) if gn > 0 else 1.0)
        dens += pn * _w_continuous(e, gn, t)

    def pdf(x):
        return sum(pn * _w_continuous(x, gn, t) for pn, gn in zip(p, g))

    cont_total = float(np.sum(p * np.where(g > 0, 1.0 - np.exp(-g * t), 0.0)))
    grid_mass = float(integrate.trapezoid(dens, e)) if e.size > 1 else 0.0
    pm = [(0.0, float(point))] if point > 0 else []
    return Distribution(e, dens, pm, max(cont_total - grid_mass, 0.0), pdf)


def dist_interaction_diag(alpha, a, lam: float, dt: float, e_grid) -> Distribution:
    """Interaction energy: Gaussian mixture with variance lam a_n^2 / dt (needs the regulator dt)."""
    if not dt > 0:
        raise ValidationError("interaction-energy distribution needs a positive regulator dt")
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    e = np.asarray(e_grid, dtype=float)
    var = lam * a * a / dt
    dens = np.zeros_like(e)
    point, tail = 0.0, 0.0
    for pn, v in zip(p, var):
        if v == 0:
            point += pn
            continue
        sd = np.sqrt(v)
        dens += pn * np.exp(-0.5 * e * e / v) / np.sqrt(2 * np.pi * v)
        if e.size:
            tail += pn * (special.ndtr(e[0] / sd) + special.ndtr(-e[-1] / sd))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return sum(pn * np.exp(-0.5 * x * x / v) / np.sqrt(2 * np.pi * v) for pn, v in zip(p, var) if v > 0)

    return Distribution(e, dens, [(0.0, float(point))] if point else [], float(tail), pdf)


def interaction_sd(a: float, lam: float, dt: float) -> float:
    return float(np.sqrt(lam * a * a / dt))


def dist_w_large_t_diag(alpha, a, lam: float, t: float, e_grid) -> Distribution:
    """Large-t field energy: Lorentzians of half-width lam (a^2(t) + a^2(0))/2 = lam a_n^2."""
    if t < 0:
        raise ValidationError("t must be >= 0")
    p = _weights(alpha)
    a = np.asarray(a, dtype=float)
    return lorentzian_mixture(p, 0.0, lam * a * a, e_grid)


# --- inversion ----------------------------------------------------------------


def invert_charfn(fn: Callable, e_grid, beta_max: float, n: int = 200001, asymptote: complex = 0.0) -> Distribution:
    """Density (1/2pi) int e^{iE beta} f(beta) d beta by Simpson on [0, beta_max].

    Uses f(-beta) = f(beta)^* so only the half line is sampled (which also
    keeps the |beta| kink at an endpoint).  A constant ``asymptote`` is
    subtracted first and returned as a point mass at E = 0.
    """
    e = np.asarray(e_grid, dtype=float)
    if n % 2 == 0:
        n += 1
    b = np.linspace(0.0, beta_max, n)
    f = np.asarray(fn(b), dtype=complex) - asymptote
    dens = np.empty_like(e)
    chunk = max(1, 2_000_000 // n)
    for s in range(0, e.size, chunk):
        ee = e[s : s + chunk]
        integrand = (np.exp(1j * ee[:, None] * b[None, :]) * f[None, :]).real
        dens[s : s + chunk] = integrate.simpson(integrand, x=b, axis=1) / np.pi
    pm = [(0.0, float(np.real(asymptote)))] if asymptote != 0 else []
    return Distribution(e, np.clip(dens, -1e-6, None) if dens.min() > -1e-6 else dens, pm)


def forward_charfn(dist: Distribution, beta_grid) -> CharacteristicFunction:
    """int e^{-iE beta} p(E) dE over the grid (Simpson) plus the point masses."""
    b = np.asarray(beta_grid, dtype=float)
    e = dist.grid
    vals = integrate.simpson(np.exp(-1j * b[:, None] * e[None, :]) * dist.density[None, :], x=e, axis=1)
    for x, w in dist.point_masses:
        vals = vals + w * np.exp(-1j * b * x)
    return CharacteristicFunction(b, vals)


def charfn_moment(fn: Callable, order: int, h: float = 1e-3, one_sided: bool = False) -> complex:
    """<X^order> from f(beta) = <e^{-i beta X}> by Richardson-extrapolated differences.

    Central stencils give the symmetric derivative, which at a |beta| kink is
    the eps(0) = 0 convention; ``one_sided`` uses forward stencils instead.
    """
    raw = fn

    def fn(x):
        return complex(np.asarray(raw(np.atleast_1d(np.asarray(x, dtype=float)))).reshape(-1)[0])

    def d(hh):
        if order == 1:
            if one_sided:
                return (-3 * fn(0.0) + 4 * fn(hh) - fn(2 * hh)) / (2 * hh)
            return (fn(hh) - fn(-hh)) / (2 * hh)
        if order == 2:
            if one_sided:
                return (2 * fn(0.0) - 5 * fn(hh) + 4 * fn(2 * hh) - fn(3 * hh)) / (hh * hh)
            return (fn(hh) - 2 * fn(0.0) + fn(-hh)) / (hh * hh)
        raise ValidationError("only first and second moments are supported")

    d1, d2 = complex(d(h)), complex(d(h / 2))
    k = 2 if (one_sided and order == 1) or not one_sided else 1
    deriv = (2**k * d2 - d1) / (2**k - 1)
    return 1j * deriv if order == 1 else -deriv


# --- general H_A ---------------------------------------------------------------


def _op(x) -> HermitianOperator:
    return x if isinstance(x, HermitianOperator) else HermitianOperator(x)


def charfn_total_general(phi: StateVector, a, h_a, lam: float, beta_grid) -> CharacteristicFunction:
    """<phi| exp(-[i H_A + (lam/2) A^2] beta) |phi> for beta >= 0, Hermitian-extended to beta < 0."""
    a, h = _op(a), _op(h_a)
    if abs(phi.norm2 - 1.0) > 1e-12:
        raise ValidationError("phi must be normalized")
    gen = 1j * h.matrix + 0.5 * lam * a.matrix @ a.matrix
    b = np.asarray(beta_grid, dtype=float)
    vals = np.empty(b.size, dtype=complex)
    v = phi.amplitudes
    for i, beta in enumerate(b):
        u = expm_scaled(gen, -abs(beta))
        val = np.vdot(v, u @ v)
        vals[i] = val if beta >= 0 else np.conj(val)
    return CharacteristicFunction(b, vals)


def _spec(a, h_a, lam, t, dt_ode):
    steps = max(2, int(np.ceil(t / dt_ode - 1e-9)))
    if steps % 2:
        steps += 1
    return MasterEvolutionSpec(a, _op(h_a), lam, t, t / steps if t > 0 else dt_ode, check_halving=False)


def _rho_path(phi, a, h_a, lam, t, dt_ode):
    spec = _spec(a, h_a, lam, t, dt_ode)
    rho0 = DensityMatrix.pure(phi)
    if t == 0:
        return spec, np.array([0.0]), [rho0.matrix]
    times, path = master_path(rho0, spec)
    return spec, times, path


def charfn_HA_general(phi: StateVector, a, h_a, lam: float, t: float, beta_grid, dt_ode: float = 1e-3) -> CharacteristicFunction:
    """Tr[exp(-i H_A beta) rho(t)] with rho(t) from the master equation."""
    h = _op(h_a)
    _, _, path = _rho_path(phi, a, h, lam, t, dt_ode)
    rho = path[-1]
    vals_h, vecs = np.linalg.eigh(h.matrix)
    pops = np.einsum("ik,ij,jk->k", vecs.conj(), rho, vecs).real
    b = np.asarray(beta_grid, dtype=float)
    return CharacteristicFunction(b, np.exp(-1j * b[:, None] * vals_h[None, :]) @ pops)


def mean_HA(phi: StateVector, a, h_a, lam: float, t: float, dt_ode: float = 1e-3) -> float:
    h = _op(h_a)
    _, _, path = _rho_path(phi, a, h, lam, t, dt_ode)
    return float(np.real(np.trace(path[-1] @ h.matrix)))


def energy_paths(phi: StateVector, a, h_a, lam: float, t: float, dt_ode: float = 1e-3) -> dict:
    """<H_A>(t'), <H_w>(t') and their sum on the master-equation grid.

    <H_w>(t') = (lam/2) int_0^t' Tr[rho [A,[A,H_A]]] by cumulative Simpson.
    """
    h = _op(h_a)
    spec, times, path = _rho_path(phi, a, h, lam, t, dt_ode)
    hm = h.matrix
    dch = spec.double_commutator_h()
    e_a = np.array([np.real(np.sum(r * hm.T)) for r in path])
    g = np.array([np.real(np.sum(r * dch.T)) for r in path])
    if times.size > 2:
        cum = integrate.cumulative_simpson(g, x=times, initial=0.0)
    else:
        cum = np.zeros_like(times)
    e_w = 0.5 * spec.lam * cum
    return {"t": times, "mean_HA": e_a, "mean_Hw": e_w, "integrand": g, "total": e_a + e_w}


def mean_Hw(phi: StateVector, a, h_a, lam: float, t: float, dt_ode: float = 1e-3) -> float:
    """(lam/2) int_0^t Tr[rho(t') [A,[A,H_A]]] dt' with a step-halving convergence test."""
    if t == 0:
        return 0.0
    coarse = energy_paths(phi, a, h_a, lam, t, dt_ode)["mean_Hw"][-1]
    fine = energy_paths(phi, a, h_a, lam, t, dt_ode / 2)["mean_Hw"][-1]
    if abs(fine - coarse) >= HALVING_TOL * max(1.0, abs(fine)):
        raise NumericalError(f"mean_Hw quadrature not converged: {coarse!r} vs {fine!r}")
    return float(fine)


def free_particle_field_energy_center(lam: float, mass: float, t: float) -> float:
    """Location of the large-t field-energy Lorentzian for a free particle with A = x: -lam t / 2m."""
    return -lam * t / (2.0 * mass)


def heating_rate(lam: float, mass: float, coupling_factor: float = 1.0) -> float:
    """d<H_A>/dt for a free particle: lam/2m times the curvature of the decay matrix
    (1 for A = x, (m/m0)^2/(2a^2) for the smeared coupling)."""
    return lam * coupling_factor / (2.0 * mass)


# --- export -------------------------------------------------------------------


def to_csv(dist: Distribution) -> str:
    rows = ["E,density"] + [f"{float(e)!r},{float(d)!r}" for e, d in zip(dist.grid, dist.density)]
    return "\n".join(rows) + "\n"


def to_json(dist: Distribution, **params) -> dict:
    return {
        "point_masses": [{"E": float(x), "weight": float(w)} for x, w in dist.point_masses],
        "tail_mass": float(dist.tail_mass),
        "grid_mass": dist.grid_mass(),
        "total_mass": dist.total_mass(),
        "parameters": params,
    }
