"""Ensemble density matrix three ways: closed form, master equation, Monte Carlo.

The master equation is the Schrodinger-picture form of the time-ordered
ensemble exponent,

    d rho/dt = -i [H_A, rho] - (lam/2) [A, [A, rho]],

integrated with fixed-step classical RK4.  For several commuting diagonal
collapse operators (the lattice model) the double commutator collapses to an
elementwise product with D_ij = sum_k dx (A_k,i - A_k,j)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csl import CslRun, EnsembleRuns, SmearedDensityOperator
from .linalg import DensityMatrix, HermitianOperator, NumericalError, ValidationError
from .noise import PHYSICAL, RAW

HALVING_TOL = 1e-8
SUPEROP_MAX_DIM = 16
MIN_RUNS = 100
N_BATCHES = 20


def density_closed_form(alpha, a, lam: float, t: float) -> DensityMatrix:
    """rho_nm(t) = alpha_n alpha_m^* exp(-(lam t/2)(a_n - a_m)^2), valid for H_A = 0."""
    alpha = np.asarray(alpha, dtype=complex)
    a = np.asarray(a, dtype=float)
    if abs(np.sum(np.abs(alpha) ** 2) - 1.0) > 1e-12:
        raise ValidationError("amplitudes must be normalized")
    decay = np.exp(-0.5 * lam * t * (a[:, None] - a[None, :]) ** 2)
    return DensityMatrix(np.outer(alpha, alpha.conj()) * decay)


@dataclass(frozen=True)
class MasterEvolutionSpec:
    a: object  # HermitianOperator, square array or SmearedDensityOperator
    h_a: HermitianOperator
    lam: float
    horizon: float
    dt_ode: float = 1e-3
    check_halving: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError("lambda must be >= 0")
        if not (self.dt_ode > 0 and self.horizon >= 0):
            raise ValidationError("need dt_ode > 0 and horizon >= 0")
        h = self.h_a if isinstance(self.h_a, HermitianOperator) else HermitianOperator(self.h_a)
        object.__setattr__(self, "h_a", h)

    @property
    def steps(self) -> int:
        n = int(round(self.horizon / self.dt_ode))
        return max(n, 0)

    def collapse(self):
        """('diag', D) for commuting diagonal couplings, else ('dense', A)."""
        a = self.a
        if isinstance(a, SmearedDensityOperator):
            return "diag", a.distance_matrix()
        m = a.matrix if isinstance(a, HermitianOperator) else HermitianOperator(a).matrix
        if np.count_nonzero(m - np.diag(np.diag(m))) == 0:
            d = np.diag(m).real
            return "diag", (d[:, None] - d[None, :]) ** 2
        return "dense", m

    def double_commutator_h(self) -> np.ndarray:
        """sum over couplings of [A, [A, H_A]] (dx-weighted on a lattice)."""
        kind, c = self.collapse()
        h = self.h_a.matrix
        if kind == "diag":
            return c * h
        a = c
        ah = a @ h - h @ a
        return a @ ah - ah @ a


def _liouvillian(spec: MasterEvolutionSpec) -> np.ndarray:
    # row-major vec: vec(X rho) = (X kron I) vec, vec(rho X) = (I kron X^T) vec
    h = spec.h_a.matrix
    d = h.shape[0]
    eye = np.eye(d)
    liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    kind, c = spec.collapse()
    if kind == "diag":
        liou = liou - 0.5 * spec.lam * np.diag(c.reshape(-1))
    else:
        a2 = c @ c
        liou = liou - 0.5 * spec.lam * (np.kron(a2, eye) + np.kron(eye, a2.T) - 2.0 * np.kron(c, c.T))
    return liou


def _rk4_propagator(liou: np.ndarray, dt: float) -> np.ndarray:
    x = dt * liou
    p = np.eye(liou.shape[0], dtype=complex)
    term = p.copy()
    for k in range(1, 5):
        term = term @ x / k
        p = p + term
    return p


def _rhs_factory(spec: MasterEvolutionSpec):
    h = spec.h_a.matrix
    lam = spec.lam
    kind, c = spec.collapse()
    if kind == "diag":
        decay = -0.5 * lam * c

        def rhs(rho):
            return -1j * (h @ rho - rho @ h) + decay * rho

    else:
        a = c

        def rhs(rho):
            ar = a @ rho - rho @ a
            return -1j * (h @ rho - rho @ h) - 0.5 * lam * (a @ ar - ar @ a)

    return rhs


def master_path(rho0, spec: MasterEvolutionSpec, dt: float | None = None, record: bool = True):
    """Integrate on a fixed grid; returns (times, list of density arrays)."""
    dt = spec.dt_ode if dt is None else dt
    steps = int(round(spec.horizon / dt))
    if abs(steps * dt - spec.horizon) > 1e-9 * max(1.0, spec.horizon):
        raise ValidationError(f"horizon {spec.horizon} is not a multiple of dt_ode {dt}")
    rho = np.array(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    d = rho.shape[0]
    if spec.h_a.dim != d:
        raise ValidationError("dimension mismatch between rho0 and H_A")
    out = [rho.copy()] if record else None
    if d <= SUPEROP_MAX_DIM:
        prop = _rk4_propagator(_liouvillian(spec), dt)
        v = rho.reshape(-1)
        for _ in range(steps):
            v = prop @ v
            if record:
                out.append(v.reshape(d, d))
        rho = v.reshape(d, d)
    else:
        rhs = _rhs_factory(spec)
        for _ in range(steps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * dt * k1)
            k3 = rhs(rho + 0.5 * dt * k2)
            k4 = rhs(rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if record:
                out.append(rho)
    times = dt * np.arange(steps + 1)
    return times, (out if record else [rho])


def density_master(rho0: DensityMatrix, spec: MasterEvolutionSpec) -> DensityMatrix:
    """rho(horizon) from the master equation, with a step-halving acceptance test."""
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    if rho0.min_eigenvalue() < -1e-10:
        raise ValidationError("initial density matrix is not positive")
    _, path = master_path(rho0, spec, record=False)
    rho = path[-1]
    if spec.check_halving and spec.steps > 0:
        _, fine = master_path(rho0, spec, dt=0.5 * spec.dt_ode, record=False)
        diff = float(np.max(np.abs(fine[-1] - rho)))
        if diff >= HALVING_TOL:
            raise NumericalError(f"dt_ode={spec.dt_ode} too large: halving changes rho by {diff:.2e} (limit {HALVING_TOL:g})")
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho)


# --- Monte Carlo --------------------------------------------------------------


def _batch_mean_stderr(samples: np.ndarray, batches: int = N_BATCHES) -> np.ndarray:
    """Standard error of the mean along axis 0 by contiguous batch means."""
    n = samples.shape[0]
    batches = min(batches, n)
    edges = np.linspace(0, n, batches + 1).astype(int)
    means = np.stack([samples[edges[i] : edges[i + 1]].mean(axis=0) for i in range(batches)])
    return means.std(axis=0, ddof=1) / np.sqrt(batches)


def weighted_outer_mean(states: np.ndarray, weights: np.ndarray | None = None):
    """Mean of w_i |psi_i><psi_i| and its per-entry batch-means standard error."""
    outer = states[:, :, None] * states[:, None, :].conj()
    if weights is not None:
        outer = outer * np.asarray(weights)[:, None, None]
    mean = outer.mean(axis=0)
    se = _batch_mean_stderr(outer.real) + 1j * _batch_mean_stderr(outer.imag)
    return mean, se


def density_monte_carlo(runs, measure_tag: str | None = None) -> DensityMatrix:
    """Ensemble average of outer products.

    Physical runs average normalized states; raw runs carry their likelihood
    ratio exp(log_weight) as weight (plain, not self-normalized, average).
    """
    if isinstance(runs, EnsembleRuns):
        tag = runs.measure_tag
        states = runs.states
        lw = runs.log_weight
    else:
        runs = list(runs)
        tags = {r.measure_tag for r in runs}
        if len(tags) > 1:
            raise ValidationError(f"mixed measure tags {sorted(tags)}")
        tag = tags.pop() if tags else measure_tag
        dims = {r.final_state.dim for r in runs}
        if len(dims) > 1:
            raise ValidationError("runs have inconsistent dimensions")
        states = np.stack([r.normalized_state.amplitudes for r in runs]) if runs else np.zeros((0, 1))
        lw = np.array([r.log_weight for r in runs], dtype=float) if tag == RAW else None
    if measure_tag is not None and measure_tag != tag:
        raise ValidationError(f"runs are {tag!r}, requested {measure_tag!r}")
    if states.shape[0] < MIN_RUNS:
        raise ValidationError(f"need at least {MIN_RUNS} runs, got {states.shape[0]}")
    if tag == RAW:
        if lw is None or not np.all(np.isfinite(lw)):
            raise ValidationError("raw runs need finite log weights")
        mean, se = weighted_outer_mean(states, np.exp(lw))
    elif tag == PHYSICAL:
        mean, se = weighted_outer_mean(states)
    else:
        raise ValidationError(f"unknown measure tag {tag!r}")
    mean = 0.5 * (mean + mean.conj().T)
    return DensityMatrix(mean, stderr=se)


def aggregate_stderr(dm: DensityMatrix) -> float:
    """sqrt(sum of squared per-entry standard errors): the Frobenius-scale MC error."""
    se = dm.stderr
    return float(np.sqrt(np.sum(se.real**2 + se.imag**2)))


def frobenius(a, b) -> float:
    am = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    bm = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    return float(np.linalg.norm(am - bm))


def to_csv(dm: DensityMatrix) -> str:
    """One row per matrix row, re/im interleaved."""
    lines = []
    for row in dm.matrix:
        cells = []
        for z in row:
            cells += [repr(float(z.real)), repr(float(z.imag))]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def to_json(dm: DensityMatrix, **meta) -> dict:
    out = {"dim": dm.dim, "trace": dm.trace, "re": dm.matrix.real.tolist(), "im": dm.matrix.imag.tolist()}
    if dm.stderr is not None:
        out["stderr_re"] = dm.stderr.real.tolist()
        out["stderr_im"] = dm.stderr.imag.tolist()
    out.update(meta)
    return out
