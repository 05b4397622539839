"""CSL state evolution for a given noise record, and collapse statistics.

The simple model collapses toward eigenstates of one operator A; the lattice
model is a first-quantized single-particle surrogate of the smeared mass
density coupling on a 1-D grid, with open (Dirichlet) boundaries.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as _rng
from .linalg import HermitianOperator, StateVector, ValidationError, eig_hermitian
from .noise import (
    PHYSICAL,
    RAW,
    NoiseTrajectory,
    TimeGrid,
    _uniform_normal_draws,
    collapse_basis,
    raw_log_weight,
    sample_physical_batch,
)
from .propagate import choose_components, half_step_unitary, strang_run

# squared norms below exp(-700) are flagged rather than raised
DEWEIGHT_LOG_NORM2 = -700.0
MIN_ENSEMBLE = 100


@dataclass
class CslRun:
    final_state: StateVector
    log_norm2: float
    trajectory_ref: NoiseTrajectory
    checkpoints: list = field(default_factory=list)
    log_weight: float | None = None
    deweighted: bool = False

    def __post_init__(self):
        if not np.isfinite(self.log_norm2) and not self.deweighted:
            raise ValidationError("log_norm2 must be finite")
        if self.log_norm2 < DEWEIGHT_LOG_NORM2:
            self.deweighted = True

    @property
    def measure_tag(self) -> str:
        return self.trajectory_ref.measure_tag

    @property
    def normalized_state(self) -> StateVector:
        return self.final_state.normalize()

    def metadata(self) -> dict:
        return {
            "seed": int(self.trajectory_ref.seed),
            "measure_tag": self.measure_tag,
            "dt": self.trajectory_ref.grid.dt,
            "steps": self.trajectory_ref.grid.steps,
            "log_norm2": float(self.log_norm2),
            "log_weight": None if self.log_weight is None else float(self.log_weight),
            "deweighted": bool(self.deweighted),
            "checkpoint_times": [float(c[0]) for c in self.checkpoints],
        }


def _check(lam: float, dt: float) -> None:
    if not (lam > 0 and dt > 0):
        raise ValidationError(f"lambda and dt must be positive (got {lam}, {dt})")


def pointer_step_kernel(a: HermitianOperator, w: float, dt: float, lam: float) -> np.ndarray:
    """exp(-(dt/4 lam) (w - 2 lam A)^2): one von Neumann pointer reading."""
    _check(lam, dt)
    vals, vecs = eig_hermitian(a)
    k = np.exp(-(dt / (4.0 * lam)) * (w - 2.0 * lam * vals) ** 2)
    return (vecs * k) @ vecs.conj().T


def kernel_product(a: HermitianOperator, h_a: HermitianOperator, traj: NoiseTrajectory, lam: float) -> np.ndarray:
    """Ordered product of the per-step evolution operators, as one matrix.

    For H_A = 0 this is the plain product of pointer kernels, i.e. the
    W-eigenstate component of the quantized-field ensemble vector.
    """
    dt = traj.grid.dt
    u = half_step_unitary(h_a.matrix, dt)
    out = np.eye(a.dim, dtype=complex)
    for wj in traj.values:
        k = pointer_step_kernel(a, wj, dt, lam)
        step = k if u is None else u @ k @ u
        out = step @ out
    return out


def _evolve_simple_batch(psi_eig, a_vals, h_eig, w, dt, lam, checkpoint_steps=()):
    centers = 2.0 * lam * np.asarray(a_vals, dtype=float)

    def log_kernel(wj):
        return -(dt / (4.0 * lam)) * (wj[:, None] - centers[None, :]) ** 2

    return strang_run(psi_eig, w.shape[1], log_kernel, half_step_unitary(h_eig, dt), w=w, checkpoint_steps=checkpoint_steps)


def _checkpoint_list(out, vecs, dt, extra_log=None):
    items = []
    for step in sorted(out["checkpoints"]):
        psi, ln2 = out["checkpoints"][step]
        items.append((step * dt, StateVector(vecs @ psi[0]).normalize(), float(np.exp(ln2[0]))))
    return items


def evolve_csl(
    phi: StateVector,
    a: HermitianOperator,
    h_a: HermitianOperator,
    traj: NoiseTrajectory,
    lam: float,
    checkpoint_steps=(),
) -> CslRun:
    """Time-ordered CSL evolution of ``phi`` under the noise record ``traj``.

    Each step is half unitary, pointer kernel, half unitary.  The squared norm
    is tracked in log space; with H_A = 0 the result is exact at any dt.
    """
    _check(lam, traj.grid.dt)
    if phi.dim != a.dim:
        raise ValidationError(f"state has dim {phi.dim}, operator {a.dim}")
    if traj.lattice_values is not None:
        raise ValidationError("lattice trajectories go through evolve_lattice_csl")
    vals, vecs, h_eig = collapse_basis(a, h_a)
    n0 = phi.norm2
    psi_eig = (vecs.conj().T @ phi.amplitudes / np.sqrt(n0))[None, :]
    out = _evolve_simple_batch(psi_eig, vals, h_eig, traj.values[None, :], traj.grid.dt, lam, checkpoint_steps)
    log_n2 = float(out["log_norm2"][0] + np.log(n0))
    final = vecs @ out["psi"][0]
    deweighted = log_n2 < DEWEIGHT_LOG_NORM2
    amps = final * np.exp(0.5 * log_n2) if not deweighted else final
    lw = float(raw_log_weight(log_n2, traj.values, traj.grid.dt, lam)) if traj.measure_tag == RAW else None
    return CslRun(StateVector(amps), log_n2, traj, _checkpoint_list(out, vecs, traj.grid.dt), lw, deweighted)


# --- ensembles --------------------------------------------------------------------


@dataclass
class EnsembleRuns:
    """Trajectory batch in array form (eigenbasis states mapped back to the input basis)."""

    states: np.ndarray  # (n, d) normalized
    log_norm2: np.ndarray
    a_stat: np.ndarray
    w: np.ndarray  # (n, steps)
    measure_tag: str
    seeds: np.ndarray
    dt: float
    lam: float
    checkpoints: dict = field(default_factory=dict)  # time -> (states, log_norm2, log_weight)
    log_weight: np.ndarray | None = None

    def __len__(self):
        return self.states.shape[0]

    def runs(self) -> list[CslRun]:
        grid = TimeGrid(self.dt, self.w.shape[1])
        out = []
        for i in range(len(self)):
            traj = NoiseTrajectory(grid, self.w[i], self.measure_tag, int(self.seeds[i]))
            ln2 = float(self.log_norm2[i])
            dew = ln2 < DEWEIGHT_LOG_NORM2
            amps = self.states[i] * (np.exp(0.5 * ln2) if not dew else 1.0)
            lw = None if self.log_weight is None else float(self.log_weight[i])
            out.append(CslRun(StateVector(amps), ln2, traj, [], lw, dew))
        return out


def simulate_ensemble(
    phi: StateVector,
    a: HermitianOperator,
    h_a: HermitianOperator,
    lam: float,
    grid: TimeGrid,
    n_traj: int,
    master_seed: int,
    sampler: str = PHYSICAL,
    checkpoint_times=(),
    threads: int = 1,
    chunk: int = 4096,
) -> EnsembleRuns:
    """Run ``n_traj`` trajectories; trajectory i draws from stream (master_seed, i).

    Chunks may run on a thread pool; results are merged in trajectory order,
    so output is independent of ``threads``.
    """
    if sampler not in (PHYSICAL, RAW):
        raise ValidationError(f"unknown sampler {sampler!r}")
    _check(lam, grid.dt)
    if abs(phi.norm2 - 1.0) >= 1e-12:
        raise ValidationError("initial state must be normalized")
    vals, vecs, h_eig = collapse_basis(a, h_a)
    psi_eig = vecs.conj().T @ phi.amplitudes
    ck_steps = sorted({int(round(t / grid.dt)) for t in checkpoint_times})
    bounds = [(s, min(s + chunk, n_traj)) for s in range(0, n_traj, chunk)]

    def work(bound):
        lo, hi = bound
        idx = range(lo, hi)
        if sampler == PHYSICAL:
            return sample_physical_batch(psi_eig, vals, h_eig, grid, lam, master_seed, idx, ck_steps)
        w = np.stack([np.sqrt(lam / grid.dt) * _rng.stream(master_seed, i).standard_normal(grid.steps) for i in idx])
        psi = np.tile(psi_eig, (hi - lo, 1))
        return _evolve_simple_batch(psi, vals, h_eig, w, grid.dt, lam, ck_steps)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]

    w = np.concatenate([p["w"] for p in parts])
    psi = np.concatenate([p["psi"] for p in parts]) @ vecs.T
    ln2 = np.concatenate([p["log_norm2"] for p in parts])
    a_stat = w.sum(axis=1) * grid.dt / (2.0 * lam * grid.t_final)
    lw = None
    checkpoints = {}
    for s in ck_steps:
        cpsi = np.concatenate([p["checkpoints"][s][0] for p in parts]) @ vecs.T
        cln2 = np.concatenate([p["checkpoints"][s][1] for p in parts])
        clw = raw_log_weight(cln2, w[:, :s], grid.dt, lam) if sampler == RAW else None
        checkpoints[s * grid.dt] = (cpsi, cln2, clw)
    if sampler == RAW:
        lw = raw_log_weight(ln2, w, grid.dt, lam)
    return EnsembleRuns(psi, ln2, a_stat, w, sampler, np.arange(n_traj), grid.dt, lam, checkpoints, lw)


@dataclass
class CollapseStatistics:
    bin_edges: np.ndarray
    counts: np.ndarray
    frequencies: np.ndarray  # per eigenvalue
    eigenvalues: np.ndarray
    weights: np.ndarray  # |alpha_n|^2
    lam: float
    t: float
    n_traj: int
    a_stat: np.ndarray
    ties: int = 0
    ks_statistic: float = float("nan")
    ks_pvalue: float = float("nan")

    def __post_init__(self):
        if abs(self.frequencies.sum() - 1.0) >= 1e-12:
            raise ValidationError("outcome frequencies must sum to 1")

    @property
    def mixture_sd(self) -> float:
        return float(np.sqrt(1.0 / (4.0 * self.lam * self.t)))

    def mixture_cdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.weights * stats.norm.cdf(x, loc=self.eigenvalues, scale=self.mixture_sd), axis=-1)

    def mixture_pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.weights * stats.norm.pdf(x, loc=self.eigenvalues, scale=self.mixture_sd), axis=-1)

    def binomial_sigma(self) -> np.ndarray:
        return np.sqrt(self.weights * (1 - self.weights) / self.n_traj)


def assign_outcomes(a_stat: np.ndarray, eigenvalues: np.ndarray) -> tuple[np.ndarray, int]:
    """Nearest-eigenvalue outcome; ties go to the smaller |a_n| and are counted."""
    ev = np.asarray(eigenvalues, dtype=float)
    dist = np.abs(a_stat[:, None] - ev[None, :])
    best = dist.min(axis=1, keepdims=True)
    tied = np.isclose(dist, best, rtol=0, atol=1e-15)
    ties = int(np.sum(tied.sum(axis=1) > 1))
    key = np.where(tied, np.abs(ev)[None, :], np.inf)
    return np.argmin(key, axis=1), ties


def run_collapse_ensemble(
    alpha,
    a_vals,
    lam: float,
    t: float,
    dt: float,
    n_traj: int,
    master_seed: int,
    sampler: str = PHYSICAL,
    h_a=None,
    bins: int = 60,
    threads: int = 1,
) -> CollapseStatistics:
    """Histogram of the time-averaged noise statistic plus Born-rule frequencies."""
    if n_traj < MIN_ENSEMBLE:
        raise ValidationError(f"trajectory count {n_traj} < {MIN_ENSEMBLE}: statistics meaningless")
    alpha = np.asarray(alpha, dtype=complex)
    a_vals = np.asarray(a_vals, dtype=float)
    phi = StateVector.from_amplitudes(alpha)
    a = HermitianOperator.diagonal(a_vals)
    h = HermitianOperator.zeros(a.dim) if h_a is None else (h_a if isinstance(h_a, HermitianOperator) else HermitianOperator(h_a))
    grid = TimeGrid.from_horizon(t, dt)
    ens = simulate_ensemble(phi, a, h, lam, grid, n_traj, master_seed, sampler, threads=threads)
    weights = np.abs(phi.amplitudes) ** 2
    outcome, ties = assign_outcomes(ens.a_stat, a_vals)
    if sampler == RAW:
        wts = np.exp(ens.log_weight)
        freq = np.array([wts[outcome == k].sum() for k in range(a_vals.size)])
        freq = freq / freq.sum()
    else:
        freq = np.bincount(outcome, minlength=a_vals.size) / n_traj
    sd = np.sqrt(1.0 / (4.0 * lam * t))
    lo, hi = a_vals.min() - 5 * sd, a_vals.max() + 5 * sd
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(ens.a_stat, bins=edges)
    st = CollapseStatistics(edges, counts, freq, a_vals, weights, lam, t, n_traj, ens.a_stat, ties)
    if sampler == PHYSICAL:
        res = stats.kstest(ens.a_stat, st.mixture_cdf)
        st.ks_statistic, st.ks_pvalue = float(res.statistic), float(res.pvalue)
    if ties:
        warnings.warn(f"{ties} trajectories tied between eigenvalues", stacklevel=2)
    return st


def ensemble_summary_csv(ens: EnsembleRuns, eigenvalues) -> str:
    outcome, _ = assign_outcomes(ens.a_stat, np.asarray(eigenvalues, dtype=float))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["trajectory_id", "seed", "outcome", "log_norm2", "a_statistic"])
    for i in range(len(ens)):
        wr.writerow([i, int(ens.seeds[i]), int(outcome[i]), repr(float(ens.log_norm2[i])), repr(float(ens.a_stat[i]))])
    return buf.getvalue()


def run_record_json(run: CslRun) -> str:
    return json.dumps(run.metadata(), sort_keys=True)


# --- lattice surrogate --------------------------------------------------------


@dataclass(frozen=True)
class SmearedDensityOperator:
    """A(x_k) on a 1-D lattice, diagonal in the particle position basis.

    ``values[k, j]`` is the eigenvalue of A(x_k) for a particle at site z_j.
    """

    sites: np.ndarray
    smearing: float
    mass_ratio: float
    values: np.ndarray
    coarse: bool = False

    @property
    def dx(self) -> float:
        return float(self.sites[1] - self.sites[0]) if self.sites.size > 1 else 1.0

    @property
    def n_sites(self) -> int:
        return self.sites.size

    def operator(self, k: int) -> HermitianOperator:
        return HermitianOperator.diagonal(self.values[k])

    def distance_matrix(self) -> np.ndarray:
        """D_ij = sum_k dx (A_k(z_i) - A_k(z_j))^2; the master-equation decay matrix."""
        v = self.values
        g = self.dx * (v.T @ v)
        d = np.diag(g)
        return d[:, None] + d[None, :] - 2.0 * g

    def normalization_residual(self, margin: float = 6.0) -> float:
        """|sum_k A_k(z)^2 dx - (m/m0)^2| over particle sites away from the edges."""
        s = self.sites
        inner = (s >= s[0] + margin * self.smearing) & (s <= s[-1] - margin * self.smearing)
        if not inner.any():
            return float("nan")
        tot = self.dx * np.sum(self.values[:, inner] ** 2, axis=0)
        return float(np.max(np.abs(tot - self.mass_ratio**2)))

    def effective_rate_factor(self) -> float:
        """(m/m0)^2 / (2 a^2): the small-separation curvature of D, per unit lam."""
        return self.mass_ratio**2 / (2.0 * self.smearing**2)


def build_smeared_A(lattice, a: float, mass_ratio: float = 1.0, particle_sites=None) -> SmearedDensityOperator:
    """Gaussian-smeared density operator, prefactor (m/m0)(pi a^2)^{-1/4} in d = 1."""
    sites = np.asarray(lattice, dtype=float).reshape(-1)
    if not a > 0:
        raise ValidationError("smearing length must be positive")
    z = sites if particle_sites is None else np.asarray(particle_sites, dtype=float).reshape(-1)
    coarse = bool(sites.size > 1 and np.max(np.diff(sites)) >= a)
    if coarse:
        warnings.warn("lattice spacing does not resolve the smearing length", stacklevel=2)
    pref = mass_ratio * (np.pi * a * a) ** -0.25
    vals = pref * np.exp(-((sites[:, None] - z[None, :]) ** 2) / (2.0 * a * a))
    return SmearedDensityOperator(sites, float(a), float(mass_ratio), vals, coarse)


def lattice_kinetic(n: int, h: float, mass: float) -> np.ndarray:
    """p^2/2m by the 3-point Laplacian with Dirichlet ends."""
    c = 1.0 / (2.0 * mass * h * h)
    k = np.diag(np.full(n, 2.0 * c)) - c * np.eye(n, k=1) - c * np.eye(n, k=-1)
    return k.astype(complex)


def lattice_position(sites) -> np.ndarray:
    return np.diag(np.asarray(sites, dtype=float)).astype(complex)


def edge_clearance(psi: np.ndarray, sites: np.ndarray) -> float:
    """Distance from packet mean to the nearest edge, in packet standard deviations."""
    p = np.abs(psi) ** 2
    p = p / p.sum()
    mu = float(np.sum(p * sites))
    sd = float(np.sqrt(max(np.sum(p * (sites - mu) ** 2), 1e-300)))
    return min(mu - sites[0], sites[-1] - mu) / sd


def _lattice_log_kernel(smeared: SmearedDensityOperator, lam: float, dt: float):
    dx = smeared.dx
    vals = smeared.values  # (sites, dim)
    a_sq = np.sum(vals**2, axis=0)
    pref = -(dt * dx) / (4.0 * lam)

    def log_kernel(wj):
        wj = np.atleast_2d(wj)
        w_sq = np.sum(wj**2, axis=1)
        return pref * (w_sq[:, None] - 4.0 * lam * (wj @ vals) + 4.0 * lam * lam * a_sq[None, :])

    return log_kernel


def evolve_lattice_csl(
    phi: StateVector,
    smeared: SmearedDensityOperator,
    h_a,
    field_traj: NoiseTrajectory,
    lam: float,
    checkpoint_steps=(),
) -> CslRun:
    """Lattice CSL step: exp(-(dt dx/4 lam) sum_k (w_k - 2 lam A_k)^2), Strang split with H_A."""
    dt = field_traj.grid.dt
    _check(lam, dt)
    if field_traj.sites != smeared.n_sites:
        raise ValidationError(f"field has {field_traj.sites} sites, operator {smeared.n_sites}")
    h = np.zeros((phi.dim, phi.dim), complex) if h_a is None else (h_a.matrix if isinstance(h_a, HermitianOperator) else np.asarray(h_a, complex))
    n0 = phi.norm2
    psi0 = (phi.amplitudes / np.sqrt(n0))[None, :]
    w = np.asarray(field_traj.lattice_values if field_traj.lattice_values is not None else field_traj.values[:, None])
    out = strang_run(psi0, field_traj.grid.steps, _lattice_log_kernel(smeared, lam, dt), half_step_unitary(h, dt), w=w[None, :, :], checkpoint_steps=checkpoint_steps)
    log_n2 = float(out["log_norm2"][0] + np.log(n0))
    final = out["psi"][0]
    dew = log_n2 < DEWEIGHT_LOG_NORM2
    if np.any(np.abs(final[[0, -1]]) ** 2 > 1e-8):
        warnings.warn("wavefunction reaches the lattice boundary", stacklevel=2)
    lw = None
    if field_traj.measure_tag == RAW:
        lw = float(raw_log_weight(log_n2, w.reshape(1, -1), dt, lam, smeared.dx)[0])
    ident = np.eye(phi.dim)
    return CslRun(StateVector(final * (1.0 if dew else np.exp(0.5 * log_n2))), log_n2, field_traj, _checkpoint_list(out, ident, dt), lw, dew)


def simulate_lattice_ensemble(
    phi: StateVector,
    smeared: SmearedDensityOperator,
    h_a,
    lam: float,
    grid: TimeGrid,
    n_traj: int,
    master_seed: int,
    chunk: int = 512,
) -> EnsembleRuns:
    """Physical-measure lattice trajectories: per step pick a particle site from
    the current position populations, then draw the whole field around it."""
    _check(lam, grid.dt)
    dt, dx = grid.dt, smeared.dx
    h = np.zeros((phi.dim, phi.dim), complex) if h_a is None else (h_a.matrix if isinstance(h_a, HermitianOperator) else np.asarray(h_a, complex))
    u_half = half_step_unitary(h, dt)
    log_kernel = _lattice_log_kernel(smeared, lam, dt)
    sd = np.sqrt(lam / (dt * dx))
    centers = 2.0 * lam * smeared.values  # (sites, dim)
    states, ln2s = [], []
    for lo in range(0, n_traj, chunk):
        idx = range(lo, min(lo + chunk, n_traj))
        uniforms, normals = _uniform_normal_draws(master_seed, idx, grid.steps, smeared.n_sites)

        def draw(j, pops, uniforms=uniforms, normals=normals):
            comp = choose_components(uniforms[:, j], pops)
            return centers[:, comp].T + sd * normals[:, j, :]

        psi = np.tile(phi.amplitudes, (len(idx), 1))
        out = strang_run(psi, grid.steps, log_kernel, u_half, draw=draw)
        states.append(out["psi"])
        ln2s.append(out["log_norm2"])
    psi = np.concatenate(states)
    ln2 = np.concatenate(ln2s)
    return EnsembleRuns(psi, ln2, np.full(n_traj, np.nan), np.zeros((n_traj, grid.steps)), PHYSICAL, np.arange(n_traj), dt, lam)
