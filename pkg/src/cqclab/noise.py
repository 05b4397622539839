"""White-noise trajectories under the vacuum (raw) and physical measures.

Under the raw measure every step is an independent Normal(0, lam/dt) draw.
The physical measure weights a trajectory by the squared norm of the state it
produces; the sequential sampler realises it exactly as a chain of one-step
Gaussian mixtures, sum_n p_n Normal(2 lam a_n, lam/dt), with p_n the current
populations in the eigenbasis of the collapse operator.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .linalg import HermitianOperator, StateVector, ValidationError, eig_hermitian
from .propagate import choose_components, half_step_unitary, strang_run

RAW = "raw"
PHYSICAL = "physical"
MEASURE_TAGS = (RAW, PHYSICAL)

_MAGIC = b"CQCTRAJ1"
_TAG_CODES = {RAW: 0, PHYSICAL: 1}


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"steps must be an integer >= 1, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def t_final(self) -> float:
        return self.dt * self.steps

    @classmethod
    def from_horizon(cls, t: float, dt: float) -> "TimeGrid":
        steps = int(round(t / dt))
        if steps < 1 or abs(steps * dt - t) > 1e-9 * max(1.0, t):
            raise ValidationError(f"horizon {t} is not a whole number of steps of {dt}")
        return cls(dt, steps)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.steps + 1)


@dataclass(frozen=True)
class NoiseTrajectory:
    grid: TimeGrid
    values: np.ndarray
    measure_tag: str
    seed: int
    lattice_values: np.ndarray | None = None
    cell_volume: float = 1.0

    def __post_init__(self):
        if self.measure_tag not in MEASURE_TAGS:
            raise ValidationError(f"unknown measure tag {self.measure_tag!r}")
        if self.lattice_values is None:
            v = np.asarray(self.values, dtype=float).reshape(-1)
            if v.size != self.grid.steps:
                raise ValidationError(f"{v.size} noise values for {self.grid.steps} steps")
            object.__setattr__(self, "values", v)
        else:
            lv = np.asarray(self.lattice_values, dtype=float)
            if lv.ndim != 2 or lv.shape[0] != self.grid.steps:
                raise ValidationError(f"lattice values shape {lv.shape} does not match {self.grid.steps} steps")
            object.__setattr__(self, "lattice_values", lv)
            object.__setattr__(self, "values", lv.reshape(-1))

    @property
    def sites(self) -> int:
        return 1 if self.lattice_values is None else self.lattice_values.shape[1]


def _check_rate(lam: float) -> None:
    if not (lam > 0 and np.isfinite(lam)):
        raise ValidationError(f"lambda must be positive, got {lam}")


def sample_raw_white(grid: TimeGrid, lam: float, seed: int, index: int = 0) -> NoiseTrajectory:
    _check_rate(lam)
    z = _rng.stream(seed, index).standard_normal(grid.steps)
    return NoiseTrajectory(grid, np.sqrt(lam / grid.dt) * z, RAW, int(seed))


def sample_lattice_raw(grid: TimeGrid, sites: int, lam: float, seed: int, dx: float = 1.0, index: int = 0) -> NoiseTrajectory:
    """i.i.d. Normal(0, lam/(dt dx)) in every space-time cell."""
    _check_rate(lam)
    if sites < 1 or not dx > 0:
        raise ValidationError("need sites >= 1 and dx > 0")
    z = _rng.stream(seed, index).standard_normal((grid.steps, sites))
    vals = np.sqrt(lam / (grid.dt * dx)) * z
    if sites == 1:
        return NoiseTrajectory(grid, vals[:, 0], RAW, int(seed), cell_volume=dx)
    return NoiseTrajectory(grid, vals.reshape(-1), RAW, int(seed), lattice_values=vals, cell_volume=dx)


def time_average(traj: NoiseTrajectory, lam: float) -> float:
    """(2 lam t)^{-1} * integral of w over the horizon."""
    _check_rate(lam)
    return float(np.sum(traj.values) * traj.grid.dt / (2.0 * lam * traj.grid.t_final))


def raw_log_weight(log_norm2: np.ndarray | float, w: np.ndarray, dt: float, lam: float, cell_volume: float = 1.0):
    """Log likelihood ratio of the physical to the raw measure.

    The physical density is |psi|^2 relative to Dw; the raw density is the
    vacuum Gaussian exp(-(2 lam)^{-1} sum w^2 dt), so the ratio restores that
    factor.  Its raw-measure mean is 1 (the squared-norm martingale).
    """
    w = np.asarray(w, dtype=float)
    sq = np.sum(w.reshape(w.shape[0], -1) ** 2, axis=1) if w.ndim > 1 else np.sum(w**2)
    return np.asarray(log_norm2) + sq * dt * cell_volume / (2.0 * lam)


# --- physical sequential sampler -------------------------------------------------


def collapse_basis(a: HermitianOperator, h_a: HermitianOperator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenvalues of A, its eigenvectors V and H_A expressed in that basis."""
    if a.dim != h_a.dim:
        raise ValidationError(f"dimension mismatch: A is {a.dim}, H_A is {h_a.dim}")
    vals, vecs = eig_hermitian(a)
    h_eig = vecs.conj().T @ h_a.matrix @ vecs
    return vals, vecs, 0.5 * (h_eig + h_eig.conj().T)


def _uniform_normal_draws(seed: int, indices, steps: int, sites: int = 1):
    # one uniform (mixture component) and `sites` normals per step, per stream
    indices = list(indices)
    uniforms = np.empty((len(indices), steps))
    normals = np.empty((len(indices), steps, sites))
    for row, idx in enumerate(indices):
        g = _rng.stream(seed, idx)
        uniforms[row] = g.random(steps)
        normals[row] = g.standard_normal((steps, sites))
    return uniforms, normals


def sample_physical_batch(
    psi0: np.ndarray,
    a_vals: np.ndarray,
    h_eig: np.ndarray,
    grid: TimeGrid,
    lam: float,
    seed: int,
    indices,
    checkpoint_steps=(),
) -> dict:
    """Exact physical-measure sampling for a batch of trajectories.

    ``psi0`` is the initial state in the collapse eigenbasis.  Each step is a
    Strang split (half unitary, pointer kernel, half unitary) with w drawn
    from the mixture defined by the populations just before the kernel.
    """
    _check_rate(lam)
    dt = grid.dt
    uniforms, normals = _uniform_normal_draws(seed, indices, grid.steps)
    centers = 2.0 * lam * np.asarray(a_vals, dtype=float)
    sd = np.sqrt(lam / dt)

    def draw(j, pops):
        comp = choose_components(uniforms[:, j], pops)
        return centers[comp] + sd * normals[:, j, 0]

    def log_kernel(wj):
        return -(dt / (4.0 * lam)) * (wj[:, None] - centers[None, :]) ** 2

    psi = np.tile(np.asarray(psi0, dtype=complex), (uniforms.shape[0], 1))
    return strang_run(psi, grid.steps, log_kernel, half_step_unitary(h_eig, dt), draw=draw, checkpoint_steps=checkpoint_steps)


def sample_physical_sequential(
    phi: StateVector,
    a: HermitianOperator,
    h_a: HermitianOperator,
    grid: TimeGrid,
    lam: float,
    seed: int,
    index: int = 0,
) -> tuple[NoiseTrajectory, StateVector]:
    """One physical-measure trajectory and its normalized final state."""
    _check_rate(lam)
    if not phi.normalized and abs(phi.norm2 - 1.0) >= 1e-12:
        raise ValidationError("initial state must be normalized")
    vals, vecs, h_eig = collapse_basis(a, h_a)
    out = sample_physical_batch(vecs.conj().T @ phi.amplitudes, vals, h_eig, grid, lam, seed, [index])
    traj = NoiseTrajectory(grid, out["w"][0], PHYSICAL, int(seed))
    return traj, StateVector(vecs @ out["psi"][0]).normalize()


# --- export -------------------------------------------------------------------


def to_binary(traj: NoiseTrajectory) -> bytes:
    """Little-endian layout: magic, dt, steps, sites, seed, tag, then float64 values."""
    head = _MAGIC + struct.pack(
        "<dqqQq", traj.grid.dt, traj.grid.steps, traj.sites, int(traj.seed) & _rng.SEED_MASK, _TAG_CODES[traj.measure_tag]
    )
    return head + np.asarray(traj.values, dtype="<f8").tobytes()


def from_binary(blob: bytes) -> NoiseTrajectory:
    if blob[:8] != _MAGIC:
        raise ValidationError("not a trajectory dump")
    dt, steps, sites, seed, tag = struct.unpack("<dqqQq", blob[8:48])
    vals = np.frombuffer(blob[48:], dtype="<f8").astype(float)
    tag_name = {v: k for k, v in _TAG_CODES.items()}[tag]
    grid = TimeGrid(dt, steps)
    if sites == 1:
        return NoiseTrajectory(grid, vals, tag_name, seed)
    return NoiseTrajectory(grid, vals, tag_name, seed, lattice_values=vals.reshape(steps, sites))


def to_csv(traj: NoiseTrajectory) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    if traj.lattice_values is None:
        wr.writerow(["t", "w"])
        for t, v in zip(traj.grid.times(), traj.values):
            wr.writerow([repr(float(t)), repr(float(v))])
    else:
        wr.writerow(["t"] + [f"w{k}" for k in range(traj.sites)])
        for t, row in zip(traj.grid.times(), traj.lattice_values):
            wr.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    return buf.getvalue()
