"""Batched Strang-split propagation shared by the samplers and evolvers.

All states live in a basis where the pointer kernel is diagonal (the collapse
eigenbasis, or the position basis on a lattice).  One step is

    psi <- U_half K(w) U_half psi,     U_half = exp(-i H dt/2),

with the kernel applied in log space so that the running squared norm can be
accumulated without underflow.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def half_step_unitary(h: np.ndarray, dt: float) -> np.ndarray | None:
    """exp(-i H dt/2), or None when H vanishes."""
    if h is None or not np.any(h):
        return None
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-0.5j * dt * vals)) @ vecs.conj().T


def strang_run(
    psi0: np.ndarray,
    steps: int,
    log_kernel: Callable[[np.ndarray], np.ndarray],
    u_half: np.ndarray | None,
    w: np.ndarray | None = None,
    draw: Callable[[int, np.ndarray], np.ndarray] | None = None,
    checkpoint_steps=(),
) -> dict:
    """Propagate a batch of states.

    Parameters
    ----------
    psi0 : (B, d) complex array of normalized initial states.
    log_kernel : maps a step's noise values (B,) or (B, sites) to the (B, d)
        log of the diagonal kernel.
    w : prescribed noise, shape (B, steps) or (B, steps, sites).
    draw : alternatively, ``draw(j, populations)`` returns the step-j noise
        given the current populations; used by the physical sampler.

    Returns a dict with the final normalized states, accumulated log squared
    norms, the noise actually used and checkpoints {step: (psi, log_norm2)}.
    """
    if (w is None) == (draw is None):
        raise ValueError("exactly one of w or draw must be given")
    psi = np.array(psi0, dtype=complex, copy=True)
    b = psi.shape[0]
    log_n2 = np.zeros(b)
    wanted = {int(s) for s in checkpoint_steps}
    checkpoints = {}
    used = [] if draw is not None else None
    if 0 in wanted:
        checkpoints[0] = (psi.copy(), log_n2.copy())
    for j in range(steps):
        if u_half is not None:
            psi = psi @ u_half.T
        if draw is not None:
            wj = draw(j, np.abs(psi) ** 2)
            used.append(wj)
        else:
            wj = w[:, j]
        logk = log_kernel(wj)
        m = logk.max(axis=1)
        psi = psi * np.exp(logk - m[:, None])
        if u_half is not None:
            psi = psi @ u_half.T
        n2 = np.sum(psi.real**2 + psi.imag**2, axis=1)
        with np.errstate(divide="ignore"):
            log_n2 += 2.0 * m + np.log(n2)
        ok = n2 > 0
        psi[ok] /= np.sqrt(n2[ok])[:, None]
        if (j + 1) in wanted:
            checkpoints[j + 1] = (psi.copy(), log_n2.copy())
    if draw is not None:
        w = np.stack(used, axis=1)
    return {"psi": psi, "log_norm2": log_n2, "w": w, "checkpoints": checkpoints}


def choose_components(uniforms: np.ndarray, populations: np.ndarray) -> np.ndarray:
    """Inverse-CDF choice of a basis component per row."""
    cdf = np.cumsum(populations, axis=1)
    cdf /= cdf[:, -1:]
    return np.minimum((uniforms[:, None] > cdf).sum(axis=1), populations.shape[1] - 1)
