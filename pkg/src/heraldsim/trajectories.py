"""Quantum-jump (Monte Carlo wavefunction) unraveling, used as an independent check.

Only time-independent models are supported. Between jumps each trajectory
evolves under ``H_eff = H - i/2 sum L^dag L`` with the exact propagator on a
fixed grid; a jump happens when the squared norm falls below a uniform
random threshold, and the channel is drawn with probability ``|L_k psi|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm


@dataclass
class TrajectoryResult:
    times: np.ndarray
    populations: np.ndarray  # (len(times), d) mean over trajectories
    stderr: np.ndarray  # standard error of the mean, same shape
    n_traj: int


def jump_unravel(
    hamiltonian: np.ndarray,
    jumps: Sequence[np.ndarray],
    psi0: np.ndarray,
    times: Sequence[float],
    n_traj: int = 100_000,
    dt: float = 1e-3,
    seed: int = 0,
) -> TrajectoryResult:
    """Average level populations over ``n_traj`` jump trajectories.

    ``times`` are rounded to the propagation grid of spacing ``dt``.
    """
    rng = np.random.default_rng(seed)
    h = np.asarray(hamiltonian, dtype=complex)
    ls = [np.asarray(l, dtype=complex) for l in jumps]
    heff = h - 0.5j * sum((l.conj().T @ l for l in ls), np.zeros_like(h))
    step = expm(-1j * heff * dt).T  # row-vector convention
    times = np.asarray(times, dtype=float)
    marks = np.rint(times / dt).astype(int)

    psi = np.tile(np.asarray(psi0, dtype=complex), (n_traj, 1))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    thresh = rng.random(n_traj)
    d = psi.shape[1]
    pops = np.zeros((len(times), d))
    errs = np.zeros((len(times), d))

    def record(k):
        p = np.abs(psi) ** 2
        p /= p.sum(axis=1, keepdims=True)
        pops[k] = p.mean(axis=0)
        errs[k] = p.std(axis=0, ddof=1) / np.sqrt(n_traj)

    for k in np.nonzero(marks == 0)[0]:
        record(k)
    for n in range(1, marks.max() + 1 if marks.size else 1):
        psi = psi @ step
        norm2 = np.sum(np.abs(psi) ** 2, axis=1)
        jumped = np.nonzero(norm2 < thresh)[0]
        if jumped.size and ls:
            sub = psi[jumped]
            cand = np.stack([sub @ l.T for l in ls])  # (K, m, d)
            weights = np.sum(np.abs(cand) ** 2, axis=2)
            cum = np.cumsum(weights, axis=0)
            pick = rng.random(jumped.size) * cum[-1]
            chan = np.argmax(cum > pick, axis=0)
            new = cand[chan, np.arange(jumped.size)]
            psi[jumped] = new / np.linalg.norm(new, axis=1, keepdims=True)
            thresh[jumped] = rng.random(jumped.size)
        for k in np.nonzero(marks == n)[0]:
            record(k)
    return TrajectoryResult(times, pops, errs, n_traj)
