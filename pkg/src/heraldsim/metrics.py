"""Conditional state, fidelity and efficiency."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DensityMatrix, HilbertSpace, partial_trace
from .errors import NoHeraldError, StructureError

HERALD_CUTOFF = 1e-12
_METRIC_SLACK = 1e-8

_BELL = {
    # (|g m>, |m g>, |g g>, |m m>) amplitudes, levels g = 0, m = 1
    "psi-": ((0, 1, 1.0), (1, 0, -1.0)),
    "psi+": ((0, 1, 1.0), (1, 0, 1.0)),
    "phi-": ((0, 0, 1.0), (1, 1, -1.0)),
    "phi+": ((0, 0, 1.0), (1, 1, 1.0)),
}
_ALIASES = {"Ψ⁻": "psi-", "Ψ⁺": "psi+", "Φ⁻": "phi-", "Φ⁺": "phi+"}


def bell_state(kind: str = "psi-", space: Optional[HilbertSpace] = None) -> np.ndarray:
    """Bell vector on the ``{g, m}`` subspace of two qutrits.

    Any factors of ``space`` beyond the two atoms (filter cavities) are put
    in their vacuum.
    """
    kind = _ALIASES.get(kind, kind)
    if kind not in _BELL:
        raise ValueError(f"unknown Bell state {kind!r}")
    space = space or HilbertSpace((3, 3))
    if space.factors[:2] != (3, 3):
        raise StructureError("Bell states need two qutrit factors first")
    vec = np.zeros(space.dim, complex)
    rest = (0,) * (space.n_factors - 2)
    for i, j, amp in _BELL[kind]:
        vec += amp * space.ket(i, j, *rest)
    return vec / np.sqrt(2)


@dataclass(frozen=True)
class MetricPoint:
    """Fidelity and efficiency of the detector-1 herald at window ``window_T``.

    For diffusion averages, ``fidelity`` is the plain node average and
    ``fidelity_weighted`` the efficiency-weighted one.
    """

    window_T: float
    fidelity: float
    efficiency: float
    averaged: bool = False
    fidelity_weighted: Optional[float] = None
    excluded_nodes: int = 0

    def __post_init__(self):
        for name in ("fidelity", "efficiency"):
            v = getattr(self, name)
            if not (-_METRIC_SLACK <= v <= 1 + _METRIC_SLACK):
                raise ValueError(f"{name} = {v} outside [0, 1]")

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def _atomic_target(target: np.ndarray, space: HilbertSpace) -> np.ndarray:
    target = np.asarray(target, dtype=complex).ravel()
    if target.size == 9:
        return target
    if target.size != space.dim:
        raise StructureError(f"target of length {target.size} fits neither atoms nor space")
    blocks = target.reshape(9, -1)
    if np.linalg.norm(blocks[:, 1:]) > 1e-12:
        raise StructureError("target must have the cavities in vacuum")
    return blocks[:, 0]


def atomic_block(matrix: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Reduced two-atom matrix (cavities traced out); works on stacks."""
    if space.n_factors == 2:
        return matrix
    return partial_trace(matrix, space, (0, 1))


def overlap_and_trace(rho_c: np.ndarray, space: HilbertSpace, target: np.ndarray):
    """``(<target|Tr_cav rho_c|target>, tr rho_c)``; supports leading batch axes."""
    t = _atomic_target(target, space)
    red = atomic_block(rho_c, space)
    ov = np.einsum("i,...ij,j->...", t.conj(), red, t).real
    tr = np.trace(red, axis1=-2, axis2=-1).real
    return ov, tr


def fidelity_efficiency(
    rho_r,
    rho_null,
    target: Optional[np.ndarray] = None,
    window_T: float = float("nan"),
    cutoff: float = HERALD_CUTOFF,
) -> MetricPoint:
    """F and eta from ``rho_c = rho_r - rho_null``.

    Raises :class:`NoHeraldError` when ``tr rho_c`` is below ``cutoff``.
    """
    space = None
    if isinstance(rho_r, DensityMatrix):
        space = rho_r.space
        if isinstance(rho_null, DensityMatrix) and rho_null.space != space:
            raise StructureError("conditional inputs live on different spaces")
    r = getattr(rho_r, "matrix", rho_r)
    n = getattr(rho_null, "matrix", rho_null)
    if np.shape(r) != np.shape(n):
        raise StructureError("rho_r and rho_null have different shapes")
    if space is None:
        space = HilbertSpace((3, 3)) if np.shape(r)[0] == 9 else None
        if space is None:
            raise StructureError("pass DensityMatrix inputs for spaces with cavities")
    if target is None:
        target = bell_state("psi-")
    return metrics_from_conditional(np.asarray(r) - np.asarray(n), space, target, window_T, cutoff)


def metrics_from_conditional(rho_c, space, target, window_T=float("nan"), cutoff=HERALD_CUTOFF) -> MetricPoint:
    ov, eta = overlap_and_trace(rho_c, space, target)
    if not eta >= cutoff:
        raise NoHeraldError(float(eta), cutoff)
    return MetricPoint(float(window_T), float(ov / eta), float(eta))
