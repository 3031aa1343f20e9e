"""Critically coupled filter cavities cascaded after the beamsplitter outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DensityMatrix, HilbertSpace, destroy, embed, partial_trace
from .dynamics import Jump, SystemModel
from .errors import ParameterError, StructureError
from .timedep import TimeDependentOperator

TRUNCATION_LIMIT = 1e-6


@dataclass(frozen=True)
class FilterSpec:
    """Filter of full bandwidth ``kappa`` (units of gamma) on each output port."""

    kappa: float
    n_max: int = 2

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("filter bandwidth kappa must be positive")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ParameterError("n_max must be an integer >= 1")


def attach_filters(model: SystemModel, spec: FilterSpec) -> SystemModel:
    """Feed output ``c_k`` into cavity ``f_k``; detector 1 then sees ``L_t = sqrt(kappa/2) f_1``.

    The waveguide jumps are replaced by the transmitted and reflected cavity
    channels. Loss and dephasing jumps are kept.
    """
    if model.cavity_slots:
        raise StructureError("model already has filter cavities")
    if len(model.outputs) != 2:
        raise StructureError("model does not expose its two beamsplitter outputs")
    n_levels = spec.n_max + 1
    space = model.space.extended(n_levels, n_levels)
    base = model.space.n_factors
    g = np.sqrt(spec.kappa / 2)

    ham = model.hamiltonian.extend(space)
    jumps = [Jump(lbl, op.extend(space)) for lbl, op in model.jumps if not lbl.startswith("wg")]
    heralds = []
    for k, c in enumerate(model.outputs):
        c = c.extend(space)
        f = embed(destroy(n_levels), base + k, space)
        fd = f.dag()
        # (1/2i) sqrt(kappa/2) (f^dag c - f c^dag)
        ham = ham + (fd @ c - f @ c.dag()) * (g / 2j)
        lt = TimeDependentOperator(f * g)
        jumps.append(Jump(f"t{k + 1}", lt))
        jumps.append(Jump(f"r{k + 1}", c + f * g))
        heralds.append(lt)

    vac = np.zeros(n_levels * n_levels, complex)
    vac[0] = 1.0
    rho0 = model.initial_state.tensor(DensityMatrix.from_ket(vac, HilbertSpace((n_levels, n_levels))))
    info = dict(model.info, filter=spec)
    return SystemModel(
        space=space,
        hamiltonian=ham,
        jumps=tuple(jumps),
        herald=heralds[0],
        initial_state=rho0,
        outputs=(),
        atom_slots=model.atom_slots,
        cavity_slots=(base, base + 1),
        info=info,
    )


def top_fock_population(rho: np.ndarray, model: SystemModel) -> np.ndarray:
    """Population of the highest kept Fock level of each cavity; supports stacks."""
    out = []
    for slot in model.cavity_slots:
        red = partial_trace(rho, model.space, (slot,))
        out.append(np.diagonal(red, axis1=-2, axis2=-1)[..., -1].real)
    return np.array(out)


def cavity_population(rho: np.ndarray, model: SystemModel) -> np.ndarray:
    """Mean photon number of each cavity."""
    out = []
    for slot in model.cavity_slots:
        red = partial_trace(rho, model.space, (slot,))
        n = np.arange(red.shape[-1])
        out.append(np.diagonal(red, axis1=-2, axis2=-1).real @ n)
    return np.array(out)
