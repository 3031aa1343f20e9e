"""Model builders for the spontaneous-emission, Raman and resonant-scattering schemes.

Atomic levels are ordered ``g = 0``, ``m = 1``, ``e = 2``. All rates are in
units of the loss rate gamma; frequencies are angular.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .core import DensityMatrix, HilbertSpace, Operator, basis, embed, identity, transition
from .dynamics import Jump, SystemModel
from .errors import ParameterError
from .timedep import TimeDependentOperator, make_envelope

G, M, E = 0, 1, 2
ATOM_DIM = 3
TWO_ATOMS = HilbertSpace((ATOM_DIM, ATOM_DIM))


@dataclass(frozen=True)
class AtomParams:
    """Rates of one emitter.

    ``delta`` is the detuning of the optical transition from its nominal
    centre (for Raman the drive detuning ``Delta`` is added on top).
    """

    Gamma: float = 10.0
    gamma: float = 1.0
    gamma_dp: float = 0.0
    gamma_sd: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("Gamma", "gamma", "gamma_dp", "gamma_sd"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be a non-negative rate, got {v}")
        if not np.isfinite(self.delta):
            raise ParameterError("delta must be finite")

    def detuned(self, delta: float) -> "AtomParams":
        return replace(self, delta=delta)


@dataclass(frozen=True)
class SpontaneousSpec:
    alpha: complex = 0.1
    kind: str = field(default="spontaneous", init=False)

    def __post_init__(self):
        if abs(self.alpha) >= 1:
            raise ParameterError("|alpha| must be < 1")

    @property
    def param(self) -> float:
        return abs(self.alpha)

    def with_param(self, value: float) -> "SpontaneousSpec":
        return SpontaneousSpec(alpha=value)


@dataclass(frozen=True)
class RamanSpec:
    """Raman drive ``Omega * e(t)`` detuned by ``Delta`` from the excited state.

    ``duration=None`` with a rect envelope keeps the drive on for the whole
    window, whatever ``T`` is.
    """

    omega: float = 60.0
    Delta: float = 600.0
    envelope: str = "rect"
    duration: Optional[float] = None
    omega2: Optional[float] = None
    kind: str = field(default="raman", init=False)

    def __post_init__(self):
        if self.Delta == 0:
            raise ParameterError("Raman scheme needs a nonzero drive detuning Delta")
        if self.omega < 0 or (self.omega2 is not None and self.omega2 < 0):
            raise ParameterError("Rabi frequency must be non-negative")
        make_envelope(self.envelope, self.duration)

    @property
    def param(self) -> float:
        return self.omega

    def with_param(self, value: float) -> "RamanSpec":
        return replace(self, omega=value, omega2=None if self.omega2 is None else value)


@dataclass(frozen=True)
class ResonantSpec:
    """Coherent input of amplitude ``beta`` (square root of a rate) on both arms."""

    beta: complex = 0.1
    envelope: str = "rect"
    duration: Optional[float] = None
    kind: str = field(default="resonant", init=False)

    def __post_init__(self):
        if isinstance(self.beta, (int, float)) and self.beta < 0:
            raise ParameterError("drive amplitude beta must be non-negative")
        make_envelope(self.envelope, self.duration)

    @property
    def param(self) -> float:
        return abs(self.beta)

    def with_param(self, value: float) -> "ResonantSpec":
        return replace(self, beta=value)


SchemeSpec = Union[SpontaneousSpec, RamanSpec, ResonantSpec]
KINDS = ("spontaneous", "raman", "resonant")


def default_spec(kind: str) -> SchemeSpec:
    """Operating point of the temporal-filtering study for ``kind``."""
    if kind == "spontaneous":
        return SpontaneousSpec(0.1)
    if kind == "raman":
        return RamanSpec(60.0, 600.0)
    if kind == "resonant":
        return ResonantSpec(float(np.sqrt(0.01)))
    raise ParameterError(f"unknown scheme {kind!r}")


# ---------------------------------------------------------------------------


def _local(space: HilbertSpace, slot: int, i: int, j: int) -> Operator:
    return embed(transition(ATOM_DIM, i, j), slot, space)


def _atom_jumps(atoms, space) -> tuple[list[Jump], list[Operator]]:
    """Waveguide, loss and dephasing jumps; also returns the bare waveguide operators."""
    jumps, wg = [], []
    for k, a in enumerate(atoms):
        lower = _local(space, k, G, E)
        wg.append(lower * np.sqrt(a.Gamma))
        jumps.append(Jump(f"wg{k + 1}", TimeDependentOperator(wg[-1])))
    for k, a in enumerate(atoms):
        if a.gamma > 0:
            jumps.append(Jump(f"loss{k + 1}", TimeDependentOperator(_local(space, k, G, E) * np.sqrt(a.gamma))))
    for k, a in enumerate(atoms):
        if a.gamma_dp > 0:
            jumps.append(
                Jump(f"dp{k + 1}", TimeDependentOperator(_local(space, k, E, E) * np.sqrt(2 * a.gamma_dp)))
            )
    return jumps, wg


def _outputs(wg1, wg2):
    c1 = (wg1 - wg2) / np.sqrt(2)
    c2 = (wg1 + wg2) / np.sqrt(2)
    return c1, c2


def _check_atoms(atoms):
    if len(atoms) != 2 or not all(isinstance(a, AtomParams) for a in atoms):
        raise ParameterError("expected a pair of AtomParams")


def build_spontaneous(atoms, spec: SpontaneousSpec) -> SystemModel:
    """Both emitters prepared in ``alpha|e> + beta|m>`` and left to decay."""
    _check_atoms(atoms)
    if spec.kind != "spontaneous":
        raise ParameterError("build_spontaneous needs a spontaneous spec")
    space = TWO_ATOMS
    alpha = complex(spec.alpha)
    beta = np.sqrt(1 - abs(alpha) ** 2)
    single = alpha * basis(3, E) + beta * basis(3, M)
    rho0 = DensityMatrix.from_ket(np.kron(single, single), space)

    ham = sum((_local(space, k, E, E) * a.delta for k, a in enumerate(atoms)), Operator(space, terms=[]))
    jumps, wg = _atom_jumps(atoms, space)
    c1, c2 = _outputs(TimeDependentOperator(wg[0]), TimeDependentOperator(wg[1]))
    return SystemModel(
        space=space,
        hamiltonian=TimeDependentOperator(ham),
        jumps=tuple(jumps),
        herald=c1,
        initial_state=rho0,
        outputs=(c1, c2),
        info={"kind": "spontaneous", "atoms": tuple(atoms), "spec": spec},
    )


def build_raman(atoms, spec: RamanSpec) -> SystemModel:
    """Off-resonant drive on ``m <-> e`` from ``|m m>``; rotating frame of the drive."""
    _check_atoms(atoms)
    if spec.kind != "raman":
        raise ParameterError("build_raman needs a Raman spec")
    space = TWO_ATOMS
    env = make_envelope(spec.envelope, spec.duration)
    rho0 = DensityMatrix.from_ket(space.ket(M, M), space)

    zero_op = Operator(space, terms=[])
    ham = zero_op
    drive = zero_op
    omegas = (spec.omega, spec.omega if spec.omega2 is None else spec.omega2)
    for k, a in enumerate(atoms):
        ham = ham + _local(space, k, E, E) * (spec.Delta + a.delta)
        drive = drive + (_local(space, k, E, M) + _local(space, k, M, E)) * omegas[k]
    jumps, wg = _atom_jumps(atoms, space)
    c1, c2 = _outputs(TimeDependentOperator(wg[0]), TimeDependentOperator(wg[1]))
    return SystemModel(
        space=space,
        hamiltonian=TimeDependentOperator(ham, [(env, drive)]),
        jumps=tuple(jumps),
        herald=c1,
        initial_state=rho0,
        outputs=(c1, c2),
        info={"kind": "raman", "atoms": tuple(atoms), "spec": spec},
    )


def build_resonant(atoms, spec: ResonantSpec) -> SystemModel:
    """Both ``g <-> e`` transitions driven by one weak coherent field.

    The input field is absorbed into the Hamiltonian and the waveguide jump
    ``sqrt(Gamma)|g><e| + beta(t)``. With a common ``beta`` the scalar parts
    cancel in ``c1``, leaving detector 1 dark for the coherent component.
    """
    _check_atoms(atoms)
    if spec.kind != "resonant":
        raise ParameterError("build_resonant needs a resonant spec")
    space = TWO_ATOMS
    env = make_envelope(spec.envelope, spec.duration)
    plus = (basis(3, G) + basis(3, M)) / np.sqrt(2)
    rho0 = DensityMatrix.from_ket(np.kron(plus, plus), space)

    beta = complex(spec.beta)
    zero_op = Operator(space, terms=[])
    ham = zero_op
    drive = zero_op
    for k, a in enumerate(atoms):
        ham = ham + _local(space, k, E, E) * a.delta
        drive = drive + (
            _local(space, k, E, G) * beta - _local(space, k, G, E) * np.conj(beta)
        ) * (np.sqrt(a.Gamma) / 2j)
    jumps, _ = _atom_jumps(atoms, space)
    wg = []
    for k, a in enumerate(atoms):
        lower = _local(space, k, G, E) * np.sqrt(a.Gamma)
        wg.append(TimeDependentOperator(lower, [(env, identity(space) * beta)]))
        jumps[k] = Jump(f"wg{k + 1}", wg[-1])
    c1, c2 = _outputs(wg[0], wg[1])
    return SystemModel(
        space=space,
        hamiltonian=TimeDependentOperator(ham, [(env, drive)]),
        jumps=tuple(jumps),
        herald=c1,
        initial_state=rho0,
        outputs=(c1, c2),
        info={"kind": "resonant", "atoms": tuple(atoms), "spec": spec},
    )


_BUILDERS = {"spontaneous": build_spontaneous, "raman": build_raman, "resonant": build_resonant}


def build_model(atoms, spec: SchemeSpec) -> SystemModel:
    return _BUILDERS[spec.kind](atoms, spec)
