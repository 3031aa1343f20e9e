"""Heralded remote-entanglement simulator for three-level emitters.

Units: rates and frequencies in units of the loss rate gamma, times in 1/gamma.
"""

from .core import DensityMatrix, HilbertSpace, Operator, dissipator, embed, identity, liouvillian_rhs
from .diffusion import DiffusionSpec, averaged_metrics
from .dynamics import IntegratorConfig, Jump, SystemModel, evolve, evolve_null, evolve_pair
from .errors import (
    CalibrationError,
    HeraldSimError,
    IntegrationError,
    NoHeraldError,
    ParameterError,
    StructureError,
)
from .filters import FilterSpec, attach_filters
from .metrics import MetricPoint, bell_state, fidelity_efficiency
from .optimize import (
    ConstraintSpec,
    OptimumRecord,
    calibrate_parameter,
    cooperativity_sweep,
    noise_map,
    optimize_over_window,
)
from .schemes import (
    AtomParams,
    RamanSpec,
    ResonantSpec,
    SpontaneousSpec,
    build_model,
    build_raman,
    build_resonant,
    build_spontaneous,
)

__version__ = "0.1.0"
