import numpy as np
import pytest

from conftest import herald_point
from heraldsim.diffusion import ensemble_scan, make_model
from heraldsim.dynamics import conditional_path, evolve
from heraldsim.errors import ParameterError, StructureError
from heraldsim.filters import TRUNCATION_LIMIT, FilterSpec, attach_filters, cavity_population, top_fock_population
from heraldsim.schemes import AtomParams, SpontaneousSpec, build_model, default_spec

NOISELESS = (AtomParams(),) * 2
DEPHASED = (AtomParams(gamma_dp=5.0),) * 2


def test_filter_spec_validation():
    with pytest.raises(ParameterError):
        FilterSpec(0.0)
    with pytest.raises(ParameterError):
        FilterSpec(1.0, n_max=0)


def test_attach_structure():
    base = build_model(DEPHASED, default_spec("spontaneous"))
    model = attach_filters(base, FilterSpec(2.0))
    assert model.space.factors == (3, 3, 3, 3)
    assert model.cavity_slots == (2, 3)
    labels = [lbl for lbl, _ in model.jumps]
    assert labels == ["loss1", "loss2", "dp1", "dp2", "t1", "r1", "t2", "r2"]
    assert model.herald is model.jumps[4].operator
    with pytest.raises(StructureError):
        attach_filters(model, FilterSpec(2.0))
    # cavities start empty
    pops = cavity_population(model.initial_state.matrix, model)
    np.testing.assert_array_equal(pops, 0)


def test_vacuum_input_leaves_cavities_empty():
    model = make_model(NOISELESS, SpontaneousSpec(0.0), FilterSpec(1.0))
    rho_null, rho_c = conditional_path(model, [0.5, 2.0])
    for r in rho_null + rho_c:
        assert np.all(np.abs(cavity_population(r, model)) <= 1e-10)


@pytest.mark.parametrize("kind", ["spontaneous", "resonant"])
def test_trace_preserved_with_filters(kind):
    model = make_model(DEPHASED, default_spec(kind), FilterSpec(3.0))
    rho = evolve(model, 3.0).matrix
    assert abs(np.trace(rho).real - 1) <= 1e-8


@pytest.mark.parametrize(
    "kind,atoms",
    [("spontaneous", DEPHASED), ("resonant", DEPHASED), ("raman", NOISELESS)],
)
def test_broadband_filter_is_transparent(kind, atoms):
    # Raman photons sit at the drive frequency, but dephasing-induced emission
    # sits on the atomic line 600 gamma away, where kappa = 1100 passes only
    # about half; the broadband comparison is therefore made without dephasing.
    kappa = 100 * (10 + 1)
    bare = herald_point(atoms, default_spec(kind), 1.0)
    filt = herald_point(atoms, default_spec(kind), 1.0, filt=FilterSpec(kappa))
    assert abs(bare.fidelity - filt.fidelity) < 5e-3
    assert abs(bare.efficiency - filt.efficiency) < 5e-3


@pytest.mark.parametrize("kind", ["spontaneous", "resonant"])
def test_truncation_refinement(kind):
    a = herald_point(DEPHASED, default_spec(kind), 1.0, filt=FilterSpec(1.0, 2))
    b = herald_point(DEPHASED, default_spec(kind), 1.0, filt=FilterSpec(1.0, 3))
    assert abs(a.fidelity - b.fidelity) < 1e-4


@pytest.mark.parametrize("kind", ["spontaneous", pytest.param("raman", marks=pytest.mark.slow), "resonant"])
def test_top_fock_population_small(kind):
    res = ensemble_scan(DEPHASED, [default_spec(kind)], [[1.0]], filt=FilterSpec(0.5))[0]
    assert res.top_fock < TRUNCATION_LIMIT


def test_auto_raise_of_photon_cutoff():
    # a strong resonant drive into a narrow filter populates |2> at n_max = 1
    res = ensemble_scan(DEPHASED, [default_spec("resonant")], [[1.0]], filt=FilterSpec(1.0, 1))[0]
    assert res.n_max > 1
    assert res.top_fock < TRUNCATION_LIMIT or res.n_max == 5
    fixed = ensemble_scan(DEPHASED, [default_spec("resonant")], [[1.0]], filt=FilterSpec(1.0, 1),
                          raise_n_max=False)[0]
    assert fixed.n_max == 1 and fixed.top_fock >= TRUNCATION_LIMIT


def test_top_fock_helper_shape():
    model = make_model(NOISELESS, SpontaneousSpec(0.1), FilterSpec(1.0))
    rho = np.stack([model.initial_state.matrix] * 4)
    assert top_fock_population(rho, model).shape == (2, 4)
