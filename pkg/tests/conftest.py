import numpy as np
import pytest

from heraldsim.core import DensityMatrix, HilbertSpace, Operator, embed
from heraldsim.dynamics import Jump, SystemModel
from heraldsim.timedep import TimeDependentOperator


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def random_hermitian(rng, n):
    a = random_matrix(rng, n)
    return (a + a.conj().T) / 2


def random_density(rng, n, rank=None):
    a = random_matrix(rng, n)[:, : rank or n]
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_model(rng, factors=(3, 3), n_local=3, n_dense=1, herald=True):
    """Model with random Hermitian H, local-sum jumps and dense jumps."""
    space = HilbertSpace(tuple(factors))
    d = space.dim
    ham = Operator(space, matrix=random_hermitian(rng, d))
    jumps = []
    for k in range(n_local):
        slot = k % space.n_factors
        small = random_matrix(rng, space.factors[slot]) * 0.5
        jumps.append(Jump(f"local{k}", TimeDependentOperator(embed(small, slot, space))))
    for k in range(n_dense):
        jumps.append(Jump(f"dense{k}", TimeDependentOperator(Operator(space, matrix=random_matrix(rng, d) * 0.3))))
    her = jumps[0].operator if herald else TimeDependentOperator(Operator(space, terms=[]))
    rho0 = DensityMatrix(random_density(rng, d), space)
    return SystemModel(space, TimeDependentOperator(ham), tuple(jumps), her, rho0)


def superoperator(model, t=0.0):
    """Dense column-stacking Liouvillian, built only as a test oracle."""
    d = model.space.dim
    eye = np.eye(d)
    h = model.hamiltonian.at(t).matrix
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for _, op in model.jumps:
        l = op.at(t).matrix
        ldl = l.conj().T @ l
        sup += np.kron(l.conj(), l) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye)
    return sup


def vec(m):
    return m.reshape(-1, order="F")


def unvec(v, d):
    return v.reshape(d, d, order="F")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def herald_point(atoms, spec, T, filt=None, cfg=None):
    """Single-shot F and eta at window T through evolve_pair."""
    from heraldsim.diffusion import make_model
    from heraldsim.dynamics import DEFAULT_CONFIG, evolve_pair
    from heraldsim.metrics import bell_state, fidelity_efficiency

    model = make_model(atoms, spec, filt)
    rho_r, rho_null = evolve_pair(model, T, cfg or DEFAULT_CONFIG)
    return fidelity_efficiency(rho_r, rho_null, bell_state("psi-", model.space), T)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
