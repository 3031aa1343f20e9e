"""Acceptance criteria 1-9 at their stated tolerances.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts. The window optimisations behind criteria 5-9 are computed once per
session and shared.

Run alone with ``pytest tests/test_acceptance.py -v``; the optimisation-heavy
criteria take tens of minutes on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from conftest import ACCEPTANCE, random_density, random_model, superoperator, unvec, vec
from heraldsim.core import DensityMatrix, HilbertSpace, Operator, dissipator, liouvillian_rhs, transition
from heraldsim.diffusion import DiffusionSpec, averaged_metrics, ensemble_scan
from heraldsim.dynamics import (
    IntegratorConfig,
    Jump,
    SystemModel,
    conditional_path,
    evolve,
    evolve_pair,
    scan_windows,
)
from heraldsim.filters import TRUNCATION_LIMIT, FilterSpec
from heraldsim.metrics import bell_state, fidelity_efficiency
from heraldsim.optimize import ConstraintSpec, optimize_over_window
from heraldsim.schemes import AtomParams, SpontaneousSpec, build_model, default_spec
from heraldsim.timedep import TimeDependentOperator, zero_td
from heraldsim.trajectories import jump_unravel

KINDS = ("spontaneous", "raman", "resonant")
# 6 windows per decade for the outer search (the library default is 24); the
# golden-section refinement then resolves the minimum between grid points
CONSTRAINT = ConstraintSpec(target_eta=0.01, points_per_decade=6)
C_GRID = (10.0, 30.0, 100.0, 300.0, 1000.0)
DP5 = AtomParams(gamma_dp=5.0)
SD5 = AtomParams(gamma_sd=5.0)
QUIET = AtomParams()


def record(n: int, title: str, checks: dict):
    """Store the criterion line and assert every sub-check."""
    ok = all(v for v, _ in checks.values())
    parts = "; ".join(f"{k}={'ok' if v else 'FAIL'} ({d})" for k, (v, d) in checks.items())
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} | {parts}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


class Optima:
    """Lazily computed window optima keyed by scheme and atom parameters."""

    def __init__(self):
        self.store = {}
        self.seconds = {}

    def get(self, kind: str, atom: AtomParams):
        key = (kind, atom)
        if key not in self.store:
            t0 = time.perf_counter()
            self.store[key] = optimize_over_window(kind, (atom, atom), CONSTRAINT)
            self.seconds[key] = time.perf_counter() - t0
        return self.store[key]


@pytest.fixture(scope="session")
def optima():
    return Optima()


@pytest.fixture(scope="session")
def filter_runs():
    return []


# ---------------------------------------------------------------------------


def _single_atom(ham, jumps, level0):
    space = HilbertSpace((3,))
    rho0 = DensityMatrix.from_ket(space.ket(level0), space)
    js = tuple(Jump(f"j{k}", TimeDependentOperator(Operator(space, matrix=l))) for k, l in enumerate(jumps))
    return SystemModel(space, TimeDependentOperator(Operator(space, matrix=ham)), js, zero_td(space), rho0,
                       atom_slots=(0,))


def test_criterion_1_analytic_oracles():
    t0 = time.perf_counter()
    gam, om = 2.0, 1.3
    decay = _single_atom(np.zeros((3, 3)), [np.sqrt(gam) * transition(3, 0, 2)], 2)
    err_decay = abs(evolve(decay, 1 / gam).matrix[2, 2].real - math.exp(-1))
    rabi = _single_atom(om * (transition(3, 2, 0) + transition(3, 0, 2)), [], 0)
    err_rabi = abs(evolve(rabi, math.pi / 4 / om).matrix[2, 2].real - 0.5)
    rng = np.random.default_rng(11)
    err_trace = max(abs(np.trace(dissipator(rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)),
                                            random_density(rng, 9)))) for _ in range(20))
    err_sup = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        model = random_model(r)
        rho = random_density(r, 9)
        oracle = unvec(superoperator(model) @ vec(rho), 9)
        err_sup = max(err_sup, np.max(np.abs(liouvillian_rhs(model, rho, 0.0) - oracle)))
    wall = time.perf_counter() - t0
    record(1, "analytic oracle suite", {
        "decay": (err_decay <= 1e-6, f"err {err_decay:.1e}"),
        "rabi": (err_rabi <= 1e-6, f"err {err_rabi:.1e}"),
        "dissipator trace": (err_trace <= 1e-12, f"max {err_trace:.1e}"),
        "superoperator": (err_sup <= 1e-12, f"max {err_sup:.1e}"),
        "runtime": (wall < 1.0, f"{wall:.2f}s"),
    })


def test_criterion_2_efficiency_oracle():
    t0 = time.perf_counter()
    model = build_model((QUIET, QUIET), SpontaneousSpec(0.1))
    p = fidelity_efficiency(*evolve_pair(model, 1.0))
    oracle = 0.01 * 0.99 * (10 / 11) * (1 - math.exp(-11))
    wall = time.perf_counter() - t0
    record(2, "heralding efficiency oracle", {
        "eta": (abs(p.efficiency - 9.0e-3) <= 2e-4, f"eta {p.efficiency:.4e}, formula {oracle:.4e}"),
        "runtime": (wall < 10.0, f"{wall:.2f}s"),
    })


# ---------------------------------------------------------------------------

PLATEAU_SLACK = 1e-7  # integrator-level noise once emission has finished


def test_criterion_3_temporal_filtering():
    long = np.geomspace(0.1, 10.0, 13)
    windows = np.concatenate([[0.01], long])
    checks = {}
    for label, atom in (("dp5", DP5), ("sd5", SD5)):
        diffusion = DiffusionSpec() if atom.gamma_sd > 0 else None
        res = ensemble_scan((atom, atom), [default_spec(k) for k in KINDS], [windows] * 3, diffusion)
        for kind, r in zip(KINDS, res):
            fid = np.array([p.fidelity for p in r.metrics(warn=False)])
            f0 = fid[0]
            steps = np.diff(fid[1:])
            strict = int(np.sum(steps < 0))
            resolved = bool(np.all(steps < PLATEAU_SLACK)) and fid[1] > fid[-1]
            checks[f"{kind}/{label} F(0.01)"] = (f0 >= 0.99, f"{f0:.4f}")
            checks[f"{kind}/{label} decreasing"] = (
                resolved,
                f"{strict}/{len(steps)} steps strictly down, F {fid[1]:.4f}->{fid[-1]:.4f}",
            )
    record(3, "temporal filtering", checks)


def test_criterion_4_spectral_filtering_plateau(filter_runs):
    kappas = np.geomspace(20.0, 0.2, 9)  # two decades, half-decade spacing at the low end
    checks = {}
    for kind in KINDS:
        fids = []
        for k in kappas:
            r = ensemble_scan((DP5, DP5), [default_spec(kind)], [[1.0]], None, FilterSpec(float(k)))[0]
            filter_runs.append((kind, float(k), r.n_max, r.top_fock))
            fids.append(r.metrics()[0].fidelity)
        plateau = fids[-1]
        change = abs(fids[-1] - fids[-3])  # kappa 0.2 vs 0.2 * sqrt(10)
        checks[f"{kind}/dp5"] = (
            plateau < 0.95 and change < 1e-2,
            f"F(kappa=0.2)={plateau:.4f}, change over lowest half-decade {change:.1e}",
        )
    record(4, "spectral filtering plateau", checks)


def test_criterion_5_u_shape(optima):
    checks = {}
    for kind in KINDS:
        rec = optima.get(kind, DP5)
        ts = [t for t, _ in rec.curve]
        checks[kind] = (rec.interior, f"T*={rec.T_star:.4g} in ({min(ts):.3g}, {max(ts):.3g}), 1-F={rec.infidelity:.4g}")
    record(5, "U-shaped infidelity at gamma_dp=5", checks)


def test_criterion_6_noise_ordering(optima):
    inf = {(k, lbl): optima.get(k, a).infidelity for k in KINDS for lbl, a in (("0", QUIET), ("sd5", SD5))}
    r_raman = inf["raman", "sd5"] / inf["raman", "0"]
    r_spont = inf["spontaneous", "sd5"] / inf["spontaneous", "0"]
    r_res = inf["resonant", "sd5"] / inf["resonant", "0"]
    var_raman = max(r_raman, 1 / r_raman)
    order = inf["raman", "sd5"] < inf["spontaneous", "sd5"] < inf["resonant", "sd5"]
    record(6, "noise ordering and Raman insensitivity", {
        "raman variation": (var_raman < 2, f"{inf['raman', '0']:.4g} -> {inf['raman', 'sd5']:.4g}, x{r_raman:.2f}"),
        "spontaneous degrades": (r_spont > 3, f"x{r_spont:.2f}"),
        "resonant degrades": (r_res > 3, f"x{r_res:.2f}"),
        "ordering at sd5": (
            order,
            f"raman {inf['raman', 'sd5']:.4g}, spontaneous {inf['spontaneous', 'sd5']:.4g}, "
            f"resonant {inf['resonant', 'sd5']:.4g}",
        ),
    })


def test_criterion_7_noiseless_gap(optima):
    res = optima.get("resonant", QUIET)
    spo = optima.get("spontaneous", QUIET)
    ratio = res.infidelity / spo.infidelity
    record(7, "noiseless resonant/spontaneous gap", {
        "ratio": (3 <= ratio <= 30, f"{res.infidelity:.4g}/{spo.infidelity:.4g} = {ratio:.2f}"),
    })


def test_criterion_8_cooperativity(optima):
    checks = {}
    for label, noise in (("dp5", dict(gamma_dp=5.0)), ("sd5", dict(gamma_sd=5.0))):
        top = {}
        for kind in KINDS:
            curve = [optima.get(kind, AtomParams(Gamma=C, **noise)).infidelity for C in C_GRID]
            rises = [b - a for a, b in zip(curve, curve[1:])]
            checks[f"{kind}/{label} non-increasing"] = (
                max(rises) <= 2e-3,
                "1-F " + ", ".join(f"{x:.3g}" for x in curve),
            )
            top[kind] = curve[-1]
        checks[f"{label} spontaneous within 3x raman"] = (
            top["spontaneous"] <= 3 * top["raman"],
            f"{top['spontaneous']:.3g} vs {top['raman']:.3g}",
        )
        checks[f"{label} resonant above both"] = (
            top["resonant"] > max(top["spontaneous"], top["raman"]),
            f"{top['resonant']:.3g}",
        )
    record(8, "cooperativity plateau", checks)


# ---------------------------------------------------------------------------


def _trapezoid_check():
    xi = 2.35
    atoms = (AtomParams(gamma_sd=1.0),) * 2
    gh = averaged_metrics(atoms, SpontaneousSpec(0.1), 1.0).fidelity
    n = 401
    grid = np.linspace(-4 * xi, 4 * xi, n)
    diffs = np.arange(-(n - 1), n) * (grid[1] - grid[0])
    models = [build_model((AtomParams(delta=d), QUIET), SpontaneousSpec(0.1)) for d in diffs]
    scan = scan_windows(models, [[1.0]] * len(models), bell_state("psi-"))
    f_diff = np.array([o[0] / t[0] for o, t in zip(scan.overlap, scan.trace)])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    pdf = np.exp(-(grid**2) / (2 * xi**2))
    w2 = np.outer(pdf, pdf)
    f_grid = f_diff[(i - j) + (n - 1)]
    trap = trapezoid(trapezoid(f_grid * w2, grid, axis=1), grid) / trapezoid(trapezoid(w2, grid, axis=1), grid)
    return abs(gh - trap)


def test_criterion_9_property_suites(optima, filter_runs):
    checks = {}
    err = 0.0
    for kind in KINDS:
        rho = evolve(build_model((DP5, DP5), default_spec(kind)), 20.0).matrix
        err = max(err, abs(np.trace(rho).real - 1))
    checks["trace"] = (err <= 1e-8, f"max |tr-1| {err:.1e}")

    worst = -np.inf
    for seed in range(3):
        model = random_model(np.random.default_rng(seed))
        rho_null, _ = conditional_path(model, np.linspace(0, 3, 100))
        worst = max(worst, np.max(np.diff(np.trace(rho_null, axis1=-2, axis2=-1).real)))
    checks["null monotone"] = (worst <= 1e-12, f"largest step {worst:.1e}")

    sym = 0.0
    a, b = AtomParams(Gamma=12.0, gamma_dp=2.0, delta=0.7), AtomParams(Gamma=8.0, gamma=1.5, delta=-0.4)
    for kind in KINDS:
        p = fidelity_efficiency(*evolve_pair(build_model((a, b), default_spec(kind)), 0.4))
        q = fidelity_efficiency(*evolve_pair(build_model((b, a), default_spec(kind)), 0.4))
        sym = max(sym, abs(p.fidelity - q.fidelity), abs(p.efficiency - q.efficiency))
    checks["swap symmetry"] = (sym <= 1e-9, f"max {sym:.1e}")

    gh = _trapezoid_check()
    checks["GH vs trapezoid"] = (gh <= 1e-4, f"{gh:.1e}")

    if not filter_runs:
        for kind in KINDS:
            r = ensemble_scan((DP5, DP5), [default_spec(kind)], [[1.0]], None, FilterSpec(0.5))[0]
            filter_runs.append((kind, 0.5, r.n_max, r.top_fock))
    top = max(r[3] for r in filter_runs)
    raised = sum(1 for r in filter_runs if r[2] > 2)
    checks["truncation"] = (top < TRUNCATION_LIMIT, f"max top-Fock {top:.1e} over {len(filter_runs)} runs, {raised} raised n_max")

    if not optima.store:
        optima.get("spontaneous", DP5)
    dev = max(abs(r.point.efficiency / 0.01 - 1) for rec in optima.store.values() for r in rec.points)
    checks["constraint"] = (dev <= 1e-3, f"max |eta/eta*-1| {dev:.1e} over {len(optima.store)} optima")

    gam = 1.0
    times = np.array([0.25, 0.5, 1.0, 2.0])
    mc = jump_unravel(np.zeros((3, 3)), [np.sqrt(gam) * transition(3, 0, 2)], np.eye(3)[2], times,
                      n_traj=100_000, dt=1e-3, seed=1)
    decay = _single_atom(np.zeros((3, 3)), [np.sqrt(gam) * transition(3, 0, 2)], 2)
    null, cond = conditional_path(decay, times, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12))
    pops = np.real(np.diagonal(null + cond, axis1=-2, axis2=-1))
    z = np.max(np.abs(mc.populations - pops)[:, [0, 2]] / mc.stderr[:, [0, 2]])
    checks["trajectory MC"] = (z <= 3, f"max deviation {z:.2f} SE at 1e5 trajectories")
    record(9, "property suites", checks)
