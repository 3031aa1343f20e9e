"""Efficiency-constrained fidelity optimisation.

For each window ``T`` the scheme's tunable parameter (``alpha``, ``Omega`` at
fixed ``Delta``, or ``beta``) is calibrated so that the (diffusion-averaged)
herald probability equals the target; the infidelity is then minimised over
``T`` on a log grid followed by a golden-section refinement.

Calibration is a bracketed regula falsi (Illinois variant) on
``log eta - log eta*`` against ``log p``. Since ``eta`` grows roughly as ``p^2``
this is nearly linear and converges in a few evaluations; every candidate
stays inside the current bracket, so the method is as safe as bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize as sopt

from .core import basis
from .diffusion import DiffusionSpec, ensemble_scan, make_model, node_atoms, quadrature_nodes, reduce_nodes
from .dynamics import DEFAULT_CONFIG, IntegratorConfig, scan_windows
from .errors import CalibrationError, ParameterError
from .filters import FilterSpec
from .metrics import MetricPoint, bell_state
from .schemes import AtomParams, SchemeSpec, SpontaneousSpec, default_spec

DEFAULT_BOUNDS = {"spontaneous": (0.0, 0.9), "raman": (0.0, 300.0), "resonant": (0.0, 50.0)}
MAX_ITER = 60


@dataclass(frozen=True)
class ConstraintSpec:
    """Efficiency constraint and search settings.

    Windows are given explicitly through ``T_grid`` or generated on a log
    grid over ``T_span`` (in units of ``1/(Gamma + gamma)``) with
    ``points_per_decade``.
    """

    target_eta: float = 0.01
    eta_rel_tol: float = 1e-3
    param_bounds: dict = field(default_factory=dict)
    T_grid: Optional[tuple] = None
    T_span: tuple = (1e-2, 10.0)
    points_per_decade: int = 24
    golden_xtol: float = 1e-2
    golden_maxiter: int = 20

    def __post_init__(self):
        if not 0 <= self.target_eta < 1:
            raise ParameterError("target_eta must lie in [0, 1)")
        if self.eta_rel_tol <= 0:
            raise ParameterError("eta_rel_tol must be positive")
        for kind, (lo, hi) in self.param_bounds.items():
            if not 0 <= lo < hi:
                raise ParameterError(f"empty parameter bracket for {kind}")
        if self.T_grid is not None:
            object.__setattr__(self, "T_grid", tuple(sorted(float(t) for t in self.T_grid)))
            if not self.T_grid or self.T_grid[0] <= 0:
                raise ParameterError("T_grid must hold positive windows")

    def bounds(self, kind: str) -> tuple[float, float]:
        return tuple(self.param_bounds.get(kind, DEFAULT_BOUNDS[kind]))

    def windows(self, atoms) -> np.ndarray:
        if self.T_grid is not None:
            return np.array(self.T_grid)
        rate = atoms[0].Gamma + atoms[0].gamma
        lo, hi = (math.log10(x / rate) for x in self.T_span)
        n = int(round((hi - lo) * self.points_per_decade)) + 1
        return np.logspace(lo, hi, n)


@dataclass
class OptimumRecord:
    T_star: float
    params_star: SchemeSpec
    infidelity: float
    curve: list  # (T, infidelity) for every feasible window, refinement included
    efficiency: float = float("nan")
    fidelity_weighted: Optional[float] = None
    failed: list = field(default_factory=list)  # windows whose calibration failed
    top_fock: float = 0.0
    points: list = field(default_factory=list)  # Calibrated entries behind ``curve``

    @property
    def interior(self) -> bool:
        ts = [t for t, _ in self.curve]
        return bool(ts) and min(ts) < self.T_star < max(ts)


@dataclass
class Calibrated:
    T: float
    spec: SchemeSpec
    point: MetricPoint
    top_fock: float = 0.0


# ---------------------------------------------------------------------------
# generic batched root finding


def _first_guess(kind: str, atoms, T: float, eta: float, base: SchemeSpec) -> float:
    a = atoms[0]
    frac = a.Gamma / (a.Gamma + a.gamma)
    if kind == "spontaneous":
        emitted = frac * (1 - math.exp(-(a.Gamma + a.gamma) * T))
        x = eta / max(emitted, 1e-300)
        return math.sqrt(min(x, 0.25))
    if kind == "raman":
        return abs(base.Delta) * math.sqrt(eta / (a.Gamma * T))
    return math.sqrt(eta / (frac**2 * T))


class _Root:
    """Illinois iteration on ``v(u) = log eta(e^u) - log eta*`` for one window."""

    def __init__(self, lo, hi, guess, target, tol):
        self.target, self.tol = target, tol
        self.lo = (lo, -math.inf if lo == 0 else None)
        self.hi = (hi, None)
        self.guess = guess
        self.result = None
        self.error = None
        self.last_side = 0
        self.pending = None

    def _v(self, eta):
        return math.log(eta / self.target) if eta > 0 else -math.inf

    def propose(self) -> Optional[float]:
        if self.result is not None or self.error is not None:
            return None
        if self.hi[1] is None:
            self.pending = self.hi[0]
        elif self.lo[1] is None:
            self.pending = self.lo[0]
        elif self.guess is not None:
            p = self.guess
            self.guess = None
            if not self.lo[0] < p < self.hi[0]:
                p = self._mid()
            self.pending = p
        else:
            self.pending = self._secant()
        return self.pending

    def _mid(self):
        lo, hi = self.lo[0], self.hi[0]
        return math.sqrt(lo * hi) if lo > 0 else 0.5 * hi if hi < 1e-3 else min(hi / 4, 0.5 * hi)

    def _secant(self):
        (p_lo, v_lo), (p_hi, v_hi) = self.lo, self.hi
        if p_lo == 0 or not math.isfinite(v_lo):
            # power-law extrapolation from the upper end (eta ~ p^2)
            p = p_hi * math.exp(-v_hi / 2)
        else:
            u_lo, u_hi = math.log(p_lo), math.log(p_hi)
            u = u_lo - v_lo * (u_hi - u_lo) / (v_hi - v_lo)
            p = math.exp(u)
        if not (p_lo < p < p_hi) or p - p_lo < 1e-12 * p_hi or p_hi - p < 1e-12 * p_hi:
            p = self._mid()
        return p

    def update(self, eta: float, point, payload):
        p = self.pending
        if abs(eta / self.target - 1) <= self.tol:
            self.result = (p, point, payload)
            return
        v = self._v(eta)
        if self.hi[1] is None and p == self.hi[0]:
            if v < 0:
                self.error = CalibrationError("efficiency target above the bracket", 0.0, eta)
            self.hi = (p, v)
            return
        if self.lo[1] is None and p == self.lo[0]:
            if v > 0:
                self.error = CalibrationError("efficiency target below the bracket", eta, math.nan)
            self.lo = (p, v)
            return
        if v > 0:
            if self.last_side == 1 and math.isfinite(self.lo[1]):
                self.lo = (self.lo[0], self.lo[1] / 2)
            self.hi = (p, v)
            self.last_side = 1
        else:
            if self.last_side == -1:
                self.hi = (self.hi[0], self.hi[1] / 2)
            self.lo = (p, v)
            self.last_side = -1


def calibrate_batch(
    kind: str,
    windows: Sequence[float],
    evaluate: Callable[[list], list],
    atoms,
    constraint: ConstraintSpec,
    base: SchemeSpec,
    target_eta: Optional[float] = None,
) -> list:
    """Calibrate one parameter per window with shared evaluations.

    ``evaluate`` maps a list of ``(T, p)`` pairs to ``(eta, point, payload)``
    triples. Returns, per window, either ``(p, point, payload)`` or a
    :class:`CalibrationError`.
    """
    target = constraint.target_eta if target_eta is None else target_eta
    lo, hi = constraint.bounds(kind)
    roots = [
        _Root(lo, hi, _first_guess(kind, atoms, T, target, base), target, constraint.eta_rel_tol)
        for T in windows
    ]
    for _ in range(MAX_ITER + 2):
        asks = [(i, r.propose()) for i, r in enumerate(roots)]
        asks = [(i, p) for i, p in asks if p is not None]
        if not asks:
            break
        results = evaluate([(windows[i], p) for i, p in asks])
        for (i, _), (eta, point, payload) in zip(asks, results):
            roots[i].update(eta, point, payload)
    out = []
    for r in roots:
        if r.result is not None:
            out.append(r.result)
        elif r.error is not None:
            out.append(r.error)
        else:
            out.append(CalibrationError("calibration did not converge", math.nan, math.nan))
    return out


# ---------------------------------------------------------------------------
# evaluators


def _ensemble_evaluator(kind, atoms, base: SchemeSpec, diffusion, filt, cfg):
    def evaluate(pairs):
        specs = [base.with_param(p) for _, p in pairs]
        res = ensemble_scan(atoms, specs, [[T] for T, _ in pairs], diffusion, filt, cfg)
        out = []
        for (T, p), r, spec in zip(pairs, res, specs):
            point = r.metrics(warn=False)[0]
            eta = 0.0 if point is None else point.efficiency
            out.append((eta, point, (spec, r.top_fock)))
        return out

    return evaluate


def _spontaneous_inputs(filt: Optional[FilterSpec]):
    """Product operators P x Q with P, Q in {E, M, X} (X = |e><m| + |m><e|)."""
    e, m = basis(3, 2), basis(3, 1)
    ops = {"E": np.outer(e, e), "M": np.outer(m, m), "X": np.outer(e, m) + np.outer(m, e)}
    names = [(p, q) for p in "EMX" for q in "EMX"]
    mats = []
    for p, q in names:
        mat = np.kron(ops[p], ops[q]).astype(complex)
        if filt is not None:
            vac = np.zeros((filt.n_max + 1) ** 2)
            vac[0] = 1.0
            mat = np.kron(mat, np.diag(vac))
        mats.append(mat)
    return names, mats


def _alpha_weights(alpha: float, names):
    c = {"E": alpha**2, "M": 1 - alpha**2, "X": alpha * math.sqrt(1 - alpha**2)}
    return np.array([c[p] * c[q] for p, q in names])


class SpontaneousTable:
    """Node-resolved herald data of the spontaneous scheme for every ``alpha`` at once.

    The initial state is quadratic in ``alpha``; evolving the nine product
    operators that span it gives ``eta`` and the overlap as explicit
    polynomials in ``alpha`` at every window.
    """

    def __init__(self, atoms, windows, diffusion=None, filt=None, cfg=DEFAULT_CONFIG):
        self.windows = np.asarray(windows, dtype=float)
        nodes = quadrature_nodes(tuple(atoms), diffusion or DiffusionSpec(xi=(0.0, 0.0)))
        self.weights = np.array([n.weight for n in nodes])
        self.names, mats = _spontaneous_inputs(filt)
        models, inits = [], []
        for node in nodes:
            model = make_model(node_atoms(atoms, node), SpontaneousSpec(0.1), filt)
            for mat in mats:
                models.append(model)
                inits.append(mat)
        target = bell_state("psi-")
        scan = scan_windows(models, [self.windows] * len(models), target, cfg, initial=inits)
        k, n = len(nodes), len(mats)
        self.overlap = np.array(scan.overlap).reshape(k, n, -1)
        self.trace = np.array(scan.trace).reshape(k, n, -1)

    def node_values(self, alpha: float, j: int):
        c = _alpha_weights(alpha, self.names)
        return self.overlap[:, :, j] @ c, self.trace[:, :, j] @ c

    def point(self, alpha: float, j: int) -> Optional[MetricPoint]:
        ov, tr = self.node_values(alpha, j)
        return reduce_nodes(self.weights, ov, tr, self.windows[j], warn=False)

    def eta(self, alpha: float, j: int) -> float:
        p = self.point(alpha, j)
        return 0.0 if p is None else p.efficiency

    def calibrate(self, j: int, constraint: ConstraintSpec, target: Optional[float] = None):
        target = constraint.target_eta if target is None else target
        lo, hi = constraint.bounds("spontaneous")
        e_lo, e_hi = self.eta(lo, j), self.eta(hi, j)
        if not e_lo <= target <= e_hi:
            return CalibrationError("efficiency target outside the bracket", e_lo, e_hi)
        alpha = sopt.brentq(lambda a: self.eta(a, j) - target, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        point = self.point(alpha, j)
        if point is None or abs(point.efficiency / target - 1) > constraint.eta_rel_tol:
            return CalibrationError("calibration did not converge", e_lo, e_hi)
        return alpha, point, (SpontaneousSpec(alpha), 0.0)


# ---------------------------------------------------------------------------
# public operations


def _resolve(kind, atoms, base):
    atoms = tuple(atoms)
    if len(atoms) != 2:
        raise ParameterError("need two AtomParams")
    base = base or default_spec(kind)
    if base.kind != kind:
        raise ParameterError("base spec does not match scheme kind")
    return atoms, base


def _diffusion_for(atoms, diffusion):
    if diffusion is None and any(a.gamma_sd > 0 for a in atoms):
        return DiffusionSpec()
    return diffusion


def calibrate_windows(
    kind: str,
    atoms,
    windows: Sequence[float],
    constraint: ConstraintSpec,
    base: Optional[SchemeSpec] = None,
    diffusion: Optional[DiffusionSpec] = None,
    filt: Optional[FilterSpec] = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> list:
    """Calibrated settings for every window: :class:`Calibrated` or :class:`CalibrationError`."""
    atoms, base = _resolve(kind, atoms, base)
    diffusion = _diffusion_for(atoms, diffusion)
    windows = [float(t) for t in windows]
    if constraint.target_eta == 0:
        out = []
        for T in windows:
            out.append(CalibrationError("zero efficiency leaves the fidelity undefined", 0.0, 0.0))
        return out
    if kind == "spontaneous" and base.kind == "spontaneous":
        table = SpontaneousTable(atoms, windows, diffusion, filt, cfg)
        raw = [table.calibrate(j, constraint) for j in range(len(windows))]
    else:
        evaluate = _ensemble_evaluator(kind, atoms, base, diffusion, filt, cfg)
        raw = calibrate_batch(kind, windows, evaluate, atoms, constraint, base)
    out = []
    for T, r in zip(windows, raw):
        if isinstance(r, CalibrationError):
            out.append(r)
        else:
            _, point, (spec, top) = r
            out.append(Calibrated(T, spec, point, top))
    return out


def calibrate_parameter(
    kind: str,
    atoms,
    T: float,
    constraint: ConstraintSpec,
    base: Optional[SchemeSpec] = None,
    diffusion: Optional[DiffusionSpec] = None,
    filt: Optional[FilterSpec] = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> SchemeSpec:
    """Scheme settings whose herald probability at window ``T`` hits the target.

    A zero target returns the parameter 0 without any evaluation.
    """
    atoms, base = _resolve(kind, atoms, base)
    if constraint.target_eta == 0:
        return base.with_param(0.0)
    res = calibrate_windows(kind, atoms, [T], constraint, base, diffusion, filt, cfg)[0]
    if isinstance(res, CalibrationError):
        raise res
    return res.spec


def optimize_over_window(
    kind: str,
    atoms,
    constraint: ConstraintSpec,
    base: Optional[SchemeSpec] = None,
    diffusion: Optional[DiffusionSpec] = None,
    filt: Optional[FilterSpec] = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    refine: bool = True,
) -> OptimumRecord:
    """Minimum infidelity over the window grid at the efficiency target.

    Windows whose calibration fails are left out of the curve. An interior
    grid minimum is refined by golden-section search in ``log T`` between
    its neighbours.
    """
    if constraint.target_eta <= 0:
        raise ParameterError("window optimisation needs a positive efficiency target")
    atoms, base = _resolve(kind, atoms, base)
    diffusion = _diffusion_for(atoms, diffusion)
    grid = constraint.windows(atoms)
    results = calibrate_windows(kind, atoms, grid, constraint, base, diffusion, filt, cfg)
    ok = [r for r in results if isinstance(r, Calibrated)]
    failed = [float(T) for T, r in zip(grid, results) if not isinstance(r, Calibrated)]
    if not ok:
        raise CalibrationError("no window reaches the efficiency target")
    best_i = int(np.argmin([r.point.infidelity for r in ok]))
    best = ok[best_i]
    extra = []
    if refine and 0 < best_i < len(ok) - 1:
        cache: dict = {}

        def infid(u):
            T = float(math.exp(u))
            if T not in cache:
                r = calibrate_windows(kind, atoms, [T], constraint, base, diffusion, filt, cfg)[0]
                cache[T] = r
            r = cache[T]
            return r.point.infidelity if isinstance(r, Calibrated) else math.inf

        a, b, c = (math.log(ok[best_i + d].T) for d in (-1, 0, 1))
        for d in (-1, 0, 1):
            cache[float(math.exp(math.log(ok[best_i + d].T)))] = ok[best_i + d]
        sopt.minimize_scalar(
            infid,
            bracket=(a, b, c),
            method="golden",
            options={"xtol": constraint.golden_xtol, "maxiter": constraint.golden_maxiter},
        )
        known = {id(r) for r in ok}
        extra = [r for r in cache.values() if isinstance(r, Calibrated) and id(r) not in known]
        cand = min(extra + [best], key=lambda r: r.point.infidelity)
        best = cand
    curve_pts = sorted(ok + extra, key=lambda r: r.T)
    return OptimumRecord(
        T_star=best.T,
        params_star=best.spec,
        infidelity=best.point.infidelity,
        curve=[(r.T, r.point.infidelity) for r in curve_pts],
        efficiency=best.point.efficiency,
        fidelity_weighted=best.point.fidelity_weighted,
        failed=failed,
        top_fock=max((r.top_fock for r in curve_pts), default=0.0),
        points=curve_pts,
    )


def noise_map(
    kind: str,
    gamma_dp_grid: Sequence[float],
    gamma_sd_grid: Sequence[float],
    constraint: ConstraintSpec,
    atom: AtomParams = AtomParams(),
    base: Optional[SchemeSpec] = None,
    diffusion: Optional[DiffusionSpec] = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    on_cell: Optional[Callable] = None,
) -> np.ndarray:
    """Optimal infidelity on a (gamma_dp, gamma_sd) grid; NaN where nothing is feasible.

    ``on_cell(i, j, record_or_error)`` is called after each cell.
    """
    out = np.full((len(gamma_dp_grid), len(gamma_sd_grid)), np.nan)
    for i, dp in enumerate(gamma_dp_grid):
        for j, sd in enumerate(gamma_sd_grid):
            a = AtomParams(atom.Gamma, atom.gamma, float(dp), float(sd), atom.delta)
            try:
                rec = optimize_over_window(kind, (a, a), constraint, base, diffusion, None, cfg)
                out[i, j] = rec.infidelity
            except CalibrationError as exc:
                rec = exc
            if on_cell is not None:
                on_cell(i, j, rec)
    return out


def cooperativity_sweep(
    kind: str,
    C_grid: Sequence[float],
    gamma_dp: float,
    gamma_sd: float,
    constraint: ConstraintSpec,
    base: Optional[SchemeSpec] = None,
    diffusion: Optional[DiffusionSpec] = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    gamma: float = 1.0,
) -> list:
    """``(C, infidelity, record)`` for ``Gamma = C * gamma`` at fixed noise."""
    out = []
    for C in C_grid:
        a = AtomParams(Gamma=float(C) * gamma, gamma=gamma, gamma_dp=gamma_dp, gamma_sd=gamma_sd)
        try:
            rec = optimize_over_window(kind, (a, a), constraint, base, diffusion, None, cfg)
            out.append((float(C), rec.infidelity, rec))
        except CalibrationError as exc:
            out.append((float(C), math.nan, exc))
    return out
