"""Unconditional and no-click master-equation evolution.

A :class:`SystemModel` is compiled once into a :class:`Kernel` holding

* the effective Hamiltonian ``H - i/2 sum_k L_k^dag L_k`` as the polynomial
  ``A0 + e(t) A1 + e(t)^2 A2`` in the (single) drive envelope ``e``;
* the jump sandwich ``sum_k L_k rho L_k^dag`` as a list of index-mapped
  entries when the jumps are sums of embedded single-factor operators (dense
  products otherwise);
* the same for the herald sandwich ``c rho c^dag``.

Kernels of structurally identical models can be stacked, which lets one
integration serve many parameter points (quadrature nodes, calibration
candidates) in lock-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .core import DensityMatrix, HilbertSpace, Operator
from .errors import ParameterError, StructureError
from .integrate import integrate
from .timedep import TimeDependentOperator


class Jump(NamedTuple):
    label: str
    operator: TimeDependentOperator


@dataclass(frozen=True)
class IntegratorConfig:
    """Step control for the Dormand-Prince integrator (times in units of 1/gamma)."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    dense_output: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ParameterError("integrator tolerances must be positive")
        if self.max_step <= 0:
            raise ParameterError("max_step must be positive")


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Everything the integrator needs for one physical configuration.

    ``outputs`` holds the beamsplitter output operators ``(c1, c2)``; the
    filter module feeds them into cavities. ``jumps`` whose label starts with
    ``"wg"`` are the waveguide emissions those outputs replace.
    """

    space: HilbertSpace
    hamiltonian: TimeDependentOperator
    jumps: tuple[Jump, ...]
    herald: TimeDependentOperator
    initial_state: DensityMatrix
    outputs: tuple[TimeDependentOperator, ...] = ()
    atom_slots: tuple[int, ...] = (0, 1)
    cavity_slots: tuple[int, ...] = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "hamiltonian", TimeDependentOperator.lift(self.hamiltonian))
        object.__setattr__(self, "herald", TimeDependentOperator.lift(self.herald))
        object.__setattr__(
            self,
            "jumps",
            tuple(Jump(lbl, TimeDependentOperator.lift(op)) for lbl, op in self.jumps),
        )
        ops = [self.hamiltonian, self.herald, *(j.operator for j in self.jumps), *self.outputs]
        for op in ops:
            if op.space != self.space:
                raise StructureError("model operator lives on a different space")
        if self.initial_state.space != self.space:
            raise StructureError("initial state lives on a different space")
        if not self.initial_state.normalized:
            raise StructureError("initial state must be normalized")
        if not all(op.static.is_hermitian(1e-10) for op in [self.hamiltonian]):
            raise StructureError("static Hamiltonian is not Hermitian")
        envs = {op.envelope for op in ops if op.envelope is not None}
        if len(envs) > 1:
            raise StructureError("a model may use a single drive envelope")

    @property
    def envelope(self):
        for op in (self.hamiltonian, self.herald, *(j.operator for j in self.jumps)):
            if op.envelope is not None:
                return op.envelope
        return None

    def replace(self, **changes) -> "SystemModel":
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kwargs.update(changes)
        return SystemModel(**kwargs)

    @cached_property
    def _kernel(self) -> "Kernel":
        return Kernel.from_model(self)

    def kernel(self) -> "Kernel":
        return self._kernel


# --------------------------------------------------------------------------
# compiled kernel


def _nonzeros(small: Optional[np.ndarray]):
    if small is None:
        return [(None, None, 1.0)]
    rows, cols = np.nonzero(small)
    return [(int(r), int(c), complex(small[r, c])) for r, c in zip(rows, cols)]


def _local_parts(op: TimeDependentOperator):
    """Yield (power, coef, slot, small) for the static (0) and driven (1) parts."""
    for c, s, m in op.static.terms:
        yield 0, c, s, m
    for _, dop in op.driven:
        for c, s, m in dop.terms:
            yield 1, c, s, m


def _sandwich_entries(op: TimeDependentOperator) -> dict:
    """Index-mapped form of ``L rho L^dag`` for a local-sum ``L``.

    Key ``(slot_l, a, b, slot_r, y, z, power)`` means
    ``out[left slot_l = a, right slot_r = y] += coef * rho[left = b, right = z]``.
    """
    entries: dict = {}
    parts = list(_local_parts(op))
    for p_i, c_i, s_i, m_i in parts:
        for p_j, c_j, s_j, m_j in parts:
            coef0 = c_i * np.conj(c_j)
            for a, b, v_ab in _nonzeros(m_i):
                for y, z, v_yz in _nonzeros(m_j):
                    key = (s_i, a, b, s_j, y, z, p_i + p_j)
                    entries[key] = entries.get(key, 0j) + coef0 * v_ab * np.conj(v_yz)
    return entries


def _merge(a: dict, b: dict, sign: float = 1.0) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0j) + sign * v
    return out


def _dense_parts(op: TimeDependentOperator) -> tuple[np.ndarray, Optional[np.ndarray]]:
    l0 = op.static.matrix
    l1 = None
    for _, dop in op.driven:
        l1 = dop.matrix if l1 is None else l1 + dop.matrix
    return l0, l1


class Kernel:
    """Compiled Liouvillian for one model or a stack of ``n`` compatible models.

    Arrays carry a leading member axis of length ``n``.
    """

    def __init__(self, space, heff, envelope, entries, herald_entries, dense_jumps,
                 dense_herald, breakpoints, n):
        self.space = space
        self.heff = heff  # {power: (n, d, d)}
        self.envelope = envelope
        self.entries = entries  # {key: (n,) complex}
        self.herald_entries = herald_entries
        self.dense_jumps = dense_jumps  # list of (L0 (n,d,d), L1 or None)
        self.dense_herald = dense_herald  # (L0, L1) or None
        self.breakpoints = tuple(breakpoints)
        self.n = n
        self._programs: dict = {}
        self._heff_cache: tuple = (None, None)

    # ---------------------------------------------------------------- build
    @classmethod
    def from_model(cls, model: SystemModel) -> "Kernel":
        space = model.space
        d = space.dim
        h0, h1 = _dense_parts(model.hamiltonian)
        heff = {0: h0.copy()}
        if h1 is not None:
            heff[1] = h1.copy()

        def add(power, mat):
            heff[power] = heff.get(power, np.zeros((d, d), complex)) + mat

        entries: dict = {}
        dense_jumps = []
        for _, op in model.jumps:
            l0, l1 = _dense_parts(op)
            add(0, -0.5j * (l0.conj().T @ l0))
            if l1 is not None:
                add(1, -0.5j * (l0.conj().T @ l1 + l1.conj().T @ l0))
                add(2, -0.5j * (l1.conj().T @ l1))
            if op.is_local:
                entries = _merge(entries, _sandwich_entries(op))
            else:
                dense_jumps.append((l0[None], None if l1 is None else l1[None]))

        herald_entries: dict = {}
        dense_herald = None
        if model.herald.is_local:
            herald_entries = _sandwich_entries(model.herald)
        else:
            l0, l1 = _dense_parts(model.herald)
            dense_herald = (l0[None], None if l1 is None else l1[None])

        ops = [model.hamiltonian, model.herald, *(j.operator for j in model.jumps)]
        bps = sorted({b for op in ops for b in op.breakpoints()})
        wrap = lambda e: {k: np.array([v]) for k, v in e.items()}
        return cls(
            space,
            {p: m[None] for p, m in heff.items()},
            model.envelope,
            wrap(entries),
            wrap(herald_entries),
            dense_jumps,
            dense_herald,
            bps,
            1,
        )

    @classmethod
    def stack(cls, kernels: Sequence["Kernel"]) -> "Kernel":
        """Concatenate kernels along the member axis."""
        kernels = list(kernels)
        first = kernels[0]
        for k in kernels[1:]:
            if k.space != first.space:
                raise StructureError("cannot stack kernels on different spaces")
            if k.envelope != first.envelope and None not in (k.envelope, first.envelope):
                raise StructureError("cannot stack kernels with different envelopes")
            if len(k.dense_jumps) != len(first.dense_jumps) or (
                (k.dense_herald is None) != (first.dense_herald is None)
            ):
                raise StructureError("cannot stack kernels with different jump structure")
        d = first.space.dim
        envelope = next((k.envelope for k in kernels if k.envelope is not None), None)
        powers = sorted({p for k in kernels for p in k.heff})
        heff = {
            p: np.concatenate([k.heff.get(p, np.zeros((k.n, d, d), complex)) for k in kernels])
            for p in powers
        }

        def cat_entries(name):
            keys = sorted({key for k in kernels for key in getattr(k, name)}, key=repr)
            return {
                key: np.concatenate(
                    [getattr(k, name).get(key, np.zeros(k.n, complex)) for k in kernels]
                )
                for key in keys
            }

        def cat_pair(pairs):
            l0 = np.concatenate([p[0] for p in pairs])
            if all(p[1] is None for p in pairs):
                return l0, None
            l1 = np.concatenate([p[1] if p[1] is not None else np.zeros_like(p[0]) for p in pairs])
            return l0, l1

        dense_jumps = [cat_pair([k.dense_jumps[i] for k in kernels]) for i in range(len(first.dense_jumps))]
        dense_herald = None
        if first.dense_herald is not None:
            dense_herald = cat_pair([k.dense_herald for k in kernels])
        bps = sorted({b for k in kernels for b in k.breakpoints})
        return cls(first.space, heff, envelope, cat_entries("entries"),
                   cat_entries("herald_entries"), dense_jumps, dense_herald, bps,
                   sum(k.n for k in kernels))

    def take(self, idx) -> "Kernel":
        """Sub-kernel with the members listed in ``idx``."""
        idx = np.asarray(idx)
        sub = lambda pair: (pair[0][idx], None if pair[1] is None else pair[1][idx])
        return Kernel(
            self.space,
            {p: m[idx] for p, m in self.heff.items()},
            self.envelope,
            {k: v[idx] for k, v in self.entries.items()},
            {k: v[idx] for k, v in self.herald_entries.items()},
            [sub(p) for p in self.dense_jumps],
            None if self.dense_herald is None else sub(self.dense_herald),
            self.breakpoints,
            len(idx),
        )

    # ------------------------------------------------------------ evaluate
    def _program(self, entries_name: str):
        """Index tuples and pre-shaped coefficients for a (n, S, *dims, *dims) tensor."""
        prog = self._programs.get(entries_name)
        if prog is not None:
            return prog
        nf = self.space.n_factors
        prog = []
        for (s_l, a, b, s_r, y, z, power), coef in getattr(self, entries_name).items():
            if not np.any(coef):
                continue
            left_o = [slice(None)] * nf
            left_i = [slice(None)] * nf
            right_o = [slice(None)] * nf
            right_i = [slice(None)] * nf
            if s_l is not None:
                left_o[s_l], left_i[s_l] = a, b
            if s_r is not None:
                right_o[s_r], right_i[s_r] = y, z
            n_int = (s_l is not None) + (s_r is not None)
            shaped = coef.reshape((self.n,) + (1,) * (1 + 2 * nf - n_int))
            if np.all(coef == coef[0]):
                shaped = complex(coef[0])
            head = (slice(None), slice(None))
            prog.append((head + tuple(left_o + right_o), head + tuple(left_i + right_i), shaped, power))
        self._programs[entries_name] = prog
        return prog

    def _env(self, t: float) -> float:
        return 0.0 if self.envelope is None else self.envelope(t)

    def _heff(self, e: float) -> np.ndarray:
        if self._heff_cache[0] == e:
            return self._heff_cache[1]
        h = self.heff[0]
        if e != 0.0:
            if 1 in self.heff:
                h = h + e * self.heff[1]
            if 2 in self.heff:
                h = h + (e * e) * self.heff[2]
        self._heff_cache = (e, h)
        return h

    def _sandwich(self, name, dense, y, e, out, sign=1.0):
        """Accumulate ``sign * sum L y L^dag`` into ``out``; y has shape (n, S, d, d)."""
        dims = self.space.factors
        shape = y.shape[:2] + dims + dims
        yt = y.reshape(shape)
        ot = out.reshape(shape)
        for oidx, iidx, coef, power in self._program(name):
            c = coef if power == 0 else coef * e**power
            if sign != 1.0:
                c = sign * c
            ot[oidx] += c * yt[iidx]
        for l0, l1 in dense:
            lt = l0 if (l1 is None or e == 0.0) else l0 + e * l1
            lt = lt[:, None]
            out += sign * (lt @ y @ np.conj(np.swapaxes(lt, -1, -2)))

    def rhs(self, t: float, y: np.ndarray, mode: str = "uncond") -> np.ndarray:
        """Right-hand side on a (n, S, d, d) stack.

        ``mode`` is ``"uncond"`` (master equation), ``"null"`` (no-click
        equation) or ``"pair"`` (S = 2 with ``[rho_null, rho_c]``, where
        ``d rho_c/dt = L rho_c + c rho_null c^dag``).
        """
        e = self._env(t)
        x = self._heff(e)[:, None] @ y
        out = -1j * x
        out = out + np.conj(np.swapaxes(out, -1, -2))
        self._sandwich("entries", self.dense_jumps, y, e, out)
        herald_dense = [] if self.dense_herald is None else [self.dense_herald]
        if mode == "null":
            self._sandwich("herald_entries", herald_dense, y, e, out, sign=-1.0)
        elif mode == "pair":
            click = np.zeros_like(y[:, :1])
            self._sandwich("herald_entries", herald_dense, y[:, :1], e, click)
            out[:, :1] -= click
            out[:, 1:] += click
        elif mode != "uncond":
            raise ValueError(f"unknown mode {mode!r}")
        return out

    def lindblad(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Single-member master-equation right-hand side (no symmetrisation shortcut)."""
        if self.n != 1:
            raise StructureError("lindblad() needs a single-member kernel")
        e = self._env(t)
        heff = self._heff(e)[0]
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        y = rho[None, None]
        acc = np.zeros_like(y)
        self._sandwich("entries", self.dense_jumps, y, e, acc)
        return out + acc[0, 0]


# --------------------------------------------------------------------------
# solving


def solve(
    kernel: Kernel,
    y0: np.ndarray,
    times: Sequence[float],
    mode: str,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    observe: Optional[Callable[[int, float, np.ndarray], None]] = None,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
):
    """Integrate a stack of states ``y0`` (n, S, d, d) and report at ``times``.

    Without ``observe`` the states at every time are returned as an array of
    shape (len(times), n, S, d, d).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    order = np.argsort(times, kind="stable")
    stored = [None] * len(times)

    def callback(j, t, y):
        if observe is not None:
            observe(int(order[j]), t, y)
        else:
            stored[order[j]] = y.copy()

    integrate(
        lambda t, y: kernel.rhs(t, y, mode),
        0.0,
        y0,
        times[order],
        callback,
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
        max_step=cfg.max_step,
        breakpoints=kernel.breakpoints,
        on_step=on_step,
    )
    if observe is None:
        return np.stack(stored)
    return None


def _initial_stack(model: SystemModel, s: int) -> np.ndarray:
    rho0 = model.initial_state.matrix
    y0 = np.zeros((1, s) + rho0.shape, complex)
    y0[0, 0] = rho0
    return y0


def _run_single(model, t_end, cfg, mode, s):
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    path = [] if cfg.dense_output else None
    on_step = (lambda t, y: path.append((t, y[0].copy()))) if path is not None else None
    out = solve(model.kernel(), _initial_stack(model, s), [t_end], mode, cfg, on_step=on_step)
    return out[0, 0], path


def evolve(model: SystemModel, t_end: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> DensityMatrix:
    """Unconditional state ``rho_r(t_end)``."""
    y, _ = _run_single(model, t_end, cfg, "uncond", 1)
    return DensityMatrix(y[0], model.space, normalized=True)


def evolve_null(model: SystemModel, t_end: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> DensityMatrix:
    """No-click state ``rho_null(t_end)`` (unnormalized)."""
    y, _ = _run_single(model, t_end, cfg, "null", 1)
    return DensityMatrix(y[0], model.space, normalized=False)


def evolve_pair(
    model: SystemModel, t_end: float, cfg: IntegratorConfig = DEFAULT_CONFIG
) -> tuple[DensityMatrix, DensityMatrix]:
    """``(rho_r, rho_null)`` at ``t_end``.

    Integrated as the stack ``[rho_null, rho_c]`` under one step controller;
    ``rho_c = rho_r - rho_null`` has its own equation, so the herald
    probability is never obtained by cancelling two numbers close to one.
    """
    y, _ = _run_single(model, t_end, cfg, "pair", 2)
    rho_null, rho_c = y[0], y[1]
    return (
        DensityMatrix(rho_null + rho_c, model.space, normalized=True),
        DensityMatrix(rho_null, model.space, normalized=False),
    )


def conditional_path(model: SystemModel, times: Sequence[float], cfg: IntegratorConfig = DEFAULT_CONFIG):
    """``(rho_null, rho_c)`` arrays at each of ``times`` for diagnostics."""
    out = solve(model.kernel(), _initial_stack(model, 2), times, "pair", cfg)
    return out[:, 0, 0], out[:, 0, 1]


def stack_models(models: Sequence[SystemModel]) -> tuple[Kernel, np.ndarray]:
    """Stacked kernel and the (n, 2, d, d) initial pair stack for ``models``."""
    kernel = Kernel.stack([m.kernel() for m in models])
    y0 = np.concatenate([_initial_stack(m, 2) for m in models])
    return kernel, y0


# --------------------------------------------------------------------------
# batched window scans


@dataclass
class WindowScan:
    """Per-member results at each requested window end.

    ``overlap[i][j]`` is ``<target|Tr_cav rho_c|target>`` and ``trace[i][j]``
    is ``tr rho_c`` for member ``i`` at its ``j``-th window ``T``.
    ``top_fock`` is the largest population of any cavity's highest Fock level
    seen on accepted steps (0 without cavities).
    """

    times: list
    overlap: list
    trace: list
    top_fock: np.ndarray


def _group_key(kernel: Kernel):
    return (kernel.space, kernel.envelope, len(kernel.dense_jumps), kernel.dense_herald is None)


def scan_windows(
    models: Sequence[SystemModel],
    windows: Sequence[Sequence[float]],
    target: np.ndarray,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    initial: Optional[Sequence[np.ndarray]] = None,
) -> WindowScan:
    """Integrate many models in lock-step and evaluate the herald at each window end.

    Members sharing a space and drive envelope are stacked into one batch;
    a member leaves the batch once its last window has been reached.
    ``initial`` optionally replaces each model's initial matrix (any
    Hermitian operator; the evolution is linear).
    """
    from .metrics import overlap_and_trace

    n = len(models)
    windows = [np.asarray(w, dtype=float) for w in windows]
    if len(windows) != n:
        raise ValueError("need one window list per model")
    overlap = [np.full(len(w), np.nan) for w in windows]
    trace = [np.full(len(w), np.nan) for w in windows]
    top = np.zeros(n)

    groups: dict = {}
    for i, m in enumerate(models):
        groups.setdefault(_group_key(m.kernel()), []).append(i)

    for members in groups.values():
        members = [i for i in members if windows[i].size]
        members.sort(key=lambda i: windows[i].max())
        if not members:
            continue
        space = models[members[0]].space
        has_cav = bool(models[members[0]].cavity_slots)
        kernel, y = stack_models([models[i] for i in members])
        if initial is not None:
            for pos, i in enumerate(members):
                y[pos, 0] = initial[i]
        alive = list(members)
        t0, h = 0.0, None
        stops_all = sorted({float(t) for i in members for t in windows[i]})
        while alive:
            t_drop = float(windows[alive[0]].max())
            seg_stops = [t for t in stops_all if t0 <= t <= t_drop]

            def observe(j, t, yy, alive=alive, seg_stops=seg_stops):
                ov, tr = overlap_and_trace(yy[:, 1], space, target)
                for pos, i in enumerate(alive):
                    hits = np.nonzero(windows[i] == seg_stops[j])[0]
                    overlap[i][hits] = ov[pos]
                    trace[i][hits] = tr[pos]

            on_step = None
            if has_cav:
                from .filters import top_fock_population

                def on_step(t, yy, alive=alive, model=models[members[0]]):
                    pops = top_fock_population(yy[:, 0] + yy[:, 1], model).max(axis=0)
                    top[alive] = np.maximum(top[alive], pops)

            final = {"y": None}

            def keep(j, t, yy, observe=observe):
                observe(j, t, yy)
                if j == len(seg_stops) - 1:
                    final["y"] = yy.copy()

            h = integrate(
                lambda t, yy: kernel.rhs(t, yy, "pair"),
                t0,
                y,
                seg_stops,
                keep,
                rel_tol=cfg.rel_tol,
                abs_tol=cfg.abs_tol,
                max_step=cfg.max_step,
                breakpoints=kernel.breakpoints,
                h_init=h,
                on_step=on_step,
            )
            y = final["y"]
            t0 = t_drop
            stay = [pos for pos, i in enumerate(alive) if windows[i].max() > t_drop]
            alive = [alive[pos] for pos in stay]
            if alive and len(stay) < kernel.n:
                kernel = kernel.take(stay)
                y = y[stay]
            stops_all = [t for t in stops_all if t > t_drop]
    return WindowScan([w.tolist() for w in windows], overlap, trace, top)
