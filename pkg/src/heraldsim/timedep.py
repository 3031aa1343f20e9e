"""Pulse envelopes and operators with an envelope-modulated part."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import HilbertSpace, Operator, zero
from .errors import ParameterError, StructureError


@dataclass(frozen=True)
class Rect:
    """Unit-height rectangular pulse on ``[0, duration]``; ``None`` never switches off."""

    duration: Optional[float] = None

    def __post_init__(self):
        if self.duration is not None and self.duration <= 0:
            raise ParameterError("rect duration must be positive")

    def __call__(self, t: float) -> float:
        if self.duration is None or t <= self.duration:
            return 1.0
        return 0.0

    def breakpoints(self) -> tuple[float, ...]:
        return () if self.duration is None else (self.duration,)


@dataclass(frozen=True)
class Gaussian:
    """Unit-peak Gaussian centred at ``duration / 2`` with sigma ``duration / 6``.

    Truncated to zero after ``duration``.
    """

    duration: float

    def __post_init__(self):
        if self.duration is None or self.duration <= 0:
            raise ParameterError("gaussian envelope needs a positive duration")

    def __call__(self, t: float) -> float:
        if t > self.duration:
            return 0.0
        sigma = self.duration / 6.0
        return float(np.exp(-0.5 * ((t - 0.5 * self.duration) / sigma) ** 2))

    def breakpoints(self) -> tuple[float, ...]:
        return (self.duration,)


Envelope = Union[Rect, Gaussian]


def make_envelope(shape: str, duration: Optional[float]) -> Envelope:
    if shape == "rect":
        return Rect(duration)
    if shape == "gaussian":
        return Gaussian(duration)
    raise ParameterError(f"unknown envelope shape {shape!r}")


class TimeDependentOperator:
    """``static + sum_j envelope_j(t) * op_j``.

    Every driven part must share a single envelope; the compiled kernel relies
    on that to write ``L(t)^dag L(t)`` as a quadratic polynomial in it.
    """

    __slots__ = ("static", "driven")

    def __init__(self, static: Operator, driven: Sequence[tuple[Envelope, Operator]] = ()):
        self.static = static
        merged: list[tuple[Envelope, Operator]] = []
        for env, op in driven:
            if op.space != static.space:
                raise StructureError("driven part lives on a different space")
            for i, (e, o) in enumerate(merged):
                if e == env:
                    merged[i] = (e, o + op)
                    break
            else:
                merged.append((env, op))
        merged = [(e, o) for e, o in merged if not o.is_zero()]
        if len({e for e, _ in merged}) > 1:
            raise StructureError("at most one distinct envelope per operator")
        self.driven = tuple(merged)

    @classmethod
    def lift(cls, op: Union[Operator, "TimeDependentOperator"]) -> "TimeDependentOperator":
        if isinstance(op, TimeDependentOperator):
            return op
        return cls(op)

    @property
    def space(self) -> HilbertSpace:
        return self.static.space

    @property
    def envelope(self) -> Optional[Envelope]:
        return self.driven[0][0] if self.driven else None

    @property
    def is_constant(self) -> bool:
        return not self.driven

    @property
    def is_local(self) -> bool:
        return self.static.is_local and all(op.is_local for _, op in self.driven)

    def at(self, t: float) -> Operator:
        out = self.static
        for env, op in self.driven:
            out = out + op * env(t)
        return out

    def dag(self) -> "TimeDependentOperator":
        return TimeDependentOperator(self.static.dag(), [(e, o.dag()) for e, o in self.driven])

    def extend(self, space: HilbertSpace) -> "TimeDependentOperator":
        return TimeDependentOperator(
            self.static.extend(space), [(e, o.extend(space)) for e, o in self.driven]
        )

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({b for env, _ in self.driven for b in env.breakpoints()}))

    def __add__(self, other):
        other = TimeDependentOperator.lift(other)
        return TimeDependentOperator(self.static + other.static, self.driven + other.driven)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-TimeDependentOperator.lift(other))

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, complex, np.number)):
            return NotImplemented
        return TimeDependentOperator(self.static * scalar, [(e, o * scalar) for e, o in self.driven])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        # Products are only needed with a static factor (e.g. f^dag c_k).
        if isinstance(other, TimeDependentOperator):
            if other.driven and self.driven:
                raise StructureError("product of two driven operators is not supported")
            if self.driven:
                return self @ other.static
            return TimeDependentOperator(
                self.static @ other.static, [(e, self.static @ o) for e, o in other.driven]
            )
        return TimeDependentOperator(self.static @ other, [(e, o @ other) for e, o in self.driven])

    def __rmatmul__(self, other: Operator):
        return TimeDependentOperator(other @ self.static, [(e, other @ o) for e, o in self.driven])

    def __repr__(self):
        return f"TimeDependentOperator({self.static!r}, driven={len(self.driven)})"


def zero_td(space: HilbertSpace) -> TimeDependentOperator:
    return TimeDependentOperator(zero(space))
