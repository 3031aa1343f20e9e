"""Dense operator algebra on small composite Hilbert spaces.

Operators built with :func:`embed` remember which factor they act on. The
integrator uses that metadata to apply jump sandwiches ``L rho L^dag`` as index
operations on the tensor-reshaped density matrix instead of full matrix
products; the dense matrix is always available through ``Operator.matrix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import StructureError

HERMITIAN_TOL = 1e-12
MAX_FACTORS = 4


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of subsystem dimensions."""

    factors: tuple[int, ...]

    def __post_init__(self):
        factors = tuple(int(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        if not 1 <= len(factors) <= MAX_FACTORS:
            raise StructureError(f"need 1..{MAX_FACTORS} factors, got {len(factors)}")
        if any(f < 2 for f in factors):
            raise StructureError(f"every factor needs dimension >= 2, got {factors}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.factors))

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def extended(self, *extra: int) -> "HilbertSpace":
        return HilbertSpace(self.factors + tuple(extra))

    def ket(self, *levels: int) -> np.ndarray:
        """Product basis vector with ``levels[k]`` in factor ``k``."""
        if len(levels) != self.n_factors:
            raise StructureError(f"expected {self.n_factors} levels, got {len(levels)}")
        vecs = [basis(d, lvl) for d, lvl in zip(self.factors, levels)]
        return reduce(np.kron, vecs)


def basis(dim: int, level: int) -> np.ndarray:
    if not 0 <= level < dim:
        raise StructureError(f"level {level} outside dimension {dim}")
    v = np.zeros(dim, dtype=complex)
    v[level] = 1.0
    return v


def transition(dim: int, i: int, j: int) -> np.ndarray:
    """Matrix ``|i><j|`` on a single factor."""
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


def destroy(n_levels: int) -> np.ndarray:
    """Truncated bosonic annihilation operator on ``n_levels`` Fock states."""
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


# A local term is (coefficient, slot, single-factor matrix); slot None means
# the identity on the whole space and the matrix is unused.
LocalTerm = tuple[complex, Optional[int], Optional[np.ndarray]]


def _dense_from_terms(space: HilbertSpace, terms: Sequence[LocalTerm]) -> np.ndarray:
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for coef, slot, small in terms:
        if slot is None:
            out += coef * np.eye(space.dim)
        else:
            out += coef * _kron_embed(small, slot, space)
    return out


def _kron_embed(small: np.ndarray, slot: int, space: HilbertSpace) -> np.ndarray:
    mats = [np.eye(d) for d in space.factors]
    mats[slot] = small
    return reduce(np.kron, mats)


def _simplify(terms: Iterable[LocalTerm]) -> tuple[LocalTerm, ...]:
    merged: list[list] = []
    for coef, slot, small in terms:
        if coef == 0:
            continue
        for entry in merged:
            if entry[1] == slot and (
                slot is None or np.array_equal(entry[2], small)
            ):
                entry[0] += coef
                break
        else:
            merged.append([complex(coef), slot, small])
    return tuple((c, s, m) for c, s, m in merged if c != 0)


class Operator:
    """Square complex matrix on a :class:`HilbertSpace`.

    Parameters
    ----------
    space : HilbertSpace
    matrix : array, optional
        Dense matrix. Built from ``terms`` when omitted.
    terms : sequence of LocalTerm, optional
        Decomposition into embedded single-factor pieces. Only operators that
        are sums of such pieces carry it; products drop it.
    hermitian : bool
        When True the matrix is checked against its adjoint.
    """

    __slots__ = ("space", "_matrix", "terms")

    def __init__(self, space: HilbertSpace, matrix=None, terms=None, hermitian: bool = False):
        self.space = space
        self.terms = None if terms is None else _simplify(terms)
        if matrix is None and self.terms is None:
            raise StructureError("Operator needs a matrix or local terms")
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=complex)
            if matrix.shape != (space.dim, space.dim):
                raise StructureError(
                    f"matrix shape {matrix.shape} does not match space dimension {space.dim}"
                )
        self._matrix = matrix
        if hermitian and not self.is_hermitian():
            raise StructureError("operator flagged Hermitian but M - M^dag exceeds 1e-12")

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = _dense_from_terms(self.space, self.terms)
        return self._matrix

    @property
    def is_local(self) -> bool:
        return self.terms is not None

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        m = self.matrix
        return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)

    def is_zero(self) -> bool:
        if self.terms is not None:
            return len(self.terms) == 0
        return not np.any(self.matrix)

    def identity_part(self) -> complex:
        """Coefficient of the identity in the local decomposition."""
        if self.terms is None:
            raise StructureError("identity part only defined for local-sum operators")
        return sum((c for c, s, _ in self.terms if s is None), 0j)

    def dag(self) -> "Operator":
        terms = None
        if self.terms is not None:
            terms = [
                (np.conj(c), s, None if m is None else m.conj().T) for c, s, m in self.terms
            ]
        matrix = None if self._matrix is None else self._matrix.conj().T
        return Operator(self.space, matrix=matrix, terms=terms)

    def extend(self, space: HilbertSpace) -> "Operator":
        """Re-embed into ``space``, whose leading factors equal this space's."""
        n = self.space.n_factors
        if space.factors[:n] != self.space.factors:
            raise StructureError(f"{space.factors} does not extend {self.space.factors}")
        if self.terms is not None:
            return Operator(space, terms=self.terms)
        rest = int(np.prod(space.factors[n:])) if space.n_factors > n else 1
        return Operator(space, matrix=np.kron(self.matrix, np.eye(rest)))

    def _check(self, other: "Operator"):
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if other.space != self.space:
            raise StructureError(f"space mismatch: {self.space.factors} vs {other.space.factors}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = identity(self.space) * other
        if not isinstance(other, Operator):
            return NotImplemented
        self._check(other)
        if self.terms is not None and other.terms is not None:
            return Operator(self.space, terms=self.terms + other.terms)
        return Operator(self.space, matrix=self.matrix + other.matrix)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        if not isinstance(other, (Operator, int, float, complex)):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, complex, np.number)):
            return NotImplemented
        terms = None
        if self.terms is not None:
            terms = [(c * scalar, s, m) for c, s, m in self.terms]
        matrix = None if self._matrix is None else self._matrix * scalar
        return Operator(self.space, matrix=matrix, terms=terms)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            return self.matrix @ other
        if not isinstance(other, Operator):
            return NotImplemented
        self._check(other)
        return Operator(self.space, matrix=self.matrix @ other.matrix)

    def __repr__(self):
        kind = f"local[{len(self.terms)}]" if self.terms is not None else "dense"
        return f"Operator({self.space.factors}, {kind})"


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, terms=[(1.0, None, None)])


def zero(space: HilbertSpace) -> Operator:
    return Operator(space, terms=[])


def embed(op, slot: int, space: HilbertSpace) -> Operator:
    """Lift a single-factor operator to ``I x ... x op x ... x I``.

    ``op`` may be an array or an :class:`Operator` on a one-factor space.
    """
    if isinstance(op, Operator):
        if op.space.n_factors != 1:
            raise StructureError("embed expects an operator on a single factor")
        op = op.matrix
    op = np.asarray(op, dtype=complex)
    if not 0 <= slot < space.n_factors:
        raise StructureError(f"slot {slot} outside {space.n_factors} factors")
    d = space.factors[slot]
    if op.shape != (d, d):
        raise StructureError(f"operator shape {op.shape} does not fit factor of dimension {d}")
    return Operator(space, terms=[(1.0, slot, op)])


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix, possibly unnormalized (conditional or no-click states).

    Validation tolerances: Hermitian to 1e-10; normalized states have unit
    trace to 1e-8 and eigenvalues above -1e-8; unnormalized states have trace
    in [0, 1 + 1e-8].
    """

    matrix: np.ndarray
    space: HilbertSpace
    normalized: bool = True
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.space.dim, self.space.dim):
            raise StructureError(
                f"density matrix shape {m.shape} does not match dimension {self.space.dim}"
            )
        if not self.validate:
            return
        herm_err = np.max(np.abs(m - m.conj().T), initial=0.0)
        if herm_err > 1e-10:
            raise StructureError(f"density matrix not Hermitian (error {herm_err:.2e})")
        tr = self.trace()
        if self.normalized:
            if abs(tr - 1.0) > 1e-8:
                raise StructureError(f"normalized state has trace {tr:.12f}")
            lo = np.linalg.eigvalsh(m)[0]
            if lo < -1e-8:
                raise StructureError(f"density matrix has negative eigenvalue {lo:.2e}")
        elif not -1e-8 <= tr <= 1.0 + 1e-8:
            raise StructureError(f"unnormalized state trace {tr:.6e} outside [0, 1]")

    @classmethod
    def from_ket(cls, ket: np.ndarray, space: HilbertSpace) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        return cls(np.outer(ket, ket.conj()), space)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def expect(self, op: Operator) -> complex:
        return complex(np.trace(op.matrix @ self.matrix))

    def partial_trace(self, keep: Sequence[int]) -> np.ndarray:
        """Reduced matrix on the factors listed in ``keep`` (in their order)."""
        return partial_trace(self.matrix, self.space, keep)

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        space = self.space.extended(*other.space.factors)
        return DensityMatrix(
            np.kron(self.matrix, other.matrix), space, self.normalized and other.normalized
        )


def partial_trace(matrix: np.ndarray, space: HilbertSpace, keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor not in ``keep``. Leading batch axes are allowed."""
    keep = list(keep)
    nf = space.n_factors
    lead = matrix.shape[:-2]
    t = matrix.reshape(lead + space.factors + space.factors)
    nl = len(lead)
    letters = "abcdefghijklmnop"
    left = [letters[i] for i in range(nf)]
    right = [letters[nf + i] if i in keep else letters[i] for i in range(nf)]
    batch = "wxyz"[:nl]
    out = batch + "".join(left[i] for i in keep) + "".join(right[i] for i in keep)
    spec = f"{batch}{''.join(left)}{''.join(right)}->{out}"
    reduced = np.einsum(spec, t)
    dk = int(np.prod([space.factors[i] for i in keep]))
    return reduced.reshape(lead + (dk, dk))


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (Operator, DensityMatrix)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def dissipator(op, rho) -> np.ndarray:
    """Lindblad dissipator ``O rho O^dag - (O^dag O rho + rho O^dag O) / 2``."""
    if isinstance(op, Operator) and isinstance(rho, DensityMatrix) and op.space != rho.space:
        raise StructureError("operator and state live on different spaces")
    o = _as_matrix(op)
    r = _as_matrix(rho)
    if o.shape != r.shape:
        raise StructureError(f"shape mismatch {o.shape} vs {r.shape}")
    od = o.conj().T
    odo = od @ o
    return o @ r @ od - 0.5 * (odo @ r + r @ odo)


def liouvillian_rhs(model, rho, t: float = 0.0) -> np.ndarray:
    """``-i[H(t), rho] + sum_k D[L_k(t)](rho)`` for a :class:`SystemModel`.

    Evaluated matrix-free through the model's compiled kernel.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(rho, DensityMatrix) and rho.space != model.space:
        raise StructureError("state and model live on different spaces")
    r = _as_matrix(rho)
    if r.shape != (model.space.dim, model.space.dim):
        raise StructureError(f"state shape {r.shape} does not match model dimension")
    return model.kernel().lindblad(float(t), r)
