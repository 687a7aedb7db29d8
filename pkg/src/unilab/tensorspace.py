"""Composite Hilbert-space layout, product states and matrix-free operators.

Flat amplitude index convention: factors are stored in C order, so the
first factor (the qubit) varies slowest and the last factor (the observer
grid) varies fastest::

    i = ((q * 2**n_env) + e) * n_x + x_idx
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ResourceError

#: Largest reduced state that partial_trace will materialize densely.
MAX_REDUCED_DIM = 4096

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z_DIAG = np.array([1.0, -1.0])


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered factorization of the composite space."""

    factors: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(d) for d in self.factors))
        if not self.factors:
            raise ConfigurationError("layout needs at least one factor")
        if any(d < 2 for d in self.factors):
            raise ConfigurationError(f"every factor dimension must be >= 2, got {self.factors}")

    @classmethod
    def universe(cls, n_env: int, n_x: int) -> "SpaceLayout":
        """Qubit, ``n_env`` bath spins, then an ``n_x`` point observer grid."""
        return cls((2,) + (2,) * int(n_env) + (int(n_x),))

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factors, dtype=np.int64))

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def n_env(self) -> int:
        return self.n_factors - 2

    @property
    def qubit(self) -> int:
        return 0

    @property
    def observer(self) -> int:
        return self.n_factors - 1

    def env(self, j: int) -> int:
        """Factor index of bath spin ``j`` (0-based)."""
        if not 0 <= j < self.n_env:
            raise IndexError(f"bath spin {j} out of range for n_env={self.n_env}")
        return 1 + j

    def unravel(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.factors))

    def ravel(self, digits: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(digits), self.factors))

    def check_factor(self, k: int) -> None:
        if not 0 <= k < self.n_factors:
            raise ConfigurationError(f"factor index {k} invalid for layout {self.factors}")


@dataclass
class StateVector:
    """Complex amplitudes over a :class:`SpaceLayout`."""

    amplitudes: np.ndarray
    layout: SpaceLayout

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != self.layout.total_dim:
            raise ConfigurationError(
                f"amplitude length {self.amplitudes.size} != layout dim {self.layout.total_dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        """View of the amplitudes with one axis per factor."""
        return self.amplitudes.reshape(self.layout.factors)

    def vdot(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.layout)

    def like(self, amplitudes: np.ndarray) -> "StateVector":
        return StateVector(amplitudes, self.layout)


@dataclass(frozen=True)
class SiteOperator:
    """Operator acting on a single factor.

    Exactly one of ``matrix`` (dense d x d) or ``diagonal`` (length d, real)
    is set. Diagonal operators take the fused fast path in
    :class:`HamiltonianSet`.
    """

    dim: int
    matrix: np.ndarray | None = None
    diagonal: np.ndarray | None = None
    hermitian: bool = True
    name: str = ""

    def __post_init__(self):
        if (self.matrix is None) == (self.diagonal is None):
            raise ConfigurationError("SiteOperator needs exactly one of matrix / diagonal")
        if self.matrix is not None:
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (self.dim, self.dim):
                raise ConfigurationError(f"site matrix shape {m.shape} != ({self.dim}, {self.dim})")
            if self.hermitian and not np.allclose(m, m.conj().T, rtol=0.0, atol=1e-12):
                raise ConfigurationError(f"site operator {self.name!r} flagged Hermitian but is not")
            object.__setattr__(self, "matrix", m)
        else:
            d = np.asarray(self.diagonal, dtype=float).reshape(-1)
            if d.size != self.dim:
                raise ConfigurationError(f"site diagonal length {d.size} != {self.dim}")
            object.__setattr__(self, "diagonal", d)

    @classmethod
    def dense(cls, matrix, name: str = "", hermitian: bool = True) -> "SiteOperator":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(dim=matrix.shape[0], matrix=matrix, hermitian=hermitian, name=name)

    @classmethod
    def diag(cls, values, name: str = "") -> "SiteOperator":
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(dim=values.size, diagonal=values, name=name)

    @property
    def is_diagonal(self) -> bool:
        return self.diagonal is not None

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.diag(self.diagonal).astype(complex)


def sigma_z() -> SiteOperator:
    return SiteOperator.diag(SIGMA_Z_DIAG, name="sz")


def sigma_x() -> SiteOperator:
    return SiteOperator.dense(SIGMA_X, name="sx")


@dataclass(frozen=True)
class ProductTerm:
    """``coefficient * (A_k1 (x) A_k2 (x) ...)`` with identity on unlisted factors."""

    coefficient: float
    sites: tuple[tuple[int, SiteOperator], ...] = field(default_factory=tuple)
    label: str = ""

    def __post_init__(self):
        sites = tuple((int(k), op) for k, op in self.sites)
        idx = [k for k, _ in sites]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ConfigurationError(f"product term factor indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def is_diagonal(self) -> bool:
        return all(op.is_diagonal for _, op in self.sites)

    def validate(self, layout: SpaceLayout) -> None:
        for k, op in self.sites:
            layout.check_factor(k)
            if op.dim != layout.factors[k]:
                raise ConfigurationError(
                    f"term {self.label!r}: site operator dim {op.dim} does not match factor {k} "
                    f"(dim {layout.factors[k]})"
                )

    def diagonal(self, layout: SpaceLayout) -> np.ndarray:
        """Full-length diagonal of a purely diagonal term."""
        if not self.is_diagonal:
            raise ValueError(f"term {self.label!r} is not diagonal")
        diag = np.full(layout.total_dim, self.coefficient)
        view = diag.reshape(layout.factors)
        for k, op in self.sites:
            view *= _broadcast_along(op.diagonal, k, layout.n_factors)
        return diag


def _broadcast_along(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def _apply_site(psi: np.ndarray, k: int, op: SiteOperator) -> np.ndarray:
    """Apply ``op`` along axis ``k`` of the tensor ``psi`` (returns a new array)."""
    if op.is_diagonal:
        return psi * _broadcast_along(op.diagonal, k, psi.ndim)
    out = np.tensordot(op.matrix, psi, axes=([1], [k]))
    return np.moveaxis(out, 0, k)


def apply_product_term(term: ProductTerm, state: StateVector) -> StateVector:
    """Return ``term |state>`` without building a full matrix."""
    term.validate(state.layout)
    psi = state.tensor()
    if not term.sites:
        return state.like(term.coefficient * state.amplitudes)
    for k, op in term.sites:
        psi = _apply_site(psi, k, op)
    return state.like(term.coefficient * psi.reshape(-1))


def apply_hamiltonian(terms: Sequence[ProductTerm], state: StateVector,
                      accumulator: StateVector | None = None) -> StateVector:
    """Sum of ``apply_product_term`` over ``terms``.

    If ``accumulator`` is given its amplitudes are overwritten in place and it
    is returned.
    """
    out = np.zeros(state.layout.total_dim, dtype=complex)
    for term in terms:
        out += apply_product_term(term, state).amplitudes
    if accumulator is None:
        return state.like(out)
    if accumulator.layout != state.layout:
        raise ConfigurationError("accumulator layout differs from input layout")
    accumulator.amplitudes[:] = out
    return accumulator


class HamiltonianSet:
    """Matrix-free sum of product terms with a fused diagonal.

    All purely diagonal terms are pre-summed into one real vector, so their
    combined action costs a single multiply. Off-diagonal terms are applied
    one by one; a tridiagonal observer operator (the kinetic energy) uses a
    banded stencil instead of a dense contraction.
    """

    def __init__(self, terms: Sequence[ProductTerm], layout: SpaceLayout):
        self.layout = layout
        self.terms = tuple(terms)
        for t in self.terms:
            t.validate(layout)
        self.diagonal = np.zeros(layout.total_dim)
        self._offdiag: list[ProductTerm] = []
        for t in self.terms:
            if t.is_diagonal:
                self.diagonal += t.diagonal(layout)
            else:
                self._offdiag.append(t)
        self._banded = [_banded_form(t) for t in self._offdiag]
        self.n_matvec = 0

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def matvec(self, v: np.ndarray) -> np.ndarray:
        self.n_matvec += 1
        out = self.diagonal * v
        shape = self.layout.factors
        for term, band in zip(self._offdiag, self._banded):
            if band is not None:
                out += _apply_tridiagonal(v.reshape(shape), *band).reshape(-1)
            else:
                psi = v.reshape(shape)
                for k, op in term.sites:
                    psi = _apply_site(psi, k, op)
                out += term.coefficient * psi.reshape(-1)
        return out

    def apply(self, state: StateVector) -> StateVector:
        return state.like(self.matvec(state.amplitudes))

    def expectation(self, state: StateVector) -> float:
        return float(np.vdot(state.amplitudes, self.matvec(state.amplitudes)).real)

    def to_dense(self) -> np.ndarray:
        """Dense matrix by applying the operator to basis vectors (small dims only)."""
        if self.dim > MAX_REDUCED_DIM:
            raise ResourceError(f"refusing to densify a {self.dim}-dimensional operator")
        eye = np.eye(self.dim, dtype=complex)
        return np.column_stack([self.matvec(eye[:, i]) for i in range(self.dim)])


def _banded_form(term: ProductTerm):
    """(axis, diag, offdiag) if ``term`` is a single real-symmetric tridiagonal site."""
    if len(term.sites) != 1:
        return None
    k, op = term.sites[0]
    m = op.matrix
    if op.dim < 3 or np.any(m.imag != 0) or not op.hermitian:
        return None
    if np.count_nonzero(np.triu(m, 2)) or np.count_nonzero(np.tril(m, -2)):
        return None
    return k, term.coefficient * np.diag(m).real.copy(), term.coefficient * np.diag(m, 1).real.copy()


def _apply_tridiagonal(psi: np.ndarray, axis: int, diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    ndim = psi.ndim
    out = psi * _broadcast_along(diag, axis, ndim)
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    offb = _broadcast_along(off, axis, ndim)
    out[lo] += offb * psi[hi]
    out[hi] += offb * psi[lo]
    return out


@dataclass(frozen=True)
class DensityMatrix:
    """Reduced state on a set of kept factors."""

    entries: np.ndarray
    kept: tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def check(self, atol: float = 1e-10) -> None:
        """Raise ``ValueError`` if the density-matrix invariants fail."""
        rho = self.entries
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=atol):
            raise ValueError("density matrix not Hermitian")
        if abs(self.trace() - 1.0) > atol:
            raise ValueError(f"density matrix trace {self.trace()} != 1")
        if self.eigenvalues().min() < -atol:
            raise ValueError("density matrix has negative eigenvalues")


def partial_trace(state: StateVector, keep) -> DensityMatrix:
    """Reduced density matrix of the factors in ``keep``.

    Works by permuting the kept axes to the front and forming ``M M^dagger``
    with ``M`` of shape (dim_keep, dim_rest), so the cost is
    O(total_dim * dim_keep) and the global projector is never built.
    """
    layout = state.layout
    keep = sorted({int(k) for k in keep})
    if not keep:
        raise ConfigurationError("partial_trace needs at least one kept factor")
    for k in keep:
        layout.check_factor(k)
    dim_keep = int(np.prod([layout.factors[k] for k in keep]))
    if dim_keep > MAX_REDUCED_DIM:
        raise ResourceError(f"reduced state dimension {dim_keep} exceeds limit {MAX_REDUCED_DIM}")
    rest = [k for k in range(layout.n_factors) if k not in keep]
    m = np.transpose(state.tensor(), keep + rest).reshape(dim_keep, -1)
    rho = m @ m.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, tuple(keep))


def haar_qubit(rng: np.random.Generator) -> np.ndarray:
    """Haar-random single-qubit pure state."""
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    return v / np.linalg.norm(v)


def random_product_state(layout: SpaceLayout, seed: int | None, factor_specs: Sequence) -> StateVector:
    """Normalized product state built factor by factor.

    Each entry of ``factor_specs`` is one of

    * an ``int``: that computational basis index,
    * ``"haar"``: a Haar-random pure state (drawn from ``seed``, in factor order),
    * an array-like of amplitudes of length equal to the factor dimension
      (normalized here; an all-zero vector is rejected).
    """
    if len(factor_specs) != layout.n_factors:
        raise ConfigurationError(f"need {layout.n_factors} factor specs, got {len(factor_specs)}")
    rng = np.random.default_rng(seed)
    psi = np.ones(1, dtype=complex)
    for k, (d, spec) in enumerate(zip(layout.factors, factor_specs)):
        if isinstance(spec, str):
            if spec != "haar":
                raise ConfigurationError(f"unknown factor spec {spec!r}")
            if d == 2:
                v = haar_qubit(rng)
            else:
                v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
                v /= np.linalg.norm(v)
        elif isinstance(spec, (int, np.integer)):
            if not 0 <= spec < d:
                raise ConfigurationError(f"basis index {spec} out of range for factor {k} (dim {d})")
            v = np.zeros(d, dtype=complex)
            v[spec] = 1.0
        else:
            v = np.asarray(spec, dtype=complex).reshape(-1)
            if v.size != d:
                raise ConfigurationError(f"factor {k}: amplitude length {v.size} != dim {d}")
            n = np.linalg.norm(v)
            if not np.isfinite(n) or n == 0.0:
                raise ConfigurationError(f"factor {k}: wavefunction is not normalizable")
            v = v / n
        psi = np.kron(psi, v)
    return StateVector(psi, layout)
