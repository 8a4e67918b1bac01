"""Finite-dimensional Hilbert-space arithmetic.

Operators and states carry an explicit subsystem-dimension signature
(`Dims`) so that tensor placement and expectation values are checked,
not assumed.  Matrices are dense ``numpy`` arrays by default; operators
on large composite spaces may be backed by ``scipy.sparse`` matrices
(the two-unit cascade needs this -- its dense Hamiltonian would be
~340 MB).  All rates are expressed in units of the first transmon
emission rate and times in its inverse, so every entry is a plain
dimensionless number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError

MatrixLike = Union[np.ndarray, sp.spmatrix]

HERMITIAN_ATOL = 1e-12


@dataclass(frozen=True)
class Dims:
    """Ordered subsystem dimensions of a tensor-product space."""

    subsystem_dims: tuple[int, ...]

    def __init__(self, subsystem_dims: Iterable[int]):
        dims = tuple(int(d) for d in subsystem_dims)
        if not dims or any(d < 1 for d in dims):
            raise DimensionError(f"every subsystem dimension must be >= 1, got {dims}")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.subsystem_dims)

    def __len__(self) -> int:
        return len(self.subsystem_dims)

    def __getitem__(self, slot: int) -> int:
        return self.subsystem_dims[slot]


@dataclass(frozen=True)
class Operator:
    """A matrix tagged with the dimension signature it acts on."""

    dims: Dims
    matrix: MatrixLike = field(repr=False)

    def __post_init__(self):
        n = self.dims.total_dim
        if self.matrix.shape != (n, n):
            raise DimensionError(
                f"operator matrix shape {self.matrix.shape} != ({n}, {n}) from dims"
            )

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.dims, self.matrix.conj().T if self.is_sparse else self.matrix.conj().T.copy())

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        d = self.matrix - self.matrix.conj().T
        if sp.issparse(d):
            return abs(d).max() <= atol if d.nnz else True
        return np.max(np.abs(d)) <= atol

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_dims(other)
        return Operator(self.dims, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_dims(other)
        return Operator(self.dims, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.dims, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_dims(other)
        return Operator(self.dims, self.matrix @ other.matrix)

    def _check_same_dims(self, other: "Operator"):
        if self.dims != other.dims:
            raise DimensionError(
                f"dimension signatures differ: {self.dims.subsystem_dims} vs "
                f"{other.dims.subsystem_dims}"
            )


@dataclass
class QuantumState:
    """Pure state vector or density matrix over a dimension signature.

    ``kind`` is ``"pure"`` (vector of length total_dim) or ``"density"``
    (square matrix).  Validation tolerances follow the package-wide
    contracts: unit norm for pure states, trace 1 +/- 1e-9, Hermiticity,
    and minimum eigenvalue >= -1e-8 for density matrices.
    """

    dims: Dims
    data: np.ndarray
    kind: str = "pure"

    def __post_init__(self):
        n = self.dims.total_dim
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.kind == "pure":
            if self.data.shape != (n,):
                raise DimensionError(f"pure state shape {self.data.shape} != ({n},)")
        elif self.kind == "density":
            if self.data.shape != (n, n):
                raise DimensionError(f"density matrix shape {self.data.shape} != ({n},{n})")
        else:
            raise DimensionError(f"unknown state kind {self.kind!r}")

    @property
    def norm_or_trace(self) -> float:
        if self.kind == "pure":
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    def normalized(self) -> "QuantumState":
        s = self.norm_or_trace
        if s <= 0:
            raise DimensionError("cannot normalize a zero state")
        return QuantumState(self.dims, self.data / s, self.kind)

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        return QuantumState(self.dims, np.outer(self.data, self.data.conj()), "density")

    def validate(self, trace_atol: float = 1e-9, eig_atol: float = 1e-8) -> None:
        if self.kind == "pure":
            if abs(self.norm_or_trace - 1.0) > trace_atol:
                raise NumericalValidationError(f"pure-state norm {self.norm_or_trace} != 1")
            return
        rho = self.data
        if abs(np.trace(rho).real - 1.0) > trace_atol or abs(np.trace(rho).imag) > trace_atol:
            raise NumericalValidationError(f"density trace {np.trace(rho)} != 1")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
            raise NumericalValidationError("density matrix is not Hermitian")
        w = np.linalg.eigvalsh(rho)
        if w.min() < -eig_atol:
            raise NumericalValidationError(f"density matrix min eigenvalue {w.min():.3e}")


class NumericalValidationError(DimensionError):
    """State failed its norm/trace/positivity contract."""


def identity(d: int, dims: Dims | None = None) -> Operator:
    """Identity on a single d-dimensional factor (or on ``dims`` if given)."""
    if dims is not None:
        d = dims.total_dim
        return Operator(dims, np.eye(d, dtype=np.complex128))
    return Operator(Dims([d]), np.eye(d, dtype=np.complex128))


def annihilation(d: int) -> Operator:
    """Bosonic annihilation operator truncated to d Fock levels.

    Entries a[n, n+1] = sqrt(n+1) for 0 <= n <= d-2.
    """
    if d < 2:
        raise DimensionError(f"annihilation needs d >= 2, got {d}")
    m = np.zeros((d, d), dtype=np.complex128)
    ns = np.arange(d - 1)
    m[ns, ns + 1] = np.sqrt(ns + 1.0)
    return Operator(Dims([d]), m)


def number_op(d: int) -> Operator:
    """Number operator diag(0, ..., d-1)."""
    return Operator(Dims([d]), np.diag(np.arange(d, dtype=np.complex128)))


def transition(i: int, j: int, d: int = 3) -> Operator:
    """|i><j| on a d-level system (default d=3, the transmon)."""
    if not (0 <= i < d and 0 <= j < d):
        raise DimensionError(f"transition levels ({i},{j}) out of range for d={d}")
    m = np.zeros((d, d), dtype=np.complex128)
    m[i, j] = 1.0
    return Operator(Dims([d]), m)


def embed(op: Operator, slot: int, dims: Dims, sparse: bool | None = None) -> Operator:
    """Place ``op`` at position ``slot`` of the tensor product, identities elsewhere.

    ``sparse`` forces the backing representation; by default the result is
    sparse whenever the target space is larger than 512 dimensions.
    """
    if not (0 <= slot < len(dims)):
        raise DimensionError(f"slot {slot} out of range for {len(dims)} subsystems")
    d_slot = dims[slot]
    if op.dims.total_dim != d_slot:
        raise DimensionError(
            f"operator dimension {op.dims.total_dim} != subsystem dimension {d_slot} at slot {slot}"
        )
    if sparse is None:
        sparse = dims.total_dim > 512
    if sparse:
        m = sp.csr_matrix(op.matrix)
        left = math.prod(dims.subsystem_dims[:slot])
        right = math.prod(dims.subsystem_dims[slot + 1:])
        out = sp.kron(sp.identity(left, format="csr", dtype=np.complex128), m, format="csr")
        out = sp.kron(out, sp.identity(right, format="csr", dtype=np.complex128), format="csr")
        return Operator(dims, out)
    m = op.dense()
    left = math.prod(dims.subsystem_dims[:slot])
    right = math.prod(dims.subsystem_dims[slot + 1:])
    out = np.kron(np.kron(np.eye(left), m), np.eye(right)).astype(np.complex128)
    return Operator(dims, out)


def basis_state(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=np.complex128)
    v[index] = 1.0
    return v


def coherent_state(alpha: complex, d: int, warn_deficit: float = 1e-6) -> QuantumState:
    """Truncated coherent state, renormalized to unit norm.

    Components e^{-|alpha|^2/2} alpha^n / sqrt(n!) for n < d.  If the
    pre-normalization norm falls short of 1 by more than
    ``warn_deficit`` the truncation is too tight and a warning is
    emitted.
    """
    n = np.arange(d)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, d)))))
    if alpha == 0:
        amps = np.zeros(d, dtype=np.complex128)
        amps[0] = 1.0
    else:
        log_mag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact
        phase = np.exp(1j * n * np.angle(alpha))
        amps = np.exp(log_mag) * phase
    norm = np.linalg.norm(amps)
    if 1.0 - norm > warn_deficit:
        import warnings

        warnings.warn(
            f"coherent-state truncation d={d} loses norm {1.0 - norm:.2e}; increase d",
            stacklevel=2,
        )
    return QuantumState(Dims([d]), amps / norm, "pure")


def tensor_pure(*states: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of pure-state vectors."""
    out = np.asarray(states[0], dtype=np.complex128)
    for s in states[1:]:
        out = np.kron(out, np.asarray(s, dtype=np.complex128))
    return out


def expectation(op: Operator, state: QuantumState, hermitian: bool = False) -> complex:
    """<psi|O|psi> or Tr(O rho).

    With ``hermitian=True`` the imaginary part is asserted to be below
    1e-10 in magnitude and discarded.
    """
    if op.dims != state.dims:
        raise DimensionError(
            f"operator dims {op.dims.subsystem_dims} != state dims {state.dims.subsystem_dims}"
        )
    if state.kind == "pure":
        v = state.data
        val = complex(np.vdot(v, op.matrix @ v))
    else:
        if sp.issparse(op.matrix):
            val = complex((op.matrix @ state.data).trace())
        else:
            val = complex(np.trace(op.matrix @ state.data))
    if hermitian:
        if abs(val.imag) > 1e-10:
            raise NumericalValidationError(
                f"expectation of declared-Hermitian operator has imag part {val.imag:.3e}"
            )
        return val.real
    return val
