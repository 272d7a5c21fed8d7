"""Block-diagonal matrix algebra with the normalized trace state.

Elements are numpy arrays of shape (N, K, K): the i-th slice is the K x K block
sitting at position i on the diagonal of an NK x NK matrix. A plain n x n matrix
is the special case N = 1, K = n; the diagonal subalgebra of C^{n x n} is N = n, K = 1.

Superoperators act on column-stacked blocks, so that for one block
vec(x h y) = (y^T kron x) vec(h).
"""

from dataclasses import dataclass
import logging
import numpy as np
import scipy.linalg
from dysonlab.exceptions import (
    DimensionMismatch,
    EigensolverError,
    NonHermitianError,
    NumericalFailure,
    SignDegeneracy,
    UndefinedFunctionError,
)
from dysonlab.types import ScalarFunction

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-8
SIGN_ATOL = 1e-10
RECONSTRUCTION_TOL = 1e-6


def as_element(x) -> np.ndarray:
    """Coerce a scalar-free array into the (N, K, K) complex layout."""
    array = np.asarray(x, dtype=complex)
    if array.ndim == 2:
        array = array[np.newaxis]
    if array.ndim != 3 or array.shape[1] != array.shape[2]:
        raise DimensionMismatch(
            f"Expected an (N, K, K) or (n, n) array, got shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise NumericalFailure("Matrix element has non-finite entries")
    return array


def identity(blocks: int, size: int) -> np.ndarray:
    return np.broadcast_to(np.eye(size, dtype=complex), (blocks, size, size)).copy()


def identity_like(x: np.ndarray) -> np.ndarray:
    return identity(x.shape[0], x.shape[1])


def dimension(x: np.ndarray) -> int:
    return x.shape[0] * x.shape[1]


def adjoint(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def real_part(x: np.ndarray) -> np.ndarray:
    return (x + adjoint(x)) / 2


def imag_part(x: np.ndarray) -> np.ndarray:
    return (x - adjoint(x)) / 2j


def inverse(x: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(x)
    except np.linalg.LinAlgError as error:
        raise NumericalFailure(f"Matrix element is not invertible: {error}") from error


def _check_same_shape(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionMismatch(f"Shapes {x.shape} and {y.shape} do not match")


def normalized_trace(x) -> complex:
    x = as_element(x)
    return complex(np.trace(x, axis1=1, axis2=2).sum() / dimension(x))


def inner_product(x, y) -> complex:
    """<x, y> := <x* y>, antilinear in the first slot."""
    x, y = as_element(x), as_element(y)
    _check_same_shape(x, y)
    return complex(np.vdot(x, y) / dimension(x))


def norm2(x) -> float:
    return float(np.sqrt(max(inner_product(x, x).real, 0.0)))


def opnorm(x) -> float:
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[np.newaxis]
    return float(np.linalg.norm(x, ord=2, axis=(1, 2)).max())


def is_hermitian(x, tol: float = 1e-12) -> bool:
    x = as_element(x)
    return opnorm(x - adjoint(x)) <= tol * max(1.0, opnorm(x))


def is_psd(x, tol: float = 1e-12) -> bool:
    x = as_element(x)
    if not is_hermitian(x, tol=max(tol, 1e-12)):
        return False
    eigenvalues = np.linalg.eigvalsh(real_part(x))
    return bool(eigenvalues.min() >= -tol * max(1.0, opnorm(x)))


def min_eigenvalue(x: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part."""
    return float(np.linalg.eigvalsh(real_part(x)).min())


def hermitian_function(x, f: ScalarFunction) -> np.ndarray:
    """Apply f to a Hermitian element through its eigendecomposition.

    Inputs with a relative skew part up to HERMITIAN_RTOL are symmetrized first.
    """
    x = as_element(x)
    skew = opnorm(x - adjoint(x))
    if skew > HERMITIAN_RTOL * opnorm(x):
        raise NonHermitianError(
            f"Element is not Hermitian: |x - x*| = {skew:.3e}, |x| = {opnorm(x):.3e}"
        )
    eigenvalues, vectors = np.linalg.eigh(real_part(x))
    values = np.asarray(f(eigenvalues))
    if not np.all(np.isfinite(values)):
        raise UndefinedFunctionError(
            "Function is undefined at an eigenvalue in "
            f"[{eigenvalues.min():.3e}, {eigenvalues.max():.3e}]"
        )
    return (vectors * values[..., np.newaxis, :]) @ adjoint(vectors)


def _nonnegative(eigenvalues: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.abs(eigenvalues).max(initial=0.0)))
    clipped = np.where(eigenvalues < 0, 0.0, eigenvalues)
    return np.where(eigenvalues < -1e-12 * scale, np.nan, clipped)


def sqrtm(x) -> np.ndarray:
    return hermitian_function(x, lambda t: np.sqrt(_nonnegative(t)))


def inv_sqrtm(x) -> np.ndarray:
    def f(t):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, 1 / np.sqrt(np.abs(t)), np.nan)

    return hermitian_function(x, f)


def absm(x) -> np.ndarray:
    return hermitian_function(x, np.abs)


def _sign(t: np.ndarray) -> np.ndarray:
    if np.any(np.abs(t) < SIGN_ATOL):
        raise SignDegeneracy(
            f"sign is undefined: eigenvalue within {SIGN_ATOL:g} of zero"
        )
    return np.sign(t)


def signm(x) -> np.ndarray:
    return hermitian_function(x, _sign)


def negative_indicator(x) -> np.ndarray:
    """1_{(-inf, 0)}(x)"""
    return hermitian_function(x, lambda t: (t < 0).astype(float))


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stack every block and concatenate the blocks."""
    return np.ascontiguousarray(np.swapaxes(x, -1, -2)).reshape(-1)


def unvec(v: np.ndarray, blocks: int, size: int) -> np.ndarray:
    return np.swapaxes(np.asarray(v).reshape(blocks, size, size), -1, -2)


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """A linear map on (N, K, K) elements, stored as its matrix on vec(x)."""

    matrix: np.ndarray
    blocks: int
    size: int

    def __post_init__(self):
        expected = self.blocks * self.size * self.size
        if self.matrix.shape != (expected, expected):
            raise DimensionMismatch(
                f"Superoperator on {self.blocks} blocks of size {self.size} needs a "
                f"{expected}x{expected} matrix, got {self.matrix.shape}"
            )

    def __repr__(self) -> str:
        return f"SuperOperator<blocks={self.blocks}, size={self.size}>"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x) -> np.ndarray:
        x = as_element(x)
        if x.shape != (self.blocks, self.size, self.size):
            raise DimensionMismatch(
                f"Cannot apply {self!r} to an element of shape {x.shape}"
            )
        return unvec(self.matrix @ vec(x), self.blocks, self.size)

    __call__ = apply

    def adjoint(self) -> "SuperOperator":
        # vec is a scaled isometry for <x, y>, so the adjoint is the conjugate transpose
        return self._like(self.matrix.conj().T)

    def _like(self, matrix: np.ndarray) -> "SuperOperator":
        return SuperOperator(matrix, self.blocks, self.size)

    def _check(self, other: "SuperOperator") -> None:
        if (other.blocks, other.size) != (self.blocks, self.size):
            raise DimensionMismatch(f"{self!r} and {other!r} act on different algebras")

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return self._like(self.matrix @ other.matrix)

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return self._like(self.matrix + other.matrix)

    def __sub__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return self._like(self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "SuperOperator":
        return self._like(scalar * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "SuperOperator":
        return self._like(-self.matrix)

    def norm(self) -> float:
        """Operator norm with respect to the norm induced by <x, y>."""
        return float(scipy.linalg.svdvals(self.matrix)[0])

    def singular_values(self) -> np.ndarray:
        return scipy.linalg.svdvals(self.matrix)

    def solve(self, y) -> np.ndarray:
        """Return x with T[x] = y."""
        try:
            solution = scipy.linalg.solve(self.matrix, vec(as_element(y)))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as error:
            raise NumericalFailure(f"Superoperator is singular: {error}") from error
        return unvec(solution, self.blocks, self.size)

    def inverse(self) -> "SuperOperator":
        try:
            return self._like(scipy.linalg.inv(self.matrix))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as error:
            raise NumericalFailure(f"Superoperator is singular: {error}") from error

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    @classmethod
    def identity(cls, blocks: int, size: int) -> "SuperOperator":
        return cls(np.eye(blocks * size * size, dtype=complex), blocks, size)

    @classmethod
    def from_map(cls, func, blocks: int, size: int) -> "SuperOperator":
        """Tabulate a linear map by applying it to the matrix units."""
        dim = blocks * size * size
        matrix = np.empty((dim, dim), dtype=complex)
        for column in range(dim):
            unit = np.zeros(dim, dtype=complex)
            unit[column] = 1.0
            matrix[:, column] = vec(as_element(func(unvec(unit, blocks, size))))
        return cls(matrix, blocks, size)


def sandwich(x, y) -> SuperOperator:
    """C_{x,y}[h] = x h y"""
    x, y = as_element(x), as_element(y)
    _check_same_shape(x, y)
    blocks, size = x.shape[0], x.shape[1]
    matrix = scipy.linalg.block_diag(
        *[np.kron(y_block.T, x_block) for x_block, y_block in zip(x, y)]
    )
    return SuperOperator(np.asarray(matrix, dtype=complex), blocks, size)


def outer(b: np.ndarray, l: np.ndarray) -> SuperOperator:
    """The rank-one map x -> <l, x> b."""
    blocks, size = b.shape[0], b.shape[1]
    matrix = np.outer(vec(b), vec(l).conj()) / dimension(b)
    return SuperOperator(matrix, blocks, size)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues sorted by modulus, with bi-orthogonal right/left eigenvectors.

    Columns satisfy left[:, j]^H right[:, k] = delta_jk in vec coordinates.
    """

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray
    residual: float
    blocks: int
    size: int

    def right_element(self, k: int) -> np.ndarray:
        return unvec(self.right[:, k], self.blocks, self.size)

    def left_element(self, k: int) -> np.ndarray:
        return unvec(self.left[:, k], self.blocks, self.size)


def superop_eigendata(operator: SuperOperator) -> EigenSystem:
    matrix = operator.matrix
    if not np.all(np.isfinite(matrix)):
        raise EigensolverError("Superoperator has non-finite entries")
    try:
        values, left, right = scipy.linalg.eig(matrix, left=True, right=True)
        overlap = left.conj().T @ right
        left = left @ np.linalg.inv(overlap).conj().T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as error:
        raise EigensolverError(f"Eigensolver failed: {error}") from error

    order = np.lexsort((values.real, np.abs(values)))
    values, left, right = values[order], left[:, order], right[:, order]

    scale = max(1.0, float(np.linalg.norm(matrix)))
    residual = float(np.linalg.norm(matrix @ right - right * values) / scale)
    logger.debug(f"Eigendecomposition of {operator!r} with residual {residual:.2e}")
    if residual > RECONSTRUCTION_TOL:
        raise EigensolverError(
            f"Eigendecomposition residual {residual:.2e} exceeds {RECONSTRUCTION_TOL:g}"
        )
    return EigenSystem(values, right, left, residual, operator.blocks, operator.size)
