"""Data pairs (a, S) for the Dyson equation and their certification."""

from dataclasses import dataclass, field
from functools import cached_property
import logging
from typing import Any, ClassVar, Literal
import numpy as np
import scipy.optimize
from dysonlab import algebra
from dysonlab.algebra import SuperOperator
from dysonlab.exceptions import DimensionMismatch, InvalidConfig, InvalidModel

logger = logging.getLogger(__name__)

DEFAULT_TWO_COMPONENT_BLOCKS = 40


def parse_complex(value) -> complex:
    """Read a number or a [re, im] pair."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise InvalidModel(f"Complex entries are [re, im] pairs, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(value)
    except (TypeError, ValueError) as error:
        raise InvalidModel(f"Could not read {value!r} as a number") from error


def parse_array(value, ndim: int) -> np.ndarray:
    """Read a nested list of numbers / [re, im] pairs into a complex array."""

    def walk(item, depth):
        if depth == 0:
            return parse_complex(item)
        if not isinstance(item, (list, tuple)):
            raise InvalidModel(f"Expected a nested list of depth {ndim}, got {item!r}")
        return [walk(entry, depth - 1) for entry in item]

    try:
        return np.array(walk(value, ndim), dtype=complex)
    except ValueError as error:
        raise InvalidModel(f"Ragged array in model definition: {error}") from error


def dump_array(array: np.ndarray) -> Any:
    array = np.asarray(array)
    if np.all(array.imag == 0):
        return array.real.tolist()
    return np.stack([array.real, array.imag], axis=-1).tolist()


class SelfEnergy:
    """A linear, symmetric, positivity preserving map S on the algebra."""

    kind: ClassVar[str] = NotImplemented

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def superoperator(self, blocks: int, size: int) -> SuperOperator:
        return SuperOperator.from_map(self.apply, blocks, size)

    def to_dict(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_dict(cls, data: dict) -> "SelfEnergy":
        data = dict(data)
        try:
            kind = data.pop("kind")
        except KeyError:
            raise InvalidModel(
                "Self-energies must be defined with a 'kind' key, "
                "for example: 'kind: flat'"
            )
        try:
            variant = SELF_ENERGY_KINDS[kind]
        except KeyError:
            raise InvalidModel(
                f"Self-energy kind '{kind}' is not valid. "
                f"Valid kinds are: {', '.join(SELF_ENERGY_KINDS)}"
            )
        try:
            return variant._from_fields(data)
        except KeyError as error:
            raise InvalidModel(f"The '{kind}' self-energy needs the key {error}") from error
        except TypeError as error:
            raise InvalidModel(f"Invalid '{kind}' self-energy: {error}") from error


@dataclass(frozen=True)
class Flat(SelfEnergy):
    strength: float = 1.0
    kind: ClassVar[str] = "flat"

    def __post_init__(self):
        if not self.strength > 0:
            raise InvalidModel(f"Flat strength must be positive, got {self.strength}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.strength * algebra.normalized_trace(x) * algebra.identity_like(x)

    def superoperator(self, blocks: int, size: int) -> SuperOperator:
        unit = algebra.vec(algebra.identity(blocks, size))
        matrix = self.strength * np.outer(unit, unit.conj()) / (blocks * size)
        return SuperOperator(matrix, blocks, size)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "strength": self.strength}

    @classmethod
    def _from_fields(cls, data: dict) -> "Flat":
        return cls(strength=float(data.pop("strength", 1.0)), **data)


@dataclass(frozen=True, eq=False)
class Dense(SelfEnergy):
    operator: SuperOperator
    kind: ClassVar[str] = "dense"

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.operator.apply(x)

    def superoperator(self, blocks: int, size: int) -> SuperOperator:
        if (blocks, size) != (self.operator.blocks, self.operator.size):
            raise DimensionMismatch(
                f"Dense self-energy acts on {self.operator.blocks} blocks of size "
                f"{self.operator.size}, not {blocks} of size {size}"
            )
        return self.operator

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "blocks": self.operator.blocks,
            "size": self.operator.size,
            "matrix": dump_array(self.operator.matrix),
        }

    @classmethod
    def _from_fields(cls, data: dict) -> "Dense":
        matrix = parse_array(data.pop("matrix"), 2)
        size = int(data.pop("size", round(np.sqrt(matrix.shape[0]))))
        blocks = int(data.pop("blocks", 1))
        if data:
            raise TypeError(f"unexpected keys {sorted(data)}")
        return cls(SuperOperator(matrix, blocks, size))


@dataclass(frozen=True, eq=False)
class Kronecker(SelfEnergy):
    """S[x]_i = sum_mu alpha_mu (s^mu x)_i alpha_mu
    + sum_nu beta_nu (t^nu x)_i beta_nu* + beta_nu* (t^nu^T x)_i beta_nu,
    where (s x)_i = N^-1 sum_j s_ij x_j."""

    alphas: np.ndarray
    betas: np.ndarray
    s: np.ndarray
    t: np.ndarray
    kind: ClassVar[str] = "kronecker"

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=complex)
        size = alphas.shape[-1]
        alphas = alphas.reshape(-1, size, size)
        betas = np.asarray(self.betas, dtype=complex)
        if betas.size:
            betas = betas.reshape(-1, size, size)
        else:
            betas = np.zeros((0, size, size), dtype=complex)
        s = np.asarray(self.s, dtype=float)
        blocks = s.shape[-1]
        if s.shape[-2] != blocks or (np.size(self.t) and np.shape(self.t)[-1] != blocks):
            raise InvalidModel("Kernels must be square and of equal size")
        s = s.reshape(-1, blocks, blocks)
        t = np.asarray(self.t, dtype=float)
        t = t.reshape(-1, blocks, blocks) if t.size else np.zeros((0, blocks, blocks))
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

        if len(alphas) != len(s) or len(betas) != len(t):
            raise InvalidModel(
                f"Got {len(alphas)} alphas for {len(s)} kernels s and "
                f"{len(betas)} betas for {len(t)} kernels t"
            )
        if np.any(s < 0) or np.any(t < 0):
            raise InvalidModel("Kernels must be entrywise nonnegative")
        if not np.allclose(s, np.swapaxes(s, -1, -2), rtol=0, atol=1e-12):
            raise InvalidModel("Kernels s must be symmetric")
        for alpha in alphas:
            if not algebra.is_hermitian(alpha):
                raise InvalidModel("Every alpha must be Hermitian")

    @property
    def blocks(self) -> int:
        return self.s.shape[-1]

    @property
    def size(self) -> int:
        return self.alphas.shape[-1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = algebra.as_element(x)
        if x.shape != (self.blocks, self.size, self.size):
            raise DimensionMismatch(
                f"Kronecker self-energy on {self.blocks} blocks of size {self.size} "
                f"cannot act on shape {x.shape}"
            )
        result = np.zeros_like(x)
        for alpha, kernel in zip(self.alphas, self.s):
            averaged = np.einsum("ij,jab->iab", kernel, x) / self.blocks
            result += alpha @ averaged @ alpha
        for beta, kernel in zip(self.betas, self.t):
            forward = np.einsum("ij,jab->iab", kernel, x) / self.blocks
            backward = np.einsum("ji,jab->iab", kernel, x) / self.blocks
            beta_star = beta.conj().T
            result += beta @ forward @ beta_star + beta_star @ backward @ beta
        return result

    def congruence_sum(self, kappa: np.ndarray) -> np.ndarray:
        """Phi(kappa) = sum alpha kappa alpha + sum (beta kappa beta* + beta* kappa beta)"""
        total = sum((alpha @ kappa @ alpha for alpha in self.alphas), np.zeros_like(kappa))
        for beta in self.betas:
            total = total + beta @ kappa @ beta.conj().T + beta.conj().T @ kappa @ beta
        return total

    def kernel_range(self) -> tuple[float, float]:
        kernels = np.concatenate([self.s, self.t]) if len(self.t) else self.s
        return float(kernels.min()), float(kernels.max())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alphas": dump_array(self.alphas),
            "betas": dump_array(self.betas),
            "s": self.s.tolist(),
            "t": self.t.tolist(),
        }

    @classmethod
    def _from_fields(cls, data: dict) -> "Kronecker":
        alphas = parse_array(data.pop("alphas"), 3)
        size = alphas.shape[-1]
        betas = data.pop("betas", [])
        betas = parse_array(betas, 3) if len(betas) else np.zeros((0, size, size), complex)
        s = np.array(data.pop("s"), dtype=float)
        t = np.array(data.pop("t", []), dtype=float)
        if data:
            raise TypeError(f"unexpected keys {sorted(data)}")
        return cls(alphas, betas, s, t)


@dataclass(frozen=True)
class TwoComponent(SelfEnergy):
    """S[x]_c = sum_d R_cd x_d with R = ((alpha delta, 1 - delta), (delta, alpha (1 - delta))),
    realized on the diagonal of a `blocks` x `blocks` matrix split delta : 1 - delta."""

    delta: float
    alpha: float
    blocks: int = DEFAULT_TWO_COMPONENT_BLOCKS
    kind: ClassVar[str] = "two_component"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidModel(f"delta must lie in (0, 1), got {self.delta}")
        if not self.alpha > 0:
            raise InvalidModel(f"alpha must be positive, got {self.alpha}")
        first = self.delta * self.blocks
        if abs(first - round(first)) > 1e-9 or round(first) in (0, self.blocks):
            raise InvalidModel(
                f"delta * blocks must be an integer strictly between 0 and {self.blocks}, "
                f"got {first:g}; choose a block count that splits as delta : 1 - delta"
            )

    @property
    def first_component(self) -> int:
        return round(self.delta * self.blocks)

    @property
    def R(self) -> np.ndarray:
        d, a = self.delta, self.alpha
        return np.array([[a * d, 1 - d], [d, a * (1 - d)]])

    @property
    def variance_kernel(self) -> np.ndarray:
        """Symmetric 2x2 profile s with R_cd = s_cd * weight_d."""
        return np.array([[self.alpha, 1.0], [1.0, self.alpha]])

    def component_labels(self, blocks: int | None = None) -> np.ndarray:
        blocks = blocks or self.blocks
        return (np.arange(blocks) >= round(self.delta * blocks)).astype(int)

    @cached_property
    def kronecker(self) -> Kronecker:
        labels = self.component_labels()
        kernel = self.variance_kernel[labels[:, None], labels[None, :]]
        return Kronecker(
            alphas=np.ones((1, 1, 1)),
            betas=np.zeros((0, 1, 1)),
            s=kernel[np.newaxis],
            t=np.zeros((0, self.blocks, self.blocks)),
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.kronecker.apply(x)

    def superoperator(self, blocks: int, size: int) -> SuperOperator:
        if (blocks, size) != (self.blocks, 1):
            raise DimensionMismatch(
                f"Two-component self-energy lives on {self.blocks} blocks of size 1"
            )
        labels = self.component_labels()
        kernel = self.variance_kernel[labels[:, None], labels[None, :]]
        return SuperOperator(kernel.astype(complex) / self.blocks, blocks, size)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "alpha": self.alpha,
            "blocks": self.blocks,
        }

    @classmethod
    def _from_fields(cls, data: dict) -> "TwoComponent":
        delta = float(data.pop("delta"))
        alpha = data.pop("alpha")
        if alpha == "cusp":
            alpha = locate_two_component_cusp(delta).alpha
            logger.debug(f"Resolved alpha 'cusp' to {alpha!r} for delta={delta}")
        blocks = int(data.pop("blocks", DEFAULT_TWO_COMPONENT_BLOCKS))
        if data:
            raise TypeError(f"unexpected keys {sorted(data)}")
        return cls(delta=delta, alpha=float(alpha), blocks=blocks)


SELF_ENERGY_KINDS: dict[str, type[SelfEnergy]] = {
    variant.kind: variant for variant in (Flat, Dense, TwoComponent, Kronecker)
}


@dataclass(frozen=True, eq=False)
class ModelSpec:
    bare: np.ndarray
    self_energy: SelfEnergy
    name: str = ""

    def __post_init__(self):
        try:
            bare = algebra.as_element(self.bare)
        except Exception as error:
            raise InvalidModel(f"Invalid bare matrix: {error}") from error
        if not algebra.is_hermitian(bare, tol=1e-12):
            raise InvalidModel("The bare matrix a must be Hermitian")
        object.__setattr__(self, "bare", algebra.real_part(bare))
        expected = {
            Kronecker: lambda se: (se.blocks, se.size),
            TwoComponent: lambda se: (se.blocks, 1),
            Dense: lambda se: (se.operator.blocks, se.operator.size),
        }.get(type(self.self_energy))
        if expected and expected(self.self_energy) != (self.blocks, self.size):
            raise DimensionMismatch(
                f"Bare matrix has {self.blocks} blocks of size {self.size}, self-energy "
                f"expects {expected(self.self_energy)}"
            )

    def __repr__(self) -> str:
        return f"ModelSpec<{self.name or self.self_energy.kind}, n={self.dim}>"

    @property
    def blocks(self) -> int:
        return self.bare.shape[0]

    @property
    def size(self) -> int:
        return self.bare.shape[1]

    @property
    def dim(self) -> int:
        return self.blocks * self.size

    def S(self, x: np.ndarray) -> np.ndarray:
        return self.self_energy.apply(x)

    def identity(self) -> np.ndarray:
        return algebra.identity(self.blocks, self.size)

    @cached_property
    def superoperator(self) -> SuperOperator:
        return self.self_energy.superoperator(self.blocks, self.size)

    @cached_property
    def bare_norm(self) -> float:
        return algebra.opnorm(self.bare)

    @cached_property
    def self_energy_norm(self) -> float:
        """|S| = |S[1]| for positivity preserving S."""
        return algebra.opnorm(self.S(self.identity()))

    @cached_property
    def bare_spectrum(self) -> tuple[float, float]:
        eigenvalues = np.linalg.eigvalsh(self.bare)
        return float(eigenvalues.min()), float(eigenvalues.max())

    def support_window(self) -> tuple[float, float]:
        """spec(a) + [-2 |S|^1/2, 2 |S|^1/2] contains the support of the density."""
        lo, hi = self.bare_spectrum
        reach = 2 * np.sqrt(self.self_energy_norm)
        return lo - reach, hi + reach

    def with_bare(self, bare: np.ndarray) -> "ModelSpec":
        return ModelSpec(bare, self.self_energy, self.name)

    def _bare_layout(self) -> np.ndarray:
        if self.size == 1:
            return self.bare[:, 0, 0]
        return self.bare[0] if self.blocks == 1 else self.bare

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "blocks": self.blocks,
            "bare": dump_array(self._bare_layout()),
            "self_energy": self.self_energy.to_dict(),
        }


def model_from_dict(data: dict) -> ModelSpec:
    """Build a model from its config block {"dim", "bare", "self_energy"}."""
    data = dict(data)
    try:
        self_energy = SelfEnergy.from_dict(data.pop("self_energy"))
    except KeyError:
        raise InvalidModel("Model definitions need a 'self_energy' block")
    name = str(data.pop("name", ""))
    dim = data.pop("dim", None)
    blocks = data.pop("blocks", None)
    bare = data.pop("bare", None)
    if data:
        raise InvalidModel(
            f"Unknown model keys: {', '.join(sorted(data))}. "
            "Valid keys are: name, dim, blocks, bare, self_energy"
        )

    if isinstance(self_energy, TwoComponent):
        shape = (self_energy.blocks, 1)
    elif isinstance(self_energy, Kronecker):
        shape = (self_energy.blocks, self_energy.size)
    elif isinstance(self_energy, Dense):
        shape = (self_energy.operator.blocks, self_energy.operator.size)
    else:
        shape = (int(blocks or 1), int(dim or 1) // int(blocks or 1))

    bare_array = _parse_bare(bare, shape)
    if dim is not None and int(dim) != bare_array.shape[0] * bare_array.shape[1]:
        raise DimensionMismatch(
            f"Model declares dim={dim} but the bare matrix has dimension "
            f"{bare_array.shape[0] * bare_array.shape[1]}"
        )
    return ModelSpec(bare_array, self_energy, name)


def _parse_bare(bare, shape: tuple[int, int]) -> np.ndarray:
    """Read the bare matrix for an algebra of `shape` = (N, K).

    Accepted forms: absent or 0 (zero matrix), {"diagonal": [...]} (n entries),
    N entries when K = 1, a K x K matrix when N = 1, otherwise N x K x K blocks.
    """
    blocks, size = shape
    if bare is None or (not isinstance(bare, (list, tuple, dict)) and parse_complex(bare) == 0):
        return np.zeros((blocks, size, size), dtype=complex)
    if isinstance(bare, dict):
        if set(bare) != {"diagonal"}:
            raise InvalidModel("A bare block given as a mapping needs exactly the key 'diagonal'")
        diagonal = parse_array(bare["diagonal"], 1)
        if diagonal.size != blocks * size:
            raise DimensionMismatch(
                f"Diagonal has {diagonal.size} entries, the model has dimension {blocks * size}"
            )
        return np.stack([np.diag(part) for part in diagonal.reshape(blocks, size)])
    if size == 1:
        return parse_array(bare, 1).reshape(-1, 1, 1)
    if blocks == 1:
        return algebra.as_element(parse_array(bare, 2))
    return algebra.as_element(parse_array(bare, 3))


def build_flat(n: int = 1, strength: float = 1.0, bare=None, name: str = "") -> ModelSpec:
    bare = np.zeros((n, n)) if bare is None else np.asarray(bare)
    if bare.shape[-1] != n:
        raise DimensionMismatch(f"Bare matrix of shape {bare.shape} does not match n={n}")
    return ModelSpec(algebra.as_element(bare), Flat(strength), name)


def build_dense(bare, operator: SuperOperator, name: str = "") -> ModelSpec:
    return ModelSpec(algebra.as_element(bare), Dense(operator), name)


def build_two_component(
    delta: float,
    alpha: float,
    blocks: int = DEFAULT_TWO_COMPONENT_BLOCKS,
    name: str = "",
) -> ModelSpec:
    self_energy = TwoComponent(delta=delta, alpha=alpha, blocks=blocks)
    return ModelSpec(np.zeros((blocks, 1, 1), dtype=complex), self_energy, name)


def build_kronecker(bare, alphas, betas, s, t, name: str = "") -> ModelSpec:
    self_energy = Kronecker(alphas, betas, s, t)
    if bare is None:
        bare = np.zeros((self_energy.blocks, self_energy.size, self_energy.size))
    return ModelSpec(algebra.as_element(bare), self_energy, name)


@dataclass(frozen=True)
class Certificate:
    passed: bool
    defect: float
    samples: int


@dataclass(frozen=True)
class FlatnessCertificate:
    c1: float
    c2: float
    method: Literal["exact", "sampled"]
    samples: int = 0
    worst: float | None = None

    @property
    def is_flat(self) -> bool:
        return self.c1 > 0


def _random_elements(rng, count: int, blocks: int, size: int) -> np.ndarray:
    shape = (count, blocks, size, size)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _as_operator(S: SuperOperator | ModelSpec) -> SuperOperator:
    return S.superoperator if isinstance(S, ModelSpec) else S


def certify_symmetry(
    S: SuperOperator | ModelSpec, samples: int = 50, seed: int = 0, tol: float = 1e-10
) -> Certificate:
    """Check <x, S[y]> = <S[x], y> on random pairs."""
    operator = _as_operator(S)
    rng = np.random.default_rng(seed)
    xs = _random_elements(rng, samples, operator.blocks, operator.size)
    ys = _random_elements(rng, samples, operator.blocks, operator.size)
    worst = 0.0
    for x, y in zip(xs, ys):
        lhs = algebra.inner_product(x, operator.apply(y))
        rhs = algebra.inner_product(operator.apply(x), y)
        worst = max(worst, abs(lhs - rhs))
    scale = max(1.0, operator.norm())
    return Certificate(worst <= tol * scale, worst, samples)


def certify_positivity(
    S: SuperOperator | ModelSpec, samples: int = 200, seed: int = 0
) -> Certificate:
    """Check S[g g*] is positive semidefinite on random g."""
    if samples < 1:
        raise InvalidConfig("At least one sample is needed to certify positivity")
    operator = _as_operator(S)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for g in _random_elements(rng, samples, operator.blocks, operator.size):
        image = operator.apply(g @ algebra.adjoint(g))
        scale = max(algebra.opnorm(image), 1e-300)
        skew = algebra.opnorm(image - algebra.adjoint(image)) / scale
        negative = max(0.0, -algebra.min_eigenvalue(image)) / scale
        worst = max(worst, skew, negative)
    return Certificate(worst <= 1e-10, worst, samples)


def _kronecker_flatness(self_energy: Kronecker, samples: int, seed: int) -> FlatnessCertificate:
    size = self_energy.size
    kernel_min, kernel_max = self_energy.kernel_range()

    def extremes(v: np.ndarray) -> tuple[float, float]:
        v = v / np.linalg.norm(v)
        eigenvalues = np.linalg.eigvalsh(self_energy.congruence_sum(np.outer(v, v.conj())))
        return float(eigenvalues[0]), float(eigenvalues[-1])

    if size == 1:
        lowest, highest = extremes(np.ones(1, dtype=complex))
        return FlatnessCertificate(kernel_min * lowest, kernel_max * highest, "exact")

    # Phi is linear in kappa, so lambda_min(Phi) / tr is extremal on rank-one kappa = v v*
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((samples, size)) + 1j * rng.standard_normal((samples, size))
    values = np.array([extremes(v) for v in vectors])
    start = vectors[np.argmin(values[:, 0])]

    def objective(params: np.ndarray) -> float:
        return extremes(params[:size] + 1j * params[size:])[0]

    refined = scipy.optimize.minimize(
        objective, np.concatenate([start.real, start.imag]), method="Nelder-Mead"
    )
    lowest = min(float(values[:, 0].min()), float(refined.fun))
    highest = float(values[:, 1].max())
    return FlatnessCertificate(
        kernel_min * lowest * size,
        kernel_max * highest * size,
        "sampled",
        samples=samples,
        worst=lowest,
    )


def flatness_bounds(spec: ModelSpec, samples: int = 200, seed: int = 0) -> FlatnessCertificate:
    """Two-sided bounds c1 <x> 1 <= S[x] <= c2 <x> 1 on the positive cone."""
    self_energy = spec.self_energy
    if isinstance(self_energy, Flat):
        certificate = FlatnessCertificate(self_energy.strength, self_energy.strength, "exact")
    elif isinstance(self_energy, TwoComponent):
        certificate = _kronecker_flatness(self_energy.kronecker, samples, seed)
    elif isinstance(self_energy, Kronecker):
        certificate = _kronecker_flatness(self_energy, samples, seed)
    else:
        rng = np.random.default_rng(seed)
        ratios = []
        for g in _random_elements(rng, samples, spec.blocks, spec.size):
            # rank-one samples v v* hit the extreme rays of the cone
            v = g[..., :1]
            x = v @ algebra.adjoint(v)
            trace = algebra.normalized_trace(x).real
            eigenvalues = np.linalg.eigvalsh(algebra.real_part(spec.S(x)))
            ratios.append((eigenvalues.min() / trace, eigenvalues.max() / trace))
        ratios = np.array(ratios)
        certificate = FlatnessCertificate(
            float(ratios[:, 0].min()),
            float(ratios[:, 1].max()),
            "sampled",
            samples=samples,
            worst=float(ratios[:, 0].min()),
        )
    if not certificate.is_flat:
        logger.warning(f"{spec!r} is not flat: lower bound c1 = {certificate.c1:.3e}")
    return certificate


@dataclass(frozen=True)
class CuspPoint:
    delta: float
    alpha: float
    tau: float
    m: tuple[float, float] = field(default=(0.0, 0.0))


def locate_two_component_cusp(delta: float) -> CuspPoint:
    """Exact cusp parameter of the two-component model for 0 < delta < 1/2.

    At a cusp the real solution (m1, m2) = (x, -y) has a singular stability operator
    whose Perron-Frobenius vector f satisfies delta f1^3 = (1 - delta) f2^3. With
    A = 1 - alpha delta x^2 and r = ((1 - delta) / delta)^(1/3) the conditions reduce to
    (N1 / N2)^2 = r^3 (1 - A) / (1 - A / r), N1 = (1 + r) A - 2, N2 = 2 - (1 + r) A / r^2.
    """
    if not 0 < delta < 0.5:
        raise InvalidModel(f"The cusp search needs 0 < delta < 1/2, got {delta}")
    r = ((1 - delta) / delta) ** (1 / 3)

    def numerators(A: float) -> tuple[float, float]:
        return (1 + r) * A - 2, 2 - (1 + r) * A / r**2

    def mismatch(A: float) -> float:
        n1, n2 = numerators(A)
        return (n1 / n2) ** 2 - r**3 * (1 - A) / (1 - A / r)

    lower = 2 / (1 + r)
    A = scipy.optimize.brentq(mismatch, lower, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    n1, n2 = numerators(A)
    product = r * A / (1 - delta)
    x = float(np.sqrt(product * n1 / n2))
    y = product / x
    alpha = (1 - A) / (delta * x**2)
    return CuspPoint(delta=delta, alpha=float(alpha), tau=float(n1 / x), m=(x, -y))
