"""Registry of structural identities that every solution of the Dyson equation satisfies."""

from dataclasses import dataclass
from functools import cached_property
import logging
from typing import Callable
import numpy as np
from dysonlab import algebra, solver, spectral
from dysonlab.exceptions import InvalidIdentityCode
from dysonlab.model import ModelSpec
from dysonlab.solver import SolveOptions, Solution

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Evaluation:
    """Lazily computed objects at one spectral parameter z."""

    spec: ModelSpec
    z: complex
    opts: SolveOptions

    @cached_property
    def solution(self) -> Solution:
        return solver.descend(self.spec, self.z.real, self.z.imag, self.opts)[-1]

    @property
    def m(self) -> np.ndarray:
        return self.solution.m

    @cached_property
    def polar(self) -> spectral.PolarData:
        return spectral.polar_decompose(self.m)

    @cached_property
    def fdata(self) -> spectral.FData:
        return spectral.saturated_F(self.polar, self.spec.superoperator)


def polar_reconstruction(point: Evaluation) -> float:
    return point.polar.reconstruction_defect()


def polar_unitarity(point: Evaluation) -> float:
    return point.polar.unitarity_defect()


def saturation_bound(point: Evaluation) -> float:
    return max(point.fdata.norm - 1.0, 0.0)


def saturation_gap(point: Evaluation) -> float:
    """|1 - |F| - Im z <f, q q*> / <f, Im u>|"""
    polar, fdata = point.polar, point.fdata
    qq_star = polar.q @ algebra.adjoint(polar.q)
    numerator = algebra.inner_product(fdata.f, qq_star).real
    denominator = algebra.inner_product(fdata.f, algebra.imag_part(polar.u)).real
    return abs(1 - fdata.norm - point.z.imag * numerator / denominator)


def density_normalization(point: Evaluation) -> float:
    """|<f_u q q*> - pi|"""
    polar = point.polar
    value = algebra.normalized_trace(polar.f_u @ polar.q @ algebra.adjoint(polar.q))
    return abs(value - np.pi)


def saturation_symmetry(point: Evaluation) -> float:
    matrix = point.fdata.F.matrix
    return float(np.linalg.norm(matrix - matrix.conj().T, ord=2) / max(1.0, point.fdata.norm))


def stability_factorization(point: Evaluation) -> float:
    return spectral.b_factorization_defect(point.polar, point.fdata, point.spec.superoperator)


def stability_derivative(point: Evaluation) -> float:
    step = 1e-2 * point.z.imag
    return solver.stability_residual_check(point.spec, point.z, step, point.opts, extrapolate=True).defect


def equation_residual(point: Evaluation) -> float:
    return solver.mde_residual(point.spec, point.z, point.m)


def resolvent_bound(point: Evaluation) -> float:
    """|m| <= 1 / Im z"""
    return max(algebra.opnorm(point.m) - 1 / point.z.imag, 0.0)


def distance_bound(point: Evaluation) -> float:
    """|m|_2 <= 2 / dist(z, Conv spec a)"""
    lo, hi = point.spec.bare_spectrum
    closest = min(max(point.z.real, lo), hi)
    distance = abs(point.z - closest)
    return max(algebra.norm2(point.m) - 2 / distance, 0.0)


@dataclass(frozen=True, kw_only=True)
class Identity:
    title: str
    code: str
    rationale: str
    tolerance: float
    measure: Callable[[Evaluation], float]

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}<{self.code}>"

    def defect(self, point: Evaluation) -> float:
        return float(self.measure(point))

    def holds_at(self, point: Evaluation) -> bool:
        return self.defect(point) <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "title": self.title,
            "rationale": self.rationale,
            "tolerance": self.tolerance,
            "measure": self.measure.__name__,
        }


@dataclass(frozen=True)
class Violation:
    code: str
    title: str
    z: complex
    defect: float
    tolerance: float

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "title": self.title,
            "z": [self.z.real, self.z.imag],
            "defect": self.defect,
            "tolerance": self.tolerance,
        }


ALL_IDENTITIES = (
    Identity(
        title="Polar factors do not reconstruct m",
        code="P100",
        rationale=(
            "The balanced polar decomposition writes the solution as m = q* u q. "
            "A defect here means q or u was computed from an inaccurate Im m."
        ),
        tolerance=1e-8,
        measure=polar_reconstruction,
    ),
    Identity(
        title="Polar factor u is not unitary",
        code="P101",
        rationale="u = (X + i)/|X + i| for a Hermitian X, so u* u = 1.",
        tolerance=1e-8,
        measure=polar_unitarity,
    ),
    Identity(
        title="Saturated self-energy has norm above one",
        code="F100",
        rationale=(
            "F = C_{q,q*} S C_{q*,q} satisfies |F|_2 <= 1 in the upper half plane, "
            "with equality only on the support."
        ),
        tolerance=1e-10,
        measure=saturation_bound,
    ),
    Identity(
        title="Saturation gap does not match Im z",
        code="F101",
        rationale="1 - |F|_2 = Im z <f, q q*> / <f, Im u> for the Perron-Frobenius vector f.",
        tolerance=1e-8,
        measure=saturation_gap,
    ),
    Identity(
        title="f_u q q* is not normalized to pi",
        code="F102",
        rationale="<f_u q q*> = pi follows from the definition of f_u = Im u / rho.",
        tolerance=1e-8,
        measure=density_normalization,
    ),
    Identity(
        title="Saturated self-energy is not symmetric",
        code="F103",
        rationale="F inherits symmetry from S, so its matrix is Hermitian.",
        tolerance=1e-10,
        measure=saturation_symmetry,
    ),
    Identity(
        title="Stability operator does not factorize through F",
        code="B100",
        rationale="Id - C_m S = C_{q*,q} C_u (C_u* - F) C_{q*,q}^-1.",
        tolerance=1e-9,
        measure=stability_factorization,
    ),
    Identity(
        title="Derivative of m violates the stability equation",
        code="B101",
        rationale=(
            "Differentiating the Dyson equation gives (Id - C_m S)[d_z m] = m^2. "
            "Measured with extrapolated central differences of step Im z / 100."
        ),
        tolerance=1e-6,
        measure=stability_derivative,
    ),
    Identity(
        title="Solution does not satisfy the Dyson equation",
        code="S100",
        rationale="|m (z - a + S[m]) + 1| is the residual every solve drives to zero.",
        tolerance=1e-9,
        measure=equation_residual,
    ),
    Identity(
        title="Solution exceeds the resolvent bound",
        code="S101",
        rationale="m is a Stieltjes transform of a positive measure of mass one, so |m| <= 1/Im z.",
        tolerance=1e-10,
        measure=resolvent_bound,
    ),
    Identity(
        title="Solution exceeds the distance bound",
        code="S102",
        rationale="|m(z)|_2 <= 2 / dist(z, Conv spec a).",
        tolerance=1e-10,
        measure=distance_bound,
    ),
)

IDENTITIES_BY_CODE: dict[str, Identity] = {}
for identity in ALL_IDENTITIES:
    if identity.code in IDENTITIES_BY_CODE:
        raise KeyError(f"An identity with code {identity.code} already exists")
    else:
        IDENTITIES_BY_CODE[identity.code] = identity


def choose_identities(
    identities: tuple[Identity, ...],
    ignore: tuple[str, ...] | None = None,
    select: tuple[str, ...] | None = None,
) -> tuple[Identity, ...]:
    """Return the relevant identities given some selected and ignored codes."""
    if ignore and not isinstance(ignore, tuple):
        raise TypeError("Codes to ignore must be wrapped in a tuple")
    if select and not isinstance(select, tuple):
        raise TypeError("Codes to select must be wrapped in a tuple")

    by_code = {identity.code: identity for identity in identities}
    codeset = set(by_code)

    invalid = set((ignore or tuple()) + (select or tuple())) - codeset
    if invalid:
        suffix = (
            "are not valid identity codes"
            if len(invalid) > 1
            else "is not a defined identity code"
        )
        raise InvalidIdentityCode(f"{', '.join(sorted(invalid))} {suffix}")

    codes = codeset & set(select or codeset) - set(ignore or tuple())
    if not codes:
        return identities
    return tuple(identity for identity in identities if identity.code in codes)


def admissible_points(spec: ModelSpec, count: int = 20, seed: int = 0) -> list[complex]:
    """Spectral parameters over the support window with Im z log-uniform in [0.1, 1]."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.support_window()
    taus = rng.uniform(lo, hi, count)
    etas = 10 ** rng.uniform(-1, 0, count)
    return [complex(tau, eta) for tau, eta in zip(taus, etas)]


def measure_all(
    spec: ModelSpec,
    zs,
    identities: tuple[Identity, ...] = ALL_IDENTITIES,
    opts: SolveOptions | None = None,
) -> list[tuple[Identity, complex, float]]:
    opts = opts or SolveOptions()
    results = []
    for z in zs:
        point = Evaluation(spec, complex(z), opts)
        for identity in identities:
            results.append((identity, point.z, identity.defect(point)))
    return results


def verify(
    spec: ModelSpec,
    zs,
    identities: tuple[Identity, ...] = ALL_IDENTITIES,
    opts: SolveOptions | None = None,
) -> list[Violation]:
    violations = []
    for identity, z, defect in measure_all(spec, zs, identities, opts):
        if defect > identity.tolerance:
            logger.debug(f"{identity.code} violated at z={z:.6g} with defect {defect:.3e}")
            violations.append(Violation(identity.code, identity.title, z, defect, identity.tolerance))
    return violations
