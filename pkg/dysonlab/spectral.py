"""Spectral data of the Dyson equation at one point: polar decomposition, F and B."""

from dataclasses import dataclass
import logging
import numpy as np
import scipy.linalg
from dysonlab import algebra
from dysonlab.algebra import SuperOperator
from dysonlab.exceptions import (
    EigensolverError,
    NotIsolated,
    SignDegeneracy,
    UndefinedFunctionError,
)
from dysonlab.model import Certificate

logger = logging.getLogger(__name__)

# below this <Im m> the polar decomposition is built from Im m / <Im m>
BOUNDARY_IM = 1e-6
ISOLATION_GAP = 0.05
PSD_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PolarData:
    """m = q* u q with u unitary, plus s = sign Re u and f_u = Im u / rho."""

    m: np.ndarray
    w: np.ndarray
    q: np.ndarray
    u: np.ndarray
    s: np.ndarray | None
    f_u: np.ndarray
    rho: float

    def __repr__(self) -> str:
        return f"PolarData<rho={self.rho:.3e}, sign={'ok' if self.s is not None else 'degenerate'}>"

    @property
    def sign(self) -> np.ndarray:
        if self.s is None:
            raise SignDegeneracy("sign Re u is undefined: Re u has a vanishing eigenvalue")
        return self.s

    def reconstruction_defect(self) -> float:
        return algebra.opnorm(self.m - algebra.adjoint(self.q) @ self.u @ self.q)

    def unitarity_defect(self) -> float:
        one = algebra.identity_like(self.u)
        return algebra.opnorm(algebra.adjoint(self.u) @ self.u - one)


def polar_decompose(m) -> PolarData:
    """Balanced polar decomposition of a solution with positive semidefinite Im m."""
    m = algebra.as_element(m)
    im_m = algebra.imag_part(m)
    scale = max(1.0, algebra.opnorm(m))
    if algebra.min_eigenvalue(im_m) < -PSD_TOL * scale:
        raise UndefinedFunctionError("Im m has a negative eigenvalue")
    trace = algebra.normalized_trace(im_m).real
    if trace <= 0:
        raise UndefinedFunctionError("Im m vanishes, the polar decomposition is undefined")
    rho = trace / np.pi
    re_m = algebra.real_part(m)
    one = algebra.identity_like(m)

    if trace < BOUNDARY_IM:
        # f_m = Im m / rho stays bounded as Im m -> 0
        f_m = im_m / rho
        root = algebra.sqrtm(f_m)
        inv_root = algebra.inv_sqrtm(f_m)
        y = algebra.real_part(inv_root @ re_m @ inv_root)
        modulus_sq = y @ y + rho**2 * one
        q = algebra.hermitian_function(modulus_sq, lambda t: np.maximum(t, 0.0) ** 0.25) @ root
        inv_modulus = algebra.hermitian_function(modulus_sq, lambda t: 1 / np.sqrt(t))
        u = (y + 1j * rho * one) @ inv_modulus
        f_u = inv_modulus
        w = y / rho + 1j * one
    else:
        root = algebra.sqrtm(im_m)
        inv_root = algebra.inv_sqrtm(im_m)
        x = algebra.real_part(inv_root @ re_m @ inv_root)
        modulus_sq = x @ x + one
        q = algebra.hermitian_function(modulus_sq, lambda t: t**0.25) @ root
        inv_modulus = algebra.hermitian_function(modulus_sq, lambda t: 1 / np.sqrt(t))
        u = (x + 1j * one) @ inv_modulus
        f_u = inv_modulus / rho
        w = x + 1j * one

    try:
        s = algebra.signm(algebra.real_part(u))
    except SignDegeneracy:
        logger.debug(f"sign Re u is degenerate at rho={rho:.3e}")
        s = None
    return PolarData(m=m, w=w, q=q, u=u, s=s, f_u=algebra.real_part(f_u), rho=rho)


@dataclass(frozen=True, eq=False)
class FData:
    F: SuperOperator
    norm: float
    f: np.ndarray
    gap: float
    eigenvalues: np.ndarray

    def __repr__(self) -> str:
        return f"FData<norm={self.norm:.12f}, gap={self.gap:.3e}>"


def saturated_F(polar: PolarData, S: SuperOperator) -> FData:
    """F = C_{q,q*} S C_{q*,q} with its Perron-Frobenius eigenpair and spectral gap."""
    q, q_star = polar.q, algebra.adjoint(polar.q)
    F = algebra.sandwich(q, q_star) @ S @ algebra.sandwich(q_star, q)
    matrix = (F.matrix + F.matrix.conj().T) / 2
    try:
        values, vectors = scipy.linalg.eigh(matrix)
    except scipy.linalg.LinAlgError as error:
        raise EigensolverError(f"Eigensolver failed on F: {error}") from error

    norm = float(values[-1])
    f = algebra.unvec(vectors[:, -1], F.blocks, F.size)
    trace = algebra.normalized_trace(f)
    if abs(trace) > 0:
        f = f * (abs(trace) / trace)
    f = algebra.real_part(f)
    f = f / algebra.norm2(f)
    if not algebra.is_psd(f, tol=PSD_TOL):
        raise EigensolverError("Perron-Frobenius eigenvector of F is not positive semidefinite")

    others = np.abs(values[:-1])
    gap = 1.0 if others.size == 0 or norm <= 0 else float(1 - others.max() / norm)
    return FData(F=F, norm=norm, f=f, gap=gap, eigenvalues=values)


@dataclass(frozen=True, eq=False)
class StabilityEigendata:
    B: SuperOperator
    beta: complex
    b: np.ndarray
    l: np.ndarray
    P: SuperOperator
    Q: SuperOperator
    gap: float

    def __repr__(self) -> str:
        return f"StabilityEigendata<beta={self.beta:.3e}, gap={self.gap:.3e}>"

    def natural_gauge(self, polar: PolarData) -> tuple[np.ndarray, np.ndarray]:
        """b = P[q* f_u q] and l = P*[q^-1 f_u q^-*], normalized so that <b> ~ pi."""
        q, q_star = polar.q, algebra.adjoint(polar.q)
        q_inv = algebra.inverse(q)
        b = algebra.inner_product(self.l, q_star @ polar.f_u @ q) * self.b
        l = algebra.inner_product(self.b, q_inv @ polar.f_u @ algebra.adjoint(q_inv)) * self.l
        return b, l


def isolated_eigentriple(
    operator: SuperOperator, isolation: float = ISOLATION_GAP
) -> tuple[complex, np.ndarray, np.ndarray, float]:
    """Smallest-modulus eigenvalue with right/left eigenvectors, |b|_2 = 1 and <l, b> = 1."""
    system = algebra.superop_eigendata(operator)
    values = system.values
    gap = float(np.abs(values[1]) - np.abs(values[0])) if values.size > 1 else np.inf
    if gap < isolation:
        raise NotIsolated(
            f"Smallest eigenvalue {values[0]:.3e} is separated by only {gap:.3e} "
            f"(need {isolation:g})",
            gap=gap,
        )
    b = system.right_element(0)
    trace = algebra.normalized_trace(b)
    phase = abs(trace) / trace if abs(trace) > 1e-12 else 1.0
    b = b * phase / algebra.norm2(b)
    l = system.left_element(0)
    l = l / np.conj(algebra.inner_product(l, b))
    return complex(values[0]), b, l, gap


def stability_eigendata(m, S: SuperOperator, isolation: float = ISOLATION_GAP) -> StabilityEigendata:
    """B = Id - C_m S with its isolated small eigenvalue and spectral projections."""
    m = algebra.as_element(m)
    B = SuperOperator.identity(S.blocks, S.size) - algebra.sandwich(m, m) @ S
    beta, b, l, gap = isolated_eigentriple(B, isolation)
    P = algebra.outer(b, l)
    Q = SuperOperator.identity(S.blocks, S.size) - P
    return StabilityEigendata(B=B, beta=beta, b=b, l=l, P=P, Q=Q, gap=gap)


def sigma_of(polar: PolarData) -> float:
    """sigma = <s f_u^3>"""
    value = algebra.normalized_trace(polar.sign @ polar.f_u @ polar.f_u @ polar.f_u)
    if abs(value.imag) > 1e-8 * max(1.0, abs(value)):
        logger.warning(f"sigma has an imaginary part {value.imag:.3e}")
    return float(value.real)


def psi_of(polar: PolarData, fdata: FData, isolation: float = ISOLATION_GAP) -> float:
    """psi = <x, (Id + F)(T + P_T)^-1 Q_T [x]> with x = s f_u^2 and T = Id - C_s F.

    P_T is the spectral projection of T onto its smallest eigenvalue.
    """
    s = polar.sign
    x = s @ polar.f_u @ polar.f_u
    identity = SuperOperator.identity(fdata.F.blocks, fdata.F.size)
    T = identity - algebra.sandwich(s, s) @ fdata.F
    _, right, left, _ = isolated_eigentriple(T, isolation)
    P_T = algebra.outer(right, left)
    resolvent_part = (T + P_T).solve((identity - P_T).apply(x))
    value = algebra.inner_product(x, (identity + fdata.F).apply(resolvent_part))
    if value.real < -1e-8:
        logger.warning(f"psi came out negative ({value.real:.3e})")
    return float(value.real)


def eigenvalue_expansion(polar: PolarData, fdata: FData, eta: float) -> complex:
    """Leading terms of beta <l, b> in the gauge with <b> ~ pi:

    pi eta / rho - 2 i rho sigma + 2 rho^2 (psi + sigma^2 / <f_u^2>)
    """
    sigma = sigma_of(polar)
    psi = psi_of(polar, fdata)
    f_u_sq = algebra.normalized_trace(polar.f_u @ polar.f_u).real
    rho = polar.rho
    return np.pi * eta / rho - 2j * rho * sigma + 2 * rho**2 * (psi + sigma**2 / f_u_sq)


def verify_Bstar_positivity(
    m, S: SuperOperator, samples: int = 20, seed: int = 0, tol: float = 1e-10
) -> Certificate:
    """Check that (Id - C_{m*,m} S)^-1 maps y y* above y y*."""
    m = algebra.as_element(m)
    T = SuperOperator.identity(S.blocks, S.size) - algebra.sandwich(algebra.adjoint(m), m) @ S
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        y = rng.standard_normal(m.shape) + 1j * rng.standard_normal(m.shape)
        x = y @ algebra.adjoint(y)
        image = T.solve(x)
        scale = max(1.0, algebra.opnorm(image))
        worst = max(
            worst,
            -algebra.min_eigenvalue(image) / scale,
            -algebra.min_eigenvalue(image - x) / scale,
        )
    return Certificate(passed=worst <= tol, defect=max(worst, 0.0), samples=samples)


def b_factorization_defect(polar: PolarData, fdata: FData, S: SuperOperator) -> float:
    """|(Id - C_m S) - C_{q*,q} C_u (C_u* - F) C_{q*,q}^-1| on matrix forms."""
    q, q_star = polar.q, algebra.adjoint(polar.q)
    u, u_star = polar.u, algebra.adjoint(polar.u)
    outer_map = algebra.sandwich(q_star, q)
    factored = (
        outer_map
        @ algebra.sandwich(u, u)
        @ (algebra.sandwich(u_star, u_star) - fdata.F)
        @ outer_map.inverse()
    )
    B = SuperOperator.identity(S.blocks, S.size) - algebra.sandwich(polar.m, polar.m) @ S
    return float(np.linalg.norm(B.matrix - factored.matrix, ord=2))
