"""Local shape of the density at small minima: edges, cusps and internal minima."""

from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import numpy as np
import scipy.stats
from dysonlab import algebra, density, solver, spectral
from dysonlab.density import BandStructure, DensityProfile
from dysonlab.exceptions import (
    AmbiguousSingularity,
    InsufficientData,
    InvalidConfig,
    InvalidWindow,
    PredictionRangeError,
)
from dysonlab.model import ModelSpec
from dysonlab.solver import SolveOptions

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)
KAPPA = np.pi


class SingularityKind(str, Enum):
    LEFT_EDGE = "LeftEdge"
    RIGHT_EDGE = "RightEdge"
    CUSP = "Cusp"
    INTERNAL_MIN = "InternalMin"
    AMBIGUOUS = "Ambiguous"


@dataclass(frozen=True)
class ClassifyOptions:
    rho_tol: float = 1e-3
    sigma_star: float = 1.0
    isolation: float = spectral.ISOLATION_GAP
    radius: float = 0.05
    # a minimum this close to a band end is treated as that edge
    edge_match: float = 1e-3
    fit_window: tuple[float, float] = (1e-5, 1e-3)
    fit_points: int = 16

    def __post_init__(self):
        if not self.rho_tol > 0 or not self.sigma_star > 0:
            raise InvalidConfig("rho_tol and sigma_star must be positive")
        lo, hi = self.fit_window
        if not 0 < lo < hi:
            raise InvalidConfig(f"Invalid fit window {self.fit_window}")


@dataclass(frozen=True)
class ShapeParams:
    sigma: float
    psi: float
    gamma_big: float
    rho0: float
    # min{4 |sigma|^3 / (27 pi psi^2), 1}
    delta_hat: float
    f_u_sq: float
    kappa: float = KAPPA

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "psi": self.psi,
            "gamma": self.gamma_big,
            "rho0": self.rho0,
            "delta_hat": self.delta_hat,
        }


@dataclass(frozen=True)
class LocalFit:
    exponent: float
    coefficient: float
    r2: float
    points: int

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "coefficient": self.coefficient, "r2": self.r2}


@dataclass(frozen=True, eq=False)
class SingularityReport:
    tau0: float
    kind: SingularityKind
    params: ShapeParams
    delta_gap: float | None = None
    rho_tilde: float | None = None
    radius: float = 0.05
    sigma_star: float = 1.0
    fit: LocalFit | None = None
    candidates: tuple["SingularityReport", ...] = field(default_factory=tuple)

    def __repr__(self) -> str:
        return f"SingularityReport<{self.kind.value} at {self.tau0:.8g}>"

    def to_dict(self) -> dict:
        payload = {
            "tau0": self.tau0,
            "kind": self.kind.value,
            "sigma": self.params.sigma,
            "psi": self.params.psi,
            "gamma": self.params.gamma_big,
            "delta_gap": self.delta_gap,
            "delta_hat": self.params.delta_hat,
            "rho0": self.params.rho0,
            "fit": self.fit.to_dict() if self.fit else None,
        }
        if self.candidates:
            payload["candidates"] = [candidate.to_dict() for candidate in self.candidates]
        return payload


def psi_edge(lam):
    """sqrt((1+l) l) / ((1+2l+2sqrt((1+l)l))^(2/3) + (1+2l-2sqrt((1+l)l))^(2/3) + 1)"""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("psi_edge is defined for nonnegative arguments")
    root = np.sqrt((1 + lam) * lam)
    big = 1 + 2 * lam + 2 * root
    # the small term equals 1 / big
    return root / (big ** (2 / 3) + big ** (-2 / 3) + 1)


def psi_min(lam):
    """sqrt(1+l^2) / ((sqrt(1+l^2)+l)^(2/3) + (sqrt(1+l^2)-l)^(2/3) - 1) - 1"""
    lam = np.abs(np.asarray(lam, dtype=float))
    root = np.sqrt(1 + lam**2)
    big = root + lam
    return root / (big ** (2 / 3) + big ** (-2 / 3) - 1) - 1


def _cube_root(z):
    return np.exp(np.log(z) / 3)


def cardano_roots(zeta: complex) -> tuple[complex, complex, complex]:
    """The roots (plus, minus, zero) of W^3 - 3W + 2 zeta on the fixed branch table."""
    zeta = complex(zeta)
    if zeta.real >= 1:
        root = np.sqrt(zeta**2 - 1 + 0j)
        plus, minus = _cube_root(zeta + root), _cube_root(zeta - root)
    elif zeta.real > -1:
        root = 1j * np.sqrt(1 - zeta**2 + 0j)
        plus, minus = _cube_root(zeta + root), _cube_root(zeta - root)
    else:
        root = np.sqrt(zeta**2 - 1 + 0j)
        plus, minus = -_cube_root(-zeta - root), -_cube_root(-zeta + root)
    mean, spread = (plus + minus) / 2, 1j * SQRT3 / 2 * (plus - minus)
    return complex(mean + spread), complex(mean - spread), complex(-(plus + minus))


def normal_form_root(lam):
    """Phi_odd(l) + i sqrt(3) Phi_even(l) with Phi(x) = (sqrt(1+x^2)+x)^(1/3).

    The root of W^3 + 3W + 2l followed continuously from i sqrt(3) at l = 0.
    """
    lam = np.asarray(lam, dtype=float)
    root = np.sqrt(1 + lam**2)
    forward, backward = np.cbrt(root + lam), np.cbrt(root - lam)
    return (forward - backward) / 2 + 1j * SQRT3 * (forward + backward) / 2


def _boundary_solution(spec: ModelSpec, tau: float, opts: SolveOptions) -> np.ndarray:
    return solver.descend(spec, tau, opts.eta_fine, opts)[-1].m


def shape_params_at(
    spec: ModelSpec, m: np.ndarray, isolation: float = spectral.ISOLATION_GAP
) -> ShapeParams:
    polar = spectral.polar_decompose(m)
    fdata = spectral.saturated_F(polar, spec.superoperator)
    sigma = spectral.sigma_of(polar)
    psi = max(spectral.psi_of(polar, fdata, isolation), 0.0)
    f_u_sq = algebra.normalized_trace(polar.f_u @ polar.f_u).real
    scale = max(1.0, sigma**2)
    gamma_big = np.inf if psi <= 1e-12 * scale else SQRT3**3 * np.pi / (2 * psi)
    if psi <= 1e-12 * scale:
        delta_hat = 1.0
    else:
        delta_hat = min(4 * abs(sigma) ** 3 / (27 * np.pi * psi**2), 1.0)
    return ShapeParams(
        sigma=sigma,
        psi=psi,
        gamma_big=float(gamma_big),
        rho0=polar.rho,
        delta_hat=float(delta_hat),
        f_u_sq=float(f_u_sq),
    )


def shape_params(
    spec: ModelSpec,
    tau0: float,
    opts: SolveOptions | None = None,
    isolation: float = spectral.ISOLATION_GAP,
) -> ShapeParams:
    """sigma, psi and Gamma = sqrt(27) pi / (2 psi) at a real point, from m(tau0 + i eta_fine)."""
    opts = opts or SolveOptions()
    params = shape_params_at(spec, _boundary_solution(spec, tau0, opts), isolation)
    logger.debug(
        f"Shape parameters at tau={tau0:.10g}: sigma={params.sigma:.6g}, "
        f"psi={params.psi:.6g}, rho={params.rho0:.3e}"
    )
    return params


def local_profile(
    spec: ModelSpec,
    tau0: float,
    side: str,
    window: tuple[float, float],
    points: int = 16,
    opts: SolveOptions | None = None,
) -> DensityProfile:
    """Densities at tau0 +- omega for logarithmically spaced omega in window."""
    if side not in ("left", "right"):
        raise InvalidWindow(f"side must be 'left' or 'right', got {side!r}")
    opts = opts or SolveOptions()
    lo, hi = window
    offsets = np.geomspace(lo, hi, points)
    taus = tau0 + offsets if side == "right" else (tau0 - offsets)[::-1]
    fine = replace(opts, eta_scan=min(opts.eta_scan, lo * 1e-3))
    return density.profile_at(spec, taus, fine)


def fit_local_exponent(
    profile: DensityProfile,
    tau0: float,
    side: str,
    window: tuple[float, float],
    baseline: float = 0.0,
    tol: float = 1e-12,
) -> LocalFit:
    """Least-squares slope of log(rho - baseline) against log |omega| on one side of tau0."""
    omega = profile.taus - tau0
    if side == "left":
        omega = -omega
    values = profile.rho - baseline
    lo, hi = window
    keep = (omega >= lo * (1 - 1e-9)) & (omega <= hi * (1 + 1e-9)) & (values > 10 * tol)
    if int(keep.sum()) < 8:
        raise InsufficientData(
            f"Need at least 8 points with positive density in {window}, got {int(keep.sum())}"
        )
    result = scipy.stats.linregress(np.log(omega[keep]), np.log(values[keep]))
    return LocalFit(
        exponent=float(result.slope),
        coefficient=float(np.exp(result.intercept)),
        r2=float(result.rvalue**2),
        points=int(keep.sum()),
    )


def _edge_kind(structure: BandStructure, tau0: float, tol: float):
    for index, (left, right) in enumerate(structure.bands):
        if abs(tau0 - left) <= tol:
            gap = left - structure.bands[index - 1][1] if index > 0 else None
            return SingularityKind.LEFT_EDGE, gap, left
        if abs(tau0 - right) <= tol:
            gap = structure.bands[index + 1][0] - right if index + 1 < len(structure.bands) else None
            return SingularityKind.RIGHT_EDGE, gap, right
    return None, None, tau0


def classify(
    spec: ModelSpec,
    structure: BandStructure,
    tau0: float,
    opts: SolveOptions | None = None,
    options: ClassifyOptions | None = None,
    fit: bool = True,
) -> SingularityReport:
    """Decide whether tau0 is an edge, a cusp or an internal minimum and attach its shape data."""
    opts = opts or SolveOptions()
    options = options or ClassifyOptions()
    kind, gap, tau0 = _edge_kind(structure, tau0, options.edge_match)
    params = shape_params(spec, tau0, opts, options.isolation)
    common = dict(radius=options.radius, sigma_star=options.sigma_star)

    if kind is not None:
        # extreme edges behave like edges of a gap of size 1
        delta_gap = 1.0 if gap is None else float(min(gap, 1.0))
        expected = 1 if kind is SingularityKind.LEFT_EDGE else -1
        if params.sigma * expected <= 0:
            logger.warning(
                f"sigma={params.sigma:.4g} has the wrong sign for a {kind.value} at {tau0:.8g}"
            )
        report = SingularityReport(tau0, kind, params, delta_gap=delta_gap, **common)
        side = "right" if kind is SingularityKind.LEFT_EDGE else "left"
        return _with_fit(spec, report, side, opts, options) if fit else report

    rho0 = params.rho0
    rho_tilde = rho0 / np.cbrt(params.gamma_big) if np.isfinite(params.gamma_big) else None
    cusp = SingularityReport(tau0, SingularityKind.CUSP, params, **common)
    minimum = SingularityReport(
        tau0, SingularityKind.INTERNAL_MIN, params, rho_tilde=rho_tilde, **common
    )
    near_gate = abs(params.sigma) < options.sigma_star
    if near_gate and options.rho_tol / 2 < rho0 <= 2 * options.rho_tol:
        logger.warning(
            f"Minimum at {tau0:.8g} is ambiguous: rho={rho0:.3e}, sigma={params.sigma:.3e}"
        )
        return SingularityReport(
            tau0, SingularityKind.AMBIGUOUS, params, candidates=(cusp, minimum), **common
        )
    if rho0 <= options.rho_tol:
        if not near_gate:
            logger.warning(f"Cusp at {tau0:.8g} has a large sigma={params.sigma:.4g}")
        return _with_fit(spec, cusp, "right", opts, options) if fit else cusp
    return _with_fit(spec, minimum, "right", opts, options) if fit else minimum


def _with_fit(
    spec: ModelSpec,
    report: SingularityReport,
    side: str,
    opts: SolveOptions,
    options: ClassifyOptions,
) -> SingularityReport:
    profile = local_profile(spec, report.tau0, side, options.fit_window, options.fit_points, opts)
    baseline = report.params.rho0 if report.kind is SingularityKind.INTERNAL_MIN else 0.0
    try:
        local = fit_local_exponent(profile, report.tau0, side, options.fit_window, baseline)
    except InsufficientData as error:
        logger.warning(f"No local fit for {report!r}: {error}")
        return report
    return replace(report, fit=local)


def predict_density(report: SingularityReport, omega: float) -> float:
    """Leading order density at tau0 + omega."""
    if abs(omega) > report.radius:
        raise PredictionRangeError(
            f"|omega| = {abs(omega):g} exceeds the validity radius {report.radius:g}"
        )
    params = report.params
    kind = report.kind
    if kind is SingularityKind.AMBIGUOUS:
        raise AmbiguousSingularity(f"{report!r} has no unique expansion")

    if kind in (SingularityKind.LEFT_EDGE, SingularityKind.RIGHT_EDGE):
        vanishing = omega < 0 if kind is SingularityKind.LEFT_EDGE else omega > 0
        if vanishing or omega == 0:
            return 0.0
        distance = abs(omega)
        if abs(params.sigma) >= report.sigma_star or not np.isfinite(params.gamma_big):
            return float(np.sqrt(np.pi / abs(params.sigma) * distance))
        delta = report.delta_gap or 1.0
        return float(np.cbrt(4 * params.gamma_big * delta) * psi_edge(distance / delta))

    if not np.isfinite(params.gamma_big):
        raise PredictionRangeError(f"{report!r} has psi = 0, no cubic expansion")
    if kind is SingularityKind.CUSP:
        return float(np.cbrt(params.gamma_big / 4 * abs(omega)))

    rho_tilde = report.rho_tilde
    return float(
        params.rho0 + np.cbrt(params.gamma_big) * rho_tilde * psi_min(omega / rho_tilde**3)
    )


def cubic_residual(
    spec: ModelSpec,
    tau0: float,
    omega: float,
    opts: SolveOptions | None = None,
    isolation: float = spectral.ISOLATION_GAP,
) -> tuple[float, float]:
    """(|mu3 T^3 + mu2 T^2 + mu1 T + pi omega|, |T|) with T = <l, m(tau0+omega) - m(tau0)> / <l, b>.

    b and l are the eigenvectors of the stability operator at tau0 in the gauge with <b> ~ pi.
    """
    if omega == 0:
        return 0.0, 0.0
    opts = opts or SolveOptions()
    m0 = _boundary_solution(spec, tau0, opts)
    m1 = _boundary_solution(spec, tau0 + omega, opts)

    polar = spectral.polar_decompose(m0)
    fdata = spectral.saturated_F(polar, spec.superoperator)
    eigendata = spectral.stability_eigendata(m0, spec.superoperator, isolation)
    b_hat, l_hat = eigendata.natural_gauge(polar)
    theta = algebra.inner_product(l_hat, m1 - m0) / algebra.inner_product(l_hat, b_hat)

    sigma = spectral.sigma_of(polar)
    psi = spectral.psi_of(polar, fdata, isolation)
    f_u_sq = algebra.normalized_trace(polar.f_u @ polar.f_u).real
    rho = polar.rho
    mu3 = psi
    mu2 = sigma + 1j * rho * (3 * psi + sigma**2 / f_u_sq)
    mu1 = 2j * rho * sigma - 2 * rho**2 * (psi + sigma**2 / f_u_sq)
    cubic = mu3 * theta**3 + mu2 * theta**2 + mu1 * theta + KAPPA * omega
    return float(abs(cubic)), float(abs(theta))
