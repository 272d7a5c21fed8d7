"""Self-consistent density of states on the real line: grids, support, bands and minima."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
import logging
import numpy as np
import scipy.integrate
import scipy.optimize
from dysonlab import algebra, solver
from dysonlab.exceptions import InsufficientData, InvalidWindow, NumericalFailure
from dysonlab.model import ModelSpec
from dysonlab.solver import SolveOptions, Solution
from dysonlab.utils import runs, write_csv, write_json

logger = logging.getLogger(__name__)

# Richardson-corrected densities below this are treated as outside the support
DENSITY_FLOOR = 1e-8
CLIP_TOL = 1e-12
# decision band for the normalized extrapolated ratio q, see classify_point
INSIDE_BELOW = 0.1
OUTSIDE_ABOVE = 0.9
EXTRA_HALVINGS = 6
MAX_BISECTIONS = 12
MINIMUM_DROP = 1e-10
# half-width of the eta_fine bracket around a minimum found at eta_floor, in eta_floor units
POLISH_WIDTH = 16


@dataclass(frozen=True, eq=False)
class DensityProfile:
    taus: np.ndarray
    rho: np.ndarray
    eta_used: np.ndarray
    support_mask: np.ndarray
    # interval known to contain the support, spec(a) + [-2|S|^1/2, 2|S|^1/2]
    support: tuple[float, float] | None = None
    errors: list[dict] = field(default_factory=list)

    def __repr__(self) -> str:
        lo, hi = (self.taus[0], self.taus[-1]) if self.taus.size else (np.nan, np.nan)
        return f"DensityProfile<{self.taus.size} points on [{lo:.4g}, {hi:.4g}]>"

    def __len__(self) -> int:
        return int(self.taus.size)

    @property
    def resolution(self) -> float:
        return float(np.max(np.diff(self.taus))) if self.taus.size > 1 else 0.0

    def interpolate(self, taus) -> np.ndarray:
        return np.interp(taus, self.taus, self.rho, left=0.0, right=0.0)


@dataclass(frozen=True)
class Minimum:
    tau: float
    rho: float
    index: int


@dataclass(frozen=True, eq=False)
class BandStructure:
    bands: list[tuple[float, float]]
    gaps: list[tuple[float, float]]
    minima: list[Minimum]
    # band edges that could not be located: they sit on the ends of the scanned window
    unresolved: list[float] = field(default_factory=list)

    def __repr__(self) -> str:
        return f"BandStructure<{len(self.bands)} bands, {len(self.minima)} minima>"

    def band_containing(self, tau: float) -> tuple[float, float] | None:
        for band in self.bands:
            if band[0] <= tau <= band[1]:
                return band
        return None

    def to_dict(self) -> dict:
        return {
            "bands": [list(band) for band in self.bands],
            "gaps": [list(gap) for gap in self.gaps],
            "minima": [{"tau": minimum.tau, "rho": minimum.rho} for minimum in self.minima],
            "unresolved": list(self.unresolved),
        }


@dataclass(frozen=True)
class SupportDecision:
    tau: float
    # None when the extrapolated ratio stays inside the decision band
    inside: bool | None
    limit: float
    ratio: float
    margin: float
    eta: float


def _rho_of(m: np.ndarray) -> float:
    return algebra.normalized_trace(algebra.imag_part(m)).real / np.pi


def density_at(spec: ModelSpec, tau: float, opts: SolveOptions | None = None) -> float:
    """<Im m(tau)> / pi from the extrapolated boundary value."""
    solution = solver.boundary_value(spec, tau, opts)
    rho = solution.boundary_rho
    if rho < -CLIP_TOL:
        logger.debug(f"Extrapolated density {rho:.3e} at tau={tau:.6g} clipped to zero")
    return max(rho, 0.0)


def _ratio_decision(tau: float, ladder: list[Solution]) -> SupportDecision:
    """Extrapolate eta / |Im m| to eta = 0 from the last two rungs.

    The ratio vanishes linearly in eta inside the support and tends to a positive
    constant outside, so q = limit / last ratio is near 0 inside and near 1 outside.
    """
    ratios = [rung.z.imag / algebra.opnorm(algebra.imag_part(rung.m)) for rung in ladder[-2:]]
    if len(ratios) < 2:
        return SupportDecision(tau, None, ratios[-1], np.nan, -np.inf, ladder[-1].z.imag)
    previous, last = ratios
    limit = 2 * last - previous
    q = limit / last
    if q < INSIDE_BELOW:
        inside, margin = True, INSIDE_BELOW - q
    elif q > OUTSIDE_ABOVE:
        inside, margin = False, q - OUTSIDE_ABOVE
    else:
        inside, margin = None, -min(q - INSIDE_BELOW, OUTSIDE_ABOVE - q)
    return SupportDecision(tau, inside, float(limit), float(q), float(margin), ladder[-1].z.imag)


def classify_point(
    spec: ModelSpec,
    tau: float,
    opts: SolveOptions | None = None,
    warm_start: np.ndarray | None = None,
) -> SupportDecision:
    """Decide whether tau lies in the support from the trend of eta / |Im m(tau + i eta)|."""
    opts = opts or SolveOptions()
    ladder = solver.descend(spec, tau, opts.eta_scan, opts, warm_start)
    decision = _ratio_decision(tau, ladder)
    if decision.inside is not None:
        return decision

    m, eta = ladder[-1].m, ladder[-1].z.imag
    for _ in range(EXTRA_HALVINGS):
        eta /= 2
        rung = solver.solve_at(spec, tau + 1j * eta, opts, warm_start=m)
        ladder.append(rung)
        m = rung.m
    decision = _ratio_decision(tau, ladder)
    if decision.inside is None:
        logger.debug(
            f"Support decision at tau={tau:.8g} is inconclusive (q={decision.ratio:.3f})"
        )
    return decision


def profile_at(
    spec: ModelSpec,
    taus,
    opts: SolveOptions | None = None,
    jobs: int = 1,
) -> DensityProfile:
    """Densities on an arbitrary increasing grid, Richardson corrected in eta.

    Uses rho = 2 rho(eta) - rho(2 eta) at eta = opts.eta_scan.
    """
    opts = opts or SolveOptions()
    taus = np.asarray(taus, dtype=float)
    if taus.size > 1 and np.any(np.diff(taus) <= 0):
        raise InvalidWindow("Density grids must be strictly increasing")
    eta = opts.eta_scan
    fine = solver.solve_grid(spec, taus, eta, opts, jobs)
    coarse = solver.solve_grid(spec, taus, 2 * eta, opts, jobs)

    rho = np.full(taus.size, np.nan)
    errors = []
    for k, (near, far) in enumerate(zip(fine, coarse)):
        if not (near.converged and far.converged):
            errors.append({"tau": float(taus[k]), "error": near.error or far.error})
            continue
        rho[k] = 2 * near.rho - far.rho
    undershoot = rho < -CLIP_TOL
    if np.any(undershoot):
        logger.debug(f"Clipping {int(undershoot.sum())} negative densities to zero")
    rho = np.where(rho < 0, 0.0, rho)
    mask = np.nan_to_num(rho, nan=0.0) > DENSITY_FLOOR
    return DensityProfile(
        taus=taus,
        rho=rho,
        eta_used=np.full(taus.size, eta),
        support_mask=mask,
        support=spec.support_window(),
        errors=errors,
    )


def scan(
    spec: ModelSpec,
    window: tuple[float, float],
    points: int,
    opts: SolveOptions | None = None,
    jobs: int = 1,
    stride: int | None = None,
) -> DensityProfile:
    """Density on an equidistant grid with a support mask checked by classify_point."""
    lo, hi = map(float, window)
    if not hi > lo:
        raise InvalidWindow(f"Empty scan window [{lo}, {hi}]")
    if points < 2:
        raise InvalidWindow(f"A scan needs at least 2 points, got {points}")
    opts = opts or SolveOptions()
    taus = np.linspace(lo, hi, points)
    profile = profile_at(spec, taus, opts, jobs)
    mask = profile.support_mask.copy()
    support_lo, support_hi = profile.support

    stride = stride or max(1, points // 64)
    checks = set(range(0, points, stride))
    for k in np.flatnonzero(np.diff(mask.astype(int))):
        checks.update((int(k), int(k) + 1))
    checks = [k for k in sorted(checks) if support_lo <= taus[k] <= support_hi]

    def decide(k: int) -> SupportDecision | None:
        try:
            return classify_point(spec, taus[k], opts)
        except NumericalFailure as error:
            logger.warning(f"Support check at tau={taus[k]:.6g} failed: {error}")
            return None

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        decisions = list(pool.map(decide, checks))
    for k, decision in zip(checks, decisions):
        if decision is None or decision.inside is None or decision.inside == mask[k]:
            continue
        logger.debug(
            f"Support check overrides the density mask at tau={taus[k]:.6g} "
            f"(inside={decision.inside}, rho={profile.rho[k]:.3e})"
        )
        mask[k] = decision.inside

    outside_window = (taus < support_lo) | (taus > support_hi)
    if np.any(mask & outside_window):
        logger.warning("Density mass detected outside the support window, masked out")
    mask &= ~outside_window
    logger.debug(f"Scanned {points} points on [{lo:g}, {hi:g}], {int(mask.sum())} inside")
    return replace(profile, support_mask=mask)


def _bisect_edge(
    spec: ModelSpec,
    inside: float,
    outside: float,
    opts: SolveOptions,
    tol: float,
) -> float:
    for _ in range(MAX_BISECTIONS):
        if abs(inside - outside) <= tol:
            break
        middle = (inside + outside) / 2
        decision = classify_point(spec, middle, opts)
        if decision.inside is None:
            break
        if decision.inside:
            inside = middle
        else:
            outside = middle
    return (inside + outside) / 2


def _parabola_vertex(taus: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    (x0, x1, x2), (y0, y1, y2) = taus, values
    denominator = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denominator
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denominator
    if a <= 0:
        return float(x1), float(y1)
    vertex = float(np.clip(-b / (2 * a), x0, x2))
    c = y0 - a * x0**2 - b * x0
    return vertex, float(max(a * vertex**2 + b * vertex + c, 0.0))


def band_structure(
    profile: DensityProfile,
    spec: ModelSpec | None = None,
    opts: SolveOptions | None = None,
    edge_tol: float | None = None,
) -> BandStructure:
    """Bands as maximal runs of inside points, edges refined by bisection when a model is given."""
    opts = opts or SolveOptions()
    taus, rho = profile.taus, profile.rho
    edge_tol = edge_tol or profile.resolution / 2**MAX_BISECTIONS
    bands: list[tuple[float, float]] = []
    unresolved: list[float] = []
    minima: list[Minimum] = []

    for start, stop in runs(profile.support_mask):
        if start == 0:
            left = float(taus[0])
            unresolved.append(left)
        elif spec is None:
            left = float(taus[start - 1] + taus[start]) / 2
        else:
            left = _bisect_edge(spec, taus[start], taus[start - 1], opts, edge_tol)
        if stop == taus.size - 1:
            right = float(taus[-1])
            unresolved.append(right)
        elif spec is None:
            right = float(taus[stop] + taus[stop + 1]) / 2
        else:
            right = _bisect_edge(spec, taus[stop], taus[stop + 1], opts, edge_tol)

        if bands and left <= bands[-1][1]:
            logger.debug(f"Merging touching bands at tau={left:.6g}")
            left = bands.pop()[0]
        bands.append((float(left), float(right)))

        for k in range(start + 1, stop):
            if rho[k - 1] - rho[k] > MINIMUM_DROP and rho[k + 1] - rho[k] > MINIMUM_DROP:
                tau, value = _parabola_vertex(taus[k - 1 : k + 2], rho[k - 1 : k + 2])
                minima.append(Minimum(tau, value, k))

    if unresolved:
        logger.warning(
            f"Band edges at {', '.join(f'{tau:.6g}' for tau in unresolved)} touch the "
            "scanned window and are unresolved"
        )
    gaps = [(bands[k][1], bands[k + 1][0]) for k in range(len(bands) - 1)]
    return BandStructure(bands, gaps, minima, unresolved)


def small_minima(
    structure: BandStructure, profile: DensityProfile, rho_star: float | None = None
) -> list[Minimum]:
    """Interior minima with density below rho_star, by default 0.15 max rho."""
    if rho_star is None:
        rho_star = 0.15 * float(np.nanmax(profile.rho))
    return [minimum for minimum in structure.minima if minimum.rho < rho_star]


def _slope_root(spec: ModelSpec, lo: float, hi: float, eta: float, opts: SolveOptions) -> float:
    def solve(tau: float) -> np.ndarray:
        return solver.descend(spec, tau, eta, opts)[-1].m

    def slope(tau: float) -> float:
        derivative = solver.z_derivative(spec, solve(tau))
        return algebra.normalized_trace(derivative).imag / np.pi

    def density(tau: float) -> float:
        return _rho_of(solve(tau))

    low_slope, high_slope = slope(lo), slope(hi)
    if low_slope < 0 < high_slope:
        return float(scipy.optimize.brentq(slope, lo, hi, xtol=1e-13))
    logger.debug(
        f"No slope sign change on [{lo:.6g}, {hi:.6g}] at eta={eta:g}, "
        "minimizing the density instead"
    )
    result = scipy.optimize.minimize_scalar(
        density, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    return float(result.x)


def refine_minimum(
    spec: ModelSpec,
    lo: float,
    hi: float,
    opts: SolveOptions | None = None,
) -> float:
    """Locate a density minimum in [lo, hi] as the zero of d rho / d tau.

    The slope is Im <(Id - C_m S)^-1 [m^2]> / pi. It is rooted at eta_floor, where every
    eta-ladder ends, and then polished at eta_fine within a few eta_floor of that root.
    Each evaluation descends its own ladder.
    """
    opts = opts or SolveOptions()
    coarse = max(opts.eta_floor, opts.eta_fine)
    tau = _slope_root(spec, lo, hi, coarse, opts)
    if opts.eta_fine < coarse:
        width = POLISH_WIDTH * coarse
        try:
            tau = _slope_root(
                spec, max(lo, tau - width), min(hi, tau + width), opts.eta_fine, opts
            )
        except NumericalFailure as error:
            logger.warning(
                f"Minimum at tau={tau:.12g} kept at eta={coarse:g}, "
                f"eta={opts.eta_fine:g} failed: {error}"
            )
    logger.debug(f"Refined minimum at tau={tau:.12g}")
    return tau


def _finite_rho(profile: DensityProfile) -> np.ndarray:
    failed = ~np.isfinite(profile.rho)
    if np.any(failed):
        taus = ", ".join(f"{tau:.6g}" for tau in profile.taus[failed][:5])
        raise InsufficientData(
            f"{int(failed.sum())} grid point(s) have no density (tau = {taus}), "
            "the mass integral is undefined"
        )
    return profile.rho


def total_mass(profile: DensityProfile) -> float:
    """Trapezoid integral of the density over the scanned grid."""
    if profile.support is not None and profile.taus.size:
        lo, hi = profile.support
        slack = 1e-9 * max(1.0, abs(lo), abs(hi))
        if profile.taus[0] > lo + slack or profile.taus[-1] < hi - slack:
            raise InvalidWindow(
                f"Grid [{profile.taus[0]:.6g}, {profile.taus[-1]:.6g}] does not cover the "
                f"support window [{lo:.6g}, {hi:.6g}]"
            )
    return float(scipy.integrate.trapezoid(_finite_rho(profile), profile.taus))


def cumulative_mass(profile: DensityProfile) -> np.ndarray:
    return scipy.integrate.cumulative_trapezoid(_finite_rho(profile), profile.taus, initial=0.0)


def mass_below(profile: DensityProfile, tau: float) -> float:
    """Integral of the density over (-inf, tau) within the grid."""
    return float(np.interp(tau, profile.taus, cumulative_mass(profile)))


def write_profile_csv(profile: DensityProfile, path: Path) -> None:
    rows = zip(
        profile.taus,
        profile.rho,
        profile.eta_used,
        profile.support_mask.astype(int),
    )
    write_csv(Path(path), ("tau", "rho", "eta_eff", "inside"), rows)


def write_bands_json(structure: BandStructure, path: Path) -> None:
    write_json(Path(path), structure.to_dict())
