"""Band masses from the sign pattern of m on the real axis outside the support."""

from dataclasses import dataclass, replace
import logging
import numpy as np
from dysonlab import algebra, density, solver
from dysonlab.density import BandStructure, DensityProfile
from dysonlab.exceptions import IndeterminateIndex, InsideSupport, InsufficientData
from dysonlab.model import ModelSpec
from dysonlab.solver import SolveOptions

logger = logging.getLogger(__name__)

INDEX_TOL = 1e-8
# gap midpoints closer than this to a band are never used as cuts
EDGE_CLEARANCE = 0.02


@dataclass(frozen=True, eq=False)
class BandMassReport:
    tau: float
    m_real: np.ndarray
    mass_left_formula: float
    mass_left_integral: float | None = None
    residual: float | None = None

    def __repr__(self) -> str:
        return f"BandMassReport<tau={self.tau:.6g}, mass={self.mass_left_formula:.6g}>"

    @property
    def defect(self) -> float | None:
        if self.mass_left_integral is None:
            return None
        return abs(self.mass_left_formula - self.mass_left_integral)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "mass_left_formula": self.mass_left_formula,
            "mass_left_integral": self.mass_left_integral,
            "defect": self.defect,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class BandMass:
    band: tuple[float, float]
    mass: float
    n_mass: float
    defect: float
    # number of scanned bands counted together across narrow gaps
    merged: int = 1

    def to_dict(self) -> dict:
        return {
            "interval": list(self.band),
            "mass": self.mass,
            "n_mass": self.n_mass,
            "defect": self.defect,
            "merged": self.merged,
        }


def band_mass_left(
    spec: ModelSpec,
    tau: float,
    opts: SolveOptions | None = None,
    profile: DensityProfile | None = None,
    check_support: bool = True,
) -> BandMassReport:
    """Mass of (-inf, tau) as <1_(-inf, 0)(m(tau))> for tau outside the support."""
    opts = opts or SolveOptions()
    if check_support:
        decision = density.classify_point(spec, tau, opts)
        if decision.inside is not False:
            raise InsideSupport(
                f"tau={tau:.8g} is not confirmed outside the support "
                f"(ratio {decision.ratio:.3f})"
            )
    limit = solver.boundary_value(spec, tau, opts).boundary
    skew = algebra.opnorm(limit - algebra.adjoint(limit))
    if skew > 1e-6 * max(1.0, algebra.opnorm(limit)):
        logger.warning(f"Real-axis limit at tau={tau:.6g} has a skew part {skew:.2e}")
    m_real = algebra.real_part(limit)

    eigenvalues = np.linalg.eigvalsh(m_real)
    closest = float(np.abs(eigenvalues).min())
    if closest < INDEX_TOL:
        raise IndeterminateIndex(
            f"m({tau:.8g}) has an eigenvalue {closest:.2e} too close to zero to count"
        )
    formula = algebra.normalized_trace(algebra.negative_indicator(m_real)).real
    integral = density.mass_below(profile, tau) if profile is not None else None
    residual = solver.mde_residual(spec, tau, m_real)
    return BandMassReport(
        tau=float(tau),
        m_real=m_real,
        mass_left_formula=float(formula),
        mass_left_integral=integral,
        residual=residual,
    )


def clear_gaps(structure: BandStructure) -> list[tuple[float, float]]:
    """Gaps whose midpoint keeps EDGE_CLEARANCE from both neighbouring bands."""
    return [(left, right) for left, right in structure.gaps if (right - left) / 2 >= EDGE_CLEARANCE]


def band_masses(
    spec: ModelSpec,
    structure: BandStructure,
    opts: SolveOptions | None = None,
    profile: DensityProfile | None = None,
) -> list[BandMass]:
    """Masses of every band from the formula at the gap midpoints and beyond the support.

    Bands separated by a gap narrower than 2 EDGE_CLEARANCE get a single joint mass.
    """
    if structure.unresolved:
        raise InsufficientData(
            f"Band edges {structure.unresolved} are unresolved, widen the scanned window"
        )
    if not structure.bands:
        return []
    opts = opts or SolveOptions()
    lo, hi = spec.support_window()
    cuts = [min(lo, structure.bands[0][0]) - 1.0]
    groups = [[structure.bands[0]]]
    for (left, right), band in zip(structure.gaps, structure.bands[1:]):
        if (right - left) / 2 < EDGE_CLEARANCE:
            logger.warning(
                f"Gap ({left:.6g}, {right:.6g}) is narrower than {2 * EDGE_CLEARANCE}, "
                "the bands on both sides are counted together"
            )
            groups[-1].append(band)
            continue
        cuts.append((left + right) / 2)
        groups.append([band])
    cuts.append(max(hi, structure.bands[-1][1]) + 1.0)

    left_masses = [
        band_mass_left(spec, cut, opts, profile, check_support=False).mass_left_formula
        for cut in cuts
    ]
    n = spec.dim
    masses = []
    for group, below, above in zip(groups, left_masses, left_masses[1:]):
        mass = above - below
        n_mass = n * mass
        band = (group[0][0], group[-1][1])
        masses.append(BandMass(band, mass, n_mass, abs(n_mass - round(n_mass)), len(group)))
    return masses


def analytic_continuation_check(
    spec: ModelSpec, tau: float, h: float = 1e-2, opts: SolveOptions | None = None
) -> float:
    """|m(tau) - p(tau)| with p the quadratic through m(tau - h), m(tau + h), m(tau + 2h).

    Outside the support m is real analytic, so the defect scales like h^3.
    """
    opts = replace(opts or SolveOptions(), tol=1e-13)

    def limit(point: float) -> np.ndarray:
        return solver.boundary_value(spec, point, opts).boundary

    predicted = limit(tau - h) / 3 + limit(tau + h) - limit(tau + 2 * h) / 3
    return algebra.opnorm(limit(tau) - predicted)
