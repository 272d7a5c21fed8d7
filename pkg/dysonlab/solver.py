"""Solving -m^-1 = z - a + S[m] with Im m > 0, and continuing m to the real axis."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import logging
import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from dysonlab import algebra
from dysonlab.algebra import SuperOperator
from dysonlab.exceptions import (
    ConvergenceError,
    InvalidConfig,
    InvalidWindow,
    NumericalFailure,
    PositivityLoss,
)
from dysonlab.model import ModelSpec

logger = logging.getLogger(__name__)

# Newton systems above this many unknowns go through gmres instead of a dense solve
DENSE_SOLVE_LIMIT = 2048
GRID_CHUNK = 64


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-11
    max_iter: int = 20_000
    damping: float = 0.5
    newton: bool = True
    newton_threshold: float = 1e-4
    # a stalled fixed point tries a guarded Newton step every this many iterations
    newton_every: int = 25
    min_damping: float = 1e-4
    eta_start: float = 0.5
    eta_floor: float = 1e-9
    eta_scan: float = 1e-6
    eta_fine: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidConfig(f"Solver tolerance must be positive, got {self.tol}")
        if not 0 < self.damping <= 1:
            raise InvalidConfig(f"Damping must lie in (0, 1], got {self.damping}")
        if not 0 < self.eta_floor <= self.eta_start:
            raise InvalidConfig("Need 0 < eta_floor <= eta_start")
        if self.max_iter < 1:
            raise InvalidConfig("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class Solution:
    z: complex
    m: np.ndarray
    residual: float
    iterations: int
    converged: bool
    # boundary continuation metadata (set by boundary_value)
    limit: np.ndarray | None = None
    error_estimate: float | None = None
    exponent: float | None = None
    regular: bool = True
    error: str | None = None

    def __repr__(self) -> str:
        return (
            f"Solution<z={self.z:.6g}, residual={self.residual:.2e}, "
            f"converged={self.converged}>"
        )

    @property
    def boundary(self) -> np.ndarray:
        """The eta -> 0 estimate when available, else m itself."""
        return self.m if self.limit is None else self.limit

    @property
    def rho(self) -> float:
        """<Im m> / pi at the solved point."""
        return algebra.normalized_trace(algebra.imag_part(self.m)).real / np.pi

    @property
    def boundary_rho(self) -> float:
        return algebra.normalized_trace(algebra.imag_part(self.boundary)).real / np.pi


def mde_residual(spec: ModelSpec, z: complex, m: np.ndarray) -> float:
    """|m (z - a + S[m]) + 1|"""
    one = spec.identity()
    return algebra.opnorm(m @ (z * one - spec.bare + spec.S(m)) + one)


def stability_operator(spec: ModelSpec, m: np.ndarray) -> SuperOperator:
    """B = Id - C_m S"""
    return SuperOperator.identity(spec.blocks, spec.size) - algebra.sandwich(m, m) @ spec.superoperator


def _has_positive_imaginary_part(m: np.ndarray) -> bool:
    return algebra.min_eigenvalue(algebra.imag_part(m)) > 0


def _newton_step(spec: ModelSpec, z: complex, m: np.ndarray) -> np.ndarray | None:
    """Exact Newton step for Phi(m) = 1 + m (z - a + S[m])."""
    one = spec.identity()
    inner = z * one - spec.bare + spec.S(m)
    phi = m @ inner + one
    jacobian = algebra.sandwich(one, inner) + algebra.sandwich(m, one) @ spec.superoperator
    rhs = -algebra.vec(phi)
    try:
        if jacobian.dim <= DENSE_SOLVE_LIMIT:
            step = scipy.linalg.solve(jacobian.matrix, rhs)
        else:
            operator = scipy.sparse.linalg.LinearOperator(
                jacobian.matrix.shape, matvec=lambda v: jacobian.matrix @ v, dtype=complex
            )
            step, info = scipy.sparse.linalg.gmres(operator, rhs, rtol=1e-12, atol=0.0)
            if info != 0:
                logger.debug(f"gmres stopped with info={info}")
                return None
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        return None
    return m + algebra.unvec(step, spec.blocks, spec.size)


def initial_guess(spec: ModelSpec, z: complex) -> np.ndarray:
    return 1j / (1 + abs(z)) * spec.identity()


def solve_at(
    spec: ModelSpec,
    z: complex,
    opts: SolveOptions | None = None,
    warm_start: np.ndarray | None = None,
) -> Solution:
    """Solve the Dyson equation at a spectral parameter in the upper half plane."""
    opts = opts or SolveOptions()
    z = complex(z)
    if not z.imag > 0:
        raise InvalidWindow(f"solve_at needs Im z > 0, got z = {z}")

    m = initial_guess(spec, z) if warm_start is None else np.array(warm_start, dtype=complex)
    if not _has_positive_imaginary_part(m):
        m = initial_guess(spec, z)
    gamma = opts.damping
    residual = mde_residual(spec, z, m)

    for iteration in range(opts.max_iter):
        if residual <= opts.tol:
            return Solution(z, m, residual, iteration, True)

        if opts.newton and (
            residual < opts.newton_threshold
            or (iteration and iteration % opts.newton_every == 0)
        ):
            candidate = _newton_step(spec, z, m)
            if candidate is not None and _has_positive_imaginary_part(candidate):
                candidate_residual = mde_residual(spec, z, candidate)
                if candidate_residual < residual:
                    m, residual = candidate, candidate_residual
                    continue

        target = -algebra.inverse(z * spec.identity() - spec.bare + spec.S(m))
        candidate = (1 - gamma) * m + gamma * target
        if not _has_positive_imaginary_part(candidate):
            gamma /= 2
            logger.debug(f"Positivity lost at z={z:.6g}, damping reduced to {gamma:g}")
            if gamma < opts.min_damping:
                raise PositivityLoss(
                    f"Im m lost positivity at z = {z} even with damping {gamma:g}"
                )
            continue
        m = candidate
        residual = mde_residual(spec, z, m)

    raise ConvergenceError(
        f"No convergence at z = {z} after {opts.max_iter} iterations "
        f"(residual {residual:.3e})",
        last=Solution(z, m, residual, opts.max_iter, False),
    )


def reflect(solution: Solution) -> Solution:
    """m(conj z) := m(z)*"""
    return replace(
        solution,
        z=solution.z.conjugate(),
        m=algebra.adjoint(solution.m),
        limit=None if solution.limit is None else algebra.adjoint(solution.limit),
    )


def descend(
    spec: ModelSpec,
    tau: float,
    eta_target: float,
    opts: SolveOptions | None = None,
    warm_start: np.ndarray | None = None,
) -> list[Solution]:
    """Solve along eta_k = eta_start 2^-k down to eta_target, warm starting each rung."""
    opts = opts or SolveOptions()
    eta = max(opts.eta_start, eta_target)
    ladder: list[Solution] = []
    m = warm_start
    while True:
        solution = solve_at(spec, tau + 1j * eta, opts, warm_start=m)
        ladder.append(solution)
        m = solution.m
        if eta <= eta_target * (1 + 1e-12):
            break
        eta = max(eta / 2, eta_target)
    logger.debug(f"Descended to eta={eta:.2e} at tau={tau:.6g} in {len(ladder)} rungs")
    return ladder


def extrapolate(ladder: list[Solution]) -> tuple[np.ndarray, float, float]:
    """Richardson estimate of the eta -> 0 limit from the last three rungs.

    Returns (limit, error estimate, fitted exponent p in [1/3, 1]).
    """
    if len(ladder) < 3:
        last = ladder[-1]
        return last.m, float("inf"), 1.0
    m0, m1, m2 = (rung.m for rung in ladder[-3:])
    first, second = algebra.opnorm(m1 - m0), algebra.opnorm(m2 - m1)
    noise = 1e3 * max(rung.residual for rung in ladder[-3:]) + 1e-14
    if second <= noise or first <= noise:
        exponent = 1.0
    else:
        exponent = float(np.clip(np.log2(first / second), 1 / 3, 1.0))
    correction = (m2 - m1) / (2**exponent - 1)
    return m2 + correction, algebra.opnorm(correction), exponent


def boundary_value(
    spec: ModelSpec,
    tau: float,
    opts: SolveOptions | None = None,
    warm_start: np.ndarray | None = None,
) -> Solution:
    """Continue m to the real point tau along a halving eta-ladder."""
    opts = opts or SolveOptions()
    ladder = descend(spec, tau, opts.eta_floor, opts, warm_start)
    limit, error, exponent = extrapolate(ladder)
    regular = exponent >= 0.9
    if not regular:
        logger.debug(
            f"Boundary value at tau={tau:.6g} is not Lipschitz in eta "
            f"(fitted exponent {exponent:.3f}, error estimate {error:.2e})"
        )
    last = ladder[-1]
    return replace(
        last,
        limit=limit,
        error_estimate=error,
        exponent=exponent,
        regular=regular,
    )


def _failed(z: complex, error: Exception) -> Solution:
    return Solution(z, np.full((1, 1, 1), np.nan + 0j), float("inf"), 0, False, error=str(error))


def solve_grid(
    spec: ModelSpec,
    taus,
    eta: float,
    opts: SolveOptions | None = None,
    jobs: int = 1,
) -> list[Solution]:
    """One solution per tau at height eta, warm started within fixed chunks.

    Each chunk is cold started from an eta-ladder and then chained through its
    neighbours, so the results do not depend on the number of workers.
    """
    opts = opts or SolveOptions()
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        return []
    if np.any(np.diff(taus) < 0):
        raise InvalidWindow("solve_grid needs a sorted grid")

    def run_chunk(indices: range) -> list[Solution]:
        solutions = []
        m = None
        for k in indices:
            z = taus[k] + 1j * eta
            try:
                if m is None:
                    solution = descend(spec, taus[k], eta, opts)[-1]
                else:
                    solution = solve_at(spec, z, opts, warm_start=m)
                m = solution.m
            except NumericalFailure as error:
                logger.warning(f"Grid point tau={taus[k]:.6g} failed: {error}")
                solution = _failed(z, error)
                m = None
            solutions.append(solution)
        return solutions

    chunks = [range(i, min(i + GRID_CHUNK, taus.size)) for i in range(0, taus.size, GRID_CHUNK)]
    logger.debug(f"Solving {taus.size} points at eta={eta:g} in {len(chunks)} chunks")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(run_chunk, chunks))
    return [solution for chunk in results for solution in chunk]


@dataclass(frozen=True)
class StabilityCheck:
    defect: float
    condition: float


def stability_residual_check(
    spec: ModelSpec,
    z: complex,
    h: float,
    opts: SolveOptions | None = None,
    extrapolate: bool = False,
) -> StabilityCheck:
    """|(Id - C_m S)[d_z m] - m^2| with d_z m from a central difference of step h.

    With extrapolate the differences at h and h/2 are combined to fourth order.
    """
    opts = replace(opts or SolveOptions(), tol=1e-13)
    z = complex(z)
    center = descend(spec, z.real, z.imag, opts)[-1]

    def central(step: float) -> np.ndarray:
        forward = solve_at(spec, z + step, opts, warm_start=center.m)
        backward = solve_at(spec, z - step, opts, warm_start=center.m)
        return (forward.m - backward.m) / (2 * step)

    derivative = central(h)
    if extrapolate:
        derivative = (4 * central(h / 2) - derivative) / 3
    B = stability_operator(spec, center.m)
    defect = algebra.opnorm(B.apply(derivative) - center.m @ center.m)
    condition = B.condition_number()
    if condition > 1e8:
        logger.warning(
            f"Stability operator is nearly singular at z={z:.6g} (condition {condition:.2e})"
        )
    return StabilityCheck(defect, condition)


def z_derivative(spec: ModelSpec, m: np.ndarray) -> np.ndarray:
    """d_z m = B^-1[m^2]"""
    return stability_operator(spec, m).solve(m @ m)


def perturbation_ratios(
    spec: ModelSpec,
    z: complex,
    direction: np.ndarray,
    ts,
    opts: SolveOptions | None = None,
) -> np.ndarray:
    """|m_t(z) - m(z)| / t for the bare matrices a + t * direction."""
    opts = opts or SolveOptions()
    reference = solve_at(spec, z, opts)
    direction = algebra.as_element(direction)
    ratios = []
    for t in ts:
        perturbed = spec.with_bare(spec.bare + t * direction)
        solution = solve_at(perturbed, z, opts, warm_start=reference.m)
        ratios.append(algebra.opnorm(solution.m - reference.m) / t)
    return np.array(ratios)
