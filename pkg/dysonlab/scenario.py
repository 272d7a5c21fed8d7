from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
import logging
import os
from pathlib import Path
import platform
import time
import numpy as np
import scipy
import yaml
from dysonlab import __version__, bandmass, density, identities, montecarlo, shape, solver
from dysonlab.exceptions import DysonLabException, InvalidConfig, NumericalFailure
from dysonlab.model import ModelSpec, build_two_component, model_from_dict, parse_complex
from dysonlab.shape import ClassifyOptions, SingularityKind
from dysonlab.solver import SolveOptions
from dysonlab.utils import write_csv, write_json

logger = logging.getLogger("dysonlab")
logger.setLevel(logging.DEBUG)
logs_handler = logging.StreamHandler()
logger.addHandler(logs_handler)

COMMANDS = ("solve", "scan", "classify", "bandmass", "mc", "verify", "fig2")


def _from_block(cls, block: dict | None, name: str):
    """Instantiate a dataclass from a config block, rejecting unknown keys."""
    block = dict(block or {})
    valid = [item.name for item in fields(cls)]
    unknown = set(block) - set(valid)
    if unknown:
        raise InvalidConfig(
            f"Unknown key(s) {', '.join(sorted(unknown))} in the '{name}' block. "
            f"Valid keys are: {', '.join(valid)}"
        )
    for key, value in block.items():
        if isinstance(value, list):
            block[key] = tuple(value)
    try:
        return cls(**block)
    except (TypeError, ValueError) as error:
        raise InvalidConfig(f"Invalid '{name}' block: {error}") from error


@dataclass(frozen=True)
class GridConfig:
    window: tuple[float, float] | None = None
    points: int = 2001
    # overrides the solver's eta_scan
    eta: float | None = None


@dataclass(frozen=True)
class SolveConfig:
    z: complex | tuple[float, float] = (0.0, 1.0)

    @property
    def point(self) -> complex:
        return parse_complex(list(self.z) if isinstance(self.z, tuple) else self.z)


@dataclass(frozen=True)
class McConfig:
    N: int = 1000
    draws: int = 1
    seed: int = 0
    law: str = "complex_gaussian"
    bin_width: float = montecarlo.DEFAULT_BIN_WIDTH


@dataclass(frozen=True)
class VerifyConfig:
    select: tuple[str, ...] = ()
    ignore: tuple[str, ...] = ()
    points: int = 20
    seed: int = 0


@dataclass(frozen=True)
class Fig2Config:
    delta: float = 0.1
    alphas: tuple[float, ...] = (0.14, 0.2, 0.23)
    # profiles cover [0, upper]
    upper: float = 2.5
    points: int = 1251


@dataclass
class ScenarioConfig:
    model: ModelSpec | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    classify: dict = field(default_factory=dict)
    mc: McConfig = field(default_factory=McConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    solver: SolveOptions = field(default_factory=SolveOptions)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    fig2: Fig2Config = field(default_factory=Fig2Config)
    output: Path = Path("out")
    jobs: int | None = None

    @classmethod
    def from_file(cls, fp, base: Path | None = None):
        """Load a YAML (or JSON) scenario; model paths resolve relative to `base`."""
        config = yaml.safe_load(fp)

        if config is None:
            raise InvalidConfig("Config loaded from file is empty")
        if not isinstance(config, dict):
            raise InvalidConfig("A scenario must be a mapping of blocks")
        return cls.from_dict(config, base)

    @classmethod
    def from_dict(cls, config: dict, base: Path | None = None):
        config = dict(config)
        valid = [item.name for item in fields(cls)]
        unknown = set(config) - set(valid)
        if unknown:
            raise InvalidConfig(
                f"Unknown scenario key(s): {', '.join(sorted(unknown))}. "
                f"Valid keys are: {', '.join(valid)}"
            )

        model = config.pop("model", None)
        if isinstance(model, str):
            path = (base or Path.cwd()) / model
            try:
                with path.open("r") as file:
                    model = yaml.safe_load(file)
            except FileNotFoundError:
                raise InvalidConfig(f"Couldn't find the model file {path}")
        spec = model_from_dict(model) if model is not None else None

        classify = dict(config.pop("classify", None) or {})
        rho_star = classify.pop("rho_star", None)
        # validated here, rebuilt on use
        _from_block(ClassifyOptions, classify, "classify")
        if rho_star is not None:
            classify["rho_star"] = float(rho_star)

        jobs = config.pop("jobs", None)
        if jobs is not None and int(jobs) < 1:
            raise InvalidConfig(f"jobs must be at least 1, got {jobs}")

        return cls(
            model=spec,
            grid=_from_block(GridConfig, config.pop("grid", None), "grid"),
            classify=classify,
            mc=_from_block(McConfig, config.pop("mc", None), "mc"),
            solve=_from_block(SolveConfig, config.pop("solve", None), "solve"),
            solver=_from_block(SolveOptions, config.pop("solver", None), "solver"),
            verify=_from_block(VerifyConfig, config.pop("verify", None), "verify"),
            fig2=_from_block(Fig2Config, config.pop("fig2", None), "fig2"),
            output=Path(config.pop("output", "out")),
            jobs=None if jobs is None else int(jobs),
        )

    def override(
        self,
        seed: int | None = None,
        jobs: int | None = None,
        out: Path | None = None,
        select: tuple[str, ...] | None = None,
        ignore: tuple[str, ...] | None = None,
    ) -> None:
        """Replace parts of the config with command line values."""
        if seed is not None:
            self.mc = replace(self.mc, seed=int(seed))
            self.verify = replace(self.verify, seed=int(seed))
        self.jobs = int(jobs) if jobs else self.jobs
        self.output = Path(out) if out else self.output
        if select or ignore:
            self.verify = replace(
                self.verify,
                select=tuple(select) if select else self.verify.select,
                ignore=tuple(ignore) if ignore else self.verify.ignore,
            )

    @property
    def workers(self) -> int:
        return self.jobs or os.cpu_count() or 1

    @property
    def spec(self) -> ModelSpec:
        if self.model is None:
            raise InvalidConfig("This command needs a 'model' block")
        return self.model

    @property
    def options(self) -> SolveOptions:
        if self.grid.eta is None:
            return self.solver
        return replace(self.solver, eta_scan=float(self.grid.eta))

    @property
    def classify_options(self) -> ClassifyOptions:
        block = {key: value for key, value in self.classify.items() if key != "rho_star"}
        return _from_block(ClassifyOptions, block, "classify")

    def window(self) -> tuple[float, float]:
        if self.grid.window is not None:
            lo, hi = self.grid.window
            return float(lo), float(hi)
        lo, hi = self.spec.support_window()
        margin = 0.1 * (hi - lo)
        return lo - margin, hi + margin


def parse_config(path: Path) -> ScenarioConfig:
    try:
        with open(path, "r") as file:
            return ScenarioConfig.from_file(file, base=Path(path).parent)
    except FileNotFoundError:
        raise InvalidConfig(f"Couldn't find the config file {path}")
    except yaml.YAMLError as error:
        raise InvalidConfig(f"{path} is not valid YAML or JSON: {error}") from error


@dataclass
class RunResult:
    command: str
    artifacts: list[Path] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    violations: list[identities.Violation] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.errors:
            return NumericalFailure.code
        if self.violations:
            return 1
        return 0


@contextmanager
def _timed(result: RunResult, step: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        result.timings[step] = result.timings.get(step, 0.0) + time.perf_counter() - start


def _scan(config: ScenarioConfig, result: RunResult) -> density.DensityProfile:
    with _timed(result, "scan"):
        profile = density.scan(
            config.spec, config.window(), config.grid.points, config.options, config.workers
        )
    result.errors.extend(profile.errors)
    return profile


def _write(result: RunResult, path: Path, payload) -> None:
    write_json(path, payload)
    result.artifacts.append(path)


def run_solve(config: ScenarioConfig, result: RunResult) -> None:
    spec, z = config.spec, config.solve.point
    if z.imag == 0:
        solution = solver.boundary_value(spec, z.real, config.options)
    else:
        conjugate = z.imag < 0
        ladder = solver.descend(spec, z.real, abs(z.imag), config.options)
        solution = solver.reflect(ladder[-1]) if conjugate else ladder[-1]
    payload = {
        "z": solution.z,
        "m": solution.boundary,
        "rho": solution.boundary_rho,
        "residual": solution.residual,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "error_estimate": solution.error_estimate,
        "exponent": solution.exponent,
        "regular": solution.regular,
    }
    _write(result, config.output / "solution.json", payload)


def run_scan(config: ScenarioConfig, result: RunResult) -> None:
    profile = _scan(config, result)
    path = config.output / "profile.csv"
    density.write_profile_csv(profile, path)
    result.artifacts.append(path)
    with _timed(result, "bands"):
        structure = density.band_structure(profile, config.spec, config.options)
    path = config.output / "bands.json"
    density.write_bands_json(structure, path)
    result.artifacts.append(path)


def candidate_points(
    config: ScenarioConfig,
    profile: density.DensityProfile,
    structure: density.BandStructure,
    errors: list[dict] | None = None,
) -> list[float]:
    """Resolved band edges and refined small minima, in increasing order.

    A minimum that cannot be refined is left out and recorded in errors.
    """
    points = [
        edge
        for band in structure.bands
        for edge in band
        if edge not in structure.unresolved
    ]
    minima = density.small_minima(structure, profile, config.classify.get("rho_star"))
    taus = profile.taus
    for minimum in minima:
        lo = taus[max(minimum.index - 1, 0)]
        hi = taus[min(minimum.index + 1, taus.size - 1)]
        try:
            points.append(density.refine_minimum(config.spec, lo, hi, config.options))
        except NumericalFailure as error:
            logger.warning(f"Refining the minimum near tau={minimum.tau:.8g} failed: {error}")
            if errors is not None:
                errors.append({"tau": minimum.tau, "error": str(error)})
    return sorted(points)


def run_classify(config: ScenarioConfig, result: RunResult) -> list[shape.SingularityReport]:
    profile = _scan(config, result)
    structure = density.band_structure(profile, config.spec, config.options)
    options = config.classify_options
    reports = []
    with _timed(result, "classify"):
        for tau0 in candidate_points(config, profile, structure, result.errors):
            try:
                reports.append(shape.classify(config.spec, structure, tau0, config.options, options))
            except NumericalFailure as error:
                logger.warning(f"Classification at tau={tau0:.8g} failed: {error}")
                result.errors.append({"tau": tau0, "error": str(error)})
    cusps = sum(report.kind is SingularityKind.CUSP for report in reports)
    logger.debug(f"Classified {len(reports)} points, {cusps} cusp(s)")
    _write(result, config.output / "singularities.json", [report.to_dict() for report in reports])
    return reports


def run_bandmass(config: ScenarioConfig, result: RunResult) -> None:
    profile = _scan(config, result)
    structure = density.band_structure(profile, config.spec, config.options)
    with _timed(result, "bandmass"):
        masses = bandmass.band_masses(config.spec, structure, config.options, profile)
        reports = [
            bandmass.band_mass_left(config.spec, (left + right) / 2, config.options, profile)
            for left, right in bandmass.clear_gaps(structure)
        ]
    _write(
        result,
        config.output / "bandmass.json",
        {
            "bands": [mass.to_dict() for mass in masses],
            "gaps": [report.to_dict() for report in reports],
        },
    )


def run_mc(config: ScenarioConfig, result: RunResult) -> None:
    spec, mc = config.spec, config.mc
    ensemble = montecarlo.EnsembleSpec.from_model(spec, mc.N, mc.law, mc.seed)
    with _timed(result, "sample"):
        spectra = montecarlo.run_draws(ensemble, mc.draws, config.workers)
    lo = min(config.window()[0], min(spectrum.eigenvalues[0] for spectrum in spectra))
    hi = max(config.window()[1], max(spectrum.eigenvalues[-1] for spectrum in spectra))
    with _timed(result, "scan"):
        profile = density.scan(spec, (lo, hi), config.grid.points, config.options, config.workers)
    result.errors.extend(profile.errors)
    structure = density.band_structure(profile)

    comparisons = []
    for spectrum in spectra:
        path = config.output / f"esd_seed{mc.seed}_draw{spectrum.draw}.csv"
        write_csv(path, ("eigenvalue",), ((value,) for value in spectrum.eigenvalues))
        result.artifacts.append(path)
        comparison = montecarlo.compare(spectrum, profile, mc.bin_width)
        comparisons.append(
            {
                **comparison.to_dict(),
                "draw": spectrum.draw,
                "gap_mass": montecarlo.gap_mass(spectrum, structure),
            }
        )
    _write(result, config.output / "comparison.json", comparisons)


def run_verify(config: ScenarioConfig, result: RunResult) -> None:
    chosen = identities.choose_identities(
        identities.ALL_IDENTITIES,
        ignore=tuple(config.verify.ignore) or None,
        select=tuple(config.verify.select) or None,
    )
    zs = identities.admissible_points(config.spec, config.verify.points, config.verify.seed)
    with _timed(result, "verify"):
        result.violations = identities.verify(config.spec, zs, chosen, config.options)
    _write(
        result,
        config.output / "violations.json",
        {
            "checked": [identity.code for identity in chosen],
            "points": zs,
            "violations": [violation.to_dict() for violation in result.violations],
        },
    )


def emit_fig2_bundle(config: ScenarioConfig, result: RunResult) -> None:
    """Two-component profiles on the positive half-line, one CSV per alpha."""
    fig2 = config.fig2
    for alpha in fig2.alphas:
        spec = build_two_component(fig2.delta, alpha, name=f"two-component-{alpha}")
        with _timed(result, f"alpha={alpha}"):
            profile = density.scan(
                spec, (0.0, fig2.upper), fig2.points, config.options, config.workers
            )
        result.errors.extend(profile.errors)
        path = config.output / f"fig2_alpha{alpha}.csv"
        density.write_profile_csv(profile, path)
        result.artifacts.append(path)


PIPELINES = {
    "solve": run_solve,
    "scan": run_scan,
    "classify": run_classify,
    "bandmass": run_bandmass,
    "mc": run_mc,
    "verify": run_verify,
    "fig2": emit_fig2_bundle,
}


def versions() -> dict[str, str]:
    return {
        "dysonlab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run(command: str, config: ScenarioConfig) -> RunResult:
    """Run one pipeline and write its artifacts, errors.json and manifest.json."""
    try:
        pipeline = PIPELINES[command]
    except KeyError:
        raise InvalidConfig(f"Unknown command '{command}'. Valid commands are: {', '.join(COMMANDS)}")

    result = RunResult(command)
    config.output.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        pipeline(config, result)
    except DysonLabException as error:
        if error.code != NumericalFailure.code:
            raise
        result.errors.append({"error": str(error), "type": type(error).__name__})
    result.timings["total"] = time.perf_counter() - start

    if result.errors:
        logger.warning(f"{len(result.errors)} point(s) failed, see errors.json")
        _write(result, config.output / "errors.json", result.errors)
    write_json(
        config.output / "manifest.json",
        {
            "command": command,
            "seed": config.mc.seed,
            "jobs": config.workers,
            "versions": versions(),
            "timings": result.timings,
            "artifacts": [path.name for path in result.artifacts],
        },
    )
    return result
