"""Kronecker random matrices and their empirical spectra."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
from typing import Literal
import numpy as np
import scipy.linalg
import scipy.stats
from dysonlab import algebra, density
from dysonlab.density import BandStructure, DensityProfile
from dysonlab.exceptions import (
    CoverageError,
    DimensionMismatch,
    EigensolverError,
    InvalidModel,
    NonHermitianError,
)
from dysonlab.model import Flat, Kronecker, ModelSpec, TwoComponent

logger = logging.getLogger(__name__)

EntryLaw = Literal["complex_gaussian", "real_gaussian", "rademacher"]
ENTRY_LAWS: tuple[str, ...] = ("complex_gaussian", "real_gaussian", "rademacher")
DEFAULT_BIN_WIDTH = 0.05


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """H = sum_i a_i (x) E_ii + sum alpha (x) X + sum (beta (x) Y + beta* (x) Y*).

    X is Hermitian with E|x_ij|^2 = s_ij / N, Y has independent entries with
    E|y_ij|^2 = t_ij / N.
    """

    alphas: np.ndarray
    betas: np.ndarray
    s: np.ndarray
    t: np.ndarray
    bare: np.ndarray
    law: EntryLaw = "complex_gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.law not in ENTRY_LAWS:
            raise InvalidModel(
                f"Unknown entry law '{self.law}'. Valid laws are: {', '.join(ENTRY_LAWS)}"
            )
        kernels = Kronecker(self.alphas, self.betas, self.s, self.t)
        for name in ("alphas", "betas", "s", "t"):
            object.__setattr__(self, name, getattr(kernels, name))
        bare = algebra.as_element(self.bare)
        if bare.shape != (kernels.blocks, kernels.size, kernels.size):
            raise DimensionMismatch(
                f"Bare blocks of shape {bare.shape} do not match N={kernels.blocks}, "
                f"K={kernels.size}"
            )
        if not algebra.is_hermitian(bare):
            raise InvalidModel("Bare blocks must be Hermitian")
        object.__setattr__(self, "bare", bare)

    def __repr__(self) -> str:
        return f"EnsembleSpec<N={self.N}, K={self.K}, law={self.law}, seed={self.seed}>"

    @property
    def N(self) -> int:
        return self.s.shape[-1]

    @property
    def K(self) -> int:
        return self.alphas.shape[-1]

    @classmethod
    def from_model(
        cls, spec: ModelSpec, N: int, law: EntryLaw = "complex_gaussian", seed: int = 0
    ) -> "EnsembleSpec":
        """Sample at N blocks from a model whose profiles are piecewise constant on its blocks."""
        self_energy = spec.self_energy
        if isinstance(self_energy, TwoComponent):
            self_energy = self_energy.kronecker
        elif isinstance(self_energy, Flat):
            if spec.size != 1 or spec.blocks != 1:
                raise InvalidModel("Only the scalar flat model has a Kronecker realization")
            self_energy = Kronecker(
                np.full((1, 1, 1), np.sqrt(self_energy.strength)),
                np.zeros((0, 1, 1)),
                np.ones((1, 1, 1)),
                np.zeros((0, 1, 1)),
            )
        elif not isinstance(self_energy, Kronecker):
            raise InvalidModel(f"{spec!r} has no Kronecker random matrix realization")

        coarse = self_energy.blocks
        if N % coarse:
            logger.debug(f"N={N} is not a multiple of {coarse} model blocks, profiles are rounded")
        index = np.arange(N) * coarse // N
        grid = np.ix_(index, index)
        return cls(
            alphas=self_energy.alphas,
            betas=self_energy.betas,
            s=np.stack([kernel[grid] for kernel in self_energy.s]),
            t=np.stack([kernel[grid] for kernel in self_energy.t])
            if len(self_energy.t)
            else np.zeros((0, N, N)),
            bare=spec.bare[index],
            law=law,
            seed=seed,
        )

    def to_model(self, blocks: int | None = None) -> ModelSpec:
        """The Kronecker model with block-averaged profiles on `blocks` coarse blocks."""
        blocks = blocks or self.N
        if self.N % blocks:
            raise DimensionMismatch(f"N={self.N} is not a multiple of {blocks} blocks")
        width = self.N // blocks

        def coarse(kernels: np.ndarray) -> np.ndarray:
            if not len(kernels):
                return np.zeros((0, blocks, blocks))
            return kernels.reshape(len(kernels), blocks, width, blocks, width).mean(axis=(2, 4))

        bare = self.bare.reshape(blocks, width, self.K, self.K).mean(axis=1)
        return ModelSpec(
            bare,
            Kronecker(self.alphas, self.betas, coarse(self.s), coarse(self.t)),
            name=f"kronecker-N{self.N}",
        )


@dataclass(frozen=True, eq=False)
class ESD:
    eigenvalues: np.ndarray
    seed: int | None = None
    draw: int | None = None

    def __repr__(self) -> str:
        return f"ESD<n={self.n}, seed={self.seed}, draw={self.draw}>"

    @property
    def n(self) -> int:
        return int(self.eigenvalues.size)


@dataclass(frozen=True)
class Comparison:
    ks: float
    l1_hist: float
    n: int
    seed: int | None
    bin_width: float

    def to_dict(self) -> dict:
        return {
            "ks": self.ks,
            "l1_hist": self.l1_hist,
            "n": self.n,
            "seed": self.seed,
            "bin_width": self.bin_width,
        }


def generator(seed: int, draw: int = 0) -> np.random.Generator:
    """Counter-based stream for one (seed, draw) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(draw,))))


def _entries(rng: np.random.Generator, law: str, shape: tuple[int, ...]) -> np.ndarray:
    """Unit variance entries of the given law."""
    if law == "complex_gaussian":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    if law == "real_gaussian":
        return rng.standard_normal(shape).astype(complex)
    return rng.choice(np.array([-1.0, 1.0]), size=shape).astype(complex)


def _wigner_type(rng: np.random.Generator, law: str, profile: np.ndarray) -> np.ndarray:
    N = profile.shape[0]
    raw = _entries(rng, law, (N, N))
    upper = np.triu(raw, k=1)
    # diagonal entries of a Hermitian matrix are real
    diagonal = np.diag(_entries(rng, "real_gaussian" if law == "complex_gaussian" else law, (N,)).real)
    x = upper + upper.conj().T + diagonal
    return x * np.sqrt(profile / N)


def sample(ens: EnsembleSpec, draw: int = 0) -> np.ndarray:
    """One Hermitian KN x KN draw; the same (seed, draw) always gives the same matrix."""
    rng = generator(ens.seed, draw)
    K, N = ens.K, ens.N
    A = np.zeros((K, N, K, N), dtype=complex)
    blocks = np.arange(N)
    A[:, blocks, :, blocks] = ens.bare
    H = A.reshape(K * N, K * N)
    for alpha, profile in zip(ens.alphas, ens.s):
        H = H + np.kron(alpha, _wigner_type(rng, ens.law, profile))
    for beta, profile in zip(ens.betas, ens.t):
        y = _entries(rng, ens.law, (N, N)) * np.sqrt(profile / N)
        H = H + np.kron(beta, y) + np.kron(beta.conj().T, y.conj().T)
    return (H + H.conj().T) / 2


def esd(H: np.ndarray, seed: int | None = None, draw: int | None = None) -> ESD:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > 1e-10 * scale:
        raise NonHermitianError("Empirical spectra need a Hermitian matrix")
    try:
        eigenvalues = scipy.linalg.eigvalsh(H)
    except scipy.linalg.LinAlgError as error:
        raise EigensolverError(f"Eigensolver failed: {error}") from error
    return ESD(np.sort(eigenvalues), seed, draw)


def run_draws(ens: EnsembleSpec, draws: int, jobs: int = 1) -> list[ESD]:
    def one(draw: int) -> ESD:
        logger.debug(f"Sampling draw {draw} of {ens!r}")
        return esd(sample(ens, draw), ens.seed, draw)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, range(draws)))


def profile_cdf(profile: DensityProfile) -> np.ndarray:
    """Trapezoid CDF of the profile, normalized to end at 1."""
    cdf = density.cumulative_mass(profile)
    if cdf[-1] <= 0:
        raise CoverageError("The density profile carries no mass")
    return cdf / cdf[-1]


def compare(
    spectrum: ESD, profile: DensityProfile, bin_width: float = DEFAULT_BIN_WIDTH
) -> Comparison:
    """Kolmogorov-Smirnov and L1 histogram distances between an ESD and a density profile."""
    taus = profile.taus
    eigenvalues = spectrum.eigenvalues
    if eigenvalues.min() < taus[0] or eigenvalues.max() > taus[-1]:
        raise CoverageError(
            f"Eigenvalues span [{eigenvalues.min():.4g}, {eigenvalues.max():.4g}], the profile "
            f"only covers [{taus[0]:.4g}, {taus[-1]:.4g}]"
        )
    cdf = profile_cdf(profile)
    ks = scipy.stats.kstest(eigenvalues, lambda x: np.interp(x, taus, cdf)).statistic

    count = max(1, int(np.ceil((taus[-1] - taus[0]) / bin_width)))
    edges = np.linspace(taus[0], taus[0] + count * bin_width, count + 1)
    histogram, _ = np.histogram(eigenvalues, bins=edges)
    empirical = histogram / eigenvalues.size
    expected = np.diff(np.interp(edges, taus, cdf, right=1.0))
    l1 = float(np.abs(empirical - expected).sum())
    return Comparison(float(ks), l1, spectrum.n, spectrum.seed, bin_width)


def gap_mass(spectrum: ESD, structure: BandStructure) -> float:
    """Fraction of eigenvalues that fall strictly inside the gaps of the density."""
    eigenvalues = spectrum.eigenvalues
    inside = np.zeros(eigenvalues.size, dtype=bool)
    for left, right in structure.gaps:
        inside |= (eigenvalues > left) & (eigenvalues < right)
    return float(inside.mean()) if eigenvalues.size else 0.0
