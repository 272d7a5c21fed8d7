import numpy as np
import pytest
import scipy.stats
from dysonlab import density, montecarlo
from dysonlab.density import BandStructure
from dysonlab.exceptions import CoverageError, DimensionMismatch, InvalidModel, NonHermitianError
from dysonlab.model import build_flat, build_kronecker, build_two_component
from dysonlab.montecarlo import ESD, EnsembleSpec


@pytest.fixture(scope="module")
def wigner_ensemble():
    return EnsembleSpec.from_model(build_flat(), N=1000, seed=7)


@pytest.fixture(scope="module")
def wigner_spectrum(wigner_ensemble):
    return montecarlo.esd(montecarlo.sample(wigner_ensemble), seed=7, draw=0)


def test_sample_should_be_hermitian_and_reproducible():
    ens = EnsembleSpec.from_model(build_flat(), N=50, seed=3)
    first = montecarlo.sample(ens)
    assert first.shape == (50, 50)
    assert np.allclose(first, first.conj().T)
    assert np.array_equal(first, montecarlo.sample(ens))
    assert not np.array_equal(first, montecarlo.sample(ens, draw=1))


@pytest.mark.parametrize("law", ["complex_gaussian", "real_gaussian", "rademacher"])
def test_sample_should_have_the_requested_variance_profile(law):
    ens = EnsembleSpec.from_model(build_flat(), N=400, law=law, seed=1)
    H = montecarlo.sample(ens)
    off_diagonal = H[np.triu_indices(400, k=1)]
    assert np.mean(np.abs(off_diagonal) ** 2) * 400 == pytest.approx(1.0, rel=0.05)


def test_sample_should_place_kronecker_blocks():
    spec = build_kronecker(
        np.array([np.diag([1.0, -1.0])] * 2), [np.eye(2)], [], [np.ones((2, 2))], []
    )
    ens = EnsembleSpec.from_model(spec, N=2, seed=0)
    assert (ens.K, ens.N) == (2, 2)
    H = montecarlo.sample(ens)
    assert H.shape == (4, 4)
    assert np.allclose(H, H.conj().T)


def test_ensemble_spec_should_reject_unknown_laws():
    with pytest.raises(InvalidModel):
        EnsembleSpec.from_model(build_flat(), N=10, law="cauchy")
    with pytest.raises(InvalidModel):
        EnsembleSpec.from_model(build_flat(n=2), N=10)


def test_to_model_should_recover_the_coarse_self_energy():
    spec = build_two_component(0.1, 0.2, blocks=40)
    ens = EnsembleSpec.from_model(spec, N=80)
    coarse = ens.to_model(blocks=40)
    x = np.random.default_rng(0).uniform(0.5, 1.5, 40).reshape(40, 1, 1)
    assert np.allclose(coarse.self_energy.apply(x), spec.self_energy.apply(x))
    with pytest.raises(DimensionMismatch):
        ens.to_model(blocks=30)


def test_esd_should_return_sorted_eigenvalues():
    spectrum = montecarlo.esd(np.diag([3.0, 1.0, 2.0]), seed=1, draw=2)
    assert np.allclose(spectrum.eigenvalues, [1.0, 2.0, 3.0])
    assert (spectrum.n, spectrum.seed, spectrum.draw) == (3, 1, 2)


def test_esd_should_be_invariant_under_unitary_conjugation():
    D = np.diag([-1.0, 0.5, 2.0, 4.0])
    U = scipy.stats.unitary_group.rvs(4, random_state=0)
    conjugated = U @ D @ U.conj().T
    assert np.allclose(montecarlo.esd(conjugated).eigenvalues, np.sort(np.diag(D)))


def test_esd_should_refuse_non_hermitian_matrices():
    with pytest.raises(NonHermitianError):
        montecarlo.esd(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionMismatch):
        montecarlo.esd(np.zeros((2, 3)))


def test_compare_should_match_the_semicircle(wigner_spectrum):
    profile = density.scan(build_flat(), (-2.5, 2.5), 1001)
    comparison = montecarlo.compare(wigner_spectrum, profile)
    assert comparison.ks <= 0.05
    assert comparison.l1_hist <= 0.15
    assert comparison.to_dict()["n"] == 1000
    assert comparison.seed == 7


def test_compare_should_need_a_profile_covering_the_eigenvalues(wigner_spectrum):
    profile = density.scan(build_flat(), (-1.0, 1.0), 101)
    with pytest.raises(CoverageError):
        montecarlo.compare(wigner_spectrum, profile)


def test_run_draws_should_not_depend_on_the_number_of_workers():
    ens = EnsembleSpec.from_model(build_flat(), N=60, seed=11)
    serial = montecarlo.run_draws(ens, 3, jobs=1)
    parallel = montecarlo.run_draws(ens, 3, jobs=3)
    assert [spectrum.draw for spectrum in serial] == [0, 1, 2]
    for one, other in zip(serial, parallel):
        assert np.array_equal(one.eigenvalues, other.eigenvalues)


def test_gap_mass_should_count_eigenvalues_inside_gaps():
    spectrum = ESD(np.array([-1.0, 0.5, 1.5, 3.0]))
    structure = BandStructure([(-2.0, 0.0), (2.0, 4.0)], [(0.0, 2.0)], [], [])
    assert montecarlo.gap_mass(spectrum, structure) == 0.5


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.14, 0.2, 0.23])
def test_compare_should_converge_with_the_matrix_size(alpha):
    spec = build_two_component(0.1, alpha)
    profile = density.scan(spec, (-3.5, 3.5), 2801)
    medians = []
    for N in (500, 1000, 2000):
        distances = [
            montecarlo.compare(
                montecarlo.run_draws(EnsembleSpec.from_model(spec, N=N, seed=seed), 1)[0], profile
            ).ks
            for seed in range(5)
        ]
        medians.append(float(np.median(distances)))
    assert medians[0] > medians[1] > medians[2]
