import numpy as np
import pytest
from dysonlab import bandmass, density
from dysonlab.exceptions import InsideSupport, InsufficientData
from dysonlab.model import build_flat


@pytest.fixture(scope="module")
def wigner():
    return build_flat()


@pytest.fixture(scope="module")
def three_bands():
    return build_flat(n=3, bare=np.diag([-4.0, 0.0, 4.0]))


@pytest.fixture(scope="module")
def three_band_profile(three_bands):
    return density.scan(three_bands, (-7.0, 7.0), 1401)


def test_band_mass_left_should_count_negative_eigenvalues(wigner):
    right = bandmass.band_mass_left(wigner, 3.0)
    assert right.mass_left_formula == 1.0
    assert right.m_real[0, 0, 0] == pytest.approx((np.sqrt(5) - 3) / 2, abs=1e-6)
    assert right.residual <= 1e-8
    assert bandmass.band_mass_left(wigner, -3.0).mass_left_formula == 0.0


def test_band_mass_left_should_refuse_points_inside_the_support(wigner):
    with pytest.raises(InsideSupport):
        bandmass.band_mass_left(wigner, 0.0)


def test_band_mass_left_should_agree_with_the_integrated_density(three_bands, three_band_profile):
    report = bandmass.band_mass_left(three_bands, 2.0, profile=three_band_profile)
    assert report.mass_left_formula == pytest.approx(2 / 3)
    assert report.defect <= 2e-3
    assert report.to_dict()["mass_left_integral"] == report.mass_left_integral


def test_band_masses_should_be_multiples_of_one_over_n(three_bands, three_band_profile):
    structure = density.band_structure(three_band_profile, three_bands)
    masses = bandmass.band_masses(three_bands, structure, profile=three_band_profile)
    assert len(masses) == 3
    for band_mass in masses:
        assert band_mass.mass == pytest.approx(1 / 3)
        assert band_mass.n_mass == pytest.approx(1.0)
        assert band_mass.defect <= 1e-10
    assert sum(band_mass.mass for band_mass in masses) == pytest.approx(1.0)
    assert masses[0].to_dict()["interval"] == list(structure.bands[0])


def test_band_masses_should_merge_bands_across_narrow_gaps(three_bands, three_band_profile):
    bands = density.band_structure(three_band_profile, three_bands).bands
    split = (bands[1][0] + bands[1][1]) / 2
    narrow = [bands[0], (bands[1][0], split - 0.01), (split + 0.01, bands[1][1]), bands[2]]
    gaps = [(narrow[k][1], narrow[k + 1][0]) for k in range(3)]
    structure = density.BandStructure(narrow, gaps, [], [])
    assert bandmass.clear_gaps(structure) == [gaps[0], gaps[2]]

    masses = bandmass.band_masses(three_bands, structure)
    assert [band_mass.merged for band_mass in masses] == [1, 2, 1]
    assert masses[1].band == bands[1]
    assert [band_mass.n_mass for band_mass in masses] == pytest.approx([1.0, 1.0, 1.0])
    assert masses[1].to_dict()["merged"] == 2


def test_band_masses_should_need_resolved_edges(wigner):
    profile = density.scan(wigner, (-1.0, 1.0), 101)
    structure = density.band_structure(profile, wigner)
    with pytest.raises(InsufficientData):
        bandmass.band_masses(wigner, structure)


def test_analytic_continuation_check_should_shrink_with_the_step(wigner):
    coarse = bandmass.analytic_continuation_check(wigner, 3.0, h=2e-2)
    fine = bandmass.analytic_continuation_check(wigner, 3.0, h=1e-2)
    assert fine <= 1e-5
    assert fine < coarse
