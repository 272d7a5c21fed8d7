import numpy as np
import pytest
from dysonlab import algebra
from dysonlab.exceptions import DimensionMismatch, InvalidConfig, InvalidModel
from dysonlab.model import (
    Flat,
    Kronecker,
    TwoComponent,
    build_flat,
    build_kronecker,
    build_two_component,
    certify_positivity,
    certify_symmetry,
    flatness_bounds,
    locate_two_component_cusp,
    model_from_dict,
    parse_complex,
)


@pytest.fixture
def two_component_data() -> dict:
    return {
        "name": "two-component",
        "bare": 0,
        "self_energy": {"kind": "two_component", "delta": 0.1, "alpha": 0.23, "blocks": 40},
    }


def test_parse_complex_should_read_numbers_and_pairs():
    assert parse_complex(2) == 2
    assert parse_complex([1.5, -2]) == complex(1.5, -2)
    with pytest.raises(InvalidModel):
        parse_complex([1, 2, 3])
    with pytest.raises(InvalidModel):
        parse_complex("one")


def test_model_from_dict_should_build_a_flat_model():
    spec = model_from_dict(
        {"dim": 3, "bare": {"diagonal": [-4, 0, 4]}, "self_energy": {"kind": "flat"}}
    )
    assert isinstance(spec.self_energy, Flat)
    assert spec.dim == 3
    assert spec.blocks == 1
    assert np.allclose(spec.bare[0], np.diag([-4, 0, 4]))


def test_model_from_dict_should_build_a_two_component_model(two_component_data):
    spec = model_from_dict(two_component_data)
    assert isinstance(spec.self_energy, TwoComponent)
    assert (spec.blocks, spec.size) == (40, 1)
    again = model_from_dict(spec.to_dict())
    assert again.self_energy == spec.self_energy


def test_model_from_dict_should_build_a_kronecker_model():
    spec = model_from_dict(
        {
            "self_energy": {
                "kind": "kronecker",
                "alphas": [[[1, 0], [0, -1]]],
                "s": [[[1, 1], [1, 1]]],
            }
        }
    )
    assert isinstance(spec.self_energy, Kronecker)
    assert (spec.blocks, spec.size) == (2, 2)


def test_model_from_dict_should_reject_unknown_kinds_and_keys(two_component_data):
    with pytest.raises(InvalidModel) as exc_info:
        model_from_dict({"self_energy": {"kind": "sparse"}})
    assert "Valid kinds are" in str(exc_info.value)

    with pytest.raises(InvalidModel) as exc_info:
        model_from_dict({**two_component_data, "colour": "red"})
    assert "colour" in str(exc_info.value)

    with pytest.raises(InvalidModel):
        model_from_dict({"self_energy": {"strength": 1.0}})


def test_model_from_dict_should_report_missing_self_energy_keys():
    with pytest.raises(InvalidModel) as exc_info:
        model_from_dict({"self_energy": {"kind": "two_component", "alpha": 0.2}})
    assert "delta" in str(exc_info.value)


def test_model_should_reject_mismatched_dimensions():
    with pytest.raises(DimensionMismatch):
        model_from_dict({"dim": 4, "bare": [[1, 0], [0, 1]], "self_energy": {"kind": "flat"}})
    with pytest.raises(DimensionMismatch):
        build_flat(n=3, bare=np.eye(2))


def test_model_should_reject_non_hermitian_bare_matrices():
    with pytest.raises(InvalidModel):
        build_flat(n=2, bare=np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_two_component_should_need_a_compatible_block_count():
    with pytest.raises(InvalidModel):
        TwoComponent(delta=0.1, alpha=0.2, blocks=15)
    with pytest.raises(InvalidModel):
        TwoComponent(delta=1.2, alpha=0.2)


def test_two_component_should_act_through_its_mixing_matrix():
    self_energy = TwoComponent(delta=0.1, alpha=0.2, blocks=10)
    x = np.concatenate([np.full(1, 2.0), np.full(9, 3.0)]).reshape(10, 1, 1)
    image = self_energy.apply(x).real.reshape(-1)
    expected = self_energy.R @ np.array([2.0, 3.0])
    assert image[0] == pytest.approx(expected[0])
    assert image[-1] == pytest.approx(expected[1])


def test_kronecker_should_reject_asymmetric_kernels():
    with pytest.raises(InvalidModel):
        Kronecker(np.ones((1, 1, 1)), np.zeros((0, 1, 1)), [[[1.0, 2.0], [0.0, 1.0]]], [])


def test_support_window_should_widen_the_bare_spectrum():
    lo, hi = build_flat().support_window()
    assert (lo, hi) == pytest.approx((-2.0, 2.0))
    lo, hi = build_flat(n=2, bare=np.diag([-1.0, 1.0])).support_window()
    assert (lo, hi) == pytest.approx((-3.0, 3.0))


@pytest.mark.parametrize(
    "spec",
    [
        build_flat(n=3),
        build_two_component(0.1, 0.23),
        build_kronecker(
            None,
            [np.diag([1.0, -1.0])],
            [np.array([[0.0, 1.0], [0.0, 0.0]])],
            [np.ones((3, 3))],
            [np.full((3, 3), 0.5)],
        ),
    ],
)
def test_self_energies_should_be_symmetric_and_positivity_preserving(spec):
    assert certify_symmetry(spec).passed
    assert certify_positivity(spec, samples=50).passed


def test_certify_positivity_should_need_a_sample():
    with pytest.raises(InvalidConfig) as exc_info:
        certify_positivity(build_flat(), samples=0)
    assert exc_info.value.code == 2


def test_flatness_bounds_should_be_exact_for_flat_and_two_component_models():
    flat = flatness_bounds(build_flat(n=2, strength=2.0))
    assert (flat.c1, flat.c2) == (2.0, 2.0)
    two_component = flatness_bounds(build_two_component(0.1, 0.2))
    assert two_component.method == "exact"
    assert two_component.c1 == pytest.approx(0.2)
    assert two_component.c2 == pytest.approx(1.0)


def test_locate_two_component_cusp_should_find_the_critical_alpha():
    cusp = locate_two_component_cusp(0.1)
    assert cusp.alpha == pytest.approx(0.1984, abs=1e-3)
    assert 0.7 < abs(cusp.tau) < 0.8
    x, y = cusp.m
    assert x > 0 > y
    with pytest.raises(InvalidModel):
        locate_two_component_cusp(0.6)


def test_alpha_cusp_should_resolve_to_the_critical_alpha():
    spec = model_from_dict(
        {"self_energy": {"kind": "two_component", "delta": 0.1, "alpha": "cusp"}}
    )
    assert spec.self_energy.alpha == pytest.approx(locate_two_component_cusp(0.1).alpha)


def test_model_should_keep_bare_hermitian_part():
    spec = build_flat(n=2, bare=np.array([[1.0, 2.0j], [-2.0j, 0.0]]))
    assert algebra.is_hermitian(spec.bare)
