from dataclasses import replace
import numpy as np
import pytest
from dysonlab import identities
from dysonlab.exceptions import InvalidIdentityCode
from dysonlab.identities import ALL_IDENTITIES, IDENTITIES_BY_CODE, Evaluation, choose_identities
from dysonlab.model import build_flat, build_two_component
from dysonlab.solver import SolveOptions


def test_identity_codes_should_be_unique():
    codes = [identity.code for identity in ALL_IDENTITIES]
    assert len(codes) == len(set(codes))
    assert set(IDENTITIES_BY_CODE) == set(codes)


def test_identity_codes_should_have_a_letter_and_three_digits():
    for identity in ALL_IDENTITIES:
        assert identity.code[0].isalpha() and identity.code[1:].isdigit()
        assert len(identity.code) == 4
        assert identity.tolerance > 0


def test_choose_identities_should_return_everything_by_default():
    assert choose_identities(ALL_IDENTITIES) == ALL_IDENTITIES


def test_choose_identities_should_select_and_ignore():
    chosen = choose_identities(ALL_IDENTITIES, select=("P100", "S100"))
    assert [identity.code for identity in chosen] == ["P100", "S100"]

    chosen = choose_identities(ALL_IDENTITIES, ignore=("B101",))
    assert "B101" not in [identity.code for identity in chosen]
    assert len(chosen) == len(ALL_IDENTITIES) - 1


def test_choose_identities_should_reject_unknown_codes():
    with pytest.raises(InvalidIdentityCode) as exc_info:
        choose_identities(ALL_IDENTITIES, select=("X999",))
    assert "X999 is not a defined identity code" in str(exc_info.value)
    with pytest.raises(InvalidIdentityCode) as exc_info:
        choose_identities(ALL_IDENTITIES, ignore=("X999", "Y999"))
    assert "are not valid identity codes" in str(exc_info.value)


def test_choose_identities_should_need_tuples():
    with pytest.raises(TypeError):
        choose_identities(ALL_IDENTITIES, select="P100")


def test_admissible_points_should_lie_above_the_support_window():
    spec = build_flat()
    points = identities.admissible_points(spec, count=50, seed=4)
    assert len(points) == 50
    assert all(-2.0 <= z.real <= 2.0 for z in points)
    assert all(0.1 <= z.imag <= 1.0 for z in points)
    assert points == identities.admissible_points(spec, count=50, seed=4)


def test_evaluation_should_cache_the_solution():
    point = Evaluation(build_flat(), 0.3 + 0.4j, SolveOptions())
    assert point.solution is point.solution
    assert point.m.shape == (1, 1, 1)


@pytest.mark.parametrize(
    "spec",
    [
        build_flat(),
        build_flat(n=3, bare=np.diag([-4.0, 0.0, 4.0])),
        build_two_component(0.1, 0.23, blocks=10),
    ],
)
def test_verify_should_find_no_violations_at_admissible_points(spec):
    points = identities.admissible_points(spec, count=5, seed=0)
    assert identities.verify(spec, points) == []


def test_verify_should_report_violations_against_a_wrong_solution():
    spec = build_flat()
    point = Evaluation(spec, 1j, SolveOptions())
    point.__dict__["solution"] = replace(point.solution, m=np.array([[[2j]]]))
    assert IDENTITIES_BY_CODE["S100"].defect(point) > 1.0
    assert not IDENTITIES_BY_CODE["S100"].holds_at(point)


def test_violation_should_serialize_its_point():
    identity = IDENTITIES_BY_CODE["S100"]
    violation = identities.Violation(identity.code, identity.title, 0.5 + 0.1j, 1.0, 1e-9)
    payload = violation.to_dict()
    assert payload["code"] == "S100"
    assert payload["defect"] == 1.0
