import numpy as np
import pytest
from dysonlab import algebra, solver, spectral
from dysonlab.exceptions import NotIsolated, SignDegeneracy, UndefinedFunctionError
from dysonlab.model import build_flat, build_two_component


@pytest.fixture
def three_bands():
    return build_flat(n=3, bare=np.diag([-1.0, 0.0, 2.0]))


def solve(spec, z):
    return solver.descend(spec, z.real, z.imag)[-1].m


def test_polar_decompose_should_reconstruct_m(three_bands):
    m = solve(three_bands, 0.3 + 0.2j)
    polar = spectral.polar_decompose(m)
    assert polar.reconstruction_defect() <= 1e-10
    assert polar.unitarity_defect() <= 1e-10
    assert polar.rho == pytest.approx(algebra.normalized_trace(algebra.imag_part(m)).real / np.pi)


def test_polar_decompose_should_be_stable_near_the_real_axis():
    m = np.array([[[-1.0 + 1e-7j]]])
    polar = spectral.polar_decompose(m)
    assert polar.reconstruction_defect() <= 1e-12
    assert polar.unitarity_defect() <= 1e-12
    assert polar.f_u[0, 0, 0].real == pytest.approx(np.pi, rel=1e-6)
    assert polar.sign[0, 0, 0].real == -1.0
    assert spectral.sigma_of(polar) == pytest.approx(-np.pi**3, rel=1e-6)


def test_polar_decompose_should_refuse_real_solutions():
    with pytest.raises(UndefinedFunctionError):
        spectral.polar_decompose(np.array([[0.5]]))


def test_sign_should_raise_when_re_u_is_singular():
    polar = spectral.polar_decompose(np.array([[1j]]))
    assert polar.s is None
    with pytest.raises(SignDegeneracy):
        polar.sign


def test_saturated_F_should_be_a_contraction_off_the_real_axis():
    wigner = build_flat()
    z = 0.7 + 0.3j
    m = solve(wigner, z)
    fdata = spectral.saturated_F(spectral.polar_decompose(m), wigner.superoperator)
    assert fdata.norm == pytest.approx(abs(m[0, 0, 0]) ** 2, abs=1e-10)
    assert fdata.norm < 1


def test_saturated_F_should_have_a_positive_perron_frobenius_vector(three_bands):
    m = solve(three_bands, -0.4 + 0.05j)
    fdata = spectral.saturated_F(spectral.polar_decompose(m), three_bands.superoperator)
    assert algebra.is_psd(fdata.f, tol=1e-8)
    assert algebra.norm2(fdata.f) == pytest.approx(1.0)
    assert 0 < fdata.norm < 1
    assert 0 < fdata.gap <= 1


def test_saturated_F_should_saturate_on_the_support():
    wigner = build_flat()
    m = solver.descend(wigner, 0.5, 1e-10)[-1].m
    fdata = spectral.saturated_F(spectral.polar_decompose(m), wigner.superoperator)
    assert fdata.norm == pytest.approx(1.0, abs=1e-8)


def test_stability_eigendata_should_normalize_the_eigentriple():
    spec = build_flat(n=4)
    m = solve(spec, 1.9 + 0.01j)
    eigendata = spectral.stability_eigendata(m, spec.superoperator)
    assert algebra.norm2(eigendata.b) == pytest.approx(1.0)
    assert algebra.inner_product(eigendata.l, eigendata.b) == pytest.approx(1.0)
    assert eigendata.beta == pytest.approx(1 - m[0, 0, 0] ** 2, abs=1e-10)
    # the unstable direction of a flat self-energy is the identity
    assert np.allclose(eigendata.b / eigendata.b[0, 0, 0], np.eye(4), atol=1e-8)
    b = eigendata.b
    assert np.allclose(eigendata.B.apply(b), eigendata.beta * b, atol=1e-10)
    assert np.allclose(eigendata.P.apply(b), b)
    assert np.allclose(eigendata.Q.apply(b), 0, atol=1e-10)


def test_stability_eigendata_should_raise_when_not_isolated():
    spec = build_flat(n=4)
    with pytest.raises(NotIsolated) as exc_info:
        spectral.stability_eigendata(np.array([1j * np.eye(4)]), spec.superoperator)
    assert exc_info.value.gap == pytest.approx(0.0, abs=1e-10)


def test_natural_gauge_should_have_trace_near_pi():
    wigner = build_flat()
    m = solver.descend(wigner, 2.0, 1e-12)[-1].m
    polar = spectral.polar_decompose(m)
    eigendata = spectral.stability_eigendata(m, wigner.superoperator)
    b_hat, l_hat = eigendata.natural_gauge(polar)
    assert algebra.normalized_trace(b_hat).real == pytest.approx(np.pi, rel=1e-3)
    assert algebra.inner_product(l_hat, b_hat).real > 0


def test_psi_should_vanish_for_the_scalar_semicircle():
    wigner = build_flat()
    m = solver.descend(wigner, 2.0, 1e-12)[-1].m
    polar = spectral.polar_decompose(m)
    fdata = spectral.saturated_F(polar, wigner.superoperator)
    assert spectral.psi_of(polar, fdata) == pytest.approx(0.0, abs=1e-8)


def test_psi_should_be_positive_for_the_two_component_model():
    spec = build_two_component(0.1, 0.2)
    m = solver.descend(spec, 0.76, 1e-12)[-1].m
    polar = spectral.polar_decompose(m)
    fdata = spectral.saturated_F(polar, spec.superoperator)
    assert spectral.psi_of(polar, fdata) > 0


def test_b_factorization_should_hold(three_bands):
    m = solve(three_bands, 0.2 + 0.3j)
    polar = spectral.polar_decompose(m)
    fdata = spectral.saturated_F(polar, three_bands.superoperator)
    assert spectral.b_factorization_defect(polar, fdata, three_bands.superoperator) <= 1e-9


def test_verify_Bstar_positivity_should_pass_in_the_upper_half_plane(three_bands):
    m = solve(three_bands, 0.5 + 0.1j)
    certificate = spectral.verify_Bstar_positivity(m, three_bands.superoperator)
    assert certificate.passed
    assert certificate.samples == 20


def test_eigenvalue_expansion_should_match_beta_near_the_edge():
    wigner = build_flat()
    eta = 1e-9
    m = solver.descend(wigner, 1.99, eta)[-1].m
    polar = spectral.polar_decompose(m)
    fdata = spectral.saturated_F(polar, wigner.superoperator)
    eigendata = spectral.stability_eigendata(m, wigner.superoperator)
    b_hat, l_hat = eigendata.natural_gauge(polar)
    measured = eigendata.beta * algebra.inner_product(l_hat, b_hat)
    predicted = spectral.eigenvalue_expansion(polar, fdata, eta)
    assert abs(measured - predicted) <= 2 * np.pi**5 * polar.rho**3
