import numpy as np
import pytest
from dysonlab import algebra
from dysonlab.algebra import SuperOperator
from dysonlab.exceptions import (
    DimensionMismatch,
    NonHermitianError,
    SignDegeneracy,
    UndefinedFunctionError,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_element(rng, blocks=3, size=2):
    shape = (blocks, size, size)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, blocks=3, size=2):
    x = random_element(rng, blocks, size)
    return algebra.real_part(x)


def test_as_element_should_promote_matrices_to_one_block():
    x = algebra.as_element(np.eye(3))
    assert x.shape == (1, 3, 3)
    assert x.dtype == complex


def test_as_element_should_reject_non_square_input():
    with pytest.raises(DimensionMismatch):
        algebra.as_element(np.ones(3))
    with pytest.raises(DimensionMismatch):
        algebra.as_element(np.ones((2, 3)))


def test_normalized_trace_should_be_one_on_the_identity():
    assert algebra.normalized_trace(algebra.identity(4, 3)) == pytest.approx(1.0)
    x = np.array([[[1.0, 0.0], [0.0, 3.0]], [[5.0, 0.0], [0.0, 7.0]]])
    assert algebra.normalized_trace(x) == pytest.approx(4.0)


def test_inner_product_should_be_antilinear_in_the_first_slot(rng):
    x, y = random_element(rng), random_element(rng)
    assert algebra.inner_product(2j * x, y) == pytest.approx(-2j * algebra.inner_product(x, y))
    assert algebra.inner_product(x, 2j * y) == pytest.approx(2j * algebra.inner_product(x, y))
    assert algebra.inner_product(x, x).imag == pytest.approx(0.0, abs=1e-12)


def test_real_and_imaginary_parts_should_recombine(rng):
    x = random_element(rng)
    assert np.allclose(algebra.real_part(x) + 1j * algebra.imag_part(x), x)
    assert algebra.is_hermitian(algebra.imag_part(x))


def test_sqrtm_should_square_back(rng):
    x = random_element(rng)
    psd = x @ algebra.adjoint(x)
    root = algebra.sqrtm(psd)
    assert np.allclose(root @ root, psd, atol=1e-10)
    assert np.allclose(algebra.inv_sqrtm(psd) @ root, algebra.identity_like(psd), atol=1e-8)


def test_sqrtm_should_refuse_negative_eigenvalues():
    with pytest.raises(UndefinedFunctionError):
        algebra.sqrtm(np.diag([1.0, -1.0]))


def test_hermitian_function_should_refuse_non_hermitian_input():
    with pytest.raises(NonHermitianError):
        algebra.hermitian_function(np.array([[0.0, 1.0], [0.0, 0.0]]), np.abs)


def test_signm_should_raise_on_a_vanishing_eigenvalue():
    assert np.allclose(algebra.signm(np.diag([2.0, -3.0]))[0], np.diag([1.0, -1.0]))
    with pytest.raises(SignDegeneracy):
        algebra.signm(np.diag([1.0, 0.0]))


def test_negative_indicator_should_project_on_negative_eigenvectors():
    x = np.array([[0.0, 2.0], [2.0, 0.0]])
    projection = algebra.negative_indicator(x)[0]
    assert np.allclose(projection @ projection, projection)
    assert np.trace(projection).real == pytest.approx(1.0)
    assert np.allclose(projection @ np.array([1.0, -1.0]), [1.0, -1.0])


def test_sandwich_should_act_as_left_and_right_multiplication(rng):
    x, y, h = random_element(rng), random_element(rng), random_element(rng)
    assert np.allclose(algebra.sandwich(x, y).apply(h), x @ h @ y)


def test_superoperator_adjoint_should_match_the_inner_product(rng):
    x, y, h, k = (random_element(rng) for _ in range(4))
    operator = algebra.sandwich(x, y)
    lhs = algebra.inner_product(k, operator.apply(h))
    rhs = algebra.inner_product(operator.adjoint().apply(k), h)
    assert lhs == pytest.approx(rhs)


def test_superoperator_solve_should_invert_apply(rng):
    x = random_element(rng)
    operator = SuperOperator.identity(3, 2) + 0.1 * algebra.sandwich(x, algebra.adjoint(x))
    y = random_element(rng)
    assert np.allclose(operator.apply(operator.solve(y)), y)
    assert np.allclose(operator.inverse().apply(operator.apply(y)), y)


def test_superoperator_should_reject_mismatched_algebras():
    with pytest.raises(DimensionMismatch):
        SuperOperator.identity(2, 2) @ SuperOperator.identity(1, 2)
    with pytest.raises(DimensionMismatch):
        SuperOperator.identity(2, 2).apply(np.eye(3))


def test_from_map_should_tabulate_a_linear_map(rng):
    x = random_element(rng)
    operator = SuperOperator.from_map(lambda h: x @ h, 3, 2)
    h = random_element(rng)
    assert np.allclose(operator.apply(h), x @ h)


def test_outer_should_be_the_rank_one_map(rng):
    b, l, x = random_element(rng), random_element(rng), random_element(rng)
    image = algebra.outer(b, l).apply(x)
    assert np.allclose(image, algebra.inner_product(l, x) * b)


def test_superop_eigendata_should_sort_by_modulus_and_normalize_left_vectors():
    operator = SuperOperator(np.diag([3.0, -0.5, 1.0, 2.0]).astype(complex), 1, 2)
    system = algebra.superop_eigendata(operator)
    assert np.allclose(np.abs(system.values), [0.5, 1.0, 2.0, 3.0])
    assert np.allclose(system.left.conj().T @ system.right, np.eye(4))
    b = system.right_element(0)
    assert np.allclose(operator.apply(b), system.values[0] * b)
