import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mimolab.signals import (
    G_4R_TO_2C,
    apply_block_rotation,
    block_rotation,
    complex2_to_real4,
    fir_filter,
    real4_to_complex2,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
angles = st.floats(-20, 20, allow_nan=False)


@pytest.mark.parametrize(
    "x, z",
    [
        ((1, 0, 0, 0), (1, 0)),
        ((0, 1, 0, 0), (1j, 0)),
        ((0, 0, 3, 4), (0, 3 + 4j)),
    ],
)
def test_real4_to_complex2_examples(x, z):
    np.testing.assert_array_equal(real4_to_complex2(x), np.array(z, dtype=complex))


def test_projection_matrix_matches_function():
    x = np.random.default_rng(0).standard_normal((50, 4))
    np.testing.assert_allclose(real4_to_complex2(x), x @ G_4R_TO_2C.T, atol=1e-15)


@pytest.mark.parametrize(
    "z, x",
    [
        ((1 + 2j, 0), (1, 2, 0, 0)),
        ((0, 0), (0, 0, 0, 0)),
        ((1j, 1), (0, 1, 1, 0)),
    ],
)
def test_complex2_to_real4_examples(z, x):
    np.testing.assert_array_equal(complex2_to_real4(z), np.array(x, dtype=float))


@given(arrays(float, 4, elements=finite))
def test_real_round_trip(x):
    np.testing.assert_allclose(complex2_to_real4(real4_to_complex2(x)), x, rtol=0, atol=1e-15)


@given(st.complex_numbers(max_magnitude=1e6, allow_nan=False), st.complex_numbers(max_magnitude=1e6, allow_nan=False))
def test_complex_round_trip_exact(zx, zy):
    z = np.array([zx, zy])
    assert np.array_equal(real4_to_complex2(complex2_to_real4(z)), z)


def test_rotation_identity():
    x = np.random.default_rng(1).standard_normal((20, 4))
    np.testing.assert_array_equal(apply_block_rotation(x, np.zeros(20)), x)


def test_rotation_quarter_turn():
    out = apply_block_rotation(np.array([[1.0, 0, 1, 0]]), np.array([np.pi / 2]))
    np.testing.assert_allclose(out, [[0, 1, 0, 1]], atol=1e-15)


def test_rotation_is_complex_phase_brute_force():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1000, 4))
    theta = rng.uniform(-np.pi, np.pi, 1000)
    lhs = real4_to_complex2(apply_block_rotation(x, theta))
    rhs = np.exp(1j * theta)[:, None] * real4_to_complex2(x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@given(arrays(float, 4, elements=st.floats(-1e3, 1e3)), angles)
def test_rotation_phase_equivalence_property(x, theta):
    lhs = real4_to_complex2(block_rotation(theta) @ x)
    rhs = np.exp(1j * theta) * real4_to_complex2(x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.abs(x).max())


@given(angles, angles)
def test_rotation_composition(t1, t2):
    np.testing.assert_allclose(block_rotation(t2) @ block_rotation(t1), block_rotation(t1 + t2), atol=1e-12)


@given(angles)
def test_rotation_blocks_orthogonal(theta):
    r = block_rotation(theta)
    np.testing.assert_allclose(r.T @ r, np.eye(4), atol=1e-12)
    assert np.linalg.det(r[:2, :2]) == pytest.approx(1.0, abs=1e-12)


def test_rotation_preserves_energy_per_sample():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((200, 4))
    y = apply_block_rotation(x, rng.uniform(-5, 5, 200))
    np.testing.assert_allclose(np.sum(y**2, axis=1), np.sum(x**2, axis=1), rtol=1e-13)


def test_rotation_length_mismatch():
    with pytest.raises(ValueError):
        apply_block_rotation(np.zeros((5, 4)), np.zeros(4))


@pytest.mark.parametrize("block_size", [33, 64, 100, 257, 4096])
def test_block_size_has_no_effect(block_size):
    rng = np.random.default_rng(4)
    x = rng.standard_normal(1500)
    h = rng.standard_normal(33)
    direct = np.convolve(x, h)[:1500]
    np.testing.assert_allclose(fir_filter(x, h, block_size), direct, atol=1e-12)
    np.testing.assert_allclose(fir_filter(x, h), direct, atol=1e-12)


def test_block_size_too_small():
    with pytest.raises(ValueError):
        fir_filter(np.zeros(10), np.ones(5), block_size=4)
