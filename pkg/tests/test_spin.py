import math

import numpy as np
import pytest
from scipy.linalg import expm

from echolab.errors import InvalidArgument
from echolab.spin import (
    Propagator,
    SpinState,
    build_operators,
    css,
    evolve,
    expectation,
    fidelity,
    plane_moments,
    rotation_matrix,
    spin_component,
    variance,
    y_state,
)

from tensor import collective, dicke_basis, product_state


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_operators_match_tensor_product_projection(n):
    ops = build_operators(n)
    basis = dicke_basis(n)
    for axis, mine in (("x", ops.sx), ("y", ops.sy), ("z", ops.sz)):
        ref = basis.conj().T @ collective(n, axis) @ basis
        assert np.allclose(mine, ref, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 10, 100])
def test_commutators_and_casimir(n):
    ops = build_operators(n)
    sx, sy, sz = ops.sx, ops.sy, ops.sz
    s = n / 2
    assert np.max(np.abs(sx @ sy - sy @ sx - 1j * sz)) <= 1e-10
    assert np.max(np.abs(sy @ sz - sz @ sy - 1j * sx)) <= 1e-10
    assert np.max(np.abs(sz @ sx - sx @ sz - 1j * sy)) <= 1e-10
    assert np.max(np.abs(ops.s_squared - s * (s + 1) * np.eye(n + 1))) <= 1e-10


def test_phase_convention():
    ops = build_operators(7)
    assert not np.iscomplexobj(ops.sx) or np.all(ops.sx.imag == 0)
    assert np.all(np.real(ops.sy) == 0)
    assert np.all(np.diag(ops.sx, 1) >= 0)
    assert np.allclose(np.diag(ops.sz), 3.5 - np.arange(8))


def test_operators_are_read_only():
    ops = build_operators(4)
    with pytest.raises(ValueError):
        ops.sx[0, 0] = 1.0


@pytest.mark.parametrize("bad", [0, -3, 2.5, True, 2001])
def test_bad_atom_numbers(bad):
    with pytest.raises(InvalidArgument):
        build_operators(bad)


def test_spin_half_example():
    ops = build_operators(1)
    assert np.allclose(ops.sz, np.diag([0.5, -0.5]))
    assert np.allclose(ops.sx, [[0, 0.5], [0.5, 0]])


@pytest.mark.parametrize("n", [1, 3, 6])
@pytest.mark.parametrize("axis", [(1, 0, 0), (0, 1, 0), (0.6, 0.0, 0.8), (0.48, 0.6, 0.64)])
def test_rotation_matches_expm(n, axis):
    ops = build_operators(n)
    angle = 0.731
    ref = expm(-1j * angle * ops.vector(axis))
    assert np.allclose(rotation_matrix(ops, axis, angle), ref, atol=1e-12)


def test_rotation_rejects_unnormalized_axis():
    ops = build_operators(3)
    with pytest.raises(InvalidArgument):
        rotation_matrix(ops, (1.0, 1.0, 0.0), 0.1)


@pytest.mark.parametrize("polar,azimuth", [(0.0, 0.0), (math.pi / 2, math.pi / 2), (1.1, -0.4), (2.9, 2.0)])
def test_css_mean_direction(polar, azimuth):
    ops = build_operators(12)
    state = css(ops, polar, azimuth)
    mean = [expectation(state, op) for op in (ops.sx, ops.sy, ops.sz)]
    expected = 6 * np.array([
        math.sin(polar) * math.cos(azimuth), math.sin(polar) * math.sin(azimuth), math.cos(polar)
    ])
    assert np.allclose(mean, expected, atol=1e-10)


@pytest.mark.parametrize("n", [2, 4])
def test_css_matches_product_state(n):
    ops = build_operators(n)
    polar, azimuth = 0.9, 1.3
    ref = dicke_basis(n).conj().T @ product_state(n, polar, azimuth)
    assert fidelity(css(ops, polar, azimuth), ref) == pytest.approx(1.0, abs=1e-12)


def test_y_state_poles():
    ops = build_operators(10)
    assert expectation(y_state(ops), ops.sy) == pytest.approx(5.0)
    assert expectation(y_state(ops, -1), ops.sy) == pytest.approx(-5.0)
    with pytest.raises(InvalidArgument):
        y_state(ops, 0)


def test_css_transverse_variance_is_quarter_n():
    ops = build_operators(30)
    psi = y_state(ops)
    for theta in np.linspace(0, math.pi, 7):
        assert variance(psi, spin_component(ops, theta)) == pytest.approx(7.5, abs=1e-9)
    _, cov = plane_moments(ops, psi)
    assert np.allclose(cov, 7.5 * np.eye(2), atol=1e-9)


def test_propagator_matches_expm(rng):
    ops = build_operators(8)
    h = ops.sx @ ops.sx + 0.3 * (ops.sy @ ops.sy).real + 0.2 * ops.sz
    prop = Propagator(h)
    psi = rng.normal(size=9) + 1j * rng.normal(size=9)
    psi /= np.linalg.norm(psi)
    assert np.allclose(prop.apply(psi, 0.41), expm(-1j * h * 0.41) @ psi, atol=1e-12)
    assert np.allclose(prop.unitary(0.41) @ prop.unitary(0.41).conj().T, np.eye(9), atol=1e-12)


def test_evolve_rejects_bad_input():
    ops = build_operators(3)
    with pytest.raises(InvalidArgument):
        evolve(y_state(ops), np.eye(5), 1.0)
    with pytest.raises(InvalidArgument):
        Propagator(np.array([[0, 1], [0, 0]]))


def test_state_validation():
    with pytest.raises(InvalidArgument):
        SpinState(2, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(InvalidArgument):
        SpinState(2, np.array([1.0, 0.0]))
    state = SpinState.from_vector([3.0, 4.0j])
    assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)


def test_expectation_rejects_non_hermitian():
    ops = build_operators(2)
    with pytest.raises(InvalidArgument):
        expectation(y_state(ops), 1j * ops.sy)


def test_sz_rotation_keeps_populations():
    ops = build_operators(9)
    psi = css(ops, 1.0, 0.3)
    out = rotation_matrix(ops, "z", 0.77) @ psi.amplitudes
    assert np.allclose(np.abs(out) ** 2, np.abs(psi.amplitudes) ** 2)
