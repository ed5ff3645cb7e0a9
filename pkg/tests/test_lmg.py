import math

import numpy as np
import pytest
from scipy.linalg import expm

from echolab.errors import InvalidArgument, SearchError
from echolab.lmg import (
    LmgParams,
    find_best_squeezing_time,
    gamma_grid,
    lmg_hamiltonian,
    max_qfi,
    min_plane_variance,
    optimize_t1,
    qfi_general,
    qfi_pure,
    squeezed_state,
)
from echolab.spin import SpinState, build_operators, css, fidelity, y_state

from tensor import collective, product_state


def test_params_validation():
    with pytest.raises(InvalidArgument):
        LmgParams(0.0, 0.1)
    with pytest.raises(InvalidArgument):
        LmgParams(1.0, 0.6)
    assert LmgParams(2.0, 0.3).reversed() == LmgParams(-2.0, 0.3)


def test_hamiltonian_special_cases():
    ops = build_operators(6)
    sx2, sy2 = ops.sx @ ops.sx, (ops.sy @ ops.sy).real
    assert np.allclose(lmg_hamiltonian(ops, LmgParams(1.3, 0.0)), 1.3 * sx2)
    assert np.allclose(lmg_hamiltonian(ops, LmgParams(1.3, 0.5)), 1.3 * (sx2 + sy2 / 2))
    one = build_operators(1)
    assert np.allclose(lmg_hamiltonian(one, LmgParams(2.0, 0.3)), 0.5 * 1.3 * np.eye(2))


@pytest.mark.parametrize("n", [3, 20, 100])
@pytest.mark.parametrize("gamma", [0.0, 0.17, 0.5])
def test_hamiltonian_commutes_with_casimir(n, gamma):
    ops = build_operators(n)
    h = lmg_hamiltonian(ops, LmgParams(-0.7, gamma))
    assert np.max(np.abs(h @ ops.s_squared - ops.s_squared @ h)) <= 1e-9
    band = np.abs(np.subtract.outer(np.arange(n + 1), np.arange(n + 1)))
    assert np.all(h[band > 2] == 0)
    assert not np.iscomplexobj(h)


@pytest.mark.parametrize("gamma", [0.1, 0.4])
def test_shifted_hamiltonian_gives_same_dynamics(gamma):
    ops = build_operators(30)
    h = lmg_hamiltonian(ops, LmgParams(1.0, gamma))
    alt = (1 - gamma) * ops.sx @ ops.sx - gamma * ops.sz @ ops.sz
    assert np.allclose(h - gamma * ops.s_squared, alt, atol=1e-10)
    psi = y_state(ops).amplitudes
    for t in (0.05, 0.3):
        assert fidelity(expm(-1j * h * t) @ psi, expm(-1j * alt * t) @ psi) >= 1 - 1e-9


def test_css_qfi():
    ops = build_operators(40)
    psi = y_state(ops)
    assert qfi_pure(psi, (0, 0, 1)) == pytest.approx(40, abs=1e-9)
    assert qfi_pure(psi, (1, 0, 0)) == pytest.approx(40, abs=1e-9)
    assert qfi_pure(psi, (0, 1, 0)) == pytest.approx(0, abs=1e-9)
    with pytest.raises(InvalidArgument):
        qfi_pure(psi, (0, 0, 2))


def _brute_force_max_qfi(n, chi_t):
    sx, sy, sz = (collective(n, a) for a in "xyz")
    psi = expm(-1j * chi_t * sx @ sx) @ product_state(n, math.pi / 2, math.pi / 2)
    comps = [sx @ psi, sy @ psi, sz @ psi]
    mean = np.array([np.vdot(psi, c).real for c in comps])
    second = np.array([[np.vdot(a, b).real for b in comps] for a in comps])
    return 4 * np.linalg.eigvalsh(second - np.outer(mean, mean))[-1]


@pytest.mark.parametrize("n", [2, 3, 4])
def test_oat_reaches_heisenberg_limit(n):
    ops = build_operators(n)
    psi = squeezed_state(ops, LmgParams(1.0, 0.0), math.pi / 2)
    brute = _brute_force_max_qfi(n, math.pi / 2)
    assert brute == pytest.approx(n * n, abs=1e-8)
    assert max_qfi(ops, psi, full_sphere=True)[0] == pytest.approx(brute, abs=1e-8)
    assert max_qfi(ops, psi)[0] == pytest.approx(brute, abs=1e-8)


def test_qfi_general_matches_pure(rng):
    ops = build_operators(12)
    for _ in range(50):
        vec = rng.normal(size=13) + 1j * rng.normal(size=13)
        state = SpinState.from_vector(vec)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        rho = np.outer(state.amplitudes, state.amplitudes.conj())
        got = qfi_general(rho, ops.vector(n))
        ref = qfi_pure(state, n)
        assert got == pytest.approx(ref, rel=1e-8)


def test_qfi_general_examples():
    ops = build_operators(6)
    assert qfi_general(np.eye(7) / 7, ops.sz) == pytest.approx(0.0, abs=1e-12)
    rho = np.diag([0.3, 0, 0.7, 0, 0, 0, 0]).astype(complex)
    assert qfi_general(rho, ops.sz) == pytest.approx(0.0, abs=1e-12)
    psi = css(ops, 0.4, 1.0).amplitudes
    assert qfi_general(np.outer(psi, psi.conj()), ops.sz) == pytest.approx(
        qfi_pure(css(ops, 0.4, 1.0), (0, 0, 1)), rel=1e-8)


def test_qfi_general_rejects_bad_density():
    ops = build_operators(2)
    with pytest.raises(InvalidArgument):
        qfi_general(np.diag([1.2, -0.2, 0.0]), ops.sz)
    with pytest.raises(InvalidArgument):
        qfi_general(np.eye(3), ops.sz)


def test_qfi_never_exceeds_heisenberg(rng):
    ops = build_operators(16)
    for _ in range(30):
        gamma = rng.uniform(0, 0.5)
        t = rng.uniform(0, 3)
        psi = squeezed_state(ops, LmgParams(1.0, gamma), t)
        assert max_qfi(ops, psi, full_sphere=True)[0] <= 256 + 1e-6


def test_best_squeezing_time_small_n_dense_scan():
    ops = build_operators(2)
    params = LmgParams(1.0, 0.0)
    ts = np.arange(0.0, math.pi, 1e-5)
    from echolab.lmg import lmg_propagator

    prop = lmg_propagator(ops, params)
    c0 = prop.to_eigenbasis(y_state(ops).amplitudes)
    vals = [min_plane_variance(ops, prop.from_eigenbasis(c0, t)) for t in ts[::10]]
    coarse = ts[::10][int(np.argmin(vals))]
    fine = ts[(ts > coarse - 2e-4) & (ts < coarse + 2e-4)]
    best = fine[int(np.argmin([min_plane_variance(ops, prop.from_eigenbasis(c0, t)) for t in fine]))]
    assert find_best_squeezing_time(ops, params) == pytest.approx(best, abs=1e-5)


def test_best_squeezing_time_continuous_in_gamma(ops100):
    a = find_best_squeezing_time(ops100, LmgParams(1.0, 0.0))
    b = find_best_squeezing_time(ops100, LmgParams(1.0, 1e-6))
    assert abs(a - b) < 0.01 * a


def test_tat_squeezes_fastest(ops100):
    oat = find_best_squeezing_time(ops100, LmgParams(1.0, 0.0))
    tat = find_best_squeezing_time(ops100, LmgParams(1.0, 0.5))
    assert tat < oat


def test_best_squeezing_time_scales_with_chi():
    ops = build_operators(40)
    a = find_best_squeezing_time(ops, LmgParams(1.0, 0.2))
    b = find_best_squeezing_time(ops, LmgParams(4.0, 0.2))
    assert b == pytest.approx(a / 4, rel=1e-6)


def test_search_failure_is_reported():
    ops = build_operators(40)
    with pytest.raises(SearchError):
        find_best_squeezing_time(ops, LmgParams(1.0, 0.2), scan=(1e-4, 1e-3, 20))


def test_optimize_t1_window_and_bound():
    ops = build_operators(30)
    res = optimize_t1(ops, LmgParams(1.0, 0.25))
    lo, hi = res.window
    assert lo <= res.t1 <= hi
    assert lo == pytest.approx(0.25 * res.t_bs) and hi == pytest.approx(3 * res.t_bs)
    assert 30 <= res.qfi_max <= 900
    with pytest.raises(InvalidArgument):
        optimize_t1(ops, LmgParams(1.0, 0.25), window_factor=(2.0, 1.0))


def test_gamma_grid():
    g = gamma_grid()
    assert len(g) == 26 and g[0] == 0 and g[-1] == 0.5
