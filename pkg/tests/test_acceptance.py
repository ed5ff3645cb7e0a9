"""Acceptance criteria at N = 100 (criteria 1-10)."""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from acceptance_log import record
from echolab.experiments import BlockMap, algebra_checks
from echolab.floquet import (
    PulseNoiseSpec,
    compile_sequence,
    effective_chi,
    equivalent_reversal_check,
    monte_carlo_gain,
    timing_ratio,
)
from echolab.interferometer import (
    FloquetReversal,
    optimize_t2,
    optimize_theta_p,
    optimize_theta_r,
    protocol_for,
)
from echolab.lmg import LmgParams, gamma_grid, max_qfi, optimal_t1, qfi_pure, squeezed_state
from echolab.meanfield import conserved_quantity, mean_field, mf_ode
from echolab.meanfield import quantum_displacement
from echolab.noise import noise_slope, relative_robustness, robustness_R, semi_analytic_slope
from echolab.spin import build_operators, css, y_state

from tensor import collective, product_state

N = 100
GRID = gamma_grid(0.0, 0.5, 0.02)


def _t1(gamma, n=N):
    return optimal_t1(n, 1.0, float(gamma)).t1


def _thetas(ops, gamma, n=N):
    params = LmgParams(1.0, float(gamma))
    t1 = _t1(gamma, n)
    return params, t1, optimize_theta_r(ops, params, t1), optimize_theta_p(ops, params, t1)


def test_criterion_01_algebra_suite():
    start = time.perf_counter()
    worst = 0.0
    failed = []
    for n in (1, 2, 10, 100):
        for name, value, tol in algebra_checks(n):
            if value > tol:
                failed.append(f"N={n} {name}")
        ops = build_operators(n)
        u = expm(-1j * 0.7 * (ops.sx @ ops.sx + 0.3 * ops.sy @ ops.sy))
        worst = max(worst, float(np.max(np.abs(u @ u.conj().T - np.eye(n + 1)))))
    elapsed = time.perf_counter() - start
    ok = not failed and worst <= 1e-10 and elapsed < 5
    record(1, ok, f"failed={failed or 'none'} unitarity={worst:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_qfi_landmarks():
    css_err = 0.0
    for n in (1, 2, 10, 100):
        ops = build_operators(n)
        css_err = max(css_err, abs(qfi_pure(y_state(ops), (0, 0, 1)) - n),
                      abs(qfi_pure(css(ops, 0.3, 1.2), (math.sin(1.2), -math.cos(1.2), 0)) - n))
    ghz_err = 0.0
    for n in (2, 3, 4):
        ops = build_operators(n)
        mine = max_qfi(ops, squeezed_state(ops, LmgParams(1.0, 0.0), math.pi / 2), full_sphere=True)[0]
        sx, sy, sz = (collective(n, a) for a in "xyz")
        psi = expm(-1j * math.pi / 2 * sx @ sx) @ product_state(n, math.pi / 2, math.pi / 2)
        comps = [sx @ psi, sy @ psi, sz @ psi]
        mean = np.array([np.vdot(psi, c).real for c in comps])
        cov = np.array([[np.vdot(a, b).real for b in comps] for a in comps]) - np.outer(mean, mean)
        brute = 4 * np.linalg.eigvalsh(cov)[-1]
        ghz_err = max(ghz_err, abs(mine - brute), abs(brute - n * n))
    ok = css_err <= 1e-9 and ghz_err <= 1e-8
    record(2, ok, f"CSS |F-N|={css_err:.1e} GHZ |F-N^2|={ghz_err:.1e}")
    assert ok


def test_criterion_03_qfi_sweep():
    start = time.perf_counter()
    res = [optimal_t1(N, 1.0, float(g), (0.25, 3.0)) for g in GRID]
    elapsed = time.perf_counter() - start
    f = np.array([r.qfi_max for r in res])
    t1 = np.array([r.t1 for r in res])
    ok = (np.all(np.diff(f) >= 0) and int(np.argmax(f)) == len(GRID) - 1
          and np.all(np.diff(t1) <= 0) and int(np.argmin(t1)) == len(GRID) - 1 and elapsed < 300)
    record(3, ok, f"F(0)={f[0]:.1f} F(0.5)={f[-1]:.1f} min dF={np.diff(f).min():.3g} "
                  f"t1(0)={t1[0]:.4f} t1(0.5)={t1[-1]:.4f} max dt1={np.diff(t1).max():.2g} "
                  f"time={elapsed:.1f}s")
    assert ok


def test_criterion_04_encoding_angles(ops100):
    worst_mf = 0.0
    worst_sum = 0.0
    for g in GRID:
        _, _, tr, tp = _thetas(ops100, g)
        if g >= 0.2 - 1e-12:
            worst_mf = max(worst_mf, abs(tr - math.asin(math.sqrt(g))))
        if g >= 0.1 - 1e-12:
            worst_sum = max(worst_sum, abs(tr + tp - math.pi / 2))
    _, _, tr5, tp5 = _thetas(ops100, 0.5)
    quarter = max(abs(tr5 - math.pi / 4), abs(tp5 - math.pi / 4))
    ok = worst_mf <= 0.05 and quarter <= 0.02 and worst_sum <= 0.05
    record(4, ok, f"max|theta_r-asin sqrt g|={worst_mf:.3f} (g>=0.2) "
                  f"theta_r,theta_p(0.5)-pi/4={quarter:.1e} max|sum-pi/2|={worst_sum:.3f} (g>=0.1)")
    assert ok


def test_criterion_05_gain_map(ops100):
    worst = (0.0, None)
    best = {}
    for g in GRID:
        params, t1, tr, tp = _thetas(ops100, g)
        for name, theta in (("theta_r", tr), ("theta_p", tp)):
            res = optimize_t2(ops100, params, t1, theta)
            dev = abs(res.t2 / t1 - 1)
            if dev > worst[0]:
                worst = (dev, f"g={g:g} {name} t2/t1={res.t2 / t1:.3f}")
            best[(float(g), name)] = res.gain_db
    tat_wins = all(best[(0.5, k)] > best[(0.0, k)] for k in ("theta_r", "theta_p"))
    ok = worst[0] <= 0.10 and tat_wins
    record(5, ok, f"worst |t2/t1-1|={worst[0]:.3f} ({worst[1]}); "
                  f"dG(0.5)={best[(0.5, 'theta_r')]:.2f}/{best[(0.5, 'theta_p')]:.2f} dB "
                  f"vs dG(0)={best[(0.0, 'theta_r')]:.2f}/{best[(0.0, 'theta_p')]:.2f} dB (r/p)")
    assert ok


def test_criterion_06_semi_analytic_noise_slope():
    worst = (0.0, None)
    for n in (20, 50, 100):
        ops = build_operators(n)
        for g in (0.1, 0.3, 0.5):
            params, t1, tr, tp = _thetas(ops, g, n)
            for name, theta in (("theta_r", tr), ("theta_p", tp)):
                proto = protocol_for(n, params, t1, theta)
                fd = noise_slope(proto, ops, eval_at=0.1, step=0.01)
                b4 = semi_analytic_slope(proto, ops)
                rel = abs(fd - b4) / abs(b4)
                if rel > worst[0]:
                    worst = (rel, f"N={n} g={g} {name} fd={fd:.4g} semi={b4:.4g}")
    ok = worst[0] <= 0.05
    record(6, ok, f"worst relative deviation {worst[0]:.3f} ({worst[1]})")
    assert ok


def test_criterion_07_detection_noise_robustness(ops100):
    rel_range = [math.inf, -math.inf]
    order_bad = []
    for g in GRID:
        params, t1, tr, tp = _thetas(ops100, g)
        proto_r = protocol_for(N, params, t1, tr)
        proto_p = protocol_for(N, params, t1, tp)
        rel = relative_robustness(proto_p, ops100)
        rel_range = [min(rel_range[0], rel), max(rel_range[1], rel)]
        r_r, r_p = robustness_R(proto_r, ops100), robustness_R(proto_p, ops100)
        if g < 0.5 and r_r < r_p:
            order_bad.append(f"{g:g}")
        if g == 0.5:
            gap = abs(r_r - r_p)
    ok = rel_range[0] >= 2 and rel_range[1] <= 3 and not order_bad and gap <= 0.05
    record(7, ok, f"R_rel(theta_p) in [{rel_range[0]:.3f}, {rel_range[1]:.3f}]; "
                  f"R(theta_r)<R(theta_p) at g={order_bad or 'none'}; |gap| at 0.5={gap:.3g}")
    assert ok


def test_criterion_08_floquet_correctness():
    closed = 0.0
    for g in GRID:
        closed = max(closed, abs(timing_ratio(g) - (1 - 2 * g) / ((1 - g) * (1 + g))),
                     abs(effective_chi(g) - (-(g * g - g + 1) / (-g * g - 2 * g + 2))))
    t = _t1(0.1)
    fid = equivalent_reversal_check(0.1, 1.0, t, 500, n_atoms=N)
    infid = {f: 1 - equivalent_reversal_check(0.1, 1.0, t, f, n_atoms=N) for f in (500, 1000, 2000)}
    ratios = [infid[500] / infid[1000], infid[1000] / infid[2000]]
    ok = closed <= 1e-12 and fid >= 0.99 and min(ratios) >= 3
    record(8, ok, f"closed forms {closed:.1e}; fidelity@500chi={fid:.4f}; "
                  f"infidelity ratios per halving {ratios[0]:.2f}, {ratios[1]:.2f}")
    assert ok


def test_criterion_09_pulse_noise_monte_carlo(ops100):
    start = time.perf_counter()
    params = LmgParams(1.0, 0.1)
    t1 = _t1(0.1)
    theta = optimize_theta_r(ops100, params, t1)
    seq = compile_sequence(0.1, 1.0, t1, 500, n_atoms=N)
    proto = protocol_for(N, params, t1, theta, FloquetReversal(seq))
    channels = {
        "area 0.5%": PulseNoiseSpec(area_rel_sd=0.005, seed=7),
        "separation 5%": PulseNoiseSpec(separation_rel_sd=0.05, seed=7),
        "phase 0.1% of 2pi": PulseNoiseSpec(phase_sd=0.001 * 2 * math.pi, seed=7),
    }
    parts = []
    ok = True
    first = None
    for name, spec in channels.items():
        res = monte_carlo_gain(proto, ops100, spec, 100)
        first = first or (spec, res)
        dev = abs(res.median_final() - res.noiseless[-1]) / abs(res.noiseless[-1])
        ok &= dev <= 0.10
        parts.append(f"{name}: median {res.median_final():.3f} ({dev:.1%})")
    spec, res = first
    again = monte_carlo_gain(proto, ops100, spec, 100, map_fn=BlockMap(2))
    same = again.gains.tobytes() == res.gains.tobytes()
    elapsed = time.perf_counter() - start
    ok = ok and same and elapsed < 600
    record(9, ok, f"noiseless G={res.noiseless[-1]:.3f}; " + "; ".join(parts)
           + f"; repeat byte-identical={same}; time={elapsed:.0f}s")
    assert ok


def test_criterion_10_mean_field_oracle():
    S = N / 2
    phi = 1e-3
    resid = drift = quantum = 0.0
    for g, theta in ((0.1, 0.3), (0.25, math.pi / 6), (0.5, math.pi / 4), (0.4, 1.9)):
        traj = mean_field(g, 1.0, S, theta, phi)
        ts = np.linspace(0, 1.0 / S, 201)
        x, z = traj.at(ts)
        vx, vz = traj.velocity(ts)
        scale = np.hypot(x, z)
        resid = max(resid, float(np.max(np.abs(vx - 2 * g * S * z) / (2 * S * scale))),
                    float(np.max(np.abs(vz - 2 * (1 - g) * S * x) / (2 * S * scale))))
        ode = mf_ode(g, 1.0, S, theta, phi, ts)
        c = conserved_quantity(g, ode[:, 0], ode[:, 1])
        drift = max(drift, float(np.max(np.abs(c - c[0])) / (S * phi) ** 2))
        tq = np.linspace(0, 0.5 / S, 11)
        q = quantum_displacement(N, g, 1.0, theta, phi, tq)
        xm, zm = traj.at(tq)
        quantum = max(quantum, float(np.max(np.hypot(q[:, 0] - xm, q[:, 1] - zm) / np.hypot(xm, zm))))
    ok = resid <= 1e-9 and drift < 1e-9 and quantum <= 0.05
    record(10, ok, f"ODE residual {resid:.1e}; conserved drift {drift:.1e}; quantum vs MF {quantum:.2%}")
    assert ok
