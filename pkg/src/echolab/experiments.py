"""Experiment drivers behind the command line.

Each experiment turns a validated config into a :class:`Table` of rows, a
summary dict and optional SVG text.  Grid points are independent tasks; a
point that fails numerically becomes an error row and the run continues.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import floquet as fq
from .errors import EchoLabError
from .interferometer import (
    EchoProtocol,
    FloquetReversal,
    IdealReversal,
    gain_map,
    metrological_gain,
    optimize_t2,
    optimize_theta_p,
    optimize_theta_r,
    protocol_for,
    qfi_optimal_axis,
    run_echo,
)
from .lmg import LmgParams, lmg_hamiltonian, optimal_t1
from .meanfield import mf_theta_r
from .noise import DetectionNoise, relative_robustness, robustness_R, robustness_semi_analytic
from .output import Table, heatmap_svg, line_svg
from .spin import build_operators, fidelity, rotation_matrix, y_state

NUMERIC_ERRORS = (EchoLabError, ArithmeticError, ValueError, np.linalg.LinAlgError)


@dataclass
class ExperimentResult:
    table: Table
    summary: dict = field(default_factory=dict)
    svg: str = ""
    n_errors: int = 0
    acceptance_failed: bool = False


# -- scheduling --------------------------------------------------------------


def _run_block(args):
    fn, values, tasks = args
    return [fn(values, t) for t in tasks]


def run_tasks(fn, values: dict, tasks: list, workers: int = 1) -> list:
    """Evaluate ``fn(values, task)`` for every task, results in task order.

    Work is split into contiguous index blocks, one per worker, so the output
    never depends on the worker count or completion order.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(values, t) for t in tasks]
    blocks = [list(b) for b in np.array_split(np.arange(len(tasks)), min(workers, len(tasks)))]
    payload = [(fn, values, [tasks[i] for i in b]) for b in blocks if b]
    with ProcessPoolExecutor(max_workers=len(payload)) as pool:
        parts = list(pool.map(_run_block, payload))
    return [r for part in parts for r in part]


class BlockMap:
    """Order-preserving map with static block partitioning over processes."""

    def __init__(self, workers: int):
        self.workers = workers

    def __call__(self, fn, items):
        items = list(items)
        if self.workers <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        blocks = [list(b) for b in np.array_split(np.arange(len(items)), min(self.workers, len(items)))]
        with ProcessPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(_map_block, [(fn, [items[i] for i in b]) for b in blocks]))
        return [r for part in parts for r in part]


def _map_block(args):
    fn, items = args
    return [fn(x) for x in items]


# -- shared resolution -------------------------------------------------------


def _params(values, gamma) -> LmgParams:
    return LmgParams(values["experiment.chi"], float(gamma))


def _t1(values, gamma) -> float:
    t1 = values["grid.t1"]
    if t1 == "optimal":
        n, chi = values["experiment.n_atoms"], values["experiment.chi"]
        return optimal_t1(n, chi, float(gamma), tuple(values["grid.window"])).t1
    return float(t1)


def resolve_theta(policy, ops, params, t1) -> float:
    if isinstance(policy, float):
        return policy
    if policy == "theta_r":
        return optimize_theta_r(ops, params, t1)
    if policy == "theta_p":
        return optimize_theta_p(ops, params, t1)
    if policy == "theta_qfi":
        return qfi_optimal_axis(ops, params, t1)
    if policy == "theta_mf":
        return mf_theta_r(params.gamma)
    raise ValueError(f"unknown theta policy {policy!r}")


def _policy_name(policy) -> str:
    return policy if isinstance(policy, str) else f"explicit:{policy!r}"


def _error_row(prefix, n_values, exc):
    return list(prefix) + [math.nan] * n_values + [f"error: {type(exc).__name__}: {exc}"]


def _gamma_policy_tasks(values):
    return [(float(g), p) for g in values["grid.gamma"] for p in values["grid.theta"]]


def _count_errors(rows):
    return sum(1 for r in rows if str(r[-1]).startswith("error"))


# -- sweep-qfi ---------------------------------------------------------------

QFI_COLUMNS = ["gamma", "t1", "qfi_max", "t_bs", "window_lo", "window_hi", "status"]
QFI_UNITS = ["1", "1/chi", "1", "1/chi", "1/chi", "1/chi", "-"]


def _qfi_point(values, gamma):
    try:
        r = optimal_t1(values["experiment.n_atoms"], values["experiment.chi"], gamma,
                       tuple(values["grid.window"]))
        return [gamma, r.t1, r.qfi_max, r.t_bs, r.window[0], r.window[1], "ok"]
    except NUMERIC_ERRORS as exc:
        return _error_row([gamma], 5, exc)


def sweep_qfi(values, workers=1) -> ExperimentResult:
    rows = run_tasks(_qfi_point, values, [float(g) for g in values["grid.gamma"]], workers)
    ok = [r for r in rows if r[-1] == "ok"]
    g = np.array([r[0] for r in ok])
    f = np.array([r[2] for r in ok])
    t = np.array([r[1] for r in ok])
    summary = {
        "gamma_at_max_qfi": float(g[np.argmax(f)]) if len(ok) else None,
        "qfi_nondecreasing": bool(np.all(np.diff(f) >= 0)) if len(ok) else None,
        "t1_nonincreasing": bool(np.all(np.diff(t) <= 0)) if len(ok) else None,
        "gamma_at_min_t1": float(g[np.argmin(t)]) if len(ok) else None,
    }
    svg = line_svg("Maximum QFI versus anisotropy", "gamma", "F_max", {"F_max": (g, f)})
    return ExperimentResult(Table(QFI_COLUMNS, QFI_UNITS, rows), summary, svg, _count_errors(rows))


# -- sweep-theta -------------------------------------------------------------

THETA_COLUMNS = ["gamma", "t1", "theta_r", "theta_p", "theta_mf", "theta_qfi", "theta_p_plus_y",
                 "status"]
THETA_UNITS = ["1", "1/chi", "rad", "rad", "rad", "rad", "rad", "-"]


def _theta_point(values, gamma):
    try:
        ops = build_operators(values["experiment.n_atoms"])
        p = _params(values, gamma)
        t1 = _t1(values, gamma)
        return [gamma, t1, optimize_theta_r(ops, p, t1), optimize_theta_p(ops, p, t1),
                mf_theta_r(gamma), qfi_optimal_axis(ops, p, t1),
                optimize_theta_p(ops, p, t1, pole=1), "ok"]
    except NUMERIC_ERRORS as exc:
        return _error_row([gamma], 6, exc)


def sweep_theta(values, workers=1) -> ExperimentResult:
    rows = run_tasks(_theta_point, values, [float(g) for g in values["grid.gamma"]], workers)
    ok = [r for r in rows if r[-1] == "ok"]
    summary = {"theta_table": [
        {"gamma": r[0], "theta_r": r[2], "theta_p": r[3], "theta_mf": r[4]} for r in ok
    ]}
    g = [r[0] for r in ok]
    svg = line_svg("Encoding axes versus anisotropy", "gamma", "theta (rad)", {
        "theta_r": (g, [r[2] for r in ok]),
        "theta_p": (g, [r[3] for r in ok]),
        "arcsin sqrt(gamma)": (g, [r[4] for r in ok]),
    })
    return ExperimentResult(Table(THETA_COLUMNS, THETA_UNITS, rows), summary, svg, _count_errors(rows))


# -- gain-map ----------------------------------------------------------------

GAIN_COLUMNS = ["gamma", "theta_policy", "theta", "t1", "t2", "t2_over_t1", "gain_db", "status"]
GAIN_UNITS = ["1", "-", "rad", "1/chi", "1/chi", "1", "dB", "-"]


def _gain_point(values, task):
    gamma, policy = task
    name = _policy_name(policy)
    try:
        ops = build_operators(values["experiment.n_atoms"])
        p = _params(values, gamma)
        t1 = _t1(values, gamma)
        theta = resolve_theta(policy, ops, p, t1)
        t2s = np.linspace(0.0, values["grid.t2_span"] * t1, values["grid.t2_points"])
        gains = gain_map(ops, p, t1, theta, t2s)
        best = optimize_t2(ops, p, t1, theta, values["grid.t2_points"], values["grid.t2_span"])
        rows = [[gamma, name, theta, t1, t2, t2 / t1, g, "ok"] for t2, g in zip(t2s, gains)]
        rows.append([gamma, name, theta, t1, best.t2, best.t2 / t1, best.gain_db, "optimum"])
        return rows
    except NUMERIC_ERRORS as exc:
        return [_error_row([gamma, name], 5, exc)]


def gain_map_experiment(values, workers=1) -> ExperimentResult:
    blocks = run_tasks(_gain_point, values, _gamma_policy_tasks(values), workers)
    rows = [r for b in blocks for r in b]
    optima = [
        {"gamma": r[0], "theta_policy": r[1], "theta": r[2], "t1": r[3], "t2": r[4],
         "t2_over_t1": r[5], "gain_db": r[6]}
        for r in rows if r[-1] == "optimum"
    ]
    svg = ""
    grid_rows = [r for r in rows if r[-1] == "ok"]
    if grid_rows:
        first = grid_rows[0][1]
        sel = [r for r in grid_rows if r[1] == first]
        gammas = sorted({r[0] for r in sel})
        ratios = sorted({round(r[5], 12) for r in sel})
        z = np.full((len(ratios), len(gammas)), np.nan)
        for r in sel:
            z[ratios.index(round(r[5], 12)), gammas.index(r[0])] = r[6]
        svg = heatmap_svg(f"Metrological gain (dB), {first}", "gamma", "t2/t1", gammas, ratios, z)
    return ExperimentResult(Table(GAIN_COLUMNS, GAIN_UNITS, rows), {"optimal_t2": optima}, svg,
                            _count_errors(rows))


# -- noise-robustness --------------------------------------------------------

NOISE_COLUMNS = ["gamma", "theta_policy", "theta", "t1", "R", "R0", "R_rel", "R_semi_analytic",
                 "status"]
NOISE_UNITS = ["1", "-", "rad", "1/chi", "1", "1", "1", "1", "-"]


def _noise_point(values, task):
    gamma, policy = task
    name = _policy_name(policy)
    try:
        n = values["experiment.n_atoms"]
        ops = build_operators(n)
        p = _params(values, gamma)
        t1 = _t1(values, gamma)
        theta = resolve_theta(policy, ops, p, t1)
        pr = protocol_for(n, p, t1, theta)
        n0, h = values["noise.strength"], values["noise.step"]
        r = robustness_R(pr, ops, n0, h)
        rel = relative_robustness(pr, ops, DetectionNoise(n0), h)
        try:
            semi = robustness_semi_analytic(pr, ops)
        except NUMERIC_ERRORS:
            semi = math.nan
        return [gamma, name, theta, t1, r, r - rel, rel, semi, "ok"]
    except NUMERIC_ERRORS as exc:
        return _error_row([gamma, name], 6, exc)


def noise_robustness(values, workers=1) -> ExperimentResult:
    rows = run_tasks(_noise_point, values, _gamma_policy_tasks(values), workers)
    ok = [r for r in rows if r[-1] == "ok"]
    series = {}
    for policy in dict.fromkeys(r[1] for r in ok):
        sel = [r for r in ok if r[1] == policy]
        series[f"R {policy}"] = ([r[0] for r in sel], [r[4] for r in sel])
        series[f"R_rel {policy}"] = ([r[0] for r in sel], [r[6] for r in sel])
    summary = {"noise_strength": values["noise.strength"], "step": values["noise.step"],
               "table": [{"gamma": r[0], "theta_policy": r[1], "R": r[4], "R_rel": r[6]} for r in ok]}
    svg = line_svg("Robustness to detection noise", "gamma", "R", series)
    return ExperimentResult(Table(NOISE_COLUMNS, NOISE_UNITS, rows), summary, svg, _count_errors(rows))


# -- floquet-mc --------------------------------------------------------------

MC_COLUMNS = ["trial", "period", "reversal_time", "G", "status"]
MC_UNITS = ["-", "-", "1/chi", "1", "-"]


def floquet_setup(values):
    n = values["experiment.n_atoms"]
    chi = values["experiment.chi"]
    gamma = float(values["grid.gamma"][0])
    ops = build_operators(n)
    p = LmgParams(chi, gamma)
    t1 = _t1(values, gamma)
    theta = resolve_theta(values["grid.theta"][0], ops, p, t1)
    t2 = t1 if values["grid.t2"] == "t1" else float(values["grid.t2"])
    seq = fq.compile_sequence(gamma, chi, t2, values["noise.pulse_frequency"])
    m = values["grid.measure_angle"]
    protocol = EchoProtocol(n, p, t1, theta, reversal=FloquetReversal(seq),
                            measure_angle=None if m == "optimal" else float(m))
    noise = fq.PulseNoiseSpec(
        area_rel_sd=values["noise.area_rel_sd"],
        separation_rel_sd=values["noise.separation_rel_sd"],
        phase_sd=values["noise.phase_sd"],
        seed=values["experiment.seed"] or 0,
        correlation=values["noise.correlation"],
    )
    return ops, protocol, noise


def floquet_mc(values, workers=1) -> ExperimentResult:
    ops, protocol, noise = floquet_setup(values)
    trials = values["noise.trials"]
    res = fq.monte_carlo_gain(protocol, ops, noise, trials, map_fn=BlockMap(workers))
    rows = [[-1, k, t, g, "noiseless"] for k, (t, g) in enumerate(zip(res.times, res.noiseless))]
    for i, traj in enumerate(res.gains):
        rows += [[i, k, t, g, "ok"] for k, (t, g) in enumerate(zip(res.times, traj))]
    base = float(res.noiseless[-1])
    med = res.median_final()
    seq = protocol.reversal.sequence
    summary = {
        "gamma": seq.gamma, "t1": protocol.t1, "theta": protocol.theta,
        "measure_angle": res.measure_angle, "n_periods": seq.n_periods,
        "trials": trials, "noiseless_final_G": base, "median_final_G": med,
        "relative_deviation": abs(med - base) / abs(base),
    }
    series = {"noiseless": (res.times, res.noiseless)}
    for i in range(min(trials, 20)):
        series[f"trial {i}" if i < 3 else f"_trial {i}"] = (res.times, res.gains[i])
    svg = line_svg("Magnification during pulsed reversal", "reversal time (1/chi)", "G", series)
    return ExperimentResult(Table(MC_COLUMNS, MC_UNITS, rows), summary, svg, 0)


# -- echo-run ----------------------------------------------------------------

ECHO_COLUMNS = ["gamma", "theta_policy", "theta", "t1", "t2", "measure_angle", "delta_phi",
                "delta_g_db", "magnification", "derivative_signal", "echo_fidelity", "status"]
ECHO_UNITS = ["1", "-", "rad", "1/chi", "1/chi", "rad", "rad", "dB", "1", "1", "1", "-"]


def _echo_point(values, task):
    gamma, policy = task
    name = _policy_name(policy)
    try:
        n = values["experiment.n_atoms"]
        ops = build_operators(n)
        p = _params(values, gamma)
        t1 = _t1(values, gamma)
        theta = resolve_theta(policy, ops, p, t1) if t1 > 0 else (
            policy if isinstance(policy, float) else math.pi / 2)
        t2 = t1 if values["grid.t2"] == "t1" else float(values["grid.t2"])
        m = values["grid.measure_angle"]
        pr = EchoProtocol(n, p, t1, theta, reversal=IdealReversal(t2),
                          measure_angle=None if m == "optimal" else float(m))
        rep = metrological_gain(pr, ops)
        fid = fidelity(run_echo(pr, ops), y_state(ops))
        return [gamma, name, theta, t1, t2, rep.measure_angle, rep.delta_phi, rep.delta_g_db,
                rep.magnification, rep.derivative_signal, fid, "ok"]
    except NUMERIC_ERRORS as exc:
        return _error_row([gamma, name], 9, exc)


def echo_run(values, workers=1) -> ExperimentResult:
    rows = run_tasks(_echo_point, values, _gamma_policy_tasks(values), workers)
    ok = [r for r in rows if r[-1] == "ok"]
    summary = {"table": [{"gamma": r[0], "theta_policy": r[1], "delta_g_db": r[7],
                          "magnification": r[8]} for r in ok]}
    return ExperimentResult(Table(ECHO_COLUMNS, ECHO_UNITS, rows), summary, "", _count_errors(rows))


# -- ops-check ---------------------------------------------------------------

CHECK_COLUMNS = ["check", "value", "tolerance", "passed"]
CHECK_UNITS = ["-", "1", "1", "-"]


def algebra_checks(n_atoms: int, seed: int = 0) -> list:
    """(name, worst error, tolerance) for the operator and evolution invariants."""
    ops = build_operators(n_atoms)
    s = ops.spin
    sx, sy, sz = ops.sx, ops.sy, ops.sz
    dim = ops.dim
    tol = 1e-10 if n_atoms <= 200 else 1e-8
    eye = np.eye(dim)
    out = []
    for name, a in (("hermitian sx", sx), ("hermitian sy", sy), ("hermitian sz", sz)):
        out.append((name, float(np.max(np.abs(a - a.conj().T))), 1e-12))
    out.append(("[Sx,Sy] = iSz", float(np.max(np.abs(sx @ sy - sy @ sx - 1j * sz))), tol))
    out.append(("[Sy,Sz] = iSx", float(np.max(np.abs(sy @ sz - sz @ sy - 1j * sx))), tol))
    out.append(("[Sz,Sx] = iSy", float(np.max(np.abs(sz @ sx - sx @ sz - 1j * sy))), tol))
    out.append(("casimir", float(np.max(np.abs(ops.s_squared - s * (s + 1) * eye))), tol))
    out.append(("sx real", float(np.max(np.abs(np.imag(sx)))), 0.0))
    out.append(("sy imaginary", float(np.max(np.abs(np.real(sy)))), 0.0))
    band = np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
    out.append(("sx, sy tridiagonal", float(np.max(np.abs(sx[band > 1]), initial=0.0)
                                            + np.max(np.abs(sy[band > 1]), initial=0.0)), 0.0))
    out.append(("sz diagonal", float(np.max(np.abs(sz[band > 0]), initial=0.0)), 0.0))
    h = lmg_hamiltonian(ops, LmgParams(1.0, 0.3))
    out.append(("H_LMG pentadiagonal", float(np.max(np.abs(h[band > 2]), initial=0.0)), 0.0))
    out.append(("[H_LMG, S^2]", float(np.max(np.abs(h @ ops.s_squared - ops.s_squared @ h))), 1e-9))
    rng = fq.trial_rng(seed, 0)
    states = rng.normal(size=(dim, 20)) + 1j * rng.normal(size=(dim, 20))
    states /= np.linalg.norm(states, axis=0)
    from .lmg import lmg_propagator

    prop = lmg_propagator(ops, LmgParams(1.0, 0.3))
    evolved = prop.apply(states, 0.37)
    out.append(("unitarity", float(np.max(np.abs(np.linalg.norm(evolved, axis=0) - 1))), tol))
    back = lmg_propagator(ops, LmgParams(-1.0, 0.3)).apply(prop.apply(y_state(ops).amplitudes, 0.2), 0.2)
    out.append(("echo identity", 1 - fidelity(back, y_state(ops)), 1e-9))
    t = 0.31
    ry_m = rotation_matrix(ops, "y", -math.pi / 2)
    ry_p = rotation_matrix(ops, "y", math.pi / 2)
    from .spin import Propagator

    lhs = ry_m @ Propagator(sx @ sx).apply(ry_p @ states, t)
    rhs = Propagator(sz @ sz).apply(states, t)
    worst = max(1 - fidelity(lhs[:, j], rhs[:, j]) for j in range(states.shape[1]))
    out.append(("y-conjugation maps Sx^2 to Sz^2", float(worst), 1e-9))
    return out


def ops_check(values, workers=1) -> ExperimentResult:
    checks = algebra_checks(values["experiment.n_atoms"], values["experiment.seed"] or 0)
    rows = [[name, val, tol, bool(val <= tol)] for name, val, tol in checks]
    failed = [r[0] for r in rows if not r[3]]
    summary = {"all_passed": not failed, "failed": failed}
    return ExperimentResult(Table(CHECK_COLUMNS, CHECK_UNITS, rows), summary, "", 0,
                            acceptance_failed=bool(failed))


RUNNERS = {
    "sweep-qfi": sweep_qfi,
    "sweep-theta": sweep_theta,
    "gain-map": gain_map_experiment,
    "noise-robustness": noise_robustness,
    "floquet-mc": floquet_mc,
    "echo-run": echo_run,
    "ops-check": ops_check,
}
