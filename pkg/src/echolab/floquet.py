"""Pulse sequences that reverse LMG dynamics on average.

One period conjugates free evolution with y and z quarter turns.  Listed in
the order the pulses hit the atoms:

    R_z(+pi/2)  free(t2_seg)  R_z(-pi/2)  R_y(+pi/2)  free(t1_seg)  R_y(-pi/2)

so the period propagator is the operator product
R_y(-pi/2) e^{-iH t1_seg} R_y(pi/2) R_z(-pi/2) e^{-iH t2_seg} R_z(pi/2), which
equals exp(-i(Sz^2 + g Sy^2) chi t1_seg) exp(-i(Sy^2 + g Sx^2) chi t2_seg).
With t2_seg/t1_seg = (1 - 2g)/((1 - g)(1 + g)) the first-order average is
chi_eff (Sx^2 + g Sy^2) plus a multiple of S^2, with chi_eff/chi < 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument
from .lmg import LmgParams, lmg_propagator
from .spin import SpinOperators, SpinState, build_operators, fidelity, y_state

QUARTER = math.pi / 2


def _check_gamma(gamma):
    if not (0.0 <= gamma <= 0.5):
        raise InvalidArgument(f"gamma={gamma!r} outside 0 <= gamma <= 0.5")


def timing_ratio(gamma: float) -> float:
    """t2_seg / t1_seg needed for an average Hamiltonian proportional to H_LMG."""
    _check_gamma(gamma)
    return (1 - 2 * gamma) / ((1 - gamma) * (1 + gamma))


def effective_chi(gamma: float) -> float:
    """chi_eff / chi = -(g^2 - g + 1)/(-g^2 - 2g + 2); negative on the whole domain."""
    _check_gamma(gamma)
    return -(gamma * gamma - gamma + 1) / (-gamma * gamma - 2 * gamma + 2)


def first_order_generator(ops: SpinOperators, gamma: float, chi: float, t1_seg: float,
                          t2_seg: float) -> np.ndarray:
    """chi [Sx^2 g t2 + Sy^2 (g t1 + t2) + Sz^2 t1] per period (BCH first order)."""
    sx2 = ops.sx @ ops.sx
    sy2 = (ops.sy @ ops.sy).real
    sz2 = ops.sz @ ops.sz
    return chi * (gamma * t2_seg * sx2 + (gamma * t1_seg + t2_seg) * sy2 + t1_seg * sz2)


# -- sequences ---------------------------------------------------------------


@dataclass(frozen=True)
class PulseEvent:
    """A pulse (``kind="PULSE"``, axis and angle) or a free segment (duration)."""

    kind: str
    time: float
    axis: str = ""
    angle: float = 0.0
    duration: float = 0.0
    period: int = 0


@dataclass(frozen=True)
class PulseSequence:
    gamma: float
    chi: float
    t1_seg: float
    t2_seg: float
    n_periods: int
    last_scale: float
    target_time: float
    events: tuple = field(repr=False)

    @property
    def period(self) -> float:
        return self.t1_seg + self.t2_seg

    @property
    def chi_eff(self) -> float:
        return self.chi * effective_chi(self.gamma)

    @property
    def duration(self) -> float:
        return self.period * (self.n_periods - 1 + self.last_scale)

    def boundary_times(self) -> np.ndarray:
        """Elapsed lab time at the end of each period (first entry 0)."""
        scales = np.ones(self.n_periods)
        scales[-1] = self.last_scale
        return np.concatenate([[0.0], np.cumsum(scales * self.period)])

    def reversal_times(self) -> np.ndarray:
        """Equivalent reversal time chi_eff-weighted, ending at the target."""
        return self.boundary_times() * abs(effective_chi(self.gamma))


@dataclass(frozen=True)
class PulseNoiseSpec:
    area_rel_sd: float = 0.0
    separation_rel_sd: float = 0.0
    phase_sd: float = 0.0
    seed: int = 0
    correlation: str = "pulse"

    def __post_init__(self):
        if self.correlation not in ("pulse", "trial"):
            raise InvalidArgument("correlation must be 'pulse' or 'trial'")
        for name in ("area_rel_sd", "separation_rel_sd", "phase_sd"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise InvalidArgument(f"{name} must be a finite SD >= 0, got {val!r}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise InvalidArgument("seed must be a 64-bit unsigned integer")

    @property
    def silent(self) -> bool:
        return self.area_rel_sd == 0 and self.separation_rel_sd == 0 and self.phase_sd == 0


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Philox stream for one trial, keyed by (seed, trial) rather than draw order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
    return np.random.Generator(np.random.Philox(ss))


def _period_events(k, start, t1_seg, t2_seg):
    events = []
    t = start
    if t2_seg > 0:
        events += [
            PulseEvent("PULSE", t, "z", QUARTER, period=k),
            PulseEvent("FREE", t, duration=t2_seg, period=k),
            PulseEvent("PULSE", t + t2_seg, "z", -QUARTER, period=k),
        ]
        t += t2_seg
    events += [
        PulseEvent("PULSE", t, "y", QUARTER, period=k),
        PulseEvent("FREE", t, duration=t1_seg, period=k),
        PulseEvent("PULSE", t + t1_seg, "y", -QUARTER, period=k),
    ]
    return events


def compile_sequence(gamma: float, chi: float, target_reverse_time: float,
                     pulse_frequency: float, n_atoms: Optional[int] = None) -> PulseSequence:
    """Periods reproducing exp(+i H t) for t = ``target_reverse_time``.

    ``pulse_frequency`` is the period repetition rate in units of |chi|, so
    t_c = 1/(f |chi|).  The final period is shrunk uniformly so the effective
    reversal hits the target.  Passing ``n_atoms`` enables the
    chi t_c N <= 0.5 warning.
    """
    _check_gamma(gamma)
    if not (math.isfinite(chi) and chi > 0):
        raise InvalidArgument("sequences are compiled for chi > 0")
    if not (math.isfinite(pulse_frequency) and pulse_frequency > 0):
        raise InvalidArgument(f"pulse frequency must be positive, got {pulse_frequency!r}")
    if not (math.isfinite(target_reverse_time) and target_reverse_time > 0):
        raise InvalidArgument("target reverse time must be positive")
    t_c = 1.0 / (pulse_frequency * chi)
    if n_atoms is not None and chi * t_c * n_atoms > 0.5:
        warnings.warn(
            f"chi t_c N = {chi * t_c * n_atoms:.3g} > 0.5: higher-order terms will be visible",
            stacklevel=2,
        )
    r = timing_ratio(gamma)
    t1_seg = t_c / (1 + r)
    t2_seg = t_c - t1_seg
    lab_time = target_reverse_time / abs(effective_chi(gamma))
    periods = lab_time / t_c
    n = max(1, math.ceil(periods - 1e-9))
    last = periods - (n - 1)
    events = []
    for k in range(n):
        s = 1.0 if k < n - 1 else last
        events += _period_events(k, k * t_c, t1_seg * s, t2_seg * s)
    return PulseSequence(gamma=gamma, chi=chi, t1_seg=t1_seg, t2_seg=t2_seg, n_periods=n,
                         last_scale=last, target_time=target_reverse_time, events=tuple(events))


def export_sequence(seq: PulseSequence) -> str:
    lines = [
        f"# gamma={seq.gamma!r} chi={seq.chi!r} chi_eff={seq.chi_eff!r} n_periods={seq.n_periods}",
        f"# t1_seg={seq.t1_seg!r} t2_seg={seq.t2_seg!r} last_scale={seq.last_scale!r} "
        f"target_time={seq.target_time!r}",
    ]
    for ev in seq.events:
        if ev.kind == "PULSE":
            lines.append(f"{ev.time!r} PULSE {ev.axis} {ev.angle!r}")
        else:
            lines.append(f"{ev.time!r} FREE {ev.duration!r}")
    return "\n".join(lines) + "\n"


def read_sequence(text: str) -> PulseSequence:
    """Inverse of :func:`export_sequence`."""
    header = {}
    events = []
    starts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                header[key] = val
            continue
        parts = line.split()
        try:
            t = float(parts[0])
            if parts[1] == "PULSE" and len(parts) == 4:
                events.append(PulseEvent("PULSE", t, parts[2], float(parts[3])))
            elif parts[1] == "FREE" and len(parts) == 3:
                events.append(PulseEvent("FREE", t, duration=float(parts[2])))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise InvalidArgument(f"line {lineno}: cannot parse {raw!r}") from None
        if events[-1].kind == "PULSE" and events[-1].angle > 0 and events[-1].axis == (
            "z" if float(header.get("t2_seg", 0)) > 0 else "y"
        ):
            starts.append(len(events) - 1)
    try:
        gamma = float(header["gamma"])
        chi = float(header["chi"])
        n = int(header["n_periods"])
        seq = PulseSequence(gamma=gamma, chi=chi, t1_seg=float(header["t1_seg"]),
                            t2_seg=float(header["t2_seg"]), n_periods=n,
                            last_scale=float(header["last_scale"]),
                            target_time=float(header["target_time"]), events=())
    except KeyError as exc:
        raise InvalidArgument(f"sequence header lacks {exc.args[0]!r}") from None
    if len(starts) != n:
        raise InvalidArgument(f"header says {n} periods, found {len(starts)}")
    bounds = starts + [len(events)]
    numbered = []
    for k in range(n):
        for ev in events[bounds[k]:bounds[k + 1]]:
            numbered.append(PulseEvent(ev.kind, ev.time, ev.axis, ev.angle, ev.duration, k))
    return PulseSequence(**{**seq.__dict__, "events": tuple(numbered)})


# -- simulation --------------------------------------------------------------


class _Kernels:
    """Per-N pulse and free-evolution kernels acting on column batches."""

    def __init__(self, ops: SpinOperators, params: LmgParams):
        self.mz = np.diag(ops.sz).copy()
        self.wy, self.vy = np.linalg.eigh(ops.sy)
        self.vyh = self.vy.conj().T
        self.prop = lmg_propagator(ops, params)

    def rot_z(self, angle, vecs):
        return np.exp(-1j * angle * self.mz)[:, None] * vecs

    def rot_y(self, angle, vecs, tilt=0.0):
        # axis (-sin d, cos d, 0): exp(-i d Sz) R_y exp(+i d Sz)
        if tilt:
            vecs = self.rot_z(-tilt, vecs)
        out = self.vy @ (np.exp(-1j * angle * self.wy)[:, None] * (self.vyh @ vecs))
        if tilt:
            out = self.rot_z(tilt, out)
        return out

    def free(self, t, vecs):
        return self.prop.apply(vecs, t) if t > 0 else vecs


def _check_sequence(params: LmgParams, seq: PulseSequence):
    if params.chi <= 0:
        raise InvalidArgument("pulse simulation expects the forward Hamiltonian (chi > 0)")
    if params.gamma != seq.gamma:
        raise InvalidArgument(f"sequence compiled for gamma={seq.gamma}, params have {params.gamma}")
    if not math.isclose(params.chi, seq.chi, rel_tol=1e-12):
        raise InvalidArgument(f"sequence compiled for chi={seq.chi}, params have {params.chi}")


def apply_sequence(
    vecs,
    ops: SpinOperators,
    params: LmgParams,
    seq: PulseSequence,
    noise: Optional[PulseNoiseSpec] = None,
    trial: int = 0,
    on_period: Optional[Callable[[int, np.ndarray], None]] = None,
):
    """Run the pulse program on a vector or on the columns of a 2-D array.

    Noise draws, in event order: pulse angle ~ N(a, |a| area_rel_sd), then
    azimuth jitter of y-pulse axes ~ N(0, phase_sd); free durations
    ~ N(t, t separation_rel_sd) clipped at 0.  Channels with zero SD draw
    nothing, so a silent spec reproduces the noiseless run exactly.  z axes
    are invariant under azimuthal jitter.  With ``correlation="trial"`` each
    channel draws one standard normal per trial that every event shares (a
    calibration error rather than shot-to-shot jitter).  ``on_period(k, vecs)``
    is called after each period.
    """
    _check_sequence(params, seq)
    vecs = np.asarray(vecs, dtype=complex)
    single = vecs.ndim == 1
    cur = vecs[:, None] if single else vecs.copy()
    kern = _Kernels(ops, params)
    rng = trial_rng(noise.seed, trial) if noise is not None and not noise.silent else None
    sa = noise.area_rel_sd if rng else 0.0
    ss = noise.separation_rel_sd if rng else 0.0
    sp = noise.phase_sd if rng else 0.0
    if rng is not None and noise.correlation == "trial":
        shared = {name: rng.normal() for name, sd in (("a", sa), ("s", ss), ("p", sp)) if sd}

        def draw(name):
            return shared[name]
    else:

        def draw(_name):
            return rng.normal()

    last_period = 0
    for ev in seq.events:
        if ev.period != last_period:
            if on_period is not None:
                on_period(last_period, cur)
            last_period = ev.period
        if ev.kind == "FREE":
            t = ev.duration
            if ss:
                t = max(0.0, t + t * ss * draw("s"))
            cur = kern.free(t, cur)
            continue
        angle = ev.angle
        if sa:
            angle = angle + abs(angle) * sa * draw("a")
        if ev.axis == "z":
            cur = kern.rot_z(angle, cur)
        else:
            tilt = sp * draw("p") if sp else 0.0
            cur = kern.rot_y(angle, cur, tilt)
    if on_period is not None:
        on_period(last_period, cur)
    return cur[:, 0] if single else cur


def simulate(state: SpinState, ops: SpinOperators, params: LmgParams, seq: PulseSequence,
             noise: Optional[PulseNoiseSpec] = None, trial: int = 0) -> SpinState:
    """Instantaneous-pulse simulation of the compiled sequence on ``state``."""
    out = apply_sequence(state.amplitudes, ops, params, seq, noise, trial)
    return SpinState(state.n_atoms, out / np.linalg.norm(out))


def probe_states(n_atoms: int, n_random: int = 10, seed: int = 0) -> np.ndarray:
    """|+y> followed by seeded Haar-like random states, as columns."""
    ops = build_operators(n_atoms)
    rng = trial_rng(seed, 0)
    rand = rng.normal(size=(n_atoms + 1, n_random)) + 1j * rng.normal(size=(n_atoms + 1, n_random))
    rand /= np.linalg.norm(rand, axis=0)
    return np.column_stack([y_state(ops).amplitudes, rand])


def equivalent_reversal_check(gamma: float, chi: float, t: float, pulse_frequency: float,
                              n_atoms: int = 100, n_random: int = 10, seed: int = 0) -> float:
    """Minimum fidelity between the pulse sequence and exp(+i H t) over the probe set."""
    if t == 0:
        return 1.0
    ops = build_operators(n_atoms)
    params = LmgParams(chi, gamma)
    seq = compile_sequence(gamma, chi, t, pulse_frequency)
    probes = probe_states(n_atoms, n_random, seed)
    got = apply_sequence(probes, ops, params, seq)
    ideal = lmg_propagator(ops, params).apply(probes, -t)
    return float(min(fidelity(got[:, j], ideal[:, j]) for j in range(probes.shape[1])))


# -- magnification trajectories ----------------------------------------------


@dataclass(frozen=True)
class GainTrajectories:
    """G sampled at every period boundary; ``gains[i]`` is trial i."""

    times: np.ndarray
    gains: np.ndarray
    noiseless: np.ndarray
    measure_angle: float

    @property
    def final(self) -> np.ndarray:
        return self.gains[:, -1]

    def median_final(self) -> float:
        return float(np.median(self.final))


def _echo_pair(protocol, ops):
    from .interferometer import squeeze
    from .spin import spin_component

    psi1 = squeeze(ops, protocol.params, protocol.t1)
    return np.stack([psi1, spin_component(ops, protocol.theta) @ psi1], axis=1)


def gain_trajectory(protocol, ops: SpinOperators, measure_angle: float,
                    noise: Optional[PulseNoiseSpec] = None, trial: int = 0) -> np.ndarray:
    """G = slope(S_m)/(N/2) after 0, 1, ..., n_periods periods of the pulse reversal."""
    from .interferometer import slope
    from .spin import spin_component

    seq = protocol.reversal.sequence
    sm = spin_component(ops, measure_angle)
    pair = _echo_pair(protocol, ops)
    samples = [slope(sm, pair[:, 0], pair[:, 1])]

    def record(_k, cur):
        samples.append(slope(sm, cur[:, 0], cur[:, 1]))

    apply_sequence(pair, ops, protocol.params, seq, noise, trial, on_period=record)
    return np.array(samples) / (ops.n_atoms / 2)


def floquet_measure_angle(protocol, ops: SpinOperators) -> float:
    """Readout axis maximizing |G| under the ideal echo of the same length, oriented so G > 0."""
    from .interferometer import IdealReversal, response_matrix

    seq = protocol.reversal.sequence
    k = response_matrix(ops, protocol.params, protocol.t1, IdealReversal(seq.target_time))
    v = np.array([math.sin(protocol.theta), math.cos(protocol.theta)])
    d = k.T @ v
    m = math.atan2(d[0], d[1]) % (2 * math.pi)
    if gain_trajectory(protocol, ops, m)[-1] < 0:
        m = (m + math.pi) % (2 * math.pi)
    return m


def _trial_task(args):
    protocol, noise, trial, m = args
    ops = build_operators(protocol.n_atoms)
    return gain_trajectory(protocol, ops, m, noise, trial)


def monte_carlo_gain(protocol, ops: SpinOperators, noise: PulseNoiseSpec, trials: int,
                     map_fn: Callable = map) -> GainTrajectories:
    """Independent noisy trajectories; trial i draws from stream (noise.seed, i).

    ``map_fn`` may be any order-preserving map (e.g. an executor's), so the
    result does not depend on how trials are scheduled.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    m = protocol.measure_angle
    if m is None:
        m = floquet_measure_angle(protocol, ops)
    noiseless = gain_trajectory(protocol, ops, m)
    rows = list(map_fn(_trial_task, [(protocol, noise, i, m) for i in range(trials)]))
    seq = protocol.reversal.sequence
    return GainTrajectories(times=seq.reversal_times(), gains=np.array(rows),
                            noiseless=noiseless, measure_angle=m)
