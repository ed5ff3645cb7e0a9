"""Three-stage echo protocol: squeeze, encode, reverse, measure.

For a phase encoded as exp(-i phi S_theta) after U1, the linear-response slope
of any observable A read out after U2 is

    d<A>/dphi |_0 = i <[S_theta(U1), A(U2 U1)]> = -2 Im <w|A|u>,

with u = U2 U1 |y> and w = U2 S_theta U1 |y>.  Everything here is built on
that pair of vectors, which is why reversals only need to act on vectors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import InvalidArgument, VanishingSignalError
from .lmg import LmgParams, lmg_propagator
from .search import maximize_angle, minimize_angle, refine_max
from .spin import (
    SpinOperators,
    SpinState,
    build_operators,
    expectation,
    plane_moments,
    rotation_matrix,
    spin_component,
    y_state,
)

PHI_LIMIT = 0.1
PHI_WARN = 0.01
FD_STEP = 1e-4


# -- reversal stages ---------------------------------------------------------


@dataclass(frozen=True)
class IdealReversal:
    """U2 = exp(-i H(-chi, gamma) t2)."""

    t2: float

    def __post_init__(self):
        if not (math.isfinite(self.t2) and self.t2 >= 0):
            raise InvalidArgument(f"ideal reversal needs t2 >= 0, got {self.t2!r}")

    def apply(self, ops, params, vecs):
        return lmg_propagator(ops, params.reversed()).apply(vecs, self.t2)


@dataclass(frozen=True)
class NoReversal:
    def apply(self, ops, params, vecs):
        return np.array(vecs, dtype=complex)


@dataclass(frozen=True)
class FloquetReversal:
    """U2 realized by a compiled pulse sequence, optionally with pulse noise.

    ``trial`` selects the random stream when ``noise`` is set.
    """

    sequence: object
    noise: object = None
    trial: int = 0

    def apply(self, ops, params, vecs):
        from .floquet import apply_sequence

        return apply_sequence(vecs, ops, params, self.sequence, self.noise, self.trial)


Reversal = Union[IdealReversal, NoReversal, FloquetReversal]


@dataclass(frozen=True)
class EchoProtocol:
    """Full description of one echo experiment.

    ``measure_angle=None`` means the readout axis is co-optimized wherever a
    single number is reported.
    """

    n_atoms: int
    params: LmgParams
    t1: float
    theta: float
    phi: float = 0.0
    reversal: Reversal = field(default_factory=NoReversal)
    measure_angle: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.t1) and self.t1 >= 0):
            raise InvalidArgument(f"t1 must be >= 0, got {self.t1!r}")
        if not math.isfinite(self.theta):
            raise InvalidArgument("theta must be finite")
        if not math.isfinite(self.phi) or abs(self.phi) > PHI_LIMIT:
            raise InvalidArgument(f"|phi| must be <= {PHI_LIMIT} rad, got {self.phi!r}")
        if abs(self.phi) > PHI_WARN:
            warnings.warn(f"phi={self.phi} is outside the linear-response regime", stacklevel=3)

    def with_(self, **changes) -> "EchoProtocol":
        return replace(self, **changes)


@dataclass(frozen=True)
class GainReport:
    delta_phi: float
    delta_g_db: float
    magnification: float
    derivative_signal: float
    measure_angle: float


class T2Result(NamedTuple):
    t2: float
    gain_db: float


# -- protocol execution ------------------------------------------------------


def _check(protocol: EchoProtocol, ops: SpinOperators):
    if protocol.n_atoms != ops.n_atoms:
        raise InvalidArgument(
            f"protocol has N={protocol.n_atoms} but operators are for N={ops.n_atoms}"
        )


def axis_vector(theta: float) -> tuple[float, float, float]:
    return (math.sin(theta), 0.0, math.cos(theta))


def encode(state: SpinState, ops: SpinOperators, phi: float, theta: float) -> SpinState:
    """Apply U = exp(-i phi S_theta)."""
    if phi == 0:
        return state
    out = rotation_matrix(ops, axis_vector(theta), phi) @ state.amplitudes
    return SpinState(state.n_atoms, out / np.linalg.norm(out))


def squeeze(ops: SpinOperators, params: LmgParams, t1: float, pole: int = 1) -> np.ndarray:
    return lmg_propagator(ops, params).apply(y_state(ops, pole).amplitudes, t1)


def run_echo(protocol: EchoProtocol, ops: SpinOperators) -> SpinState:
    """U2 U_{phi,theta} U1 |y>."""
    _check(protocol, ops)
    psi = SpinState(ops.n_atoms, squeeze(ops, protocol.params, protocol.t1))
    psi = encode(psi, ops, protocol.phi, protocol.theta)
    out = protocol.reversal.apply(ops, protocol.params, psi.amplitudes)
    return SpinState(ops.n_atoms, out / np.linalg.norm(out))


def echo_vectors(protocol: EchoProtocol, ops: SpinOperators) -> tuple[np.ndarray, np.ndarray]:
    """(u, w) = (U2 U1|y>, U2 S_theta U1|y>) at phi = 0, propagated together."""
    _check(protocol, ops)
    psi1 = squeeze(ops, protocol.params, protocol.t1)
    pair = np.stack([psi1, spin_component(ops, protocol.theta) @ psi1], axis=1)
    out = protocol.reversal.apply(ops, protocol.params, pair)
    return out[:, 0], out[:, 1]


def slope(op, u, w) -> float:
    """d<A>/dphi at phi = 0 from the echo vector pair."""
    return float(-2.0 * np.vdot(w, op @ u).imag)


def plane_slopes(ops: SpinOperators, u, w) -> np.ndarray:
    """Slopes of <Sx> and <Sz>; the slope of <S_m> is (sin m, cos m) . d."""
    return np.array([slope(ops.sx, u, w), slope(ops.sz, u, w)])


def _inverse_precision(d, cov):
    def f(m):
        s, c = np.sin(m), np.cos(m)
        var = cov[0, 0] * s * s + 2 * cov[0, 1] * s * c + cov[1, 1] * c * c
        return np.abs(d[0] * s + d[1] * c) / np.sqrt(np.maximum(var, 1e-300))

    return f


def best_measure_angle(ops: SpinOperators, u, w) -> tuple[float, float]:
    """Readout angle minimizing delta phi, and that minimal delta phi."""
    d = plane_slopes(ops, u, w)
    _, cov = plane_moments(ops, u)
    m, inv = maximize_angle(_inverse_precision(d, cov))
    return m, (1.0 / inv if inv > 0 else math.inf)


def resolve_measure_angle(protocol: EchoProtocol, ops: SpinOperators, u=None, w=None) -> float:
    if protocol.measure_angle is not None:
        return protocol.measure_angle
    if u is None:
        u, w = echo_vectors(protocol, ops)
    return best_measure_angle(ops, u, w)[0]


def signal_derivative(
    protocol: EchoProtocol,
    ops: SpinOperators,
    method: str = "commutator",
    h: float = FD_STEP,
) -> float:
    """d<S_m>/dphi at phi = 0.

    ``method="commutator"`` evaluates the conjugated-operator commutator
    exactly; ``"finite_difference"`` runs the echo at phi = +-h and falls back
    to Richardson extrapolation when the h and h/2 estimates disagree.
    """
    u, w = echo_vectors(protocol, ops)
    m = resolve_measure_angle(protocol, ops, u, w)
    sm = spin_component(ops, m)
    if method == "commutator":
        return slope(sm, u, w)
    if method != "finite_difference":
        raise InvalidArgument(f"unknown method {method!r}")

    def central(step):
        plus = run_echo(protocol.with_(phi=step), ops)
        minus = run_echo(protocol.with_(phi=-step), ops)
        return (expectation(plus, sm) - expectation(minus, sm)) / (2 * step)

    d1 = central(h)
    d2 = central(h / 2)
    if abs(d1 - d2) <= 1e-6 * max(abs(d2), 1e-300):
        return d2
    return (4 * d2 - d1) / 3


def delta_phi(protocol: EchoProtocol, ops: SpinOperators) -> float:
    """Error-propagation phase uncertainty Delta S_m / |d<S_m>/dphi|."""
    u, w = echo_vectors(protocol, ops)
    m = resolve_measure_angle(protocol, ops, u, w)
    return _delta_phi_at(ops, u, w, m)


def _delta_phi_at(ops, u, w, m):
    sm = spin_component(ops, m)
    deriv = slope(sm, u, w)
    a = sm @ u
    mean = np.vdot(u, a).real
    spread = math.sqrt(max(np.vdot(a, a).real - mean * mean, 0.0))
    if abs(deriv) <= 1e-12 * max(1.0, spread):
        raise VanishingSignalError("signal slope vanishes", numerator=spread, denominator=deriv)
    return spread / abs(deriv)


def gain_db(delta: float, n_atoms: int) -> float:
    return -20.0 * math.log10(delta * math.sqrt(n_atoms))


def metrological_gain(protocol: EchoProtocol, ops: SpinOperators) -> GainReport:
    u, w = echo_vectors(protocol, ops)
    m = resolve_measure_angle(protocol, ops, u, w)
    delta = _delta_phi_at(ops, u, w, m)
    deriv = slope(spin_component(ops, m), u, w)
    return GainReport(
        delta_phi=delta,
        delta_g_db=gain_db(delta, ops.n_atoms),
        magnification=deriv / (ops.n_atoms / 2),
        derivative_signal=deriv,
        measure_angle=m,
    )


# -- angle and time optimization ---------------------------------------------


def response_matrix(ops: SpinOperators, params: LmgParams, t1: float, reversal=None) -> np.ndarray:
    """K with slope(theta, m) = (sin theta, cos theta) K (sin m, cos m)^T.

    Rows are the encoding generators (Sx, Sz), columns the readouts (Sx, Sz).
    The default reversal is the ideal echo with t2 = t1.
    """
    if reversal is None:
        reversal = IdealReversal(t1)
    psi1 = squeeze(ops, params, t1)
    block = np.stack([psi1, ops.sx @ psi1, ops.sz @ psi1], axis=1)
    out = reversal.apply(ops, params, block)
    u = out[:, 0]
    return np.array([[slope(op, u, out[:, a]) for op in (ops.sx, ops.sz)] for a in (1, 2)])


def optimize_theta_r(ops: SpinOperators, params: LmgParams, t1: float) -> float:
    """Encoding axis maximizing max_m |slope|/(N/2) under the ideal echo t2 = t1."""
    if t1 <= 0:
        raise InvalidArgument("t1 must be positive")
    k = response_matrix(ops, params, t1)

    def best_over_m(theta):
        v = np.stack([np.sin(theta), np.cos(theta)])
        return np.linalg.norm(k.T @ v, axis=0)

    theta, _ = maximize_angle(best_over_m)
    return theta


def _plane_variance(ops, psi):
    _, cov = plane_moments(ops, psi)

    def var(theta):
        s, c = np.sin(theta), np.cos(theta)
        return cov[0, 0] * s * s + 2 * cov[0, 1] * s * c + cov[1, 1] * c * c

    return var


def optimize_theta_p(ops: SpinOperators, params: LmgParams, t1: float, pole: int = -1) -> float:
    """Axis of minimal Var(S_theta) for the squeezed probe.

    The probe is U1 acting on the CSS at ``pole`` times y.  The default
    ``pole=-1`` mirrors the x axis relative to the +y preparation used by the
    echo, i.e. it returns pi minus the +y result.  That mirrored angle is the
    one that lines up with theta_r (see the README).
    """
    if t1 <= 0:
        raise InvalidArgument("t1 must be positive")
    theta, _ = minimize_angle(_plane_variance(ops, squeeze(ops, params, t1, pole)))
    return theta


def qfi_optimal_axis(ops: SpinOperators, params: LmgParams, t1: float) -> float:
    """Axis in the x-z plane of maximal Var(S_theta) on U1|+y> (largest QFI)."""
    theta, _ = maximize_angle(_plane_variance(ops, squeeze(ops, params, t1)))
    return theta


def _gain_over_m(ops, u, w):
    _, best = best_measure_angle(ops, u, w)
    return gain_db(best, ops.n_atoms) if math.isfinite(best) else -math.inf


def optimize_t2(
    ops: SpinOperators,
    params: LmgParams,
    t1: float,
    theta: float,
    n_grid: int = 200,
    span: float = 2.0,
) -> T2Result:
    """Best ideal-reversal time on [0, span*t1], jointly optimizing the readout axis."""
    if t1 <= 0:
        raise InvalidArgument("t1 must be positive")
    rev = lmg_propagator(ops, params.reversed())
    psi1 = squeeze(ops, params, t1)
    coeffs = rev.to_eigenbasis(np.stack([psi1, spin_component(ops, theta) @ psi1], axis=1))

    def gain_at(t2):
        out = rev.from_eigenbasis(coeffs, t2)
        return _gain_over_m(ops, out[:, 0], out[:, 1])

    ts = np.linspace(0.0, span * t1, n_grid)
    gains = np.array([gain_at(t) for t in ts])
    t2, g, _ = refine_max(gain_at, ts, gains, xatol=1e-6 * t1)
    return T2Result(t2, g)


def gain_map(ops: SpinOperators, params: LmgParams, t1: float, theta: float, t2_grid) -> np.ndarray:
    """Delta G (dB, readout optimized) on a grid of ideal-reversal times."""
    rev = lmg_propagator(ops, params.reversed())
    psi1 = squeeze(ops, params, t1)
    coeffs = rev.to_eigenbasis(np.stack([psi1, spin_component(ops, theta) @ psi1], axis=1))
    out = []
    for t2 in t2_grid:
        vecs = rev.from_eigenbasis(coeffs, t2)
        out.append(_gain_over_m(ops, vecs[:, 0], vecs[:, 1]))
    return np.array(out)


def protocol_for(n_atoms: int, params: LmgParams, t1: float, theta: float, reversal=None,
                 measure_angle=None) -> EchoProtocol:
    return EchoProtocol(
        n_atoms=n_atoms,
        params=params,
        t1=t1,
        theta=theta,
        reversal=IdealReversal(t1) if reversal is None else reversal,
        measure_angle=measure_angle,
    )


def operators_for(protocol: EchoProtocol) -> SpinOperators:
    return build_operators(protocol.n_atoms)
