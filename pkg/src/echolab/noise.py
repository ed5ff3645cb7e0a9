"""Gaussian detection noise and the robustness coefficient R.

Detection mistakes Dicke level m for m' with Gaussian weights.  The strength
is N = exp(-1/(2 sigma)^2), so neighbouring levels are confused with weight N,
next-nearest with N^4, and so on.  The measuring operator M is inserted before
the readout as a formal (non-unitary) operator, and moments are the
unnormalized forms <M S_m M> and <M S_m^2 M>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidArgument, NonPositiveSlopeError, VanishingSignalError
from .interferometer import (
    EchoProtocol,
    IdealReversal,
    NoReversal,
    echo_vectors,
    resolve_measure_angle,
    slope,
)
from .spin import SpinOperators, spin_component

SERIES_CUTOFF = 1e-16
DEFAULT_N0 = 0.1
DEFAULT_STEP = 0.01


@dataclass(frozen=True)
class DetectionNoise:
    strength: float
    sigma: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.strength < 1.0):
            raise InvalidArgument(f"noise strength must satisfy 0 <= N < 1, got {self.strength!r}")
        if self.sigma is not None:
            if self.sigma <= 0:
                raise InvalidArgument("sigma must be positive")
            expected = math.exp(-1.0 / (2 * self.sigma) ** 2)
            if not math.isclose(expected, self.strength, rel_tol=1e-9, abs_tol=1e-300):
                raise InvalidArgument(
                    f"sigma={self.sigma} implies N={expected}, inconsistent with {self.strength}"
                )

    @classmethod
    def from_sigma(cls, sigma: float) -> "DetectionNoise":
        if sigma <= 0:
            raise InvalidArgument("sigma must be positive")
        return cls(math.exp(-1.0 / (2 * sigma) ** 2), sigma)

    @property
    def equivalent_sigma(self) -> float:
        if self.strength == 0:
            return 0.0
        return 1.0 / (2.0 * math.sqrt(-math.log(self.strength)))


@dataclass(frozen=True, eq=False)
class NoiseOperators:
    m_exact: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    gamma: np.ndarray  # row-normalized confusion matrix


def _powers(strength: float, dim: int) -> np.ndarray:
    """N^(k^2) for k = 0..dim-1, zero once below the series cutoff."""
    out = np.zeros(dim)
    out[0] = 1.0
    if strength == 0:
        return out
    log_n = math.log(strength)
    for k in range(1, dim):
        val = math.exp(log_n * k * k)
        if val < SERIES_CUTOFF:
            break
        out[k] = val
    return out


def _series_norm(strength: float) -> float:
    total, n = 0.0, 1
    if strength == 0:
        return 1.0
    while True:
        term = strength ** (n * n)
        if term < SERIES_CUTOFF:
            break
        total += term
        n += 1
    return 1.0 + 2.0 * total


def confusion_matrix(dim: int, noise: DetectionNoise) -> np.ndarray:
    """Gamma[m, m'] = probability of reading level m' when the state is m.

    Each row is the Gaussian kernel restricted to the basis and renormalized.
    """
    k = np.arange(dim)
    w = _powers(noise.strength, dim)[np.abs(k[:, None] - k[None, :])]
    return w / w.sum(axis=1, keepdims=True)


def detection_operator(dim: int, noise: DetectionNoise) -> NoiseOperators:
    """Exact measuring operator plus its zeroth- and first-order pieces.

    ``m_exact[i, j] = N^((i-j)^2) / (1 + 2 sum_n N^(n^2))``, with entries that
    would fall outside levels 0..N simply absent.
    """
    if dim < 2:
        raise InvalidArgument("detection operator needs dim >= 2")
    k = np.arange(dim)
    dist = np.abs(k[:, None] - k[None, :])
    m_exact = _powers(noise.strength, dim)[dist] / _series_norm(noise.strength)
    m1 = (dist == 1).astype(float)
    return NoiseOperators(m_exact=m_exact, m0=np.eye(dim), m1=m1,
                          gamma=confusion_matrix(dim, noise))


def _noisy_quantities(ops, u, w, m_op, m, normalized):
    sm = spin_component(ops, m)
    a = m_op.T @ sm @ m_op
    b = m_op.T @ sm @ sm @ m_op
    mean = np.vdot(u, a @ u).real
    second = np.vdot(u, b @ u).real
    deriv = slope(a, u, w)
    if normalized:
        norm_op = m_op.T @ m_op
        n = np.vdot(u, norm_op @ u).real
        dn = slope(norm_op, u, w)
        deriv = (deriv * n - mean * dn) / n ** 2
        mean, second = mean / n, second / n
    spread = math.sqrt(max(second - mean * mean, 0.0))
    return spread, deriv


def noisy_delta_phi(
    protocol: EchoProtocol,
    ops: SpinOperators,
    noise: DetectionNoise,
    normalized: bool = False,
    measure_angle: Optional[float] = None,
) -> float:
    """Delta phi with the measuring operator inserted before the readout.

    The readout axis is the protocol's, or else the noiseless optimum.
    ``normalized=True`` divides by <M^T M> (a physical renormalization that is
    not used for the robustness coefficients).
    """
    u, w = echo_vectors(protocol, ops)
    m = measure_angle if measure_angle is not None else resolve_measure_angle(protocol, ops, u, w)
    m_op = detection_operator(ops.dim, noise).m_exact
    spread, deriv = _noisy_quantities(ops, u, w, m_op, m, normalized)
    if abs(deriv) <= 1e-12 * max(1.0, spread):
        raise VanishingSignalError("noisy signal slope vanishes", numerator=spread, denominator=deriv)
    return spread / abs(deriv)


def noise_slope(protocol, ops, eval_at: float = DEFAULT_N0, step: float = DEFAULT_STEP,
                normalized: bool = False) -> float:
    """Central difference d(Delta phi)/dN at ``eval_at``, readout fixed at the N = 0 optimum."""
    if not (0 < eval_at - step and eval_at + step < 1):
        raise InvalidArgument(f"need 0 < N0 - h and N0 + h < 1 (N0={eval_at}, h={step})")
    m = resolve_measure_angle(protocol, ops)
    hi = noisy_delta_phi(protocol, ops, DetectionNoise(eval_at + step), normalized, m)
    lo = noisy_delta_phi(protocol, ops, DetectionNoise(eval_at - step), normalized, m)
    return (hi - lo) / (2 * step)


def _log_coefficient(value, what):
    if not value > 0:
        raise NonPositiveSlopeError(f"{what} is not positive, R = -log10 undefined", value)
    return -math.log10(value)


def robustness_R(protocol, ops, eval_at: float = DEFAULT_N0, step: float = DEFAULT_STEP,
                 normalized: bool = False) -> float:
    """R = -log10(d Delta phi / dN); larger means less sensitive to detection noise."""
    return _log_coefficient(noise_slope(protocol, ops, eval_at, step, normalized), "d(Delta phi)/dN")


def semi_analytic_slope(protocol: EchoProtocol, ops: SpinOperators, complete: bool = False) -> float:
    """First-order coefficient d(Delta phi)/dN from the commutator expansion.

    Delta phi_0 * (4 - C1/C0) with C0 the slope of <S_m> and C1 the slope of
    <{M1, S_m}>, both taken with the noiseless echo.  Valid for t2 = t1.

    That expression keeps only the noise dependence of the slope.  With
    ``complete=True`` the first-order change of the (unnormalized) spread
    Delta S_m is added as well.
    """
    rev = protocol.reversal
    if not (isinstance(rev, IdealReversal) and math.isclose(rev.t2, protocol.t1, rel_tol=1e-12)):
        raise InvalidArgument("the semi-analytic form assumes an ideal reversal with t2 = t1")
    u, w = echo_vectors(protocol, ops)
    m = resolve_measure_angle(protocol, ops, u, w)
    sm = spin_component(ops, m)
    m1 = detection_operator(ops.dim, DetectionNoise(0.0)).m1
    c0 = slope(sm, u, w)
    c1 = slope(m1 @ sm + sm @ m1, u, w)
    if c0 == 0:
        raise VanishingSignalError("commutator in the denominator vanishes", numerator=c1, denominator=c0)
    a = sm @ u
    mean = np.vdot(u, a).real
    var = max(np.vdot(a, a).real - mean * mean, 0.0)
    rel = 4.0 - c1 / c0
    if complete:
        # M ~ (1 - 2N)(I + N M1) to first order
        sm2 = sm @ sm
        q2 = np.vdot(u, (m1 @ sm2 + sm2 @ m1) @ u).real
        q1 = np.vdot(u, (m1 @ sm + sm @ m1) @ u).real
        dvar = -4.0 * np.vdot(a, a).real + q2 + 8.0 * mean ** 2 - 2.0 * mean * q1
        rel += dvar / (2.0 * var)
    return math.sqrt(var) / abs(c0) * rel


def robustness_semi_analytic(protocol: EchoProtocol, ops: SpinOperators, complete: bool = False) -> float:
    return _log_coefficient(semi_analytic_slope(protocol, ops, complete), "semi-analytic slope")


def relative_robustness(
    protocol: EchoProtocol,
    ops: SpinOperators,
    noise: Optional[DetectionNoise] = None,
    step: float = DEFAULT_STEP,
    normalized: bool = False,
) -> float:
    """R(with reversal) - R(no reversal), each with its own optimal noiseless readout."""
    n0 = DEFAULT_N0 if noise is None else noise.strength
    bare = replace(protocol, reversal=NoReversal())
    return (robustness_R(protocol, ops, n0, step, normalized)
            - robustness_R(bare, ops, n0, step, normalized))
