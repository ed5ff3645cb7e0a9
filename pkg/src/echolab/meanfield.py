"""Linearized mean-field motion of the encoded displacement.

Around the CSS with <Sy> = S, the small components x = <Sx>, z = <Sz> obey

    dx/dt = 2 chi gamma S z,    dz/dt = 2 chi (1 - gamma) S x,

which mixes a growing and a decaying exponential at rate
2 chi S sqrt(gamma (1 - gamma)).  The initial displacement is taken as
S phi (sin theta, cos theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateRateError, InvalidArgument
from .lmg import LmgParams, lmg_propagator
from .search import maximize_angle
from .spin import build_operators, rotation_matrix, y_state


@dataclass(frozen=True)
class MeanFieldTrajectory:
    """Closed-form solution; x = A e^{rt} + B e^{-rt}, z = C e^{rt} + D e^{-rt}."""

    gamma: float
    chi: float
    S: float
    theta: float
    phi: float
    rate: float
    A: float
    B: float
    C: float
    D: float

    @property
    def growth_rate(self) -> float:
        return abs(self.rate)

    def at(self, t):
        t = np.asarray(t, dtype=float)
        up, down = np.exp(self.rate * t), np.exp(-self.rate * t)
        return self.A * up + self.B * down, self.C * up + self.D * down

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        up, down = np.exp(self.rate * t), np.exp(-self.rate * t)
        r = self.rate
        return r * (self.A * up - self.B * down), r * (self.C * up - self.D * down)


def _rhs(gamma, chi, S):
    a = 2 * chi * gamma * S
    b = 2 * chi * (1 - gamma) * S
    return lambda _t, y: [a * y[1], b * y[0]]


def mean_field(gamma: float, chi: float, S: float, theta: float, phi: float) -> MeanFieldTrajectory:
    if not (0 < gamma < 1):
        raise DegenerateRateError(
            f"closed form needs 0 < gamma < 1 (got {gamma!r}); integrate with mf_ode instead"
        )
    rate = 2 * chi * S * math.sqrt(gamma * (1 - gamma))
    k = math.sqrt(gamma / (1 - gamma))
    h = S * phi / 2
    s, c = np.sin(theta), np.cos(theta)
    return MeanFieldTrajectory(
        gamma=gamma, chi=chi, S=S, theta=theta, phi=phi, rate=rate,
        A=h * (s + k * c), B=h * (s - k * c),
        C=h * (s / k + c), D=-h * (s / k - c),
    )


def mf_closed_form(gamma, chi, S, theta, phi, t):
    """(x, z) at time(s) ``t`` from the two-exponential closed form."""
    return mean_field(gamma, chi, S, theta, phi).at(t)


def mf_ode(gamma, chi, S, theta, phi, t_grid, rtol: float = 1e-10) -> np.ndarray:
    """Integrate the linear system (DOP853); rows are (x, z) at each time in ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise InvalidArgument("t_grid must be a nonempty 1-D array")
    if t_grid.min() < 0:
        raise InvalidArgument("t_grid must be >= 0")
    y0 = [S * phi * math.sin(theta), S * phi * math.cos(theta)]
    t_end = float(t_grid.max())
    if t_end == 0:
        return np.tile(y0, (len(t_grid), 1))
    atol = rtol * 1e-4 * max(abs(S * phi), 1e-300)
    sol = solve_ivp(_rhs(gamma, chi, S), (0.0, t_end), y0, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    return sol.sol(t_grid).T


def conserved_quantity(gamma, x, z):
    """(1 - gamma) x^2 - gamma z^2, invariant along the linearized flow."""
    return (1 - gamma) * np.asarray(x) ** 2 - gamma * np.asarray(z) ** 2


def mf_theta_r(gamma: float) -> float:
    """Robustness-optimal encoding angle arcsin(sqrt(gamma))."""
    if not (0 <= gamma <= 1):
        raise InvalidArgument("gamma must lie in [0, 1]")
    return math.asin(math.sqrt(gamma))


def growth_coefficient(gamma: float, theta):
    """(sqrt g + (1-g)/sqrt g) sin theta + (sqrt(1-g) + g/sqrt(1-g)) cos theta.

    This prefactor of the growing distance sqrt(x^2 + z^2) is taken verbatim.
    Note that it simplifies to sin theta/sqrt g + cos theta/sqrt(1-g), whose
    maximum sits at arccos(sqrt g), not arcsin(sqrt g), unless g = 1/2.
    """
    if not (0 < gamma < 1):
        raise DegenerateRateError("growth coefficient needs 0 < gamma < 1")
    sg, sc = math.sqrt(gamma), math.sqrt(1 - gamma)
    theta = np.asarray(theta, dtype=float)
    return (sg + (1 - gamma) / sg) * np.sin(theta) + (sc + gamma / sc) * np.cos(theta)


def growth_argmax(gamma: float) -> float:
    """Independent 1-D maximization of :func:`growth_coefficient` over [0, pi)."""
    theta, _ = maximize_angle(lambda t: growth_coefficient(gamma, t), step=1e-4)
    return theta


def distance(gamma, chi, S, theta, phi, t):
    x, z = mf_closed_form(gamma, chi, S, theta, phi, t)
    return np.hypot(x, z)


def encoded_displacement(theta: float) -> tuple[float, float]:
    """Unit (x, z) kick that exp(-i phi S_theta) gives the CSS along +y."""
    return -math.cos(theta), math.sin(theta)


def physical_growth_amplitude(gamma: float, theta, reverse: bool = True):
    """Overlap of the physical kick with the growing mode of the (reversed) flow.

    For the reversed flow (chi < 0) its magnitude peaks at arcsin(sqrt g).
    """
    theta = np.asarray(theta, dtype=float)
    sign = -1.0 if reverse else 1.0
    # left eigenvector of the growing mode, proportional to (sqrt(1-g), sign*sqrt(g))
    return np.sqrt(1 - gamma) * -np.cos(theta) + sign * math.sqrt(gamma) * np.sin(theta)


def physical_theta_r(gamma: float) -> float:
    theta, _ = maximize_angle(lambda t: np.abs(physical_growth_amplitude(gamma, t)), step=1e-4)
    return theta


def quantum_displacement(n_atoms: int, gamma: float, chi: float, theta: float, phi: float,
                         times) -> np.ndarray:
    """Exact (<Sx>, <Sz>) after a kick S phi (sin theta, cos theta) on |+y> and evolution.

    The kick is realized as exp(-i phi S_{theta + pi/2}).
    """
    ops = build_operators(n_atoms)
    axis = theta + math.pi / 2
    kick = rotation_matrix(ops, (math.sin(axis), 0.0, math.cos(axis)), phi)
    psi0 = kick @ y_state(ops).amplitudes
    prop = lmg_propagator(ops, LmgParams(chi, gamma))
    coeffs = prop.to_eigenbasis(psi0)
    out = []
    for t in np.atleast_1d(times):
        psi = prop.from_eigenbasis(coeffs, float(t))
        out.append((np.vdot(psi, ops.sx @ psi).real, np.vdot(psi, ops.sz @ psi).real))
    return np.array(out)
