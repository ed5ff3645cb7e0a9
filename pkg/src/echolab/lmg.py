"""LMG Hamiltonians, quantum Fisher information and squeezing-time searches."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, SearchError
from .search import maximize_angle, refine_max
from .spin import (
    Propagator,
    SpinOperators,
    SpinState,
    build_operators,
    plane_moments,
    spin_covariance,
    variance,
    y_state,
)

DEFAULT_WINDOW = (0.25, 3.0)
# squeezing-time scan: log grid from 1e-4/chi up to the OAT GHZ time pi/(2 chi)
_TBS_SCAN = (1e-4, math.pi, 900)


@dataclass(frozen=True)
class LmgParams:
    chi: float
    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.chi) or self.chi == 0:
            raise InvalidArgument(f"chi must be finite and nonzero, got {self.chi!r}")
        if not (0.0 <= self.gamma <= 0.5):
            raise InvalidArgument(f"gamma={self.gamma!r} outside 0 <= gamma <= 0.5")

    def reversed(self) -> "LmgParams":
        return LmgParams(-self.chi, self.gamma)


@dataclass(frozen=True)
class SqueezeSearchResult:
    gamma: float
    t1: float
    qfi_max: float
    window: tuple[float, float]
    t_bs: float = float("nan")


def lmg_hamiltonian(ops: SpinOperators, params: LmgParams) -> np.ndarray:
    """H = chi (Sx^2 + gamma Sy^2), real symmetric and pentadiagonal."""
    sy2 = (ops.sy @ ops.sy).real
    return params.chi * (ops.sx @ ops.sx + params.gamma * sy2)


@functools.lru_cache(maxsize=256)
def propagator(n_atoms: int, chi: float, gamma: float) -> Propagator:
    """Cached spectral propagator for H_LMG(chi, gamma)."""
    ops = build_operators(n_atoms)
    return Propagator(lmg_hamiltonian(ops, LmgParams(chi, gamma)))


def lmg_propagator(ops: SpinOperators, params: LmgParams) -> Propagator:
    return propagator(ops.n_atoms, float(params.chi), float(params.gamma))


def squeezed_state(ops: SpinOperators, params: LmgParams, t: float, pole: int = 1) -> np.ndarray:
    """Amplitudes of exp(-i H t)|+-y>."""
    return lmg_propagator(ops, params).apply(y_state(ops, pole).amplitudes, t)


# -- quantum Fisher information ---------------------------------------------


def _generator(state_or_ops, direction):
    if isinstance(direction, np.ndarray) and direction.ndim == 2:
        return direction
    n = np.asarray(direction, dtype=float)
    if n.shape != (3,):
        raise InvalidArgument("direction must be a unit 3-vector or a Hermitian matrix")
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise InvalidArgument(f"generator direction must be a unit vector (|n|={np.linalg.norm(n)!r})")
    return build_operators(state_or_ops.n_atoms).vector(n)


def qfi_pure(state: SpinState, generator_direction) -> float:
    """F = 4 Var(S_n) for a pure state and unitary encoding about ``n``."""
    gen = _generator(state, generator_direction)
    return 4.0 * variance(state, gen)


def qfi_general(density, generator=None, *, derivative=None, tol: float = 1e-12) -> float:
    """Spectral QFI of a density matrix.

    F = sum_{q_k + q_l > 0} 2 |<k| d rho |l>|^2 / (q_k + q_l).  The derivative
    defaults to the unitary family d rho = -i [G, rho].
    """
    rho = np.asarray(density, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidArgument("density must be a square matrix")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise InvalidArgument("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-9:
        raise InvalidArgument(f"density trace is {np.trace(rho).real!r}, not 1")
    q, vecs = np.linalg.eigh(rho)
    if q.min() < -1e-9:
        raise InvalidArgument(f"density matrix is not PSD (min eigenvalue {q.min()!r})")
    q = np.clip(q, 0.0, None)
    if derivative is None:
        if generator is None:
            raise InvalidArgument("pass either generator or derivative")
        g = vecs.conj().T @ np.asarray(generator) @ vecs
        # <k| -i[G, rho] |l> = -i (q_l - q_k) G_kl
        d = -1j * (q[None, :] - q[:, None]) * g
    else:
        d = vecs.conj().T @ np.asarray(derivative) @ vecs
    denom = q[:, None] + q[None, :]
    mask = denom > tol
    return float(np.sum(2.0 * np.abs(d[mask]) ** 2 / denom[mask]))


def max_qfi(ops: SpinOperators, psi, full_sphere: bool = False) -> tuple[float, np.ndarray]:
    """Largest 4 Var(S_n) over directions, and the maximizing unit vector.

    By default the search covers the x-z plane (grid + parabolic refinement)
    plus the y axis; ``full_sphere`` uses the exact 3x3 covariance spectrum.
    """
    if full_sphere:
        _, cov = spin_covariance(ops, psi)
        w, v = np.linalg.eigh(cov)
        return 4.0 * float(w[-1]), v[:, -1]
    _, cov = plane_moments(ops, psi)
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    theta, best = maximize_angle(
        lambda t: a * np.sin(t) ** 2 + 2 * b * np.sin(t) * np.cos(t) + c * np.cos(t) ** 2
    )
    n = np.array([math.sin(theta), 0.0, math.cos(theta)])
    var_y = variance(psi, ops.sy)
    if var_y > best:
        return 4.0 * var_y, np.array([0.0, 1.0, 0.0])
    return 4.0 * best, n


# -- squeezing-time searches -------------------------------------------------


def min_plane_variance(ops: SpinOperators, psi) -> float:
    """min over theta of Var(S_theta): smaller eigenvalue of the x-z covariance."""
    _, cov = plane_moments(ops, psi)
    return float(np.linalg.eigvalsh(cov)[0])


def find_best_squeezing_time(ops: SpinOperators, params: LmgParams, scan=_TBS_SCAN) -> float:
    """Time of the first minimum of min_theta Var(S_theta) after evolving |+y>.

    Log-spaced coarse scan, then bounded golden/parabolic refinement to well
    below 1e-4/chi.  Raises :class:`SearchError` when the scan has no
    interior minimum.
    """
    chi = abs(params.chi)
    lo, hi, n = scan
    ts = np.geomspace(lo, hi, n) / chi
    prop = lmg_propagator(ops, params)
    c0 = prop.to_eigenbasis(y_state(ops).amplitudes)

    def objective(t):
        return min_plane_variance(ops, prop.from_eigenbasis(c0, t))

    vals = np.array([objective(t) for t in ts])
    interior = np.flatnonzero((vals[1:-1] < vals[:-2]) & (vals[1:-1] <= vals[2:])) + 1
    # only genuine dips below the CSS value N/4 count (N = 1 never squeezes)
    interior = interior[vals[interior] < (1 - 1e-9) * ops.n_atoms / 4]
    if len(interior) == 0:
        raise SearchError(
            f"no interior squeezing minimum for N={ops.n_atoms}, gamma={params.gamma} "
            f"in t in [{ts[0]:.3g}, {ts[-1]:.3g}]"
        )
    i = int(interior[0])
    t, _, _ = refine_max(lambda t: -objective(t), ts[i - 1:i + 2], -vals[i - 1:i + 2],
                         xatol=1e-7 / chi)
    return t


def _qfi_at(ops, prop, c0, t, full_sphere):
    return max_qfi(ops, prop.from_eigenbasis(c0, t), full_sphere)[0]


def optimize_t1(
    ops: SpinOperators,
    params: LmgParams,
    window_factor=DEFAULT_WINDOW,
    n_grid: int = 200,
    full_sphere: bool = False,
) -> SqueezeSearchResult:
    """Squeezing time maximizing the QFI within ``window_factor`` x t_bs."""
    w_lo, w_hi = window_factor
    if not (0 <= w_lo < w_hi):
        raise InvalidArgument(f"degenerate window factor {window_factor!r}")
    t_bs = find_best_squeezing_time(ops, params)
    ts = np.linspace(w_lo * t_bs, w_hi * t_bs, n_grid)
    prop = lmg_propagator(ops, params)
    c0 = prop.to_eigenbasis(y_state(ops).amplitudes)
    qs = np.array([_qfi_at(ops, prop, c0, t, full_sphere) for t in ts])
    t1, q, _ = refine_max(lambda t: _qfi_at(ops, prop, c0, t, full_sphere), ts, qs,
                          xatol=1e-6 / abs(params.chi))
    return SqueezeSearchResult(
        gamma=params.gamma, t1=t1, qfi_max=q, window=(float(ts[0]), float(ts[-1])), t_bs=t_bs
    )


@functools.lru_cache(maxsize=512)
def optimal_t1(n_atoms: int, chi: float, gamma: float,
               window_factor=DEFAULT_WINDOW) -> SqueezeSearchResult:
    """Memoized :func:`optimize_t1` with default resolution."""
    return optimize_t1(build_operators(n_atoms), LmgParams(chi, gamma), window_factor)


def gamma_grid(start: float = 0.0, stop: float = 0.5, step: float = 0.02) -> np.ndarray:
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 12)
