"""Collective spin operators on the symmetric (Dicke) subspace.

Basis index ``k`` in ``0..N`` labels ``|S, m>`` with ``S = N/2`` and
``m = S - k``, so index 0 is the fully polarized ``|j, j>`` state.  Ladder
operators follow the Condon-Shortley phase convention: ``Sx`` is real with
non-negative off-diagonals and ``Sy`` is purely imaginary, which makes every
LMG Hamiltonian real symmetric.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

MAX_ATOMS = 2000

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpinOperators:
    n_atoms: int
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    s_squared: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_atoms + 1

    @property
    def spin(self) -> float:
        return self.n_atoms / 2

    def vector(self, direction) -> np.ndarray:
        """n . S for a 3-vector ``n`` (not normalized here)."""
        nx, ny, nz = direction
        return nx * self.sx + ny * self.sy + nz * self.sz


@dataclass(frozen=True, eq=False)
class SpinState:
    n_atoms: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_atoms + 1,):
            raise InvalidArgument(
                f"expected {self.n_atoms + 1} amplitudes, got shape {amps.shape}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise InvalidArgument(f"state is not normalized (norm={norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_vector(cls, vec) -> "SpinState":
        """Wrap an arbitrary nonzero vector, normalizing it."""
        vec = np.asarray(vec, dtype=complex)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise InvalidArgument("zero vector cannot be normalized")
        return cls(len(vec) - 1, vec / norm)

    @property
    def dim(self) -> int:
        return self.n_atoms + 1


@functools.lru_cache(maxsize=64)
def build_operators(n_atoms: int) -> SpinOperators:
    """Sx, Sy, Sz and S^2 for N spin-1/2 particles in the symmetric subspace.

    Matrices are dense and read-only; results are cached per ``n_atoms``.
    """
    if isinstance(n_atoms, bool) or int(n_atoms) != n_atoms:
        raise InvalidArgument(f"n_atoms must be an integer, got {n_atoms!r}")
    n_atoms = int(n_atoms)
    if n_atoms < 1:
        raise InvalidArgument(f"n_atoms must be >= 1, got {n_atoms}")
    if n_atoms > MAX_ATOMS:
        raise InvalidArgument(f"n_atoms={n_atoms} exceeds the cap of {MAX_ATOMS}")

    s = n_atoms / 2
    m = s - np.arange(n_atoms + 1)
    # <m+1|S+|m> sits at row k-1, column k
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    splus = np.diag(ladder, k=1)
    sx = (splus + splus.T) / 2
    sy = (splus - splus.T) / 2j
    sz = np.diag(m).astype(float)
    casimir = sx @ sx + (sy @ sy).real + sz @ sz
    return SpinOperators(
        n_atoms=n_atoms,
        sx=_frozen(sx),
        sy=_frozen(sy),
        sz=_frozen(sz),
        s_squared=_frozen(casimir),
    )


def spin_component(ops: SpinOperators, theta: float) -> np.ndarray:
    """S_theta = Sx sin(theta) + Sz cos(theta), the x-z plane component."""
    return ops.sx * math.sin(theta) + ops.sz * math.cos(theta)


def _unit_axis(axis) -> np.ndarray:
    if isinstance(axis, str):
        try:
            return np.array(_AXES[axis.lower()])
        except KeyError:
            raise InvalidArgument(f"unknown axis {axis!r}") from None
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or not np.all(np.isfinite(n)):
        raise InvalidArgument(f"axis must be x/y/z or a finite 3-vector, got {axis!r}")
    norm = np.linalg.norm(n)
    if norm == 0:
        raise InvalidArgument("zero-length rotation axis")
    if abs(norm - 1.0) > 1e-9:
        raise InvalidArgument(f"rotation axis must be normalized (|n|={norm!r})")
    return n


@functools.lru_cache(maxsize=256)
def _axis_spectrum(n_atoms: int, axis: tuple):
    ops = build_operators(n_atoms)
    w, v = np.linalg.eigh(ops.vector(axis))
    return w, v


def rotation_matrix(ops: SpinOperators, axis, angle: float) -> np.ndarray:
    """Dense exp(-i angle n.S)."""
    n = _unit_axis(axis)
    if n[0] == 0 and n[1] == 0:
        return np.diag(np.exp(-1j * angle * n[2] * np.diag(ops.sz)))
    w, v = _axis_spectrum(ops.n_atoms, tuple(n))
    return (v * np.exp(-1j * angle * w)) @ v.conj().T


def rotate(state: SpinState, axis, angle: float) -> SpinState:
    """Apply R = exp(-i angle n.S)."""
    ops = build_operators(state.n_atoms)
    out = rotation_matrix(ops, axis, angle) @ state.amplitudes
    return SpinState(state.n_atoms, out / np.linalg.norm(out))


def top_state(n_atoms: int) -> SpinState:
    vec = np.zeros(n_atoms + 1, dtype=complex)
    vec[0] = 1.0
    return SpinState(n_atoms, vec)


def css(ops: SpinOperators, polar: float, azimuth: float) -> SpinState:
    """Coherent spin state exp(i polar (Sx sin(azimuth) - Sy cos(azimuth))) |j, j>.

    The mean spin points along (sin p cos a, sin p sin a, cos p).
    """
    if not (math.isfinite(polar) and math.isfinite(azimuth)):
        raise InvalidArgument("CSS angles must be finite")
    # exp(i p (Sx sin a - Sy cos a)) = exp(-i p n.S) with n = (-sin a, cos a, 0)
    axis = (-math.sin(azimuth), math.cos(azimuth), 0.0)
    return rotate(top_state(ops.n_atoms), axis, polar)


@functools.lru_cache(maxsize=64)
def _y_state_cached(n_atoms: int, pole: int) -> SpinState:
    ops = build_operators(n_atoms)
    return css(ops, math.pi / 2, pole * math.pi / 2)


def y_state(ops: SpinOperators, pole: int = 1) -> SpinState:
    """The CSS along +y (``pole=1``) or -y (``pole=-1``)."""
    if pole not in (1, -1):
        raise InvalidArgument("pole must be +1 or -1")
    return _y_state_cached(ops.n_atoms, pole)


def check_hermitian(matrix, tol: float = 1e-10) -> np.ndarray:
    h = np.asarray(matrix)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    if np.max(np.abs(h - h.conj().T), initial=0.0) > tol * scale:
        raise InvalidArgument("matrix is not Hermitian within tolerance")
    return h


class Propagator:
    """Spectral decomposition of a Hermitian generator, reused across times.

    ``apply(vectors, t)`` returns exp(-i H t) applied to a vector or to the
    columns of a 2-D array.  Instances are immutable after construction, so
    they can be shared between threads.
    """

    def __init__(self, hamiltonian):
        h = check_hermitian(hamiltonian)
        if np.iscomplexobj(h) and np.max(np.abs(h.imag), initial=0.0) == 0:
            h = h.real
        self.dim = h.shape[0]
        self.energies, self.vectors = np.linalg.eigh(h)
        self._vh = self.vectors.conj().T

    def to_eigenbasis(self, vecs):
        return self._vh @ vecs

    def from_eigenbasis(self, coeffs, t: float):
        phase = np.exp(-1j * self.energies * t)
        if coeffs.ndim == 1:
            return self.vectors @ (phase * coeffs)
        return self.vectors @ (phase[:, None] * coeffs)

    def apply(self, vecs, t: float):
        vecs = np.asarray(vecs)
        if vecs.shape[0] != self.dim:
            raise InvalidArgument(
                f"dimension mismatch: generator is {self.dim}, vector is {vecs.shape[0]}"
            )
        if t == 0:
            return np.array(vecs, dtype=complex)
        return self.from_eigenbasis(self.to_eigenbasis(vecs), t)

    def unitary(self, t: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.energies * t)) @ self._vh


def evolve(state: SpinState, hamiltonian, t: float) -> SpinState:
    """exp(-i H t)|psi>.

    ``hamiltonian`` may be a matrix or a prebuilt :class:`Propagator`.
    """
    prop = hamiltonian if isinstance(hamiltonian, Propagator) else Propagator(hamiltonian)
    if prop.dim != state.dim:
        raise InvalidArgument(
            f"dimension mismatch: Hamiltonian is {prop.dim}, state is {state.dim}"
        )
    out = prop.apply(state.amplitudes, t)
    return SpinState(state.n_atoms, out / np.linalg.norm(out))


def _amps(state):
    return state.amplitudes if isinstance(state, SpinState) else np.asarray(state)


def expectation(state, op) -> float:
    psi = _amps(state)
    op = np.asarray(op)
    if op.shape != (len(psi), len(psi)):
        raise InvalidArgument(f"operator shape {op.shape} does not match state dim {len(psi)}")
    value = np.vdot(psi, op @ psi)
    scale = max(1.0, abs(value.real))
    if abs(value.imag) > 1e-10 * scale:
        raise InvalidArgument(f"expectation has imaginary part {value.imag!r}; operator not Hermitian?")
    return float(value.real)


def variance(state, op) -> float:
    psi = _amps(state)
    op = np.asarray(op)
    if op.shape != (len(psi), len(psi)):
        raise InvalidArgument(f"operator shape {op.shape} does not match state dim {len(psi)}")
    a_psi = op @ psi
    mean = np.vdot(psi, a_psi).real
    second = np.vdot(a_psi, a_psi).real
    var = second - mean * mean
    if var < -1e-12 * max(1.0, second):
        raise InvalidArgument(f"negative variance {var!r}")
    return max(float(var), 0.0)


def fidelity(a, b) -> float:
    """|<a|b>|^2; global phase never matters."""
    return float(abs(np.vdot(_amps(a), _amps(b))) ** 2)


def plane_moments(ops: SpinOperators, psi) -> tuple[np.ndarray, np.ndarray]:
    """Means and symmetrized covariance of (Sx, Sz) in a pure state.

    Var(S_theta) = v^T C v with v = (sin theta, cos theta).
    """
    psi = _amps(psi)
    ax = ops.sx @ psi
    az = ops.sz @ psi
    mean = np.array([np.vdot(psi, ax).real, np.vdot(psi, az).real])
    cxx = np.vdot(ax, ax).real
    czz = np.vdot(az, az).real
    cxz = np.vdot(ax, az).real  # Re<SxSz> = <{Sx,Sz}>/2
    cov = np.array([[cxx, cxz], [cxz, czz]]) - np.outer(mean, mean)
    return mean, cov


def spin_covariance(ops: SpinOperators, psi) -> tuple[np.ndarray, np.ndarray]:
    """Full 3x3 symmetrized covariance of (Sx, Sy, Sz)."""
    psi = _amps(psi)
    a = np.stack([ops.sx @ psi, ops.sy @ psi, ops.sz @ psi])
    mean = np.array([np.vdot(psi, row).real for row in a])
    second = (a.conj() @ a.T).real
    return mean, second - np.outer(mean, mean)
