"""Brute-force 2^N tensor-product reference for small N."""

import itertools
import math

import numpy as np
from scipy.linalg import expm

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def collective(n, axis):
    """Sum over sites of the spin-1/2 operator on the full 2^n space."""
    total = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for site in range(n):
        mats = [np.eye(2)] * n
        mats[site] = PAULI[axis]
        op = mats[0]
        for m in mats[1:]:
            op = np.kron(op, m)
        total += op
    return total


def dicke_basis(n):
    """Columns |S, S - k>, k = 0..n: normalized symmetric states with k spins down."""
    basis = np.zeros((2 ** n, n + 1), dtype=complex)
    for bits in itertools.product((0, 1), repeat=n):
        k = sum(bits)
        idx = int("".join(map(str, bits)), 2) if n else 0
        basis[idx, k] = 1.0
    return basis / np.sqrt([math.comb(n, k) for k in range(n + 1)])


def product_state(n, polar, azimuth):
    single = np.array([math.cos(polar / 2), math.sin(polar / 2) * np.exp(1j * azimuth)])
    out = single
    for _ in range(n - 1):
        out = np.kron(out, single)
    return out


def evolve(h, psi, t):
    return expm(-1j * h * t) @ psi
