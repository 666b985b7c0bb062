"""Shared independent oracles for the test suite.

Everything here is built by a different code path than the package under
test: Kronecker products instead of indexed placement, explicit tensor
powers instead of the recursive cascade, textbook formulas for the DFT and
Sylvester matrices.
"""

import numpy as np

SQRT_HALF = np.sqrt(0.5)


def ideal_coupler_2x2(t: float = SQRT_HALF, r: float = SQRT_HALF) -> np.ndarray:
    return np.array([[t, 1j * r], [1j * r, t]])


def oracle_stage_kron(n: int, stage: int, t: float = SQRT_HALF, r: float = SQRT_HALF) -> np.ndarray:
    """Stage matrix as I_(n/2h) (x) coupler (x) I_h with h = 2**stage."""
    h = 1 << stage
    left = np.eye(n // (2 * h))
    return np.kron(np.kron(left, ideal_coupler_2x2(t, r)), np.eye(h))


def oracle_ideal_tensor(n: int) -> np.ndarray:
    """Ideal network as the log2(n)-fold tensor power of the coupler."""
    m = np.array([[1.0]], dtype=complex)
    while m.shape[0] < n:
        m = np.kron(ideal_coupler_2x2(), m)
    return m


def oracle_sylvester(n: int) -> np.ndarray:
    """Sylvester +-1 matrix by the doubling recursion (unnormalized)."""
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def oracle_dft(n: int) -> np.ndarray:
    """DFT matrix with entries exp(-2j pi j k / n) (unnormalized)."""
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n)


def oracle_bitrev(n: int) -> list[int]:
    bits = n.bit_length() - 1
    return [int(format(i, f"0{bits}b")[::-1], 2) for i in range(n)]


def forward_power(a: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Per-port output power for unit-amplitude phase-encoded input."""
    y = np.asarray(a) @ np.exp(1j * np.asarray(phases))
    return np.abs(y) ** 2


def routed_fraction(a: np.ndarray, phases: np.ndarray, port: int) -> float:
    p = forward_power(a, phases)
    return float(p[port] / p.sum())


def gauge_fix_columns(m: np.ndarray) -> np.ndarray:
    """Scale each column so its first entry has zero phase (unit modulus kept)."""
    m = np.asarray(m, dtype=complex)
    first = m[0, :].copy()
    scale = np.where(np.abs(first) > 0, first / np.abs(first), 1.0)
    return m / scale[None, :]
