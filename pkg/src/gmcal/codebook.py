"""Codebook extraction and verification.

The codebook of an n-port network is the set of n input phase profiles that
each steer all power to a single output port: the columns of ``H = A^-1 X0``
with ``X0 = sqrt(n) * I``.  For lossless networks the columns of ``H`` have
unit-modulus entries and are mutually orthogonal, so every codeword can be
realized with phase-only modulation.  For unbalanced (t != r) couplers the
inversion still succeeds but the entries drift away from unit modulus; the
per-codeword deviation is reported and only the phase part is kept.

A constant phase added to a whole codeword is unobservable, so codewords are
gauge-normalized: the first element's phase is zero and the rest are wrapped
to [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAU = 2.0 * math.pi


class SingularMatrixError(ValueError):
    """Transfer matrix is singular or too ill-conditioned to invert."""


def wrap_angle(x: np.ndarray | float) -> np.ndarray | float:
    """Wrap angles to [-pi, pi)."""
    return (np.asarray(x) + math.pi) % TAU - math.pi


def gauge_normalize(phases: np.ndarray) -> np.ndarray:
    """Shift a phase vector so its first element is zero, wrapped to [-pi, pi)."""
    phases = np.asarray(phases, dtype=float)
    return wrap_angle(phases - phases[0])


@dataclass
class Codeword:
    """Phase profile steering all power to ``target_port`` (unit amplitudes implied)."""

    phases: np.ndarray
    target_port: int

    def __post_init__(self) -> None:
        self.phases = np.asarray(self.phases, dtype=float)

    def field(self) -> np.ndarray:
        return np.exp(1j * self.phases)


@dataclass
class Codebook:
    """All n codewords of a device plus the expected output-field scale sqrt(n)."""

    n: int
    output_scale: float
    codewords: list[Codeword]
    amplitude_deviation: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.amplitude_deviation is None:
            self.amplitude_deviation = np.zeros(len(self.codewords))
        self.amplitude_deviation = np.asarray(self.amplitude_deviation, dtype=float)

    def phase_matrix(self) -> np.ndarray:
        """Codeword phases as columns of an n x n array."""
        return np.column_stack([cw.phases for cw in self.codewords])

    def field_matrix(self) -> np.ndarray:
        """Unit-modulus codeword fields as columns."""
        return np.exp(1j * self.phase_matrix())

    def gram(self) -> np.ndarray:
        """F†F of the codeword fields; n*I for a mutually orthogonal codebook."""
        f = self.field_matrix()
        return f.conj().T @ f

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "output_scale": float(self.output_scale),
            "codewords": [
                {
                    "target_port": int(cw.target_port),
                    "phases_rad": [float(p) for p in cw.phases],
                }
                for cw in self.codewords
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Codebook":
        codewords = [
            Codeword(np.asarray(cw["phases_rad"], dtype=float), int(cw["target_port"]))
            for cw in data["codewords"]
        ]
        return cls(n=int(data["n"]), output_scale=float(data["output_scale"]), codewords=codewords)


def extract_codebook(a: np.ndarray, cond_limit: float = 1e8) -> Codebook:
    """Invert a transfer matrix into its codebook.

    Column k of ``A^-1 sqrt(n) I``, fed into the device as a field, produces
    the output ``sqrt(n) e_k`` exactly.  Codewords are gauge-normalized; the
    per-column max deviation of ``|entry|`` from 1 is kept so callers can see
    how far a lossy/unbalanced device is from a phase-only codebook.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"transfer matrix must be square, got {a.shape}")
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond >= cond_limit:
        raise SingularMatrixError(f"matrix condition number {cond:.3g} exceeds {cond_limit:.3g}")
    h = np.linalg.inv(a) * math.sqrt(n)
    codewords = []
    deviations = np.zeros(n)
    for k in range(n):
        col = h[:, k]
        deviations[k] = float(np.max(np.abs(np.abs(col) - 1.0)))
        codewords.append(Codeword(gauge_normalize(np.angle(col)), k))
    return Codebook(n=n, output_scale=math.sqrt(n), codewords=codewords, amplitude_deviation=deviations)


def verify_codebook(cb: Codebook, a: np.ndarray) -> np.ndarray:
    """Routed-power fraction at each codeword's target port under forward propagation."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (cb.n, cb.n):
        raise ValueError(f"matrix shape {a.shape} does not match codebook size {cb.n}")
    fractions = np.zeros(cb.n)
    for i, cw in enumerate(cb.codewords):
        y = a @ cw.field()
        power = y.real**2 + y.imag**2
        fractions[i] = float(power[cw.target_port] / power.sum())
    return fractions


def codeword_distance(cw1: Codeword | np.ndarray, cw2: Codeword | np.ndarray) -> float:
    """Gauge-invariant distance between two codewords.

    Minimizes the L2 norm of the wrapped elementwise phase differences over
    the relative global phase: candidate gauges are each element's own offset,
    each refined once by the mean residual of its wrap configuration (the
    closed-form optimum while no element re-wraps).  Zero iff the codewords
    are equal up to a global phase.
    """
    p1 = cw1.phases if isinstance(cw1, Codeword) else np.asarray(cw1, dtype=float)
    p2 = cw2.phases if isinstance(cw2, Codeword) else np.asarray(cw2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError(f"codeword lengths differ: {p1.shape} vs {p2.shape}")
    delta = wrap_angle(p1 - p2)
    best = math.inf
    for psi0 in delta:
        refined = psi0 + float(np.mean(wrap_angle(delta - psi0)))
        for psi in (psi0, refined):
            d = float(np.linalg.norm(wrap_angle(delta - psi)))
            if d < best:
                best = d
    return best
