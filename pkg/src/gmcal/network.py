"""Transfer matrices for FFT-butterfly optical networks.

A network of ``n = 2**k`` ports is a cascade of ``k`` directional-coupler
stages with diagonal phase layers in between.  Stage ``s`` (0-indexed from the
input side) couples port pairs ``(p, p + 2**s)`` inside blocks of ``2**(s+1)``
-- the radix-2 butterfly data flow.  The full cascade is::

    A = L[k] @ S[k-1] @ L[k-1] @ ... @ S[0] @ L[0] @ W

where ``L[j] = diag(exp(1j * layers[j]))``, ``S[s]`` is the stage-``s``
coupler block, and ``W`` is the input wiring (identity for all flavors except
``butler``, whose DFT butterfly needs bit-reversed input ordering in place of
internal waveguide crossings).

With every coupler at ``t = r = sqrt(2)/2`` and all layers zero the cascade
evaluates to the ideal "Green Machine" matrix, whose entries all have modulus
``1/sqrt(n)``.  The Hadamard and Butler flavors differ only in their phase
layers: folding a quadrature phase onto each coupler turns it into the real
two-port Hadamard transform, and adding the standard decimation-in-time
twiddle angles between stages turns the Hadamard cascade into the DFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi

FLAVORS = ("ideal", "hadamard", "butler", "custom")


def port_stages(n: int) -> int:
    """Number of coupler stages (log2 n); raises for invalid port counts."""
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"port count must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


@dataclass(frozen=True)
class CouplerSpec:
    """Directional coupler with field transmission ``t`` and reflection ``r``.

    Lossless couplers satisfy ``t**2 + r**2 == 1``; the ideal 50/50 splitter
    has ``t = r = sqrt(2)/2``.  Unequal but lossless coefficients keep the
    network unitary; ``t**2 + r**2 != 1`` scales the columns away from unit
    norm.
    """

    t: float
    r: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.t <= 1.0 and 0.0 <= self.r <= 1.0):
            raise ValueError(
                f"coupler coefficients must lie in [0, 1], got t={self.t}, r={self.r}"
            )

    @classmethod
    def lossless(cls, t: float) -> "CouplerSpec":
        """Coupler with ``r`` chosen so that ``t**2 + r**2 == 1``."""
        return cls(t, math.sqrt(max(0.0, 1.0 - t * t)))

    @classmethod
    def from_power_split(cls, split: float) -> "CouplerSpec":
        """Lossless coupler transmitting the given power fraction."""
        if not 0.0 <= split <= 1.0:
            raise ValueError(f"power split must lie in [0, 1], got {split}")
        return cls(math.sqrt(split), math.sqrt(1.0 - split))

    def is_lossless(self, tol: float = 1e-12) -> bool:
        return abs(self.t * self.t + self.r * self.r - 1.0) < tol

    def matrix(self) -> np.ndarray:
        return np.array([[self.t, 1j * self.r], [1j * self.r, self.t]])


IDEAL_COUPLER = CouplerSpec(math.sqrt(0.5), math.sqrt(0.5))


def coupler_matrix(spec: CouplerSpec) -> np.ndarray:
    """2x2 transfer matrix ``[[t, ir], [ir, t]]`` of a directional coupler."""
    return spec.matrix()


def butterfly_pairs(n: int, stage: int) -> list[tuple[int, int]]:
    """Port pairs ``(p, p + 2**stage)`` coupled by a stage, ascending in ``p``."""
    k = port_stages(n)
    if not 0 <= stage < k:
        raise ValueError(f"stage must lie in [0, {k}), got {stage}")
    h = 1 << stage
    return [(b + o, b + o + h) for b in range(0, n, 2 * h) for o in range(h)]


def stage_matrix(n: int, stage: int, couplers: list[CouplerSpec] | None = None) -> np.ndarray:
    """n x n matrix of one coupler stage (n/2 independent 2x2 couplers)."""
    pairs = butterfly_pairs(n, stage)
    if couplers is None:
        couplers = [IDEAL_COUPLER] * len(pairs)
    if len(couplers) != len(pairs):
        raise ValueError(f"stage {stage} needs {len(pairs)} couplers, got {len(couplers)}")
    m = np.zeros((n, n), dtype=complex)
    for (p, q), c in zip(pairs, couplers):
        m[p, p] = m[q, q] = c.t
        m[p, q] = m[q, p] = 1j * c.r
    return m


def bit_reversal(n: int) -> np.ndarray:
    """Index array mapping each port to its bit-reversed counterpart."""
    k = port_stages(n)
    rev = np.zeros(n, dtype=int)
    for i in range(n):
        b = i
        out = 0
        for _ in range(k):
            out = (out << 1) | (b & 1)
            b >>= 1
        rev[i] = out
    return rev


@dataclass
class NetworkSpec:
    """Structural description of one butterfly network.

    ``couplers`` holds one list of n/2 CouplerSpec per stage (input stage
    first); ``layers`` holds k+1 phase-angle vectors in radians: one before
    the first stage, one per inter-stage gap, one after the last stage.
    Missing fields default to ideal couplers and zero phases.  The ``butler``
    flavor additionally implies bit-reversed input wiring.
    """

    n: int
    flavor: str = "custom"
    couplers: list[list[CouplerSpec]] | None = None
    layers: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        k = port_stages(self.n)
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}, got {self.flavor!r}")
        if self.couplers is None:
            self.couplers = [[IDEAL_COUPLER] * (self.n // 2) for _ in range(k)]
        if self.layers is None:
            self.layers = [np.zeros(self.n) for _ in range(k + 1)]
        self.layers = [np.asarray(layer, dtype=float) for layer in self.layers]
        if len(self.couplers) != k or any(len(cs) != self.n // 2 for cs in self.couplers):
            raise ValueError(f"expected {k} stages of {self.n // 2} couplers each")
        if len(self.layers) != k + 1 or any(layer.shape != (self.n,) for layer in self.layers):
            raise ValueError(f"expected {k + 1} phase layers of length {self.n}")

    @property
    def stages(self) -> int:
        return len(self.couplers)

    def copy(self) -> "NetworkSpec":
        return NetworkSpec(
            n=self.n,
            flavor=self.flavor,
            couplers=[list(cs) for cs in self.couplers],
            layers=[layer.copy() for layer in self.layers],
        )

    def is_lossless(self, tol: float = 1e-12) -> bool:
        return all(c.is_lossless(tol) for cs in self.couplers for c in cs)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "flavor": self.flavor,
            "phase_layers": [[float(a) for a in layer] for layer in self.layers],
            "couplers": [
                [{"t": float(c.t), "r": float(c.r)} for c in cs] for cs in self.couplers
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "NetworkSpec":
        return cls(
            n=int(data["n"]),
            flavor=str(data["flavor"]),
            couplers=[
                [CouplerSpec(float(c["t"]), float(c["r"])) for c in cs]
                for cs in data["couplers"]
            ],
            layers=[np.asarray(layer, dtype=float) for layer in data["phase_layers"]],
        )


def _hadamard_layers(n: int) -> list[np.ndarray]:
    # Fold diag(i, 1) input / diag(-i, -1) output phases onto every coupler,
    # which turns each symmetric coupler into the real +-1 two-port transform.
    k = port_stages(n)
    layers = [np.zeros(n) for _ in range(k + 1)]
    for s in range(k):
        for p, q in butterfly_pairs(n, s):
            layers[s][p] += math.pi / 2
            layers[s + 1][p] += -math.pi / 2
            layers[s + 1][q] += math.pi
    return layers


def ideal_spec(n: int) -> NetworkSpec:
    """All-ideal couplers, no phase layers."""
    return NetworkSpec(n, "ideal")


def hadamard_spec(n: int) -> NetworkSpec:
    """Phase layers that make the cascade evaluate to the Sylvester Hadamard matrix / sqrt(n)."""
    return NetworkSpec(n, "hadamard", layers=_hadamard_layers(n))


def butler_spec(n: int) -> NetworkSpec:
    """Hadamard layers plus decimation-in-time twiddle angles: the DFT cascade.

    For n >= 4 the cascade (with its bit-reversed input wiring) evaluates to
    the DFT matrix / sqrt(n), whose inverse is the familiar beamforming
    codebook with inter-element phase progressions of 2*pi*k/n.  The 2-port
    Butler network conventionally uses a quadrature hybrid, which adds one
    extra quarter-wave input phase on the second port.
    """
    k = port_stages(n)
    layers = _hadamard_layers(n)
    for s in range(k):
        h = 1 << s
        for p, q in butterfly_pairs(n, s):
            o = p % (2 * h)
            layers[s][q] += -TAU * o / (2 * h)
    if n == 2:
        layers[0][1] += math.pi / 2
    return NetworkSpec(n, "butler", layers=layers)


def transfer_matrix(spec: NetworkSpec) -> np.ndarray:
    """Evaluate a NetworkSpec to its n x n complex transfer matrix."""
    n = spec.n
    if spec.flavor == "butler":
        m = np.eye(n, dtype=complex)[bit_reversal(n)]
    else:
        m = np.eye(n, dtype=complex)
    m = np.exp(1j * spec.layers[0])[:, None] * m
    for s in range(spec.stages):
        m = stage_matrix(n, s, spec.couplers[s]) @ m
        m = np.exp(1j * spec.layers[s + 1])[:, None] * m
    return m


def build_ideal(n: int) -> np.ndarray:
    """Ideal n-port network: every entry has modulus 1/sqrt(n)."""
    return transfer_matrix(ideal_spec(n))


def build_hadamard(n: int) -> np.ndarray:
    """Hadamard n-port network: the real Sylvester matrix / sqrt(n)."""
    return transfer_matrix(hadamard_spec(n))


def build_butler(n: int) -> np.ndarray:
    """Butler n-port network: DFT-matrix cascade (quadrature form at n=2)."""
    return transfer_matrix(butler_spec(n))


def build_with_errors(
    base: NetworkSpec,
    error_layers: list[np.ndarray],
    couplers: list[list[CouplerSpec]] | None = None,
) -> np.ndarray:
    """Evaluate ``base`` with extra phase errors added layer by layer.

    ``error_layers`` may carry k+1 entries (input layer, every gap, output
    layer) or k-1 entries (interior gaps only).  ``couplers`` optionally
    replaces the per-stage coupler lists, e.g. to model imperfect splitting.
    """
    spec = base.copy()
    k = spec.stages
    errors = [np.asarray(layer, dtype=float) for layer in error_layers]
    if len(errors) == k - 1:
        errors = [np.zeros(spec.n)] + errors + [np.zeros(spec.n)]
    if len(errors) != k + 1 or any(layer.shape != (spec.n,) for layer in errors):
        raise ValueError(
            f"expected {k + 1} (or {k - 1} interior) error layers of length {spec.n}"
        )
    spec.layers = [layer + err for layer, err in zip(spec.layers, errors)]
    if couplers is not None:
        if len(couplers) != k or any(len(cs) != spec.n // 2 for cs in couplers):
            raise ValueError(f"expected {k} stages of {spec.n // 2} couplers each")
        spec.couplers = [list(cs) for cs in couplers]
    return transfer_matrix(spec)


def shuffle_stage(
    n: int, half_matrix: np.ndarray, coupler: CouplerSpec = IDEAL_COUPLER
) -> np.ndarray:
    """One level of the recursive cascade.

    Routes two independent copies of a half-size network into the circulant
    stride-n/2 coupler stage::

        A_n = S_stride @ blockdiag(half, half)

    For n == 2 the half matrix is 1x1 and the result is the bare coupler.
    Applying this recursively from a 1x1 identity reproduces the full
    butterfly network.
    """
    k = port_stages(n)
    half = np.asarray(half_matrix, dtype=complex)
    if half.shape != (n // 2, n // 2):
        raise ValueError(f"half matrix must have shape {(n // 2, n // 2)}, got {half.shape}")
    top = stage_matrix(n, k - 1, [coupler] * (n // 2))
    block = np.zeros((n, n), dtype=complex)
    block[: n // 2, : n // 2] = half
    block[n // 2 :, n // 2 :] = half
    return top @ block


def unitarity_residual(a: np.ndarray) -> float:
    """Max-norm deviation of a†a from the identity."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    return float(np.max(np.abs(a.conj().T @ a - np.eye(n))))


def random_error_layers(
    n: int, rng: np.random.Generator, which: str = "all"
) -> list[np.ndarray]:
    """Uniform random phase layers in [-pi, pi).

    ``which`` selects where the errors live: ``"all"`` (every layer including
    input/output), ``"interior"`` (inter-stage gaps only) or ``"middle"`` (the
    single central gap, the canonical one-error-layer device).
    """
    k = port_stages(n)
    layers = [np.zeros(n) for _ in range(k + 1)]
    if which == "all":
        active = range(k + 1)
    elif which == "interior":
        active = range(1, k)
    elif which == "middle":
        active = [k // 2] if k > 1 else []
    else:
        raise ValueError(f"which must be 'all', 'interior' or 'middle', got {which!r}")
    for i in active:
        layers[i] = rng.uniform(-math.pi, math.pi, size=n)
    return layers


def random_error_spec(
    n: int, seed: int, flavor: str = "ideal", which: str = "all"
) -> NetworkSpec:
    """Flavor base spec with seeded random phase errors added."""
    base = {"ideal": ideal_spec, "hadamard": hadamard_spec, "butler": butler_spec}.get(flavor)
    if base is None:
        raise ValueError(f"flavor must be 'ideal', 'hadamard' or 'butler', got {flavor!r}")
    spec = base(n)
    rng = np.random.default_rng(seed)
    errors = random_error_layers(n, rng, which=which)
    spec.layers = [layer + err for layer, err in zip(spec.layers, errors)]
    spec.flavor = "custom" if flavor == "ideal" else spec.flavor
    return spec


def matrix_to_json_dict(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=complex)
    return {
        "n": int(a.shape[0]),
        "re": [[float(v) for v in row] for row in a.real],
        "im": [[float(v) for v in row] for row in a.imag],
    }


def matrix_from_json_dict(data: dict) -> np.ndarray:
    return np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
