"""Intensity-only black-box model of a butterfly network with bench-grade noise.

A DeviceModel exposes exactly what a lab experiment does: command one phase
per input channel, read back one intensity per output port.  Phase and
amplitude information about the internal transfer matrix is unavailable to
callers by design -- calibration code talks to :meth:`DeviceModel.measure`
and nothing else.

Imperfections, each individually zeroable:

* splitting tolerance -- every coupler's power split is drawn once at device
  construction, uniformly within ``0.5 +- tol`` (lossless, so the matrix
  stays unitary while the codebook drifts away from phase-only form),
* hysteresis -- commanded phases pass through a backlash (mechanical play)
  stage, so reversals lag by up to the backlash width,
* drift -- a per-channel Gaussian random walk advanced once per measurement,
* visibility -- a fraction ``1 - v`` of the collected power turns into an
  incoherent background spread uniformly over the ports, capping the
  achievable interference contrast,
* detector noise -- multiplicative Gaussian read noise per port.

All randomness derives from the seed in NoiseConfig; replaying the same seed
and command sequence yields bit-identical readings.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .network import NetworkSpec, CouplerSpec, transfer_matrix

TAU = 2.0 * math.pi

DEFAULT_BOUNDS = (-2.0 * TAU, 2.0 * TAU)

NOISE_PRESETS = ("none", "experiment", "drift", "harsh")


class PhaseBoundsError(ValueError):
    """Commanded phase outside the actuator range."""


@dataclass(frozen=True)
class NoiseConfig:
    """Noise magnitudes for one device instance.

    drift_sigma          radians of random-walk step per evaluation (per channel)
    hysteresis_backlash  width of the actuator backlash deadband, radians
    visibility           fringe visibility in (0, 1]; 1 means perfect contrast
    detector_sigma_rel   relative (multiplicative) detector noise per port
    splitting_tolerance  max deviation of each coupler's power split from 0.5
    seed                 master seed for construction and measurement noise
    """

    drift_sigma: float = 0.0
    hysteresis_backlash: float = 0.0
    visibility: float = 1.0
    detector_sigma_rel: float = 0.0
    splitting_tolerance: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.drift_sigma < 0 or self.hysteresis_backlash < 0 or self.detector_sigma_rel < 0:
            raise ValueError("noise magnitudes must be nonnegative")
        if not 0.0 < self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in (0, 1], got {self.visibility}")
        if not 0.0 <= self.splitting_tolerance <= 0.5:
            raise ValueError(f"splitting tolerance must lie in [0, 0.5], got {self.splitting_tolerance}")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["seed"] = int(self.seed)
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "NoiseConfig":
        return cls(**data)


def noise_preset(name: str, seed: int = 0) -> NoiseConfig:
    """Named NoiseConfig presets.

    ``experiment`` mimics the bench conditions this toolkit targets: fringe
    visibility drawn uniformly in [0.95, 0.99] per seed, couplers at
    50% +- 3% power split, and small drift/backlash/read noise.  ``drift``
    isolates a strong phase random walk (the regime where optimizer restarts
    matter); ``harsh`` is a stress preset.  All magnitudes other than the
    experiment visibility/split ranges are synthetic defaults.
    """
    if name == "none":
        return NoiseConfig(seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    if name == "experiment":
        return NoiseConfig(
            drift_sigma=0.004,
            hysteresis_backlash=0.02,
            visibility=float(rng.uniform(0.95, 0.99)),
            detector_sigma_rel=0.005,
            splitting_tolerance=0.03,
            seed=seed,
        )
    if name == "drift":
        return NoiseConfig(drift_sigma=0.03, seed=seed)
    if name == "harsh":
        return NoiseConfig(
            drift_sigma=0.05,
            hysteresis_backlash=0.1,
            visibility=float(rng.uniform(0.85, 0.95)),
            detector_sigma_rel=0.02,
            splitting_tolerance=0.06,
            seed=seed,
        )
    raise ValueError(f"unknown noise preset {name!r}; choose from {NOISE_PRESETS}")


@dataclass
class IntensityReading:
    """Per-port detector intensities for one measurement."""

    per_port: np.ndarray

    def __post_init__(self) -> None:
        self.per_port = np.asarray(self.per_port, dtype=float)

    @property
    def total(self) -> float:
        return float(self.per_port.sum())

    @property
    def relative(self) -> np.ndarray:
        """Per-port fraction of the total detected power (sums to 1)."""
        return self.per_port / self.total


@dataclass
class DeviceState:
    """Serializable snapshot of a device's mutable state."""

    drift: list[float]
    positions: list[float] | None
    eval_count: int
    rng_state: dict

    def to_json_dict(self) -> dict:
        return {
            "drift": self.drift,
            "positions": self.positions,
            "eval_count": self.eval_count,
            "rng_state": self.rng_state,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DeviceState":
        return cls(
            drift=list(data["drift"]),
            positions=None if data["positions"] is None else list(data["positions"]),
            eval_count=int(data["eval_count"]),
            rng_state=dict(data["rng_state"]),
        )


class DeviceModel:
    """Stateful intensity oracle around a transfer matrix.

    One calibration run owns one instance; parallel runs must each construct
    their own.  With all noise magnitudes at zero, :meth:`measure` is a pure
    deterministic function of the commanded phases.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        noise: NoiseConfig | None = None,
        bounds: tuple[float, float] = DEFAULT_BOUNDS,
    ) -> None:
        matrix = np.ascontiguousarray(matrix, dtype=complex)
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise ValueError(f"transfer matrix must be square, got {matrix.shape}")
        if bounds[0] >= bounds[1]:
            raise ValueError(f"bounds must satisfy lo < hi, got {bounds}")
        self._matrix = matrix
        self._n = n
        self._noise = noise if noise is not None else NoiseConfig()
        self._bounds = (float(bounds[0]), float(bounds[1]))
        self.reset()

    @classmethod
    def from_spec(
        cls,
        spec: NetworkSpec,
        noise: NoiseConfig | None = None,
        bounds: tuple[float, float] = DEFAULT_BOUNDS,
    ) -> "DeviceModel":
        """Build a device from a NetworkSpec, applying the splitting tolerance.

        When ``noise.splitting_tolerance > 0`` every coupler's power split is
        redrawn uniformly in ``0.5 +- tol`` (seeded, lossless) before the
        matrix is evaluated.
        """
        noise = noise if noise is not None else NoiseConfig()
        if noise.splitting_tolerance > 0.0:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=noise.seed, spawn_key=(0,))
            )
            spec = spec.copy()
            tol = noise.splitting_tolerance
            spec.couplers = [
                [CouplerSpec.from_power_split(rng.uniform(0.5 - tol, 0.5 + tol)) for _ in cs]
                for cs in spec.couplers
            ]
        return cls(transfer_matrix(spec), noise, bounds)

    @property
    def n(self) -> int:
        return self._n

    @property
    def noise(self) -> NoiseConfig:
        return self._noise

    @property
    def bounds(self) -> tuple[float, float]:
        return self._bounds

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def _fresh_rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self._noise.seed, spawn_key=(1,))
        )

    def reset(self) -> None:
        """Zero the drift and backlash state and rewind the noise stream."""
        self._drift = np.zeros(self._n)
        self._positions: np.ndarray | None = None
        self._eval_count = 0
        self._rng = self._fresh_rng()

    def snapshot(self) -> DeviceState:
        """Serializable state; restore() continues exactly where this left off."""
        return DeviceState(
            drift=[float(v) for v in self._drift],
            positions=None if self._positions is None else [float(v) for v in self._positions],
            eval_count=self._eval_count,
            rng_state=self._rng.bit_generator.state,
        )

    def restore(self, state: DeviceState) -> None:
        self._drift = np.asarray(state.drift, dtype=float)
        self._positions = None if state.positions is None else np.asarray(state.positions, dtype=float)
        self._eval_count = int(state.eval_count)
        self._rng = self._fresh_rng()
        self._rng.bit_generator.state = state.rng_state

    def measure(self, phases: np.ndarray) -> IntensityReading:
        """Command the input phases and read all output intensities.

        Port k reads ``v * |(A x)_k|^2 + (1 - v) * sum|x|^2 / n`` plus
        detector noise, where the actuator positions x follow the commanded
        phases through backlash and drift.  The drift random walk advances by
        one step per call.
        """
        x = np.asarray(phases, dtype=float)
        if x.shape != (self._n,):
            raise ValueError(f"expected {self._n} phases, got shape {x.shape}")
        lo, hi = self._bounds
        if np.any(x < lo) or np.any(x > hi):
            raise PhaseBoundsError(f"commanded phases outside actuator bounds [{lo:.6g}, {hi:.6g}]")
        noise = self._noise

        if noise.hysteresis_backlash > 0.0:
            half = 0.5 * noise.hysteresis_backlash
            if self._positions is None:
                self._positions = x.copy()
            else:
                self._positions = np.clip(self._positions, x - half, x + half)
            pos = self._positions
        else:
            pos = x

        if noise.drift_sigma > 0.0:
            self._drift = self._drift + noise.drift_sigma * self._rng.standard_normal(self._n)
            pos = pos + self._drift

        u = np.exp(1j * np.mod(pos, TAU))
        y = self._matrix @ u
        per = y.real**2 + y.imag**2
        v = noise.visibility
        if v < 1.0:
            background = (u.real**2 + u.imag**2).sum() / self._n
            per = v * per + (1.0 - v) * background
        if noise.detector_sigma_rel > 0.0:
            per = per * (1.0 + noise.detector_sigma_rel * self._rng.standard_normal(self._n))
            np.maximum(per, 0.0, out=per)

        self._eval_count += 1
        return IntensityReading(per)

    def total_intensity(self, phases: np.ndarray) -> float:
        """Sum over all ports of one measurement (consumes one evaluation)."""
        return self.measure(phases).total
