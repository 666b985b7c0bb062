"""Intensity-only codebook learning.

Two learners work against the DeviceModel measurement interface alone (no
access to the underlying matrix):

* :func:`gbnm_calibrate` -- globalized bounded Nelder-Mead.  Uniform random
  starts inside the actuator box (avoiding neighborhoods of minima already
  found), a regular initial simplex, standard reflect/expand/contract/shrink
  steps with projection onto the box, and a stagnation rule (collapsed
  simplex, or no improvement for a fixed number of evaluations) that moves on
  to the next start.  Restarts are what rescue the search from noise-induced
  local minima.
* :func:`systematic_calibrate` -- the stage-aware sweep procedure: null the
  unwanted output pair by sweeping one channel of each input pair, then sweep
  the remaining input pair in concert (preserving its learned internal phase)
  to concentrate the light at the target port.  Needs a channel-pairing map,
  which is exactly its practical weakness.

Every device evaluation lands in a ConvergenceTrace row, so each returned
codeword is reproducible from its trace.  The objective everywhere is
``J_k(x) = -I_k(x)``: maximizing one port's intensity as a minimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import Codebook, Codeword, gauge_normalize
from .device import DeviceModel, IntensityReading

TAU = 2.0 * math.pi

# Quality bar for calling a single channel calibrated.
CONVERGED_RELATIVE = 0.9


class DegenerateInterferenceError(RuntimeError):
    """A sweep produced no intensity contrast, so there is nothing to optimize."""


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class GbnmConfig:
    """Settings for the globalized bounded Nelder-Mead search.

    The defaults mirror the protocol this toolkit emulates: 12 random
    initializations descending for up to 100 simplex iterations each.
    """

    n_starts: int = 12
    max_iters_per_start: int = 100
    simplex_tol: float = 1e-7
    initial_edge: float = math.pi / 2
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    bounds: tuple[float, float] = (-2.0 * TAU, 2.0 * TAU)
    exclusion_radius: float = math.pi / 4
    stagnation_evals: int | None = 30
    max_total_evals: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iters_per_start < 0:
            raise ValueError("max_iters_per_start must be >= 0")
        if self.simplex_tol < 0 or self.initial_edge <= 0 or self.exclusion_radius < 0:
            raise ValueError("simplex_tol/initial_edge/exclusion_radius out of range")
        if min(self.reflection, self.expansion) <= 0 or not (0 < self.contraction < 1) or not (
            0 < self.shrink < 1
        ):
            raise ValueError("invalid simplex coefficients")
        if self.bounds[0] >= self.bounds[1]:
            raise ValueError(f"bounds must satisfy lo < hi, got {self.bounds}")

    def eval_budget_bound(self, n: int) -> int:
        """Worst-case device evaluations: per start, the initial simplex plus
        at most (n + 2) evaluations per iteration (reflect, expand-or-contract,
        shrink)."""
        per_start = (n + 1) + self.max_iters_per_start * (n + 2)
        if self.max_iters_per_start == 0:
            per_start = 1
        bound = self.n_starts * per_start
        if self.max_total_evals is not None:
            bound = min(bound, self.max_total_evals)
        return bound


@dataclass
class ConvergenceTrace:
    """One row per device evaluation of a calibration run.

    CSV column order (fixed): eval, start, iter, phase_0..phase_{n-1},
    intensity_0..intensity_{n-1}, relative, best_so_far.  ``relative`` is the
    target port's share of the total detected power at that evaluation and
    ``best_so_far`` its running maximum, so the final best is the max over
    all recorded rows.
    """

    target_port: int
    start: np.ndarray
    iteration: np.ndarray
    phases: np.ndarray
    intensities: np.ndarray
    relative: np.ndarray
    best_so_far: np.ndarray
    met_tolerance: bool
    converged: bool

    @property
    def eval_count(self) -> int:
        return len(self.relative)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.relative))

    @property
    def final_relative(self) -> float:
        return float(self.relative[self.best_index])

    @property
    def final_phases(self) -> np.ndarray:
        return self.phases[self.best_index].copy()

    def columns(self) -> list[str]:
        n = self.phases.shape[1]
        return (
            ["eval", "start", "iter"]
            + [f"phase_{i}" for i in range(n)]
            + [f"intensity_{i}" for i in range(n)]
            + ["relative", "best_so_far"]
        )

    def to_csv(self, path, header_comments: tuple[str, ...] = ()) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in header_comments:
                fh.write(f"# {line}\n")
            fh.write(",".join(self.columns()) + "\n")
            for i in range(self.eval_count):
                cells = [str(i), str(int(self.start[i])), str(int(self.iteration[i]))]
                cells += [repr(float(v)) for v in self.phases[i]]
                cells += [repr(float(v)) for v in self.intensities[i]]
                cells += [repr(float(self.relative[i])), repr(float(self.best_so_far[i]))]
                fh.write(",".join(cells) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "target_port": int(self.target_port),
            "met_tolerance": bool(self.met_tolerance),
            "converged": bool(self.converged),
            "eval_count": self.eval_count,
            "final_relative": self.final_relative,
            "final_phases": [float(v) for v in self.final_phases],
            "columns": self.columns(),
            "rows": [
                [int(i), int(self.start[i]), int(self.iteration[i])]
                + [float(v) for v in self.phases[i]]
                + [float(v) for v in self.intensities[i]]
                + [float(self.relative[i]), float(self.best_so_far[i])]
                for i in range(self.eval_count)
            ],
        }


class _TraceBuilder:
    """Collects one row per device evaluation and enforces an optional eval cap."""

    def __init__(self, dev: DeviceModel, target_port: int, max_total_evals: int | None = None):
        self.dev = dev
        self.k = target_port
        self.cap = max_total_evals
        self.start: list[int] = []
        self.iteration: list[int] = []
        self.phases: list[np.ndarray] = []
        self.intensities: list[np.ndarray] = []
        self.relative: list[float] = []
        self.best: list[float] = []
        self._best = -math.inf

    @property
    def count(self) -> int:
        return len(self.relative)

    def record(self, x: np.ndarray, start: int, iteration: int) -> IntensityReading:
        if self.cap is not None and self.count >= self.cap:
            raise _BudgetExhausted
        reading = self.dev.measure(x)
        rel = float(reading.per_port[self.k] / reading.total)
        if rel > self._best:
            self._best = rel
        self.start.append(start)
        self.iteration.append(iteration)
        self.phases.append(np.array(x, dtype=float))
        self.intensities.append(reading.per_port)
        self.relative.append(rel)
        self.best.append(self._best)
        return reading

    def freeze(self, met_tolerance: bool) -> ConvergenceTrace:
        relative = np.asarray(self.relative)
        converged = bool(met_tolerance and relative.size and relative.max() >= CONVERGED_RELATIVE)
        return ConvergenceTrace(
            target_port=self.k,
            start=np.asarray(self.start, dtype=int),
            iteration=np.asarray(self.iteration, dtype=int),
            phases=np.asarray(self.phases),
            intensities=np.asarray(self.intensities),
            relative=relative,
            best_so_far=np.asarray(self.best),
            met_tolerance=met_tolerance,
            converged=converged,
        )


def evaluate_objective(dev: DeviceModel, target_port: int, phases: np.ndarray) -> float:
    """Cost of one phase profile: the negated target-port intensity (one evaluation)."""
    return -float(dev.measure(phases).per_port[target_port])


def _regular_simplex(x0: np.ndarray, edge: float) -> np.ndarray:
    """Regular simplex with the given edge length, first vertex at x0."""
    n = x0.size
    p = (math.sqrt(n + 1) - 1 + n) / (n * math.sqrt(2)) * edge
    q = (math.sqrt(n + 1) - 1) / (n * math.sqrt(2)) * edge
    verts = np.tile(x0, (n + 1, 1))
    verts[1:] += q
    verts[np.arange(1, n + 1), np.arange(n)] = x0[np.arange(n)] + p
    return verts


def _sample_start(
    rng: np.random.Generator,
    lo: float,
    hi: float,
    n: int,
    found: list[np.ndarray],
    radius: float,
    max_tries: int = 200,
) -> np.ndarray:
    x = rng.uniform(lo, hi, size=n)
    for _ in range(max_tries):
        if all(np.linalg.norm(x - m) >= radius for m in found):
            break
        x = rng.uniform(lo, hi, size=n)
    return x


def _nelder_mead_start(
    tracer: _TraceBuilder, x0: np.ndarray, cfg: GbnmConfig, start_index: int
) -> tuple[np.ndarray, bool]:
    """One bounded descent; returns (best vertex, simplex tolerance met)."""
    lo, hi = cfg.bounds
    k = tracer.k
    if cfg.max_iters_per_start == 0:
        tracer.record(x0, start_index, 0)
        return x0.copy(), False

    verts = np.clip(_regular_simplex(x0, cfg.initial_edge), lo, hi)
    n = x0.size
    best_f = math.inf
    since_improve = 0

    def probe(point: np.ndarray, iteration: int) -> tuple[np.ndarray, float]:
        nonlocal best_f, since_improve
        x = np.clip(point, lo, hi)
        f = -float(tracer.record(x, start_index, iteration).per_port[k])
        if f < best_f:
            best_f = f
            since_improve = 0
        else:
            since_improve += 1
        return x, f

    fvals = np.empty(n + 1)
    for i in range(n + 1):
        verts[i], fvals[i] = probe(verts[i], 0)

    met = False
    for it in range(1, cfg.max_iters_per_start + 1):
        order = np.argsort(fvals, kind="stable")
        verts = verts[order]
        fvals = fvals[order]
        diameter = float(np.max(np.linalg.norm(verts[1:] - verts[0], axis=1)))
        if diameter < cfg.simplex_tol:
            met = True
            break
        if cfg.stagnation_evals is not None and since_improve >= cfg.stagnation_evals:
            break

        centroid = verts[:-1].mean(axis=0)
        xr, fr = probe(centroid + cfg.reflection * (centroid - verts[-1]), it)
        if fr < fvals[0]:
            xe, fe = probe(centroid + cfg.expansion * (xr - centroid), it)
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc, fc = probe(centroid + cfg.contraction * (xr - centroid), it)
                accept = fc <= fr
            else:
                xc, fc = probe(centroid + cfg.contraction * (verts[-1] - centroid), it)
                accept = fc < fvals[-1]
            if accept:
                verts[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    verts[i], fvals[i] = probe(verts[0] + cfg.shrink * (verts[i] - verts[0]), it)

    return verts[int(np.argmin(fvals))].copy(), met


def gbnm_calibrate(
    dev: DeviceModel, target_port: int, cfg: GbnmConfig | None = None
) -> tuple[Codeword, ConvergenceTrace]:
    """Learn the codeword for one output port with restarted Nelder-Mead.

    Runs ``cfg.n_starts`` bounded descents from random initializations, each
    capped at ``cfg.max_iters_per_start`` iterations and cut short on
    stagnation.  New starts avoid an exclusion ball around every minimum
    already found.  Always returns the best profile seen (gauge-normalized);
    ``trace.met_tolerance`` is False when no start collapsed its simplex
    below tolerance, and ``trace.converged`` additionally requires a relative
    intensity of at least 0.9.
    """
    cfg = cfg if cfg is not None else GbnmConfig()
    cfg.validate()
    if not 0 <= target_port < dev.n:
        raise ValueError(f"target port {target_port} out of range for n={dev.n}")
    rng = np.random.default_rng(cfg.seed)
    tracer = _TraceBuilder(dev, target_port, cfg.max_total_evals)
    lo, hi = cfg.bounds
    found: list[np.ndarray] = []
    met_any = False
    try:
        for s in range(cfg.n_starts):
            x0 = _sample_start(rng, lo, hi, dev.n, found, cfg.exclusion_radius)
            best_x, met = _nelder_mead_start(tracer, x0, cfg, s)
            met_any = met_any or met
            found.append(best_x)
    except _BudgetExhausted:
        pass
    trace = tracer.freeze(met_tolerance=met_any)
    codeword = Codeword(gauge_normalize(trace.final_phases), target_port)
    return codeword, trace


@dataclass
class CalibrationResult:
    """Learned codebook plus per-channel traces and a pairwise quality metric."""

    codebook: Codebook
    traces: list[ConvergenceTrace]
    gram: np.ndarray  # F†F of the learned codeword fields; n*I when orthogonal
    converged: list[bool]


def _channel_seed(seed: int, channel: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(3, channel)).generate_state(1)[0])


def calibrate_codebook(dev: DeviceModel, cfg: GbnmConfig | None = None) -> CalibrationResult:
    """Run gbnm_calibrate for every output port and assemble the codebook."""
    import dataclasses

    cfg = cfg if cfg is not None else GbnmConfig()
    codewords = []
    traces = []
    converged = []
    for k in range(dev.n):
        channel_cfg = dataclasses.replace(cfg, seed=_channel_seed(cfg.seed, k))
        cw, trace = gbnm_calibrate(dev, k, channel_cfg)
        codewords.append(cw)
        traces.append(trace)
        converged.append(trace.converged)
    codebook = Codebook(n=dev.n, output_scale=math.sqrt(dev.n), codewords=codewords)
    return CalibrationResult(
        codebook=codebook, traces=traces, gram=codebook.gram(), converged=converged
    )


@dataclass(frozen=True)
class SweepStep:
    """One 1-D sweep: shift ``channels`` by a common offset to min/max the summed ``ports``."""

    channels: tuple[int, ...]
    sense: str  # "min" or "max"
    ports: tuple[int, ...]


def default_systematic_mapping(n: int, target_port: int) -> list[SweepStep]:
    """Sweep plan for the stock 4-port wiring.

    The input stage couples channel pairs (0,1) and (2,3); the output stage
    feeds ports {k, k^2} from one branch and {k^1, k^3} from the other.
    Nulling the complementary port pair fixes the relative phase inside each
    input pair (sweep channels 1 and 3), then a concert sweep of channels
    (2,3) -- preserving their learned internal phase -- concentrates the
    light at the target.
    """
    if n != 4:
        raise ValueError("default mapping covers n == 4 only; supply an explicit mapping")
    if not 0 <= target_port < n:
        raise ValueError(f"target port {target_port} out of range for n={n}")
    k = target_port
    off_pair = tuple(sorted((k ^ 1, k ^ 3)))
    return [
        SweepStep((1,), "min", off_pair),
        SweepStep((3,), "min", off_pair),
        SweepStep((2, 3), "max", (k,)),
    ]


def systematic_calibrate(
    dev: DeviceModel,
    target_port: int,
    mapping: list[SweepStep] | None = None,
    sweep_resolution: int = 64,
) -> tuple[Codeword, ConvergenceTrace]:
    """Learn one codeword through a fixed sequence of 1-D phase sweeps.

    Each step sweeps a common additive offset on its channel subset over one
    full period, picks the best sample, and refines it with a single 3-point
    parabolic fit.  Raises DegenerateInterferenceError when a sweep shows no
    intensity contrast (the mapping does not match the device wiring).
    """
    n = dev.n
    if mapping is None:
        mapping = default_systematic_mapping(n, target_port)
    if sweep_resolution < 3:
        raise ValueError("sweep_resolution must be >= 3")
    if not mapping:
        raise ValueError("mapping must contain at least one sweep step")
    for step in mapping:
        if step.sense not in ("min", "max"):
            raise ValueError(f"sweep sense must be 'min' or 'max', got {step.sense!r}")
        if not step.channels or not step.ports:
            raise ValueError("sweep steps need at least one channel and one port")
        if any(not 0 <= c < n for c in step.channels) or any(not 0 <= p < n for p in step.ports):
            raise ValueError(f"mapping inconsistent with an {n}-port device: {step}")

    tracer = _TraceBuilder(dev, target_port)
    phases = np.zeros(n)
    spacing = TAU / sweep_resolution
    for step_index, step in enumerate(mapping):
        ch = list(step.channels)
        ports = list(step.ports)
        sign = 1.0 if step.sense == "min" else -1.0
        vals = np.empty(sweep_resolution)
        for i in range(sweep_resolution):
            trial = phases.copy()
            trial[ch] += i * spacing
            reading = tracer.record(trial, step_index, i)
            vals[i] = sign * float(reading.per_port[ports].sum())
        span = float(vals.max() - vals.min())
        if span <= 1e-9 * max(1.0, float(np.abs(vals).max())):
            raise DegenerateInterferenceError(
                f"sweep step {step_index} on channels {step.channels} produced no contrast"
            )
        b = int(np.argmin(vals))
        best_off = b * spacing
        best_val = vals[b]
        fm = vals[(b - 1) % sweep_resolution]
        fp = vals[(b + 1) % sweep_resolution]
        denom = fm - 2.0 * vals[b] + fp
        if denom > 0:
            delta = 0.5 * (fm - fp) / denom
            trial = phases.copy()
            trial[ch] += best_off + delta * spacing
            reading = tracer.record(trial, step_index, sweep_resolution)
            refined = sign * float(reading.per_port[ports].sum())
            if refined < best_val:
                best_off, best_val = best_off + delta * spacing, refined
        phases[ch] += best_off

    # final verification row at the committed profile
    tracer.record(phases, len(mapping), 0)
    trace = tracer.freeze(met_tolerance=True)
    codeword = Codeword(gauge_normalize(phases), target_port)
    return codeword, trace


@dataclass
class ScanGrid:
    """2-D objective landscape over two channels, everything else held fixed.

    ``values[i, j]`` is ``J = -I_target`` at phases ``(phi_a[i], phi_b[j])``
    on the scanned channels.  CSV export is long-format with the fixed column
    order phi_<a>, phi_<b>, objective.
    """

    channels: tuple[int, int]
    target_port: int
    phi_a: np.ndarray
    phi_b: np.ndarray
    values: np.ndarray
    base: np.ndarray

    def to_csv(self, path, header_comments: tuple[str, ...] = ()) -> None:
        a, b = self.channels
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in header_comments:
                fh.write(f"# {line}\n")
            fh.write(f"phi_{a},phi_{b},objective\n")
            for i, pa in enumerate(self.phi_a):
                for j, pb in enumerate(self.phi_b):
                    fh.write(f"{float(pa)!r},{float(pb)!r},{float(self.values[i, j])!r}\n")


def scan_error_space(
    dev: DeviceModel,
    channels: tuple[int, int],
    phase_range: tuple[float, float] = (-2.0 * TAU, 2.0 * TAU),
    resolution: int = 161,
    target_port: int = 0,
    base: np.ndarray | None = None,
) -> ScanGrid:
    """Evaluate the objective on a square grid over two channels' phases."""
    a, b = channels
    if a == b:
        raise ValueError("scan channels must be distinct")
    if not (0 <= a < dev.n and 0 <= b < dev.n):
        raise ValueError(f"scan channels {channels} out of range for n={dev.n}")
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    lo, hi = phase_range
    if lo >= hi:
        raise ValueError(f"phase range must satisfy lo < hi, got {phase_range}")
    base = np.zeros(dev.n) if base is None else np.asarray(base, dtype=float).copy()
    grid = np.linspace(lo, hi, resolution)
    values = np.empty((resolution, resolution))
    x = base.copy()
    for i, pa in enumerate(grid):
        x[a] = pa
        for j, pb in enumerate(grid):
            x[b] = pb
            values[i, j] = -float(dev.measure(x).per_port[target_port])
    return ScanGrid(
        channels=(a, b),
        target_port=target_port,
        phi_a=grid.copy(),
        phi_b=grid.copy(),
        values=values,
        base=base,
    )


def periodicity_residual(grid: ScanGrid) -> float | None:
    """Max |J(phi + 2pi) - J(phi)| along both axes.

    Returns None when the grid spacing does not evenly subdivide 2pi (no
    pair of samples sits exactly one period apart).
    """
    residual = 0.0
    for axis, phi in enumerate((grid.phi_a, grid.phi_b)):
        spacing = float(phi[1] - phi[0])
        m = round(TAU / spacing)
        if m < 1 or m >= len(phi) or abs(m * spacing - TAU) > 1e-9:
            return None
        if axis == 0:
            residual = max(residual, float(np.max(np.abs(grid.values[m:, :] - grid.values[:-m, :]))))
        else:
            residual = max(residual, float(np.max(np.abs(grid.values[:, m:] - grid.values[:, :-m]))))
    return residual


def strict_local_minima(values: np.ndarray) -> list[tuple[int, int]]:
    """Interior grid points strictly smaller than all eight neighbors."""
    c = values[1:-1, 1:-1]
    mask = np.ones(c.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = values[1 + di : values.shape[0] - 1 + di, 1 + dj : values.shape[1] - 1 + dj]
            mask &= c < nb
    return [(int(i) + 1, int(j) + 1) for i, j in np.argwhere(mask)]


def minima_per_cell(grid: ScanGrid) -> np.ndarray | None:
    """Strict-interior-minima count per 2pi x 2pi cell.

    Returns None when the scanned span is not a whole number of periods on
    both axes.
    """
    spans = []
    for phi in (grid.phi_a, grid.phi_b):
        span = float(phi[-1] - phi[0])
        cells = round(span / TAU)
        if cells < 1 or abs(cells * TAU - span) > 1e-9:
            return None
        spans.append(cells)
    counts = np.zeros((spans[0], spans[1]), dtype=int)
    for i, j in strict_local_minima(grid.values):
        ca = min(int((grid.phi_a[i] - grid.phi_a[0]) / TAU), spans[0] - 1)
        cb = min(int((grid.phi_b[j] - grid.phi_b[0]) / TAU), spans[1] - 1)
        counts[ca, cb] += 1
    return counts
