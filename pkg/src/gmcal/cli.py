"""Command-line front end.

Subcommands::

    build               construct a network, write its transfer matrix (JSON)
    codebook            invert a matrix file into its codebook (JSON)
    scan                2-D objective scan over two channels (CSV + report)
    calibrate           learn codewords via GBNM or the systematic sweeps
    emulate-experiment  full 4-channel GBNM calibration of a noisy 4-port device

Every artifact embeds the resolved configuration and seed, and contains no
timestamps: rerunning a command with identical arguments produces
byte-identical files.  Existing outputs are never overwritten without
``--force``.

Exit codes: 0 success, 2 invalid configuration, 3 singular matrix,
4 calibration did not converge.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import calibrate as cal
from . import device as dev_mod
from . import network as net
from .codebook import Codebook, SingularMatrixError, extract_codebook, verify_codebook

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_SINGULAR_MATRIX = 3
EXIT_NON_CONVERGED = 4

TAU = 2.0 * math.pi

# Reference per-channel relative intensities reached by the bench experiment
# this toolkit emulates, used as a consistency row in emulation reports.
EXPERIMENT_REFERENCE = (0.937, 0.947, 0.954, 0.960)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID_CONFIG):
        super().__init__(message)
        self.code = code


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _prepare_path(out_dir: Path, name: str, force: bool) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    if path.exists() and not force:
        raise CliError(f"refusing to overwrite {path}; pass --force")
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(_json_text(obj), encoding="utf-8")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read JSON file {path}: {exc}")


def _require_seed(args) -> int:
    if args.seed is None:
        raise CliError("--seed is mandatory for stochastic runs")
    return args.seed


def _config_overrides(args) -> dict:
    if getattr(args, "config", None):
        data = _load_json(args.config)
        if not isinstance(data, dict):
            raise CliError("--config must contain a JSON object")
        return data
    return {}


def _gbnm_config(args, seed: int, overrides: dict) -> cal.GbnmConfig:
    fields: dict = {"seed": seed}
    if getattr(args, "starts", None) is not None:
        fields["n_starts"] = args.starts
    if getattr(args, "iters", None) is not None:
        fields["max_iters_per_start"] = args.iters
    fields.update(overrides.get("gbnm", {}))
    try:
        cfg = cal.GbnmConfig(**fields)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid GBNM configuration: {exc}")
    return cfg


def _noise_config(name: str, seed: int, overrides: dict) -> dev_mod.NoiseConfig:
    try:
        cfg = dev_mod.noise_preset(name, seed)
        extra = overrides.get("noise", {})
        if extra:
            merged = cfg.to_json_dict()
            merged.update(extra)
            cfg = dev_mod.NoiseConfig.from_json_dict(merged)
        return cfg
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid noise configuration: {exc}")


def _build_spec(args, seed: int | None) -> net.NetworkSpec:
    if getattr(args, "spec_file", None):
        return net.NetworkSpec.from_json_dict(_load_json(args.spec_file))
    flavor = args.flavor
    if flavor is None or args.n is None:
        raise CliError("either --spec-file or both --flavor and --n are required")
    try:
        if getattr(args, "random_phases", False):
            if seed is None:
                raise CliError("--random-phases needs --seed")
            base = "ideal" if flavor == "custom" else flavor
            return net.random_error_spec(args.n, seed, flavor=base, which="all")
        builders = {
            "ideal": net.ideal_spec,
            "hadamard": net.hadamard_spec,
            "butler": net.butler_spec,
            "custom": net.ideal_spec,
        }
        if flavor not in builders:
            raise CliError(f"unknown flavor {flavor!r}")
        return builders[flavor](args.n)
    except ValueError as exc:
        raise CliError(str(exc))


def _load_matrix_source(args, seed: int | None) -> tuple[net.NetworkSpec | None, np.ndarray, dict]:
    """Resolve --matrix / --flavor inputs to (spec-or-None, matrix, provenance)."""
    if getattr(args, "matrix", None):
        payload = _load_json(args.matrix)
        if "network_spec" in payload:
            spec = net.NetworkSpec.from_json_dict(payload["network_spec"])
            return spec, net.transfer_matrix(spec), {"matrix_file": args.matrix}
        if "matrix" not in payload:
            raise CliError(f"{args.matrix} does not look like a matrix artifact")
        return None, net.matrix_from_json_dict(payload["matrix"]), {"matrix_file": args.matrix}
    spec = _build_spec(args, seed)
    return spec, net.transfer_matrix(spec), {"flavor": spec.flavor, "n": spec.n}


def cmd_build(args) -> int:
    seed = args.seed
    if getattr(args, "random_phases", False):
        seed = _require_seed(args)
    spec = _build_spec(args, seed)
    matrix = net.transfer_matrix(spec)
    residual = net.unitarity_residual(matrix)
    out = _prepare_path(Path(args.out_dir), args.output, args.force)
    _write_json(
        out,
        {
            "config": {
                "command": "build",
                "flavor": spec.flavor,
                "n": spec.n,
                "random_phases": bool(getattr(args, "random_phases", False)),
                "seed": seed,
                "spec_file": getattr(args, "spec_file", None),
            },
            "n": spec.n,
            "flavor": spec.flavor,
            "unitarity_residual": residual,
            "unitary_within_1e-10": bool(residual < 1e-10),
            "network_spec": spec.to_json_dict(),
            "matrix": net.matrix_to_json_dict(matrix),
        },
    )
    print(f"wrote {out} (unitarity residual {residual:.3e})")
    return EXIT_OK


def cmd_codebook(args) -> int:
    payload = _load_json(args.matrix)
    if "matrix" not in payload:
        raise CliError(f"{args.matrix} does not look like a matrix artifact")
    matrix = net.matrix_from_json_dict(payload["matrix"])
    try:
        cb = extract_codebook(matrix)
    except SingularMatrixError as exc:
        raise CliError(str(exc), code=EXIT_SINGULAR_MATRIX)
    fractions = verify_codebook(cb, matrix)
    gram_residual = float(np.max(np.abs(cb.gram() - cb.n * np.eye(cb.n))))
    out = _prepare_path(Path(args.out_dir), args.output, args.force)
    _write_json(
        out,
        {
            "config": {"command": "codebook", "matrix_file": args.matrix},
            **cb.to_json_dict(),
            "amplitude_deviation": [float(v) for v in cb.amplitude_deviation],
            "orthogonality": {
                "gram_residual": gram_residual,
                "orthogonal_within_1e-8": bool(gram_residual < 1e-8),
                "routed_fractions": [float(v) for v in fractions],
            },
        },
    )
    print(f"wrote {out} (gram residual {gram_residual:.3e})")
    return EXIT_OK


def cmd_scan(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.noise != "none":
        seed = _require_seed(args)
    overrides = _config_overrides(args)
    noise = _noise_config(args.noise, seed, overrides)
    spec, matrix, source = _load_matrix_source(args, seed)
    if spec is not None:
        device = dev_mod.DeviceModel.from_spec(spec, noise)
    else:
        device = dev_mod.DeviceModel(matrix, noise)
    try:
        grid = cal.scan_error_space(
            device,
            (args.channels[0], args.channels[1]),
            phase_range=(args.range[0], args.range[1]),
            resolution=args.resolution,
            target_port=args.target_port,
        )
    except ValueError as exc:
        raise CliError(str(exc))
    config = {
        "command": "scan",
        "channels": list(args.channels),
        "range": list(args.range),
        "resolution": args.resolution,
        "target_port": args.target_port,
        "noise": noise.to_json_dict(),
        "seed": seed,
        **source,
    }
    residual = cal.periodicity_residual(grid)
    counts = cal.minima_per_cell(grid)
    out_csv = _prepare_path(Path(args.out_dir), args.output, args.force)
    grid.to_csv(out_csv, header_comments=(f"config: {json.dumps(config, sort_keys=True)}",))
    report_name = args.output.rsplit(".", 1)[0] + "_report.json"
    out_report = _prepare_path(Path(args.out_dir), report_name, args.force)
    _write_json(
        out_report,
        {
            "config": config,
            "periodicity_residual": residual,
            "periodic_within_1e-9": None if residual is None else bool(residual < 1e-9),
            "minima_count": int(len(cal.strict_local_minima(grid.values))),
            "minima_per_cell": None if counts is None else counts.tolist(),
            "one_minimum_per_cell": None if counts is None else bool(np.all(counts == 1)),
        },
    )
    print(f"wrote {out_csv} and {out_report}")
    return EXIT_OK


def _trace_artifacts(args, traces, config, out_dir: Path) -> None:
    comment = f"config: {json.dumps(config, sort_keys=True)}"
    for trace in traces:
        path = _prepare_path(out_dir, f"trace_ch{trace.target_port}.csv", args.force)
        trace.to_csv(path, header_comments=(comment,))


def cmd_calibrate(args) -> int:
    seed = _require_seed(args)
    overrides = _config_overrides(args)
    noise = _noise_config(args.noise, seed, overrides)
    gbnm = _gbnm_config(args, seed, overrides)
    spec, matrix, source = _load_matrix_source(args, seed)
    if spec is not None:
        device = dev_mod.DeviceModel.from_spec(spec, noise)
    else:
        device = dev_mod.DeviceModel(matrix, noise)
    channels = list(range(device.n)) if args.channel == "all" else [int(args.channel)]
    if any(not 0 <= c < device.n for c in channels):
        raise CliError(f"channel out of range for n={device.n}")
    config = {
        "command": "calibrate",
        "method": args.method,
        "channel": args.channel,
        "noise": noise.to_json_dict(),
        "seed": seed,
        "sweep_resolution": args.sweep_resolution,
        **source,
    }
    if args.method == "gbnm":
        config["gbnm"] = {
            "n_starts": gbnm.n_starts,
            "max_iters_per_start": gbnm.max_iters_per_start,
            "simplex_tol": gbnm.simplex_tol,
            "initial_edge": gbnm.initial_edge,
            "exclusion_radius": gbnm.exclusion_radius,
        }
    import dataclasses

    codewords = []
    traces = []
    for k in channels:
        if args.method == "gbnm":
            cw, trace = cal.gbnm_calibrate(
                device, k, dataclasses.replace(gbnm, seed=cal._channel_seed(seed, k))
            )
        else:
            try:
                cw, trace = cal.systematic_calibrate(
                    device, k, sweep_resolution=args.sweep_resolution
                )
            except cal.DegenerateInterferenceError as exc:
                raise CliError(str(exc), code=EXIT_NON_CONVERGED)
        codewords.append(cw)
        traces.append(trace)

    out_dir = Path(args.out_dir)
    _trace_artifacts(args, traces, config, out_dir)
    codebook = Codebook(
        n=device.n,
        output_scale=math.sqrt(device.n),
        codewords=codewords,
    ) if args.channel == "all" else None
    summary = {
        "config": config,
        "channels": channels,
        "final_relative": [t.final_relative for t in traces],
        "met_tolerance": [bool(t.met_tolerance) for t in traces],
        "converged": [bool(t.converged) for t in traces],
        "eval_counts": [t.eval_count for t in traces],
    }
    if codebook is not None:
        gram = codebook.gram()
        summary["learned_codebook"] = codebook.to_json_dict()
        summary["gram_offdiag_max"] = float(
            np.max(np.abs(gram - np.diag(np.diag(gram)))) / device.n
        )
        cb_path = _prepare_path(out_dir, "learned_codebook.json", args.force)
        _write_json(cb_path, {"config": config, **codebook.to_json_dict()})
    summary_path = _prepare_path(out_dir, "calibration_summary.json", args.force)
    _write_json(summary_path, summary)
    finals = ", ".join(f"ch{c}={t.final_relative:.4f}" for c, t in zip(channels, traces))
    print(f"wrote {summary_path} ({finals})")
    if not all(t.converged for t in traces):
        print("calibration did not converge on all channels", file=sys.stderr)
        return EXIT_NON_CONVERGED
    return EXIT_OK


def cmd_emulate_experiment(args) -> int:
    seed = _require_seed(args)
    overrides = _config_overrides(args)
    noise = _noise_config(args.noise, seed, overrides)
    gbnm = _gbnm_config(args, seed, overrides)
    spec = net.random_error_spec(4, seed, flavor="ideal", which="all")
    device = dev_mod.DeviceModel.from_spec(spec, noise)
    config = {
        "command": "emulate-experiment",
        "seed": seed,
        "noise": noise.to_json_dict(),
        "gbnm": {"n_starts": gbnm.n_starts, "max_iters_per_start": gbnm.max_iters_per_start},
    }
    import dataclasses

    traces = []
    finals = []
    for k in range(4):
        _, trace = cal.gbnm_calibrate(
            device, k, dataclasses.replace(gbnm, seed=cal._channel_seed(seed, k))
        )
        traces.append(trace)
        finals.append(trace.final_relative)

    out_dir = Path(args.out_dir)
    _trace_artifacts(args, traces, config, out_dir)
    reference = list(EXPERIMENT_REFERENCE)
    summary = {
        "config": config,
        "final_relative": finals,
        "met_tolerance": [bool(t.met_tolerance) for t in traces],
        "converged": [bool(t.converged) for t in traces],
        "eval_counts": [t.eval_count for t in traces],
        "reference_final_relative": reference,
        "delta_vs_reference_sorted": [
            float(a - b) for a, b in zip(sorted(finals), sorted(reference))
        ],
    }
    out = _prepare_path(out_dir, "emulation_summary.json", args.force)
    _write_json(out, summary)
    print(
        "finals: "
        + ", ".join(f"{v:.4f}" for v in finals)
        + f" (reference {', '.join(f'{v:.3f}' for v in reference)})"
    )
    if not all(t.converged for t in traces):
        print("emulation did not converge on all channels", file=sys.stderr)
        return EXIT_NON_CONVERGED
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed (mandatory for stochastic runs)")
    parser.add_argument("--out-dir", default=".", help="output directory")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument("--config", default=None, help="JSON file with gbnm/noise overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmcal",
        description="Butterfly optical network simulation and intensity-only calibration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct a network and write its transfer matrix")
    p.add_argument("--flavor", choices=net.FLAVORS, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--random-phases", action="store_true", help="add seeded random phase errors")
    p.add_argument("--spec-file", default=None, help="full NetworkSpec JSON to build from")
    p.add_argument("--output", default="matrix.json")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("codebook", help="extract the codebook of a matrix artifact")
    p.add_argument("--matrix", required=True)
    p.add_argument("--output", default="codebook.json")
    _add_common(p)
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser("scan", help="2-D objective scan over two channels")
    p.add_argument("--matrix", default=None)
    p.add_argument("--flavor", choices=net.FLAVORS, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--random-phases", action="store_true")
    p.add_argument("--spec-file", default=None)
    p.add_argument("--channels", type=int, nargs=2, default=(0, 1))
    p.add_argument("--range", type=float, nargs=2, default=(-2.0 * TAU, 2.0 * TAU))
    p.add_argument("--resolution", type=int, default=161)
    p.add_argument("--target-port", type=int, default=0)
    p.add_argument("--noise", default="none", choices=dev_mod.NOISE_PRESETS)
    p.add_argument("--output", default="scan.csv")
    _add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("calibrate", help="learn codewords from intensity measurements")
    p.add_argument("--matrix", default=None)
    p.add_argument("--flavor", choices=net.FLAVORS, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--random-phases", action="store_true")
    p.add_argument("--spec-file", default=None)
    p.add_argument("--channel", default="all", help="output port index or 'all'")
    p.add_argument("--method", choices=("gbnm", "systematic"), default="gbnm")
    p.add_argument("--noise", default="none", choices=dev_mod.NOISE_PRESETS)
    p.add_argument("--starts", type=int, default=None, help="GBNM random starts")
    p.add_argument("--iters", type=int, default=None, help="GBNM iterations per start")
    p.add_argument("--sweep-resolution", type=int, default=64)
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser(
        "emulate-experiment",
        help="calibrate all four channels of a random imperfect 4-port device",
    )
    p.add_argument("--noise", default="experiment", choices=dev_mod.NOISE_PRESETS)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_emulate_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SingularMatrixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR_MATRIX
    except (ValueError, dev_mod.PhaseBoundsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
