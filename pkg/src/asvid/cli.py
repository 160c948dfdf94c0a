"""Command-line entry point: simulate | prepare | identify | validate | report.

Every command is deterministic given its inputs, config and seed.  Exit
codes: 0 success, 1 numerical failure, 2 I/O or schema failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import storage
from .dataprep import (
    GeoReference,
    PrepareConfig,
    PwmMapConfig,
    SavGolConfig,
    build_prepared_dataset,
)
from .errors import SchemaError
from .oracle import (
    DiscreteGenConfig,
    SensorNoise,
    default_ground_truth,
    emit_sensor_logs,
    generate_discrete,
    known_params_to_X,
    prbs_frames,
    simulate_continuous,
    smooth_excitation,
    zoh_excitation,
)
from .regressors import build_systems
from .estimator import identify_from_systems
from .validate import (
    PartitionSpec,
    evaluate,
    partition,
    prediction_traces,
    sensitivity_study,
    training_fraction_sweep,
)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_IO = 2


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file is missing: {p}")
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _geo_reference(cfg: dict) -> GeoReference:
    geo = cfg.get("geo_reference", {})
    return GeoReference(
        lat0=geo.get("lat0", 37.4),
        lon0=geo.get("lon0", -6.0),
        antenna_offset=tuple(geo.get("antenna_offset", (0.0, 0.0))),
    )


def _prepare_config(cfg: dict) -> PrepareConfig:
    prep = cfg.get("prepare", {})
    kwargs = {}
    if "h" in prep:
        kwargs["h"] = prep["h"]
    if "pwm_map" in prep:
        kwargs["pwm_map"] = PwmMapConfig(**prep["pwm_map"])
    if "savgol" in prep:
        kwargs["savgol"] = SavGolConfig(**prep["savgol"])
    for key in (
        "gnss_degree",
        "gnss_window",
        "heading_degree",
        "heading_window",
        "pwm_degree",
        "pwm_window",
        "gap_factor",
    ):
        if key in prep:
            kwargs[key] = prep[key]
    return PrepareConfig(**kwargs)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind or cfg.get("kind", "static")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)

    if cfg.get("ground_truth"):
        gt_doc = dict(cfg["ground_truth"])
        tmp = out / "_gt_input.json"
        storage.atomic_write_text(tmp, json.dumps(gt_doc))
        gt = storage.read_ground_truth(tmp)
        tmp.unlink()
    else:
        gt = default_ground_truth(dynamic=(kind == "dynamic"))

    sim = cfg.get("simulate", {})
    duration = float(sim.get("duration_s", 600.0))
    exc_cfg = sim.get("excitation", {"type": "smooth"})
    if exc_cfg.get("type") == "prbs":
        steps = int(round(duration / gt.h))
        frames = prbs_frames(steps, seed=seed, hold=int(exc_cfg.get("hold", 5)))
        excitation = zoh_excitation(frames, gt.h)
    else:
        params = {k: v for k, v in exc_cfg.items() if k != "type"}
        excitation = smooth_excitation(**params)
    traj = simulate_continuous(gt, excitation, duration, dt=sim.get("dt"))

    ref = _geo_reference(cfg)
    noise_cfg = sim.get("noise", {})
    noise = SensorNoise(
        pos_m=noise_cfg.get("pos_m", 0.0),
        psi_rad=noise_cfg.get("psi_rad", 0.0),
        pwm_us=noise_cfg.get("pwm_us", 0.0),
        seed=seed,
    )
    bundle = emit_sensor_logs(traj, ref, noise=noise)
    storage.write_raw_logs(out, bundle)
    storage.write_ground_truth(out / "ground_truth.json", gt)
    vectors = known_params_to_X(gt, kind)
    alpha = gt.dynamic_thrust.alpha if kind == "dynamic" else None
    storage.write_expected_x(out / "expected_x.json", kind, vectors, alpha=alpha)
    print(f"wrote logs for {duration:.1f} s of simulation to {out}")
    return EXIT_OK


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = storage.read_raw_logs(args.logs, adapter=cfg.get("column_adapter"))
    ds = build_prepared_dataset(bundle, _geo_reference(cfg), _prepare_config(cfg))
    storage.write_prepared_csv(out / "prepared.csv", ds)
    summary = ds.summary()
    storage.atomic_write_text(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    print(
        f"prepared {summary['points']} points in {summary['segments']} segments "
        f"({summary['minutes']:.2f} minutes at h={ds.h} s)"
    )
    return EXIT_OK


def cmd_identify(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind or cfg.get("kind", "static")
    ds = storage.read_prepared_csv(args.prepared)
    systems = build_systems(ds, kind)
    model = identify_from_systems(kind, systems, ds.h)
    provenance = storage.provenance_stamp(args.prepared, cfg or None)
    storage.write_model_file(out / "model.json", model, provenance)
    for axis in ("u", "v", "r"):
        rep = model.reports[axis]
        print(f"{axis}: rows={rep.rows_used} residual={rep.residual_norm:.6e} rank={rep.rank}")
    if model.alpha is not None:
        res = model.alpha_resolution
        print(f"alpha={model.alpha:.6f} (residual {res.residual:.2e}, stable={res.stable})")
    return EXIT_OK


def _metrics_csv_rows(doc: dict) -> list[tuple]:
    rows = []
    for section in ("train", "validation"):
        if section not in doc:
            continue
        block = doc[section]
        for metric in ("r2", "mae"):
            for axis, value in block[metric].items():
                rows.append(("metrics", section, axis, metric, value))
    for entry in doc.get("sweep", []):
        for section in ("train", "validation"):
            for metric in ("r2", "mae"):
                for axis, value in entry[section][metric].items():
                    rows.append(
                        (f"sweep_{entry['train_fraction']}", section, axis, metric, value)
                    )
    sens = doc.get("sensitivity")
    if sens:
        for stat in ("mean_r2", "sd_r2", "mean_mae", "sd_mae"):
            for axis, value in sens[stat].items():
                rows.append(("sensitivity", sens["method"], axis, stat, value))
    return rows


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind or cfg.get("kind", "static")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    ds = storage.read_prepared_csv(args.prepared)
    systems = build_systems(ds, kind)
    doc: dict = {"kind": kind}

    if args.model:
        model = storage.read_model_file(args.model)
        if model.kind != kind:
            raise SchemaError(f"model kind {model.kind!r} does not match requested {kind!r}")
        metrics = evaluate(model, systems, None, {"side": "full dataset"})
        doc["validation"] = metrics.as_dict()
        traces = prediction_traces(model, systems, ds)
    else:
        spec = PartitionSpec(args.method, args.train_fraction, seed)
        split = partition(ds, spec, kind, systems=systems)
        model = identify_from_systems(kind, systems, ds.h, rows=split.train)
        info = split.describe()
        train_metrics = evaluate(model, systems, split.train, {**info, "side": "train"})
        val_metrics = evaluate(model, systems, split.val, {**info, "side": "validation"})
        doc["partition"] = info
        doc["train"] = train_metrics.as_dict()
        doc["validation"] = val_metrics.as_dict()
        traces = prediction_traces(model, systems, ds, rows=split.val)
        if model.alpha is not None:
            doc["alpha"] = model.alpha
            doc["alpha_stable"] = model.alpha_resolution.stable

    if args.sensitivity:
        spec = PartitionSpec(args.method, args.train_fraction, seed)
        report = sensitivity_study(ds, kind, spec, repetitions=args.sensitivity)
        doc["sensitivity"] = report.as_dict()
    if args.sweep:
        fractions = tuple(float(f) for f in args.sweep.split(","))
        sweep = training_fraction_sweep(ds, kind, fractions, seed=seed)
        doc["sweep"] = [
            {
                "train_fraction": entry["train_fraction"],
                "train": entry["train"].as_dict(),
                "validation": entry["validation"].as_dict(),
            }
            for entry in sweep
        ]

    storage.atomic_write_text(out / "metrics.json", json.dumps(doc, indent=2) + "\n")
    csv_rows = _metrics_csv_rows(doc)
    lines = ["section,side,axis,metric,value"]
    lines += [",".join(str(x) for x in row) for row in csv_rows]
    storage.atomic_write_text(out / "metrics.csv", "\n".join(lines) + "\n")
    trace_lines = ["t,axis,truth,prediction"]
    trace_lines += [f"{t!r},{axis},{tr!r},{pr!r}" for t, axis, tr, pr in traces]
    storage.atomic_write_text(out / "traces.csv", "\n".join(trace_lines) + "\n")

    val = doc["validation"]
    print("validation R^2:", {a: round(val["r2"][a], 6) for a in ("u", "v", "r")})
    print("validation MAE:", {a: round(val["mae"][a], 6) for a in ("u", "v", "r")})
    return EXIT_OK


def _format_metric_table(title: str, block: dict) -> list[str]:
    lines = [title, f"{'axis':<6}{'R^2':>12}{'MAE':>12}{'rows':>8}"]
    for axis in ("u", "v", "r"):
        lines.append(
            f"{axis:<6}{block['r2'][axis]:>12.6f}{block['mae'][axis]:>12.6f}"
            f"{block['evaluated'][axis]:>8d}"
        )
    lines.append("")
    return lines


def cmd_report(args: argparse.Namespace) -> int:
    metrics_path = Path(args.metrics)
    if not metrics_path.exists():
        raise FileNotFoundError(f"metrics file is missing: {metrics_path}")
    with open(metrics_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    lines: list[str] = [f"Model kind: {doc.get('kind', '?')}", ""]
    if "alpha" in doc:
        lines.append(f"Shared propeller pole alpha = {doc['alpha']:.6f} "
                     f"(stable: {doc.get('alpha_stable')})")
        lines.append("")
    if "partition" in doc:
        part = doc["partition"]
        lines.append(
            f"Partition: {part.get('method')} train_fraction={part.get('train_fraction')} "
            f"seed={part.get('seed')} realized={part.get('realized_train_fraction'):.4f}"
        )
        lines.append("")
    for section, title in (("train", "Training metrics"), ("validation", "Validation metrics")):
        if section in doc:
            lines += _format_metric_table(title, doc[section])
    if "sensitivity" in doc:
        sens = doc["sensitivity"]
        lines.append(
            f"Sensitivity over {sens['repetitions']} random partitions ({sens['method']}):"
        )
        lines.append(f"{'axis':<6}{'mean R^2':>12}{'SD R^2':>12}{'mean MAE':>12}{'SD MAE':>12}")
        for axis in ("u", "v", "r"):
            lines.append(
                f"{axis:<6}{sens['mean_r2'][axis]:>12.6f}{sens['sd_r2'][axis]:>12.2e}"
                f"{sens['mean_mae'][axis]:>12.6f}{sens['sd_mae'][axis]:>12.2e}"
            )
        lines.append("")
    for entry in doc.get("sweep", []):
        lines += _format_metric_table(
            f"Training share {entry['train_fraction']:.0%} (training side)", entry["train"]
        )
        lines += _format_metric_table(
            f"Training share {entry['train_fraction']:.0%} (validation side)",
            entry["validation"],
        )
    text = "\n".join(lines).rstrip() + "\n"
    if args.out:
        storage.atomic_write_text(Path(args.out), text)
        print(f"wrote report to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asvid",
        description="Input-gain identification toolkit for twin-thruster surface vessels",
    )
    parser.add_argument("--config", help="JSON config file with shared settings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic raw sensor logs")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("static", "dynamic"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prepare", help="raw logs -> prepared dataset CSV")
    p.add_argument("--logs", required=True, help="directory with gnss/heading/pwm CSVs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("identify", help="prepared dataset -> model file")
    p.add_argument("--prepared", required=True)
    p.add_argument("--kind", choices=("static", "dynamic"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("validate", help="metrics for an identified or freshly fit model")
    p.add_argument("--prepared", required=True)
    p.add_argument("--model", help="existing model file; omitted = identify-and-validate")
    p.add_argument("--kind", choices=("static", "dynamic"))
    p.add_argument("--method", choices=("by_points", "by_segments"), default="by_points")
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int)
    p.add_argument("--sensitivity", type=int, help="repetitions for the sensitivity study")
    p.add_argument("--sweep", help="comma-separated training fractions, e.g. 0.7,0.6,0.5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="render metrics files as plain-text tables")
    p.add_argument("--metrics", required=True, help="metrics.json from validate")
    p.add_argument("--out", help="output text file (default: stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, SchemaError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
