"""Command-line interface.

Subcommands: simulate, label, train, eval, adapt, attention, report.
Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import acquisition, evaluation, simulator
from .errors import ConfigError, GazekitError
from .geometry import SphericalGaze, angular_error_spherical


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="thread count hint")


def _session_config(args) -> simulator.SessionConfig:
    if args.config:
        cfg = simulator.SessionConfig.from_json(args.config)
        if args.seed is not None and "--seed" in sys.argv:
            cfg = simulator.SessionConfig(
                **{**simulator.asdict_config(cfg), "seed": args.seed}
            )
        return cfg
    return simulator.SessionConfig(
        seed=args.seed, noise=simulator.DEFAULT_LABEL_NOISE
    )


def cmd_simulate(args) -> int:
    cfg = _session_config(args)
    sessions = []
    for k in range(args.sessions):
        c = simulator.SessionConfig(
            **{**simulator.asdict_config(cfg), "seed": cfg.seed + k}
        )
        sessions.append(simulator.simulate_session(c))
    simulator.export_dataset(sessions, tuple(args.ratios), args.out)
    print(f"wrote dataset under {args.out}")
    return 0


def cmd_label(args) -> int:
    board = acquisition.BoardGeometry()
    rig = acquisition.RigConfig(camera_height=args.camera_height)
    rows = []
    with open(args.data) as f:
        for line in f:
            fr = simulator.frame_from_json(json.loads(line))
            label = acquisition.label_gaze(fr.detection, fr.marker, board, rig)
            rows.append(
                {
                    "subject_id": fr.subject_id,
                    "frame_index": fr.frame_index,
                    "yaw": label.spherical.yaw,
                    "pitch": label.spherical.pitch,
                    "error_vs_gt_deg": angular_error_spherical(
                        label.spherical, fr.gt_gaze
                    ),
                }
            )
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(
            f, fieldnames=["subject_id", "frame_index", "yaw", "pitch", "error_vs_gt_deg"]
        )
        w.writeheader()
        for r in rows:
            w.writerow(r)
    print(f"labeled {len(rows)} frames -> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .training import TrainConfig, train

    dataset = simulator.load_dataset(args.data)
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        loss_kind=args.loss,
    )
    params, history = train(dataset, cfg, model_kind=args.model)
    save_checkpoint(args.out, params, cfg)
    if args.history:
        with open(args.history, "w") as f:
            json.dump(history, f, sort_keys=True)
    print(f"trained {args.model}/{args.loss}; "
          f"final val error {history[-1]['val_error_deg']:.2f} deg -> {args.out}")
    return 0


def _predict_split(params, windows):
    from .models import predict_batch
    from .training import _model_inputs

    X, Y = simulator.windows_to_arrays(windows)
    ang, sig = predict_batch(params, _model_inputs(X, params.config))
    preds = [
        SphericalGaze(
            yaw=float(np.arctan2(np.sin(a[0]), np.cos(a[0]))),
            pitch=float(np.clip(a[1], -np.pi / 2, np.pi / 2)),
            sigma=float(s),
        )
        for a, s in zip(ang, sig)
    ]
    gts = [
        SphericalGaze(yaw=float(np.arctan2(np.sin(y[0]), np.cos(y[0]))),
                      pitch=float(y[1]))
        for y in Y
    ]
    return preds, gts


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint

    params, _ = load_checkpoint(args.checkpoint)
    dataset = simulator.load_dataset(args.data)
    preds, gts = _predict_split(params, dataset.test)
    report = evaluation.subset_errors(preds, gts)
    errs = [angular_error_spherical(p, g) for p, g in zip(preds, gts)]
    report.uncert_spearman = evaluation.spearman([p.sigma for p in preds], errs)
    report.coverage80 = evaluation.coverage(preds, gts)["per_angle"]
    rows = evaluation.yaw_curve(preds, gts, bin_width_deg=args.bin_width)
    report.yaw_bins = rows
    with open(args.report, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True)
    if args.plots:
        os.makedirs(args.plots, exist_ok=True)
        evaluation.write_yaw_curve_csv(rows, os.path.join(args.plots, "yaw_curve.csv"))
        evaluation.export_distribution_map(
            gts, os.path.join(args.plots, "gaze_distribution.svg")
        )
    print(f"mean error {report.mean_err_all:.2f} deg -> {args.report}")
    return 0


def cmd_adapt(args) -> int:
    from .adapt import AdaptConfig, adapt_train
    from .checkpoint import load_checkpoint, save_checkpoint

    params, tc = load_checkpoint(args.checkpoint)
    src = simulator.load_dataset(args.src)
    tgt_frames = []
    with open(args.tgt) as f:
        for line in f:
            tgt_frames.append(simulator.frame_from_json(json.loads(line)))
    cfg = AdaptConfig(seed=args.seed, epochs=args.epochs)
    adapted = adapt_train(params, src, tgt_frames, cfg)
    save_checkpoint(args.out, adapted, tc)
    print(f"adapted model -> {args.out}")
    return 0


def cmd_attention(args) -> int:
    with open(args.grid) as f:
        g = json.load(f)
    grid = evaluation.AttentionGrid(
        point=np.array(g["point"]),
        normal=np.array(g["normal"]),
        rows=g.get("rows", 4),
        cols=g.get("cols", 6),
        cell_height=g.get("cell_height", 0.25),
        cell_width=g.get("cell_width", 0.25),
    )
    origins, directions, labels = [], [], []
    with open(args.data) as f:
        for line in f:
            r = json.loads(line)
            origins.append(np.array(r["origin"]))
            directions.append(np.array(r["direction"]))
            if "label" in r:
                labels.append(tuple(r["label"]))
    result = evaluation.attention_map(
        origins, directions, grid, labels if len(labels) == len(origins) else None
    )
    doc = {
        "counts": result.counts.tolist(),
        "hits": [list(h) if h else None for h in result.hits],
        "accuracy": result.accuracy,
    }
    with open(args.out, "w") as f:
        json.dump(doc, f, sort_keys=True)
    print(f"attention heatmap -> {args.out}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        with open(path) as f:
            doc = json.load(f)
        rows.append(
            {
                "source": os.path.basename(path),
                "mean_err_all": doc.get("mean_err_all"),
                "mean_err_front180": doc.get("mean_err_front180"),
                "mean_err_frontfacing": doc.get("mean_err_frontfacing"),
                "uncert_spearman": doc.get("uncert_spearman"),
                "coverage80": doc.get("coverage80"),
            }
        )
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(
            f,
            fieldnames=[
                "source",
                "mean_err_all",
                "mean_err_front180",
                "mean_err_frontfacing",
                "uncert_spearman",
                "coverage80",
            ],
        )
        w.writeheader()
        for r in rows:
            w.writerow(r)
    print(f"combined report -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gazekit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--sessions", type=int, default=1)
    s.add_argument("--ratios", type=float, nargs=3, default=[0.75, 0.10, 0.15])
    _add_common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("label", help="label frames from detections")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--camera-height", type=float, default=1.6)
    _add_common(s)
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("train", help="train a gaze model")
    s.add_argument("--model", choices=["static", "trn", "lstm"], default="static")
    s.add_argument("--loss", choices=["pinball", "mse"], default="pinball")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--history", default=None)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=64)
    _add_common(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--plots", default=None)
    s.add_argument("--bin-width", type=float, default=15.0)
    _add_common(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("adapt", help="domain-adapt a trained model")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--src", required=True)
    s.add_argument("--tgt", required=True, help="JSONL of unlabeled target frames")
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=5)
    _add_common(s)
    s.set_defaults(func=cmd_adapt)

    s = sub.add_parser("attention", help="shelf attention heatmap from gaze rays")
    s.add_argument("--grid", required=True)
    s.add_argument("--data", required=True, help="JSONL of {origin, direction, label?}")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=cmd_attention)

    s = sub.add_parser("report", help="combine metric reports into a CSV table")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out", required=True)
    _add_common(s)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except (ConfigError, ValueError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (GazekitError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
