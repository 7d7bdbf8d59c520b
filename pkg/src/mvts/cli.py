"""Command-line surface: synth, pretrain, finetune, sweep, gradcheck.

Exit codes are a stable contract: 0 success, 1 runtime or tolerance failure,
2 config or usage error. Every command echoes its fully resolved config into
the output location before doing any work, so a run directory always records
what produced it. Outputs are text formats throughout: JSON configs, CSV
metrics, SVG plots.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .data import SynthConfig, generate_synthetic, read_cts, split_dataset, write_cts
from .errors import ConfigError, MvtsError, UsageError
from .gradcheck import run_gradient_suite, run_oracle_suite
from .harness import (
    FinetuneConfig,
    PretrainConfig,
    finetune,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    sweep,
    sweep_max_workers,
)

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _write_json(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form, parses back bitwise
    return str(value)


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(_load_json(args.config))
    os.makedirs(args.out, exist_ok=True)
    _write_json(cfg.to_dict(), os.path.join(args.out, "synth_config.json"))
    ds = generate_synthetic(cfg)
    train, val, test = split_dataset(ds, (0.6, 0.2, 0.2))
    for name, part in (("train", train), ("val", val), ("test", test)):
        write_cts(part, os.path.join(args.out, f"{name}.cts"))
    print(
        f"wrote {train.num_windows}/{val.num_windows}/{test.num_windows} "
        f"windows to {args.out}"
    )
    return 0


def cmd_pretrain(args) -> int:
    cfg = PretrainConfig.from_dict(_load_json(args.config))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    _write_json(cfg.to_dict(), args.out + ".config.json")
    train_ds = read_cts(args.train)
    val_ds = read_cts(args.val)
    result = pretrain(cfg, train_ds, val_ds)
    save_checkpoint(result.checkpoint, args.out)
    _write_csv(
        args.out + ".log.csv",
        ["epoch", "train_loss", "val_loss", "wall_seconds"],
        [
            [log.epoch, _cell(log.train_loss), _cell(log.val_loss), _cell(log.wall_seconds)]
            for log in result.history
        ],
    )
    final = result.history[-1]
    print(f"pretrained {cfg.epochs} epochs, final val loss {final.val_loss:.6f}")
    return 0


def _resolve_finetune_source(args, cfg: FinetuneConfig):
    if args.scratch:
        cfg.from_scratch = True
    if cfg.from_scratch and args.checkpoint:
        raise ConfigError("config requests from_scratch but --checkpoint was given")
    if not cfg.from_scratch and not args.checkpoint:
        raise ConfigError("need --checkpoint unless --scratch or from_scratch is set")
    return None if cfg.from_scratch else load_checkpoint(args.checkpoint)


FINETUNE_CSV_HEADER = ["mode", "loss", "strategy", "n_per_class", "seed", "balanced_accuracy"]


def cmd_finetune(args) -> int:
    cfg = FinetuneConfig.from_dict(_load_json(args.config))
    ckpt = _resolve_finetune_source(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(cfg.to_dict(), os.path.join(args.out, "config.json"))
    result = finetune(
        cfg,
        ckpt,
        read_cts(args.train),
        read_cts(args.val),
        read_cts(args.test),
    )
    rec = result.record
    _write_csv(
        os.path.join(args.out, "metrics.csv"),
        FINETUNE_CSV_HEADER,
        [[rec.mode, rec.loss, rec.strategy, rec.n_per_class, rec.seed, _cell(rec.balanced_accuracy)]],
    )
    print(
        f"{rec.model}/{rec.mode} n={rec.n_per_class} seed={rec.seed}: "
        f"balanced accuracy {rec.balanced_accuracy:.4f} "
        f"({result.epochs_ran} epochs, best {result.best_epoch})"
    )
    return 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{flag} needs at least one value")
    return values


def _sweep_svg(result) -> str:
    """Accuracy vs samples-per-class, one polyline per model variant."""
    width, height = 640, 480
    left, right, top, bottom = 70, 190, 30, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    samples = result.samples

    def x_pos(i: int) -> float:
        if len(samples) == 1:
            return left + plot_w / 2
        return left + plot_w * i / (len(samples) - 1)

    def y_pos(acc: float) -> float:
        return top + plot_h * (1.0 - acc)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        f'stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = y_pos(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" font-size="12">{tick:g}</text>'
        )
    for i, n in enumerate(samples):
        x = x_pos(i)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" '
            f'stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 18}" text-anchor="middle" font-size="12">{n}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">samples per class</text>'
    )
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {top + plot_h / 2:.1f})">balanced accuracy</text>'
    )
    for row_i, row in enumerate(result.summary):
        color = _PALETTE[row_i % len(_PALETTE)]
        points = " ".join(
            f"{x_pos(i):.1f},{y_pos(row.means[n]):.1f}"
            for i, n in enumerate(samples)
            if row.means[n] is not None
        )
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 16 + 18 * row_i
        lx = left + plot_w + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 28}" y="{ly}" font-size="12">{row.model}/{row.mode}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_sweep(args) -> int:
    cfg = FinetuneConfig.from_dict(_load_json(args.config))
    samples = _parse_int_list(args.samples, "--samples")
    seeds = _parse_int_list(args.seeds, "--seeds")
    ckpt = _resolve_finetune_source(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(cfg.to_dict(), os.path.join(args.out, "config.json"))
    result = sweep(
        cfg,
        ckpt,
        read_cts(args.train),
        read_cts(args.val),
        read_cts(args.test),
        samples=samples,
        seeds=seeds,
        max_workers=sweep_max_workers(),
    )
    run_rows = []
    for cell in result.cells:
        if cell.record is not None:
            run_rows.append(
                [
                    cell.model,
                    cell.mode,
                    cell.record.loss,
                    cell.record.strategy,
                    cell.n_per_class,
                    cell.seed,
                    _cell(cell.record.balanced_accuracy),
                    "",
                ]
            )
        else:
            run_rows.append(
                [cell.model, cell.mode, "", "", cell.n_per_class, cell.seed, "", cell.error]
            )
    _write_csv(
        os.path.join(args.out, "runs.csv"),
        ["model", "mode", "loss", "strategy", "n_per_class", "seed", "balanced_accuracy", "error"],
        run_rows,
    )
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["model", "mode"] + [f"n{n}" for n in samples] + ["failures"],
        [
            [row.model, row.mode] + [_cell(row.means[n]) for n in samples] + [row.failures]
            for row in result.summary
        ],
    )
    with open(os.path.join(args.out, "plot.svg"), "w", encoding="utf-8") as fh:
        fh.write(_sweep_svg(result))
    failed = sum(1 for cell in result.cells if cell.error)
    print(f"sweep finished: {len(result.cells) - failed}/{len(result.cells)} cells succeeded")
    for row in result.summary:
        means = ", ".join(
            f"n{n}={row.means[n]:.4f}" if row.means[n] is not None else f"n{n}=NA"
            for n in samples
        )
        print(f"  {row.model}/{row.mode}: {means}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seed=args.seed, instances=args.instances)
    results += run_oracle_suite(seed=args.seed)
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name:<32} max_err={res.max_error:.3e} tol={res.tolerance:.0e} {status}")
        ok = ok and res.passed
    print(f"{'all checks passed' if ok else 'FAILURES detected'} ({len(results)} checks)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvts",
        description="Channel-agnostic contrastive pretraining on multivariate time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic CTS train/val/test splits")
    p.add_argument("--config", required=True, help="SynthConfig JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="contrastive pretraining to a checkpoint")
    p.add_argument("--config", required=True, help="PretrainConfig JSON")
    p.add_argument("--train", required=True, help="training CTS file")
    p.add_argument("--val", required=True, help="validation CTS file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning of one configuration")
    p.add_argument("--config", required=True, help="FinetuneConfig JSON")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint", help="pretrained checkpoint path")
    src.add_argument("--scratch", action="store_true", help="random initialization baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="run output directory")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("sweep", help="label-efficiency grid over models, modes, seeds")
    p.add_argument("--config", required=True, help="base FinetuneConfig JSON")
    p.add_argument("--checkpoint", help="pretrained checkpoint path")
    p.add_argument("--scratch", action="store_true", help="scratch-only sweep")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--samples", required=True, help="comma-separated n_per_class values")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--out", required=True, help="sweep output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference and loss-oracle verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MvtsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
