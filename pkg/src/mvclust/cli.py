"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or file-format error,
3 training failure (every run aborted).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Sequence

from . import data, plot, propcheck, trainer
from .errors import DataFormatError, DomainError, ShapeError, TrainingError, UsageError
from .metrics import NMI_NORMALIZATION, acc, nmi
from .model import load_checkpoint, predict, save_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvclust", description="Multi-view deep clustering with simple and contrastive fusion.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-run progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def training_flags(sp):
        sp.add_argument("--config", help="TrainConfig file (key = value lines or JSON)")
        sp.add_argument("--data", required=True, help="MVD1 file or CSV manifest")
        sp.add_argument("--mode", choices=("simvc", "comvc"))
        sp.add_argument("--seed", type=_seed, help="base seed (overrides the config)")
        sp.add_argument("--runs", type=_positive, help="number of runs (overrides the config)")
        sp.add_argument("--epochs", type=_positive, help="epochs per run (overrides the config)")

    g = sub.add_parser("generate-toy", help="write a toy dataset")
    g.add_argument("--k", type=int, default=5, choices=sorted(data.TOY_PARTITIONS))
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--per-cluster", type=_positive, default=200)
    g.add_argument("--format", choices=("mvd1", "csv"), default=None,
                   help="default: csv when --out ends in .json, else mvd1")
    g.add_argument("--out", required=True, help="output file (CSV: path of the JSON manifest)")

    t = sub.add_parser("train", help="run the best-of-N training protocol")
    training_flags(t)
    t.add_argument("--out", default="run", help="output directory")

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="optional JSON file for the results")

    a = sub.add_parser("ablate", help="contrastive toggles and loss-term grid")
    training_flags(a)
    a.add_argument("--out", default="ablation", help="output directory")
    a.add_argument("--only", choices=("toggles", "terms"), help="run just one of the two grids")

    n = sub.add_parser("noise-sweep", help="noisy-view weight versus noise level")
    training_flags(n)
    n.add_argument("--view", type=int, default=1, help="index of the view to corrupt")
    n.add_argument("--noise-stds", default="0,1x,5x",
                   help="comma list; a trailing x means a multiple of the view's feature std")
    n.add_argument("--out", default="noise_sweep", help="output directory")

    pc = sub.add_parser("propcheck", help="cluster-count bounds versus brute force")
    pc.add_argument("--toy5", action="store_true", help="the 5-cluster toy partitions")
    pc.add_argument("--toy3", action="store_true", help="the 3-cluster toy partitions")
    pc.add_argument("--partitions", help='JSON list of per-view block lists, e.g. "[[[0,1],[2]],[[0],[1,2]]]"')
    pc.add_argument("--k", type=_positive, help="sweep every two-view partition pair of k clusters")
    pc.add_argument("--out", help="optional JSON file for the reports")

    pl = sub.add_parser("plot", help="SVG scatter panels")
    pl.add_argument("--data", required=True)
    pl.add_argument("--checkpoint", help="also plot view and fused representations")
    pl.add_argument("--out", default="plots", help="output directory")
    return p


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _config(args) -> trainer.TrainConfig:
    cfg = trainer.load_config(args.config) if args.config else trainer.TrainConfig()
    overrides = {k: getattr(args, k) for k in ("mode", "seed", "runs", "epochs") if getattr(args, k) is not None}
    return replace(cfg, **overrides)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    cells = [list(columns)] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _parse_stds(text: str, ds, view: int) -> list[float]:
    scale = trainer.view_std(ds, view)
    stds = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            stds.append(float(item[:-1]) * scale if item.endswith("x") else float(item))
        except ValueError:
            raise UsageError(f"--noise-stds: cannot parse {item!r}") from None
    if not stds or any(s < 0 for s in stds):
        raise UsageError("--noise-stds needs at least one non-negative value")
    return stds


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate_toy(args) -> int:
    ds = data.generate_toy(data.toy_spec(args.k, per_cluster=args.per_cluster, seed=args.seed))
    fmt = args.format or ("csv" if args.out.endswith(".json") else "mvd1")
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    if fmt == "csv":
        data.save_csv(ds, args.out)
    else:
        data.save(ds, args.out)
    print(f"wrote {ds.name}: n={ds.n}, views={ds.n_views}, dims={list(ds.dims)} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = data.load(args.data)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "config.cfg"), "w") as fh:
        fh.write(trainer.format_config_text(cfg))
    try:
        state, records = trainer.train_protocol(cfg, ds)
    except TrainingError as exc:
        _write_json(os.path.join(args.out, "records.json"),
                    trainer.records_document(cfg, exc.records, os.path.basename(args.data)))
        raise
    doc = trainer.records_document(cfg, records, os.path.basename(args.data))
    _write_json(os.path.join(args.out, "records.json"), doc)
    # wall-clock times vary between executions, so they live apart from the records
    _write_json(os.path.join(args.out, "timings.json"),
                {"runs": [{"seed": r.seed, "wall_time": r.wall_time} for r in records]})
    best = records[doc["selected"]]
    save_checkpoint(state, os.path.join(args.out, "model.mvck"),
                    extra={"config_hash": cfg.config_hash(), "seed": best.seed})
    print(format_table([{"seed": r.seed, "score": r.score, "acc": (r.metrics or {}).get("acc"),
                         "nmi": (r.metrics or {}).get("nmi"), "weights": r.fusion_weights,
                         "selected": "*" if r.selected else "", "aborted": r.aborted} for r in records],
                       ["seed", "score", "acc", "nmi", "weights", "aborted", "selected"]), end="")
    print(f"selected seed {best.seed}; records and checkpoint in {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    state, extra = load_checkpoint(args.checkpoint)
    ds = data.load(args.data)
    if tuple(ds.dims) != tuple(state.spec.view_dims):
        raise DataFormatError(f"{args.data} has view dims {list(ds.dims)}, checkpoint {args.checkpoint} "
                              f"expects {list(state.spec.view_dims)}")
    pred, fwd = predict(state, ds.views)
    result = {"checkpoint": args.checkpoint, "data": args.data,
              "fusion_weights": fwd.weights.data.tolist(), "extra": extra}
    print("fusion weights: " + "  ".join(f"w{v}={w:.4f}" for v, w in enumerate(result["fusion_weights"])))
    if ds.labels is not None:
        result.update(acc=acc(pred, ds.labels), nmi=nmi(pred, ds.labels), nmi_normalization=NMI_NORMALIZATION)
        print(f"ACC {result['acc']:.4f}  NMI {result['nmi']:.4f}")
    else:
        print("dataset has no labels; ACC/NMI not computed")
    if args.out:
        _write_json(args.out, result)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    ds = data.load(args.data)
    os.makedirs(args.out, exist_ok=True)
    report: dict = {"config": cfg.to_dict(), "dataset": os.path.basename(args.data)}
    text = []
    if args.only in (None, "toggles"):
        rows = trainer.contrastive_ablation(cfg, ds)
        report["toggles"] = rows
        text.append("CoMVC toggles\n" + format_table(
            rows, ["negative_sampling", "adaptive_weight", "acc", "nmi", "score", "fusion_weights"]))
    if args.only in (None, "terms"):
        rows = trainer.loss_term_ablation(cfg, ds)
        report["loss_terms"] = rows
        text.append("Loss terms\n" + format_table(rows, ["model", "L1", "L2", "L3", "acc", "nmi", "score"]))
    _write_json(os.path.join(args.out, "ablation.json"), report)
    with open(os.path.join(args.out, "ablation.txt"), "w") as fh:
        fh.write("\n".join(text))
    print("\n".join(text), end="")
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    cfg = _config(args)
    ds = data.load(args.data)
    if not 0 <= args.view < ds.n_views:
        raise UsageError(f"--view {args.view} out of range for {ds.n_views} views")
    stds = _parse_stds(args.noise_stds, ds, args.view)
    rows = trainer.noise_sweep(cfg, ds, args.view, stds)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "noise_sweep.json"),
                {"config": cfg.to_dict(), "view": args.view, "view_std": trainer.view_std(ds, args.view), "rows": rows})
    text = format_table(rows, ["std", "noisy_weight", "fusion_weights", "acc", "nmi", "seed"])
    with open(os.path.join(args.out, "noise_sweep.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_propcheck(args) -> int:
    targets = []
    if args.toy5:
        targets.append(("toy5", propcheck.TOY5))
    if args.toy3:
        targets.append(("toy3", propcheck.TOY3))
    if args.partitions:
        try:
            blocks = json.loads(args.partitions)
            k = 1 + max(c for view in blocks for block in view for c in block)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"--partitions: {exc}") from None
        targets.append(("custom", propcheck.ViewPartitions.from_blocks(k, blocks)))
    if not targets and args.k is None:
        targets = [("toy5", propcheck.TOY5), ("toy3", propcheck.TOY3)]
    out: dict = {}
    for name, parts in targets:
        rep = propcheck.verify_proposition(parts)
        out[name] = rep
        print(f"{name}: k={rep['k']} partitions={rep['partitions']}")
        for kind in ("aligned", "unaligned"):
            print(f"  {kind}={rep['formula'][kind]} brute_force={rep['brute_force'][kind]} ({rep['status'][kind]})")
    if args.k is not None:
        if args.k > propcheck.MAX_K:
            raise UsageError(f"--k {args.k} exceeds the exhaustive-search limit {propcheck.MAX_K}")
        reports = propcheck.sweep(args.k)
        slack = {kind: sum(r["status"][kind] == "slack" for r in reports) for kind in ("aligned", "unaligned")}
        out["sweep"] = {"k": args.k, "instances": len(reports), "violations": 0, "slack": slack}
        print(f"sweep k={args.k}: {len(reports)} partition pairs, 0 violations, "
              f"slack aligned={slack['aligned']} unaligned={slack['unaligned']}")
    if args.out:
        _write_json(args.out, out)
    return EXIT_OK


def cmd_plot(args) -> int:
    ds = data.load(args.data)
    if args.checkpoint:
        state, _ = load_checkpoint(args.checkpoint)
        if tuple(ds.dims) != tuple(state.spec.view_dims):
            raise DataFormatError(f"{args.data} has view dims {list(ds.dims)}, checkpoint {args.checkpoint} "
                                  f"expects {list(state.spec.view_dims)}")
        paths = plot.representation_panels(state, ds, args.out)
    else:
        os.makedirs(args.out, exist_ok=True)
        paths = []
        for v, x in enumerate(ds.views):
            path = os.path.join(args.out, f"view{v}_input.svg")
            plot.emit_svg_scatter(plot.to_2d(x), ds.labels, path, f"view {v} input")
            paths.append(path)
    for path in paths:
        print(path)
    return EXIT_OK


COMMANDS = {
    "generate-toy": cmd_generate_toy,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "noise-sweep": cmd_noise_sweep,
    "propcheck": cmd_propcheck,
    "plot": cmd_plot,
}


def run_command(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (DataFormatError, DomainError, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
