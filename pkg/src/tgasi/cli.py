"""Command-line entry point.

Every command writes its outputs and a ``run_manifest.json`` into the output
directory (``--out``, else ``$TGASI_OUTPUT_DIR``, else ``./runs``). Failures
exit nonzero and print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from tgasi import __version__
from tgasi.config import ConfigError, dump_config, load_config
from tgasi.diffusion import PropagationModel, generate_dataset, read_dataset, write_dataset
from tgasi.encoder import ABLATIONS
from tgasi.evaluation import render_table
from tgasi.graph import GraphFormatError, load_edge_list
from tgasi.influence import InfluenceMatrix, fit_influence
from tgasi.io import atomic_write_text, config_hash, read_json, write_json
from tgasi.training import (
    LOSSES, evaluate_checkpoint, load_checkpoint, save_checkpoint, train, transfer_evaluate)

log = logging.getLogger("tgasi")

EXIT_USAGE, EXIT_FAILED = 2, 1
METRIC_COLUMNS = ["run", "f1", "aed", "precision", "recall", "degree_f1", "random_f1"]


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("TGASI_OUTPUT_DIR") or "runs")
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _write_manifest(out: Path, args, config: dict, graph_checksum: str, seed, extra=None):
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "graph_checksum": graph_checksum,
        "seed": seed,
    }
    manifest.update(extra or {})
    write_json(out / "run_manifest.json", manifest)


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _experiment_config(args, **train_overrides):
    overrides = {"train": {}, "estimator": {}}
    for flag, key in (("folds", "folds"), ("epochs", "epochs"), ("lr", "learning_rate"),
                      ("max_folds", "max_folds"), ("loss", "loss"), ("patience", "patience")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides["train"][key] = value
    if getattr(args, "seed", None) is not None:
        overrides["train"]["seed"] = args.seed
        overrides["estimator"]["seed"] = args.seed
    overrides["train"].update(train_overrides)
    return load_config(getattr(args, "config", None), overrides)


def _loss_rows(result) -> list[dict]:
    rows = []
    for fold in result.folds:
        h = fold["history"]
        for epoch, (tr, va, terms) in enumerate(zip(h["train"], h["val"], h["terms"]), 1):
            rows.append({"fold": fold["fold"], "epoch": epoch, "train_total": tr, "val_total": va,
                         "entropy": terms[0], "mse": terms[1], "graph": terms[2]})
    return rows


def _metrics_record(result) -> dict:
    return {
        "mean": result.metrics,
        "folds": [{"fold": f["fold"], **f["metrics"],
                   "stop_epoch": f["history"]["stop_epoch"],
                   "best_epoch": f["history"]["best_epoch"],
                   "baselines": f["baselines"]} for f in result.folds],
    }


def cmd_generate(args):
    out = _out_dir(args)
    g = load_edge_list(_existing(args.graph, "graph"))
    model = PropagationModel(args.model, heterogeneous=not args.homogeneous,
                             recovery_rate=args.recovery_rate if args.model == "SIR" else 0.0)
    ds = generate_dataset(g, model, args.episodes, args.source_fraction, args.n_prime,
                          args.seed, workers=args.workers)
    path = out / args.name
    write_dataset(path, ds)
    _write_manifest(out, args, ds.manifest["config"], g.checksum, args.seed,
                    {"dataset": str(path)})
    return {"dataset": str(path), "episodes": len(ds.episodes)}


def cmd_fit_influence(args):
    out = _out_dir(args)
    ds = read_dataset(_existing(args.dataset, "dataset"))
    cfg = _experiment_config(args)
    w, history = fit_influence(ds.graph, ds.episodes, cfg.estimator)
    w.save(out / "influence.txt")
    atomic_write_text(out / "influence_loss.csv",
                      _csv([{"epoch": i + 1, "loss": v} for i, v in enumerate(history)]))
    _write_manifest(out, args, cfg.to_dict(), ds.graph.checksum, cfg.estimator.seed)
    return {"influence": str(out / "influence.txt"), "final_loss": history[-1]}


def _run_training(args, out: Path, cfg, ds, influence=None, tag="train"):
    result = train(ds, cfg, influence)
    save_checkpoint(result.checkpoint(), out / f"{tag}.ckpt")
    write_json(out / f"{tag}_metrics.json", _metrics_record(result))
    atomic_write_text(out / f"{tag}_loss_curves.csv", _csv(_loss_rows(result)))
    return result


def _influence_arg(args, ds):
    if not getattr(args, "influence", None):
        return None
    w = InfluenceMatrix.load(_existing(args.influence, "influence file"))
    if w.graph_checksum and w.graph_checksum != ds.graph.checksum:
        raise UsageError("influence file was fitted on another graph")
    return w


def cmd_train(args):
    out = _out_dir(args)
    ds = read_dataset(_existing(args.dataset, "dataset"))
    cfg = _experiment_config(args, **({"ablation": args.ablation} if args.ablation else {}))
    result = _run_training(args, out, cfg, ds, _influence_arg(args, ds))
    atomic_write_text(out / "config.yaml", dump_config(cfg))
    _write_manifest(out, args, cfg.to_dict(), ds.graph.checksum, cfg.train.seed)
    return {"checkpoint": str(out / "train.ckpt"), **{k: result.metrics[k] for k in ("f1", "aed")}}


def cmd_ablate(args):
    out = _out_dir(args)
    ds = read_dataset(_existing(args.dataset, "dataset"))
    variants = [v for v in ABLATIONS if v != "none"] if "all" in args.variant else args.variant
    base = _experiment_config(args)
    influence = _influence_arg(args, ds)
    if influence is None:
        influence, _ = fit_influence(ds.graph, ds.episodes, base.estimator)
    rows = []
    for variant in ["none", *variants]:
        cfg = base.replace(train={"ablation": variant})
        tag = "full" if variant == "none" else f"ablation_{variant}"
        result = _run_training(args, out, cfg, ds, influence, tag=tag)
        rows.append({"run": "full" if variant == "none" else variant, **result.metrics})
    table = render_table(rows, METRIC_COLUMNS + ["stop_epochs"])
    atomic_write_text(out / "ablation_report.txt", table + "\n")
    write_json(out / "ablation_summary.json", rows)
    _write_manifest(out, args, base.to_dict(), ds.graph.checksum, base.train.seed,
                    {"variants": variants})
    return {"report": str(out / "ablation_report.txt"), "rows": rows}


def _eval_common(args, fn, tag):
    out = _out_dir(args)
    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    ds = read_dataset(_existing(args.dataset, "dataset"))
    report = fn(ckpt, ds)
    write_json(out / f"{tag}_metrics.json", report)
    _write_manifest(out, args, ckpt["config"], ds.graph.checksum, ckpt["config"]["train"]["seed"],
                    {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset)})
    return {k: v for k, v in report.items() if k != "per_episode"}


def cmd_evaluate(args):
    return _eval_common(args, evaluate_checkpoint, "evaluate")


def cmd_transfer(args):
    return _eval_common(args, transfer_evaluate, "transfer")


def cmd_report(args):
    run = _existing(args.run, "run directory")
    rows = []
    for path in sorted(run.glob("*_metrics.json")):
        data = read_json(path)
        entries = data if isinstance(data, list) else [data.get("mean", data)]
        for entry in entries:
            rows.append({"run": entry.get("run", path.stem.removesuffix("_metrics")), **entry})
    if not rows:
        raise UsageError(f"no metrics files in {run}")
    text = render_table(rows, METRIC_COLUMNS)
    atomic_write_text(run / "report.txt", text + "\n")
    print(text)
    return {"report": str(run / "report.txt")}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tgasi", description="Multi-source rumor localization.")
    p.add_argument("--version", action="version", version=f"tgasi {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", help="output directory (default $TGASI_OUTPUT_DIR or ./runs)")
        if seed:
            sp.add_argument("--seed", type=int)
        return sp

    g = common(sub.add_parser("generate", help="simulate a diffusion dataset"))
    g.add_argument("--graph", required=True)
    g.add_argument("--episodes", type=int, default=300)
    g.add_argument("--model", choices=["IC", "SI", "SIR"], default="IC")
    g.add_argument("--homogeneous", action="store_true")
    g.add_argument("--recovery-rate", type=float, default=0.02)
    g.add_argument("--source-fraction", type=float, default=0.1)
    g.add_argument("--n-prime", type=int, default=3)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--name", default="dataset.jsonl")
    g.set_defaults(func=cmd_generate, seed=0)

    def training_flags(sp):
        sp.add_argument("--dataset", required=True)
        sp.add_argument("--config")
        sp.add_argument("--influence", help="pre-fitted influence file")
        sp.add_argument("--folds", type=int)
        sp.add_argument("--max-folds", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--patience", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--loss", choices=LOSSES)

    f = common(sub.add_parser("fit-influence", help="fit the influence matrix"))
    f.add_argument("--dataset", required=True)
    f.add_argument("--config")
    f.set_defaults(func=cmd_fit_influence)

    t = common(sub.add_parser("train", help="cross-validated training"))
    training_flags(t)
    t.add_argument("--ablation", choices=ABLATIONS)
    t.set_defaults(func=cmd_train)

    a = common(sub.add_parser("ablate", help="full model plus ablation variants on one split"))
    training_flags(a)
    a.add_argument("--variant", action="append", choices=[*ABLATIONS[1:], "all"], required=True)
    a.set_defaults(func=cmd_ablate)

    for name, func, text in (("evaluate", cmd_evaluate, "evaluate a checkpoint"),
                             ("transfer", cmd_transfer, "evaluate on another graph")):
        e = common(sub.add_parser(name, help=text), seed=False)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--dataset", required=True)
        e.set_defaults(func=func)

    r = common(sub.add_parser("report", help="tabulate metrics in a run directory"), seed=False)
    r.add_argument("--run", required=True)
    r.set_defaults(func=cmd_report)
    return p


def _fail(command, exc, code):
    record = {"error": type(exc).__name__, "message": str(exc), "command": command}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(None, UsageError("invalid arguments"), EXIT_USAGE)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except (UsageError, ConfigError, GraphFormatError, FileNotFoundError) as exc:
        return _fail(args.command, exc, EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001  any run failure becomes an error record
        log.debug("run failed", exc_info=True)
        return _fail(args.command, exc, EXIT_FAILED)
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
