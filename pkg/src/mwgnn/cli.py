"""Command-line entry point: ``mwgnn <subcommand> ...``.

Exit codes: 0 success, 1 invalid input (bad flag, malformed or missing
file), 2 failure while running.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields, replace

import numpy as np

from . import __version__
from .io import atomic_write_text, bundle_from_dict, dumps, save_bundle
from .metrics import KatzDivergence, global_edge_homophily, homophily_report, katz_centrality
from .models import ABLATIONS, MODEL_KINDS, MWGNNConfig, PreparedGraph, TrainConfig, train
from .synthgen import (CombineSpec, SyntheticSpec, block_matrix_for_target_h, combine_graphs,
                       combined_preset, generate_graph)
from .theory import TheoremSetting, canonical_setting, verify_concentration

log = logging.getLogger("mwgnn")

CSV_COLUMNS = ("dataset", "model", "variant", "seed", "h", "alpha", "k", "best_epoch",
               "val_acc", "test_acc", "wall_time_ms")


class UsageError(Exception):
    """Invalid user input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- flag value types -------------------------------------------------------

def _unit(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one value")
    return vals


def _seed_list(text):
    """``5`` means seeds 0..4; ``1,4,9`` lists them."""
    try:
        if "," in text:
            seeds = [int(x) for x in text.split(",") if x.strip()]
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count or comma-separated seeds, got {text!r}") from None
    if not seeds or min(seeds) < 0 or len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError("seeds must be distinct non-negative integers")
    return seeds


def _choice_list(choices):
    def parse(text):
        items = [x.strip() for x in text.split(",") if x.strip()]
        bad = [x for x in items if x not in choices]
        if not items or bad:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)} (got {text!r})")
        return items
    return parse


# flag name -> (config class, field)
MODEL_FLAGS = {
    "k": _nonneg_int, "alpha": _unit, "lambda_1": _unit, "lambda_2": _unit, "beta": _unit,
    "d_meta": _positive_int, "d_hidden": _positive_int, "d_q": _positive_int,
    "d_score": _positive_int, "num_layers": _positive_int, "max_context": _positive_int,
    "spd_truncation": _nonneg_int,
}
TRAIN_FLAGS = {"lr": _positive_float, "weight_decay": _nonneg_float, "max_epochs": _positive_int,
               "patience": _positive_int}


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_model_flags(p, ablation=True):
    for name, typ in MODEL_FLAGS.items():
        p.add_argument(_flag(name), type=typ, default=None)
    p.add_argument("--feature-mode", choices=("average", "gru"), default=None)
    if ablation:
        p.add_argument("--ablation", choices=ABLATIONS, default=None)
    for name, typ in TRAIN_FLAGS.items():
        p.add_argument(_flag(name), type=typ, default=None)


def _configs(args):
    mk = {f.name: getattr(args, f.name) for f in fields(MWGNNConfig)
          if getattr(args, f.name, None) is not None}
    tk = {f.name: getattr(args, f.name) for f in fields(TrainConfig)
          if f.name != "seed" and getattr(args, f.name, None) is not None}
    try:
        mcfg = MWGNNConfig(**mk)
    except ValueError as e:
        given = " ".join(_flag(n) for n in mk) or "defaults"
        raise UsageError(f"invalid model flags ({given}): {e}") from None
    try:
        tcfg = TrainConfig(**tk)
    except ValueError as e:
        raise UsageError(f"invalid training flags: {e}") from None
    return mcfg, tcfg


# -- helpers ------------------------------------------------------------------

def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{what} file {path} is not valid JSON: {e}") from None


def _load_graph(path):
    d = _read_json(path, "graph")
    try:
        return bundle_from_dict(d)
    except (ValueError, TypeError, IndexError) as e:
        raise UsageError(f"graph file {path} is malformed: {e}") from None


def _workers():
    raw = os.environ.get("MWGNN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"MWGNN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"MWGNN_THREADS must be a positive integer, got {raw!r}")
    return n


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def result_row(report, h=None):
    """One CSV row (dict) for a TrainReport."""
    model_cfg = report.config.get("model", {})
    is_mwgnn = report.model == "mwgnn"
    return {
        "dataset": report.dataset, "model": report.model, "variant": report.variant,
        "seed": report.seed, "h": h,
        "alpha": model_cfg.get("alpha") if is_mwgnn else None,
        "k": model_cfg.get("k") if is_mwgnn else None,
        "best_epoch": report.best_epoch, "val_acc": report.best_val_acc,
        "test_acc": report.test_acc, "wall_time_ms": report.wall_time * 1000.0,
    }


def format_results(rows) -> str:
    rows = sorted(rows, key=lambda r: (str(r["dataset"]), str(r["model"]), int(r["seed"])))
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def export_results(rows, path, metadata=None):
    """Write sorted rows as CSV; ``metadata`` goes to ``<path>.meta.json``."""
    rows = list(rows)
    if not rows:
        raise ValueError("no results to export")
    atomic_write_text(path, format_results(rows))
    if metadata is not None:
        atomic_write_text(str(path) + ".meta.json", dumps(metadata))


def read_results(path):
    """Parse a results CSV back into dicts with numeric fields converted."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = dict(r)
            for c in ("seed", "k", "best_epoch"):
                row[c] = int(row[c]) if row[c] != "" else None
            for c in ("h", "alpha", "val_acc", "test_acc", "wall_time_ms"):
                row[c] = float(row[c]) if row[c] != "" else None
            out.append(row)
    return out


def _graph_h(b):
    if "target_h" in b.meta:
        return float(b.meta["target_h"])
    try:
        return global_edge_homophily(b)
    except ValueError:
        return None


def _run_job(job):
    """Worker: train one (model, graph, config, seed) and return (row, report dict)."""
    b = job["bundle"]
    report, _ = train(job["kind"], b, job["mcfg"], job["tcfg"], prepared=job.get("prepared"))
    row = result_row(report, job["h"])
    row["dataset"] += job.get("suffix", "")
    return row, report.to_dict()


def _run_jobs(jobs):
    workers = _workers()
    if workers == 1 or len(jobs) == 1:
        cache = {}
        out = []
        for job in jobs:
            key = id(job["bundle"])
            if key not in cache:
                cache[key] = PreparedGraph(job["bundle"])
            out.append(_run_job(dict(job, prepared=cache[key])))
            log.info("done %s %s seed=%s", job["bundle"].name, job["kind"], job["tcfg"].seed)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _base_meta(args, command):
    d = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"command": command, "args": d, "version": __version__}


# -- subcommands -----------------------------------------------------------

def cmd_gen(args):
    d = _read_json(args.spec, "spec")
    if not isinstance(d, dict):
        raise UsageError("spec file must hold a JSON object")
    if args.seed is not None:
        d["seed"] = args.seed
    target_h = d.get("target_h")
    try:
        spec = SyntheticSpec.from_dict(d)
    except (ValueError, TypeError, KeyError) as e:
        raise UsageError(f"invalid spec {args.spec}: {e}") from None
    b = generate_graph(spec, name=args.name or "synthetic")
    if target_h is not None:
        b.meta["target_h"] = float(target_h)
    save_bundle(b, args.out)
    return 0


def cmd_combine(args):
    if (args.spec is None) == (args.preset is None):
        raise UsageError("give exactly one of --spec or --preset")
    seed = args.seed if args.seed is not None else 0
    try:
        if args.preset is not None:
            c = combined_preset(args.preset, seed=seed, mean_gap=args.mean_gap,
                                cross_edge_prob=args.cross_edge_prob)
        else:
            d = _read_json(args.spec, "spec")
            if args.seed is not None:
                d["seed"] = args.seed
            c = CombineSpec.from_dict(d)
    except (ValueError, TypeError, KeyError) as e:
        raise UsageError(f"invalid combine spec: {e}") from None
    b = combine_graphs(c, name=args.name or f"combined-{args.preset or 'custom'}")
    save_bundle(b, args.out)
    return 0


def cmd_metrics(args):
    b = _load_graph(args.graph)
    rep = homophily_report(b, bins=args.bins).to_dict()
    if args.katz:
        try:
            rep["katz"] = katz_centrality(b.graph, attenuation=args.katz_alpha).tolist()
        except KatzDivergence as e:
            raise UsageError(f"--katz-alpha {args.katz_alpha}: {e}") from None
    rep["config"] = _base_meta(args, "metrics")
    text = dumps(rep)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args):
    b = _load_graph(args.graph)
    mcfg, tcfg = _configs(args)
    tcfg = replace(tcfg, seed=args.seed)
    ((row, report),) = _run_jobs([{"kind": args.model, "bundle": b, "mcfg": mcfg, "tcfg": tcfg,
                                   "h": _graph_h(b)}])
    report["resolved"] = {"model": asdict(mcfg.resolved()), "train": asdict(tcfg),
                          "graph": args.graph}
    if args.out:
        atomic_write_text(args.out, dumps(report))
    if args.csv:
        export_results([row], args.csv, _base_meta(args, "train"))
    if not args.out and not args.csv:
        sys.stdout.write(dumps(report))
    return 0


def _sweep_graph(args, h, seed):
    spec = SyntheticSpec(args.num_nodes, args.num_classes, args.feature_dim,
                         block_matrix_for_target_h(args.num_classes, args.p_in, h),
                         seed=seed, mean_gap=args.mean_gap)
    b = generate_graph(spec, name=f"synthetic-h{h:g}")
    b.meta["target_h"] = h
    return b


def cmd_sweep(args):
    mcfg, tcfg = _configs(args)
    values = args.values
    if args.param == "h":
        for v in values:
            if not 0.0 < v < 1.0:
                raise UsageError(f"--values: homophily targets must lie in (0, 1), got {v}")
    elif args.param == "k":
        if any(v < 0 or v != int(v) for v in values):
            raise UsageError("--values: k must be non-negative integers")
    elif any(not 0.0 <= v <= 1.0 for v in values):
        raise UsageError("--values: alpha must lie in [0, 1]")
    fixed = _load_graph(args.graph) if args.graph else None
    if fixed is not None and args.param == "h":
        raise UsageError("--graph cannot be combined with --param h")
    jobs = []
    graphs = {}
    for seed in args.seeds:
        for v in values:
            if args.param == "h":
                try:
                    b = _sweep_graph(args, v, seed)
                except ValueError as e:
                    raise UsageError(f"--values {v:g}: {e}") from None
                cfg = mcfg
            else:
                if fixed is not None:
                    b = fixed
                else:
                    key = seed
                    if key not in graphs:
                        graphs[key] = _sweep_graph(args, args.h, seed)
                    b = graphs[key]
                cfg = replace(mcfg, **{args.param: int(v) if args.param == "k" else float(v)})
            # the swept value goes into the dataset column so rows group by it
            suffix = "" if args.param == "h" else f"-{args.param}{v:g}"
            for kind in args.models:
                jobs.append({"kind": kind, "bundle": b, "mcfg": cfg, "suffix": suffix,
                             "tcfg": replace(tcfg, seed=seed), "h": _graph_h(b)})
    results = _run_jobs(jobs)
    rows = [r for r, _ in results]
    meta = _base_meta(args, "sweep")
    meta["resolved"] = {"model": asdict(mcfg), "train": asdict(tcfg)}
    export_results(rows, args.out, meta)
    if args.reports:
        atomic_write_text(args.reports, dumps({"config": meta, "reports": [r for _, r in results]}))
    return 0


def cmd_ablate(args):
    b = _load_graph(args.graph)
    mcfg, tcfg = _configs(args)
    jobs = [{"kind": "mwgnn", "bundle": b, "mcfg": replace(mcfg, ablation=v),
             "tcfg": replace(tcfg, seed=s), "h": _graph_h(b)}
            for v in args.variants for s in args.seeds]
    results = _run_jobs(jobs)
    summary = {}
    for v in args.variants:
        acc = np.array([row["test_acc"] for row, _ in results if row["variant"] == v])
        summary[v] = {"mean": float(acc.mean()), "std": float(acc.std()), "n": int(acc.size)}
    meta = _base_meta(args, "ablate")
    meta["resolved"] = {"model": asdict(mcfg), "train": asdict(tcfg)}
    out = {"config": meta, "summary": summary, "reports": [r for _, r in results]}
    atomic_write_text(args.out, dumps(out))
    if args.csv:
        export_results([r for r, _ in results], args.csv, meta)
    return 0


def _setting_from_args(args):
    if args.setting:
        d = _read_json(args.setting, "setting")
        try:
            return TheoremSetting.from_dict(d)
        except (ValueError, TypeError, KeyError) as e:
            raise UsageError(f"invalid setting {args.setting}: {e}") from None
    try:
        return canonical_setting(var_p=args.var_p)
    except ValueError as e:
        raise UsageError(f"--var-p: {e}") from None


def cmd_verify(args):
    s = _setting_from_args(args)
    grid = args.t_grid or np.linspace(0.2, 2.0, 10).tolist()
    if any(t <= 0 for t in grid):
        raise UsageError("--t-grid: every t must be positive")
    if args.trials < 1000:
        raise UsageError("--trials must be at least 1000")
    rep = verify_concentration(s, grid, args.trials, args.seed)
    out = rep.to_dict()
    out["config"] = _base_meta(args, "verify-theorem")
    atomic_write_text(args.out, dumps(out))
    if args.csv:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "empirical", "stderr", "bound_raw", "bound", "passed"])
        for row in zip(rep.t_grid, rep.empirical, rep.stderr, rep.bound_raw, rep.bound, rep.passed):
            w.writerow([_fmt(x) for x in row])
        atomic_write_text(args.csv, buf.getvalue())
        atomic_write_text(str(args.csv) + ".meta.json", dumps(out["config"]))
    return 0 if rep.all_passed or not args.strict else 2


def build_parser():
    p = _Parser(prog="mwgnn", description="Meta-weight graph network toolkit")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a block-model graph from a spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=_nonneg_int)
    g.add_argument("--name")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("combine", help="join two generated graphs")
    c.add_argument("--spec")
    c.add_argument("--preset", choices=("homo", "mixed"))
    c.add_argument("--mean-gap", type=_positive_float, default=1.0)
    c.add_argument("--cross-edge-prob", type=_unit, default=0.001)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=_nonneg_int)
    c.add_argument("--name")
    c.set_defaults(func=cmd_combine)

    m = sub.add_parser("metrics", help="homophily and centrality summary")
    m.add_argument("--graph", required=True)
    m.add_argument("--out")
    m.add_argument("--bins", type=_positive_int, default=10)
    m.add_argument("--katz", action="store_true")
    m.add_argument("--katz-alpha", type=_positive_float, default=0.1)
    m.set_defaults(func=cmd_metrics)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--graph", required=True)
    t.add_argument("--model", choices=MODEL_KINDS, default="mwgnn")
    t.add_argument("--seed", type=_nonneg_int, default=0)
    t.add_argument("--out")
    t.add_argument("--csv")
    _add_model_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="grid over h, k or alpha")
    s.add_argument("--param", choices=("h", "k", "alpha"), required=True)
    s.add_argument("--values", type=_float_list, required=True)
    s.add_argument("--models", type=_choice_list(MODEL_KINDS), default=["mwgnn"])
    s.add_argument("--seeds", type=_seed_list, default=[0])
    s.add_argument("--graph", help="fixed graph for k/alpha sweeps")
    s.add_argument("--h", type=_unit, default=0.3, help="homophily of generated k/alpha sweep graphs")
    s.add_argument("--num-nodes", type=_positive_int, default=1000)
    s.add_argument("--num-classes", type=_positive_int, default=5)
    s.add_argument("--feature-dim", type=_positive_int, default=100)
    s.add_argument("--p-in", type=_unit, default=0.05)
    s.add_argument("--mean-gap", type=_positive_float, default=1.0)
    s.add_argument("--out", required=True)
    s.add_argument("--reports", help="also write every TrainReport as JSON")
    _add_model_flags(s)
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", help="MWGNN ablation variants over seeds")
    a.add_argument("--graph", required=True)
    a.add_argument("--variants", type=_choice_list(ABLATIONS), default=list(ABLATIONS))
    a.add_argument("--seeds", type=_seed_list, default=[0])
    a.add_argument("--out", required=True)
    a.add_argument("--csv")
    _add_model_flags(a, ablation=False)
    a.set_defaults(func=cmd_ablate)

    v = sub.add_parser("verify-theorem", help="Monte Carlo check of the concentration bound")
    v.add_argument("--setting")
    v.add_argument("--var-p", type=_nonneg_float, default=0.05)
    v.add_argument("--t-grid", type=_float_list)
    v.add_argument("--trials", type=int, default=10000)
    v.add_argument("--seed", type=_nonneg_int, default=0)
    v.add_argument("--out", required=True)
    v.add_argument("--csv")
    v.add_argument("--strict", action="store_true", help="exit 2 if any grid point fails")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"mwgnn: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"mwgnn {args.command}: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - any failure past validation is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"mwgnn {args.command}: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
