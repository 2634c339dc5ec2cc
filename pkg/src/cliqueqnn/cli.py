"""Command-line entry point: ``cliqueqnn <command> [options]``.

Commands: gen-data, train, eval, pine, audit, calibrate, plot. Every
command accepts ``--seed``, ``--force`` (overwrite outputs) and
``--config`` (JSON file of option values; explicit flags win over it, it
wins over built-in defaults). The effective configuration is written to a
``*.run.json`` record next to the outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .ansatz import AnsatzSpec, Checkpoint, load_checkpoint, save_checkpoint
from .dataset import build_dataset, load_manifest, parse_cells, save_manifest
from .observables import Objective, metric_random_baseline

# Built-in defaults per command; keys are argparse dests.
DEFAULTS: dict[str, dict] = {
    "gen-data": {"cells": None, "out": None},
    "train": {
        "data": None, "out": None, "family": "rook", "layers": 5, "inner_layers": None,
        "no_initial_state": False, "task": "max_clique", "observable": None, "loss": None,
        "alpha": 0.5, "eps": 1e-10, "lr": 0.01, "batch_size": 100, "epochs": 100,
        "selection": "argmax_acc", "restarts": 1, "warm_start": None, "validation": None,
    },
    "eval": {"checkpoint": None, "data": None, "out": None, "task": None,
             "observable": None, "loss": None},
    "pine": {"heuristic": "uniform", "checkpoint": None, "data": None, "runs": 1000,
             "out": None, "no_exact": False},
    "audit": {"checkpoint": None, "data": None, "out": None, "permutations": 2},
    "calibrate": {"checkpoint": None, "data": None, "out": None, "mode": "linear_in_n",
                  "test_data": None},
    "plot": {"kind": "generalisation", "inputs": None, "labels": None,
             "metric": "argmax_acc", "out": None},
}

GLOBAL_DEFAULTS = {"seed": 0, "force": False}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# shared helpers


def _guard(path: str | Path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise UsageError(f"{p} exists; pass --force to overwrite")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))


def _load_data(path):
    if not Path(path).exists():
        raise UsageError(f"data file {path} not found")
    return load_manifest(path)


def _load_ckpt(path) -> Checkpoint:
    if not Path(path).exists():
        raise UsageError(f"checkpoint {path} not found")
    return load_checkpoint(path)


def _objective(cfg: dict, ckpt: Checkpoint | None = None) -> Objective:
    base = Objective.from_json(ckpt.metadata["objective"]) \
        if ckpt is not None and "objective" in ckpt.metadata else None
    task = cfg.get("task") or (base.task if base else "max_clique")
    obs = cfg.get("observable") or (base.observable if base and base.task == task else None)
    obj = Objective.default(task, obs)
    loss = cfg.get("loss") or (base.loss if base and base.task == task
                               and base.observable == obj.observable else obj.loss)
    alpha = cfg.get("alpha", base.alpha if base else 0.5)
    eps = cfg.get("eps", base.eps if base else 1e-10)
    return Objective(task, obj.observable, loss, float(alpha), float(eps))


def run_record(command: str, cfg: dict, artifacts: list[Path], started: float) -> dict:
    body = json.dumps({"command": command, "config": cfg}, sort_keys=True)
    return {
        "run_id": hashlib.sha256(body.encode()).hexdigest()[:12],
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "artifacts": [str(a) for a in artifacts],
        "wall_clock_s": round(time.time() - started, 3),
    }


# --------------------------------------------------------------------------
# commands; each returns the list of files it wrote


def cmd_gen_data(cfg: dict) -> list[Path]:
    _need(cfg, "cells", "out")
    try:
        cells = parse_cells(cfg["cells"])
    except ValueError as exc:
        raise UsageError(f"bad --cells: {exc}") from exc
    out = _guard(cfg["out"], cfg["force"])
    manifest = build_dataset(cells, cfg["seed"])
    save_manifest(manifest, out)
    for cell in cells:
        count = sum(1 for e in manifest.entries
                    if e.n == cell.n and (cell.p is None or e.edge_probability == cell.p))
        print(f"{cell.describe()}: {count} entries")
    print(f"total: {len(manifest)} entries -> {out}")
    return [out]


def _spec_from(cfg: dict) -> AnsatzSpec:
    try:
        return AnsatzSpec(cfg["family"], int(cfg["layers"]),
                          None if cfg.get("inner_layers") is None else int(cfg["inner_layers"]),
                          include_initial_state=not cfg.get("no_initial_state", False))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(cfg: dict) -> list[Path]:
    from .training import TrainConfig, train, warm_start

    _need(cfg, "data", "out")
    spec = _spec_from(cfg)
    try:
        obj = _objective(cfg)
        tc = TrainConfig(learning_rate=float(cfg["lr"]), batch_size=int(cfg["batch_size"]),
                         max_epochs=int(cfg["epochs"]), seed=int(cfg["seed"]),
                         selection_criterion=cfg["selection"], objective=obj,
                         restarts=int(cfg["restarts"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data = _load_data(cfg["data"])
    val = _load_data(cfg["validation"]) if cfg.get("validation") else None
    out = Path(cfg["out"])
    paths = [out / "checkpoint.json", out / "log.csv", out / "config.json"]
    for p in paths:
        _guard(p, cfg["force"])
    print(f"training {spec.family} L={spec.layers} on {len(data)} entries: "
          f"lr={tc.learning_rate} batch_size={tc.batch_size} epochs={tc.max_epochs} "
          f"task={obj.task} observable={obj.observable} loss={obj.loss}")
    if cfg.get("warm_start"):
        ckpt, log = warm_start(tc, spec, data, _load_ckpt(cfg["warm_start"]), val)
    else:
        ckpt, log = train(tc, spec, data, val)
    save_checkpoint(ckpt, paths[0])
    log.write_csv(paths[1])
    _write_json(paths[2], {"train": tc.to_json(), "spec": spec.to_json()})
    m = ckpt.metadata
    print(f"best epoch {m['epoch']}: {tc.selection_criterion}={m['selection_score']:.4f} "
          f"loss={m['loss']:.6f}")
    return paths


EVAL_COLUMNS = ("n", "p", "count", "loss", "argmax_acc", "dist_acc", "sureness",
                "approx_ratio", "random_baseline")


def evaluation_table(ckpt: Checkpoint, entries, obj: Objective) -> list[dict]:
    from .training import evaluate

    cells: dict[tuple, list] = {}
    for e in entries:
        cells.setdefault((e.n, e.edge_probability), []).append(e)
    rows = []
    for (n, p) in sorted(cells, key=lambda c: (c[0], -1 if c[1] is None else c[1])):
        group = cells[(n, p)]
        m = evaluate(ckpt.spec, group, ckpt.theta, obj)
        rows.append({"n": n, "p": p, "count": len(group),
                     **{k: m[k] for k in EVAL_COLUMNS[3:-1]},
                     "random_baseline": metric_random_baseline(obj.task, group)})
    return rows


def cmd_eval(cfg: dict) -> list[Path]:
    _need(cfg, "checkpoint", "data", "out")
    ckpt = _load_ckpt(cfg["checkpoint"])
    data = _load_data(cfg["data"])
    out = _guard(cfg["out"], cfg["force"])
    obj = _objective(cfg, ckpt)
    rows = evaluation_table(ckpt, data.entries, obj)
    _write_csv(out, EVAL_COLUMNS, rows)
    for r in rows:
        print(f"n={r['n']} p={r['p']}: argmax={r['argmax_acc']:.4f} dist={r['dist_acc']:.4f} "
              f"baseline={r['random_baseline']:.4f}")
    return [out]


PINE_ROWS = ("graph", "heuristic", "run", "success", "clique_size", "omega", "trace_length",
             "valid")
PINE_SUMMARY = ("graph", "n", "heuristic", "omega", "runs", "mc_success", "mc_stderr",
                "exact_success", "valid_fraction")


def cmd_pine(cfg: dict) -> list[Path]:
    from .graphs import is_clique
    from .pine import NodeHeuristic, pine_run, pine_success_prob

    _need(cfg, "data", "out")
    kind = cfg["heuristic"]
    if kind == "quantum" and not cfg.get("checkpoint"):
        raise UsageError("--heuristic quantum needs --checkpoint")
    ckpt = _load_ckpt(cfg["checkpoint"]) if kind == "quantum" else None
    data = _load_data(cfg["data"])
    out = Path(cfg["out"])
    paths = [out / "pine_runs.csv", out / "pine_summary.csv"]
    for p in paths:
        _guard(p, cfg["force"])
    h = NodeHeuristic(kind, ckpt)
    rng = np.random.default_rng(cfg["seed"])
    runs, summary = [], []
    for gi, e in enumerate(data.entries):
        hits = valid = 0
        for r in range(int(cfg["runs"])):
            tr = pine_run(e.graph, h, rng=rng)
            ok = is_clique(e.graph, tr.bitstring)
            hit = tr.size == e.omega and ok
            hits += hit
            valid += ok
            runs.append({"graph": gi, "heuristic": kind, "run": r, "success": int(hit),
                         "clique_size": tr.size, "omega": e.omega,
                         "trace_length": len(tr.steps), "valid": int(ok)})
        n_runs = int(cfg["runs"])
        rate = hits / n_runs
        exact = None
        if not cfg.get("no_exact") and e.n <= 16:
            exact = pine_success_prob(e.graph, h, e.omega)
        summary.append({"graph": gi, "n": e.n, "heuristic": kind, "omega": e.omega,
                        "runs": n_runs, "mc_success": rate,
                        "mc_stderr": float(np.sqrt(rate * (1 - rate) / n_runs)),
                        "exact_success": exact, "valid_fraction": valid / n_runs})
    _write_csv(paths[0], PINE_ROWS, runs)
    _write_csv(paths[1], PINE_SUMMARY, summary)
    valid = np.mean([s["valid_fraction"] for s in summary])
    print(f"{len(summary)} graphs, {kind}: mean success "
          f"{np.mean([s['mc_success'] for s in summary]):.4f}, valid cliques {valid:.2%}")
    return paths


def cmd_audit(cfg: dict) -> list[Path]:
    from .audit import (check_equivariance, check_loss_invariance, gate_symmetry_metrics,
                        permuted_accuracy_drop, test_permutations)

    _need(cfg, "checkpoint", "out")
    ckpt = _load_ckpt(cfg["checkpoint"])
    out = Path(cfg["out"])
    paths = [out / "audit.json", out / "audit_layers.csv"]
    for p in paths:
        _guard(p, cfg["force"])
    rep = gate_symmetry_metrics(ckpt.spec, ckpt.theta)
    report: dict = {"spec": ckpt.spec.to_json(), "layers": rep.rows,
                    "max_swap_asymmetry": rep.max("swap_asymmetry"),
                    "max_commutator_norm": rep.max("commutator_norm")}
    if cfg.get("data"):
        data = _load_data(cfg["data"])
        obj = _objective({}, ckpt)
        eq, inv = 0.0, 0.0
        for i, e in enumerate(data.entries):
            sig = test_permutations(e.n, seed=cfg["seed"] + i)
            eq = max(eq, max(check_equivariance(ckpt.spec, e.graph, ckpt.theta, s)
                             for s in sig))
            inv = max(inv, check_loss_invariance(ckpt.spec, e, ckpt.theta, sig, obj))
        drops = permuted_accuracy_drop(ckpt.spec, ckpt.theta, data.entries, obj,
                                       int(cfg["permutations"]), cfg["seed"])
        report.update(max_equivariance_gap=eq, loss_invariance_delta=inv,
                      max_abs_accuracy_drop=max(abs(d["drop"]) for d in drops),
                      accuracy_drops=drops)
    _write_json(paths[0], report)
    _write_csv(paths[1], ("layer", "kind", "swap_asymmetry", "commutator_norm",
                          "identity_distance"), rep.rows)
    print(f"swap asymmetry {report['max_swap_asymmetry']:.3e}, "
          f"commutator {report['max_commutator_norm']:.3e}")
    return paths


def cmd_calibrate(cfg: dict) -> list[Path]:
    from .calibration import fit_shift, rounding_accuracy
    from .gradients import evaluate_batch

    _need(cfg, "checkpoint", "data", "out")
    ckpt = _load_ckpt(cfg["checkpoint"])
    obj = _objective({}, ckpt)
    if obj.task != "clique_number":
        raise UsageError("calibration applies to clique-number checkpoints")
    out = _guard(cfg["out"], cfg["force"])

    def points(data):
        res = evaluate_batch(ckpt.spec, data.entries, ckpt.theta, obj, with_grad=False)
        return [(e.n, obj.predicted_size(p, e), e.omega) for p, e in zip(res.probs, data.entries)]

    pts = points(_load_data(cfg["data"]))
    try:
        shift = fit_shift(pts, cfg["mode"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    shift.save(out)
    print(f"{cfg['mode']} fit on {len(pts)} points: accuracy "
          f"{rounding_accuracy(pts):.4f} -> {rounding_accuracy(pts, shift):.4f}")
    if cfg.get("test_data"):
        tp = points(_load_data(cfg["test_data"]))
        print(f"held-out: {rounding_accuracy(tp):.4f} -> {rounding_accuracy(tp, shift):.4f}")
    return [out]


def cmd_plot(cfg: dict) -> list[Path]:
    from .plotting import plot_generalisation, plot_training

    _need(cfg, "inputs", "out")
    out = _guard(cfg["out"], cfg["force"])
    for p in cfg["inputs"]:
        if not Path(p).exists():
            raise UsageError(f"input {p} not found")
    if cfg["kind"] == "generalisation":
        plot_generalisation(cfg["inputs"], out, cfg.get("labels"), cfg["metric"])
    else:
        plot_training(cfg["inputs"], out, cfg.get("labels"))
    return [out]


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "pine": cmd_pine,
    "audit": cmd_audit, "calibrate": cmd_calibrate, "plot": cmd_plot,
}


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    common.add_argument("--force", action="store_true", default=None,
                        help="overwrite existing outputs")
    common.add_argument("--config", default=None, help="JSON file of option values")

    ap = argparse.ArgumentParser(prog="cliqueqnn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="build a labelled dataset")
    p.add_argument("--cells", help='e.g. "2-6:all;8:0.1-0.9/0.1:111"')
    p.add_argument("--out", help="output JSONL manifest")

    p = sub.add_parser("train", parents=[common], help="train a circuit")
    p.add_argument("--data")
    p.add_argument("--validation", help="selection set (defaults to training data)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--family", choices=["rook", "millefeuille", "mf"])
    p.add_argument("--layers", type=int)
    p.add_argument("--inner-layers", type=int)
    p.add_argument("--no-initial-state", action="store_true", default=None)
    p.add_argument("--task", choices=["max_clique", "clique_number"])
    p.add_argument("--observable", choices=["bitstring", "mountain", "crater"])
    p.add_argument("--loss", choices=["dist", "logwrong", "mse", "mountain", "crater"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--selection", choices=["argmax_acc", "sureness_argmax", "loss"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--warm-start", help="checkpoint to start from")

    p = sub.add_parser("eval", parents=[common], help="per-size metric table")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--out", help="output metrics CSV")
    p.add_argument("--task", choices=["max_clique", "clique_number"])
    p.add_argument("--observable", choices=["bitstring", "mountain", "crater"])
    p.add_argument("--loss", choices=["dist", "logwrong", "argmax", "mse", "mountain", "crater"])

    p = sub.add_parser("pine", parents=[common], help="run the recursive heuristic")
    p.add_argument("--heuristic", choices=["quantum", "uniform", "degree"])
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--runs", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-exact", action="store_true", default=None,
                   help="skip the exact success probability")

    p = sub.add_parser("audit", parents=[common], help="symmetry audit of a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="optional dataset for equivariance and accuracy checks")
    p.add_argument("--out", help="output directory")
    p.add_argument("--permutations", type=int)

    p = sub.add_parser("calibrate", parents=[common], help="fit an observable shift")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="compositional-validation set")
    p.add_argument("--test-data", help="optional held-out set to score")
    p.add_argument("--out", help="output calibration JSON")
    p.add_argument("--mode", choices=["per_size", "linear_in_n", "per_parity"])

    p = sub.add_parser("plot", parents=[common], help="SVG plots from CSVs")
    p.add_argument("--kind", choices=["generalisation", "training"])
    p.add_argument("--inputs", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--metric")
    p.add_argument("--out", help="output SVG")
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flag > config file > default for the chosen command."""
    file_cfg: dict = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
    defaults = {**GLOBAL_DEFAULTS, **DEFAULTS[args.command]}
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config key(s) for {args.command}: {sorted(unknown)}")
    cfg = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else file_cfg.get(key, default)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        cfg = resolve_config(args)
        artifacts = COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (ValueError, FileNotFoundError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    record_cfg = {k: v for k, v in cfg.items() if k != "force"}
    rec = run_record(args.command, record_cfg, artifacts, started)
    first = artifacts[0]
    rec_path = (first.parent / "run.json") if len(artifacts) > 1 else \
        first.with_name(first.name + ".run.json")
    rec["artifacts"].append(str(rec_path))
    _write_json(rec_path, rec)
    return 0


if __name__ == "__main__":
    sys.exit(main())
