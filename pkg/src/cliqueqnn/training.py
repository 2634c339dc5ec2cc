"""Adam training loop, model selection, cross-validation and warm starts."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ansatz import AnsatzSpec, Checkpoint, check_theta, param_count
from .gradients import evaluate_batch, grad_stats
from .observables import Objective

SELECTION_CRITERIA = ("argmax_acc", "sureness_argmax", "loss")
LOG_COLUMNS = ("run_id", "step", "loss", "loss_components", "grad_norm_mean",
               "argmax_acc", "dist_acc", "sureness")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 100
    max_epochs: int = 100
    seed: int = 0
    selection_criterion: str = "argmax_acc"
    objective: Objective = field(default_factory=Objective)
    restarts: int = 1
    keep_grads: bool = False

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.selection_criterion not in SELECTION_CRITERIA:
            raise ValueError(
                f"unknown selection criterion {self.selection_criterion!r}; "
                f"expected one of {SELECTION_CRITERIA}"
            )

    def to_json(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.to_json()
        d.pop("keep_grads")
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["objective"] = Objective.from_json(d["objective"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def init_params(spec: AnsatzSpec, seed: int) -> np.ndarray:
    """Circuit angles from U[0, 0.01], initial-state Euler angles from U[0, 1]."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 0.01, param_count(spec))
    theta[:3] = rng.uniform(0.0, 1.0, 3)
    return theta


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float = 0.01) -> tuple[np.ndarray, AdamState]:
    """One Adam update; returns the new parameters and moments (inputs untouched)."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape}, grad {grad.shape}, "
                         f"moments {state.m.shape}")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grad * grad
    m_hat = m / (1 - ADAM_BETA1 ** t)
    v_hat = v / (1 - ADAM_BETA2 ** t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), AdamState(m, v, t)


# --------------------------------------------------------------------------
# evaluation


def evaluate(spec: AnsatzSpec, entries: Sequence, theta, objective: Objective) -> dict:
    """Mean metrics over ``entries`` plus the per-entry rows."""
    if not entries:
        raise ValueError("cannot evaluate on an empty dataset")
    res = evaluate_batch(spec, entries, theta, objective, with_grad=False)
    rows = [objective.metrics(p, e) for p, e in zip(res.probs, entries)]
    out = {k: float(np.mean([r[k] for r in rows]))
           for k in ("loss", "argmax_acc", "dist_acc", "sureness", "approx_ratio")}
    out["rows"] = rows
    return out


def selection_score(metrics: dict, criterion: str) -> float:
    if criterion == "argmax_acc":
        return metrics["argmax_acc"]
    if criterion == "sureness_argmax":
        return metrics["sureness"]
    return -metrics["loss"]


# --------------------------------------------------------------------------
# logs


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    grads: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    def append(self, row: dict) -> None:
        if self.rows and self.rows[-1]["run_id"] == row["run_id"] \
                and row["step"] <= self.rows[-1]["step"]:
            raise ValueError("step index must increase within a run")
        self.rows.append(row)

    def extend(self, other: "TrainingLog") -> None:
        self.rows.extend(other.rows)
        self.grads.update(other.grads)

    def column(self, name: str, run_id: str | None = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows
                         if run_id is None or r["run_id"] == run_id], dtype=float)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in LOG_COLUMNS])


def _fmt(x) -> str:
    if isinstance(x, dict):
        return json.dumps({k: float(v) for k, v in x.items()}, sort_keys=True)
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def read_log_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: log has no rows")
    return rows


# --------------------------------------------------------------------------
# training


def _entries(dataset) -> list:
    entries = list(getattr(dataset, "entries", dataset))
    if not entries:
        raise ValueError("training needs a non-empty dataset")
    return entries


def _train_once(config: TrainConfig, spec: AnsatzSpec, entries: list, selection: list,
                theta0: np.ndarray, seed, run_id: str) -> tuple[Checkpoint, TrainingLog]:
    obj = config.objective
    rng = np.random.default_rng(seed)
    theta = theta0.copy()
    adam = AdamState.zeros(theta.size)
    log = TrainingLog()

    m0 = evaluate(spec, selection, theta, obj)
    best = (selection_score(m0, config.selection_criterion), theta.copy(), 0, 0, m0)
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(entries))
        n_batches = math.ceil(len(entries) / config.batch_size)
        for k in range(n_batches):
            idx = order[k * config.batch_size:(k + 1) * config.batch_size]
            res = evaluate_batch(spec, [entries[i] for i in idx], theta, obj)
            if not np.all(np.isfinite(res.grads)):
                raise FloatingPointError(
                    f"{run_id}: non-finite gradient at step {step + 1} (epoch {epoch})")
            stats = grad_stats(res.grads)
            if config.keep_grads:
                log.grads[(run_id, step + 1)] = res.grads.copy()
            theta, adam = adam_step(theta, res.grad, adam, config.learning_rate)
            step += 1
            comps = {key: float(np.mean([c[key] for c in res.components]))
                     for key in res.components[0]}
            row = {"run_id": run_id, "step": step, "loss": res.loss, "loss_components": comps,
                   "grad_norm_mean": stats["aggregate"], "argmax_acc": math.nan,
                   "dist_acc": math.nan, "sureness": math.nan}
            if k == n_batches - 1:
                m = evaluate(spec, selection, theta, obj)
                row.update(argmax_acc=m["argmax_acc"], dist_acc=m["dist_acc"],
                           sureness=m["sureness"])
                score = selection_score(m, config.selection_criterion)
                if score > best[0]:
                    best = (score, theta.copy(), step, epoch, m)
            log.append(row)

    score, th, best_step, best_epoch, m = best
    ckpt = Checkpoint(spec, th, {
        "run_id": run_id,
        "selection_criterion": config.selection_criterion,
        "selection_score": float(score),
        "step": best_step,
        "epoch": best_epoch,
        "loss": m["loss"],
        "argmax_acc": m["argmax_acc"],
        "dist_acc": m["dist_acc"],
        "sureness": m["sureness"],
        "config_fingerprint": config.fingerprint(),
        "objective": config.objective.to_json(),
    })
    return ckpt, log


def train(config: TrainConfig, spec: AnsatzSpec, dataset, validation=None,
          theta0=None, run_id: str = "run") -> tuple[Checkpoint, TrainingLog]:
    """Train with Adam and keep the best checkpoint seen at epoch boundaries.

    Args:
        config: optimiser, selection and objective settings.
        spec: circuit family; its parameter layout does not depend on n.
        dataset: manifest or list of entries to optimise on.
        validation: entries scored for model selection (defaults to the
            training entries).
        theta0: starting parameters; drawn with :func:`init_params` if None.
        run_id: prefix for log rows.

    Returns:
        The best checkpoint over all restarts and the concatenated log.
    """
    entries = _entries(dataset)
    selection = _entries(validation) if validation is not None else entries
    log = TrainingLog()
    best: Checkpoint | None = None
    outcomes = []
    for r in range(config.restarts):
        rid = run_id if config.restarts == 1 else f"{run_id}.r{r}"
        seed = config.seed if config.restarts == 1 else [config.seed, r]
        if theta0 is None:
            start = init_params(spec, config.seed if r == 0 else hash_seed(config.seed, r))
        else:
            start = check_theta(spec, theta0)
        ckpt, part = _train_once(config, spec, entries, selection, start, seed, rid)
        log.extend(part)
        outcomes.append({"run_id": rid, "score": ckpt.metadata["selection_score"]})
        if best is None or ckpt.metadata["selection_score"] > best.metadata["selection_score"]:
            best = ckpt
    assert best is not None
    best.metadata["restarts"] = outcomes
    return best, log


def hash_seed(seed: int, k: int) -> int:
    """Deterministic child seed (independent of PYTHONHASHSEED)."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def warm_start(config: TrainConfig, spec: AnsatzSpec, dataset, checkpoint: Checkpoint,
               validation=None, run_id: str = "warm") -> tuple[Checkpoint, TrainingLog]:
    """Continue training from another run's parameters (any graph size)."""
    if checkpoint.spec != spec:
        raise ValueError(f"checkpoint spec {checkpoint.spec} does not match {spec}")
    return train(config, spec, dataset, validation, theta0=checkpoint.theta, run_id=run_id)


# --------------------------------------------------------------------------
# cross-validation


METRIC_KEYS = ("loss", "argmax_acc", "dist_acc", "sureness", "approx_ratio")


@dataclass
class CrossValResult:
    folds: list[list[list[int]]]        # [iteration][fold] -> test indices
    rows: list[dict]                     # one per (iteration, fold, split, entry)
    summary: list[dict]                  # per (split, n, p) cell: mean and std
    log: TrainingLog

    def write_csv(self, path: str | Path) -> None:
        cols = ["split", "n", "p", "count"] + [f"{k}_{s}" for k in METRIC_KEYS
                                               for s in ("mean", "std")]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.summary:
                w.writerow([_fmt(r[c]) if r[c] is not None else "" for c in cols])


def fold_indices(size: int, folds: int, seed) -> list[list[int]]:
    perm = np.random.default_rng(seed).permutation(size)
    return [sorted(int(i) for i in part) for part in np.array_split(perm, folds)]


def summarise(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["split"], r["n"], r["p"]), []).append(r)
    out = []
    for (split, n, p) in sorted(cells, key=lambda c: (c[0], c[1], -1 if c[2] is None else c[2])):
        group = cells[(split, n, p)]
        # average within each fold first, then spread across folds
        per_fold: dict[tuple, list[dict]] = {}
        for r in group:
            per_fold.setdefault((r["iteration"], r["fold"]), []).append(r)
        rec = {"split": split, "n": n, "p": p, "count": len(group)}
        for k in METRIC_KEYS:
            fold_means = [np.mean([r[k] for r in rs]) for rs in per_fold.values()]
            rec[f"{k}_mean"] = float(np.mean(fold_means))
            rec[f"{k}_std"] = float(np.std(fold_means))
        out.append(rec)
    return out


def cross_validate(config: TrainConfig, spec: AnsatzSpec, dataset, folds: int = 5,
                   iterations: int = 2) -> CrossValResult:
    """Repeated k-fold training; metrics aggregated per (n, p) cell."""
    entries = _entries(dataset)
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if iterations < 1:
        raise ValueError(f"need at least 1 iteration, got {iterations}")
    if len(entries) < folds:
        raise ValueError(f"dataset of {len(entries)} entries is too small for {folds} folds")
    all_folds, rows, log = [], [], TrainingLog()
    for it in range(iterations):
        parts = fold_indices(len(entries), folds, [config.seed, it])
        all_folds.append(parts)
        for f, test in enumerate(parts):
            test_set = set(test)
            train_idx = [i for i in range(len(entries)) if i not in test_set]
            cfg = replace(config, seed=hash_seed(config.seed, 1000 * it + f))
            ckpt, part = train(cfg, spec, [entries[i] for i in train_idx],
                               run_id=f"cv{it}.f{f}")
            log.extend(part)
            for split, idx in (("train", train_idx), ("test", test)):
                ev = evaluate(spec, [entries[i] for i in idx], ckpt.theta, config.objective)
                for i, r in zip(idx, ev["rows"]):
                    e = entries[i]
                    rows.append({"iteration": it, "fold": f, "split": split, "index": i,
                                 "n": e.n, "p": e.edge_probability,
                                 **{k: r[k] for k in METRIC_KEYS}})
    return CrossValResult(all_folds, rows, summarise(rows), log)
