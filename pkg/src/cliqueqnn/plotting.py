"""SVG figures from metric and training-log CSVs (byte-stable output)."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "cliqueqnn", "svg.fonttype": "path", "figure.dpi": 100}


def _read(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows to plot")
    return rows


def _floats(rows: list[dict], key: str) -> list[float]:
    if key not in rows[0]:
        raise ValueError(f"column {key!r} missing; have {sorted(rows[0])}")
    return [float(r[key]) if r[key] not in ("", None) else float("nan") for r in rows]


def _save(fig, out: str | Path) -> None:
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_generalisation(inputs: Sequence[str | Path], out: str | Path,
                        labels: Sequence[str] | None = None, metric: str = "argmax_acc") -> None:
    """Metric against graph size, one line per evaluated model."""
    labels = list(labels) if labels else [Path(p).stem for p in inputs]
    if len(labels) != len(inputs):
        raise ValueError("need one label per input file")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for path, label in zip(inputs, labels):
            rows = _read(path)
            by_n: dict[float, list[float]] = {}
            for n, v in zip(_floats(rows, "n"), _floats(rows, metric)):
                by_n.setdefault(n, []).append(v)
            xs = sorted(by_n)
            ax.plot(xs, [sum(by_n[x]) / len(by_n[x]) for x in xs], marker="o", label=label)
        ax.set_xlabel("graph size n")
        ax.set_ylabel(metric)
        ax.legend()
        fig.tight_layout()
        _save(fig, out)


def plot_training(inputs: Sequence[str | Path], out: str | Path,
                  labels: Sequence[str] | None = None) -> None:
    """Gradient magnitude and loss against step for one or more training logs."""
    labels = list(labels) if labels else [Path(p).stem for p in inputs]
    if len(labels) != len(inputs):
        raise ValueError("need one label per input file")
    with plt.rc_context(_RC):
        fig, (ax_g, ax_l) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        for path, label in zip(inputs, labels):
            rows = _read(path)
            step = _floats(rows, "step")
            ax_g.plot(step, _floats(rows, "grad_norm_mean"), label=label)
            ax_l.plot(step, _floats(rows, "loss"), label=label)
        ax_g.set_ylabel("mean |gradient|")
        ax_g.set_yscale("log")
        ax_l.set_ylabel("loss")
        ax_l.set_xlabel("step")
        ax_g.legend()
        fig.tight_layout()
        _save(fig, out)
