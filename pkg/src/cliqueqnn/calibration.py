"""Affine correction of size-valued readouts (observable shift).

A clique-number model outputs an expectation ``E`` whose relation to the
true clique number drifts with the graph size. A small held-out set of
``(n, E, omega)`` points is used to fit ``omega ~ a * E + b`` (per size), or
``omega ~ a * E + b0 + b1 * n`` (one fit across sizes), and the fitted map
is applied before rounding to an integer size.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PER_SIZE = "per_size"
LINEAR_IN_N = "linear_in_n"
PER_PARITY = "per_parity"
MODES = (PER_SIZE, LINEAR_IN_N, PER_PARITY)

# Relative singular-value cutoff below which a design is treated as rank deficient.
RANK_TOL = 1e-9


@dataclass
class ShiftModel:
    mode: str
    # per_size: {n: [a, b]}; linear_in_n: {"all": [a, b0, b1]};
    # per_parity: {"even"/"odd": [a, b0, b1]}
    coefficients: dict
    fit_points: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown fit mode {self.mode!r}; expected one of {MODES}")
        for key, c in self.coefficients.items():
            if not all(math.isfinite(x) for x in c):
                raise ValueError(f"non-finite coefficients for {key}: {c}")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "coefficients": {str(k): [float(x) for x in v] for k, v in self.coefficients.items()},
            "fit_points": [[int(n), float(e), int(w)] for n, e, w in self.fit_points],
            "residuals": [float(r) for r in self.residuals],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ShiftModel":
        mode = d["mode"]
        coeffs = {(int(k) if mode == PER_SIZE else k): [float(x) for x in v]
                  for k, v in d["coefficients"].items()}
        return cls(mode, coeffs, [tuple(p) for p in d.get("fit_points", [])],
                   list(d.get("residuals", [])))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ShiftModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _lstsq(X: np.ndarray, y: np.ndarray) -> np.ndarray | None:
    """Least squares, or None when the design does not pin the solution."""
    if X.shape[0] < X.shape[1]:
        return None
    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= RANK_TOL * max(s[0], 1.0):
        return None
    return np.linalg.lstsq(X, y, rcond=None)[0]


def _fit_affine(E: np.ndarray, w: np.ndarray) -> list[float]:
    sol = _lstsq(np.column_stack([E, np.ones_like(E)]), w)
    if sol is None:
        # one distinct E value: keep unit slope and fit the offset
        return [1.0, float(np.mean(w - E))]
    return [float(sol[0]), float(sol[1])]


def _fit_linear_n(n: np.ndarray, E: np.ndarray, w: np.ndarray) -> list[float]:
    sol = _lstsq(np.column_stack([E, np.ones_like(E), n]), w)
    if sol is not None:
        return [float(x) for x in sol]
    # E is collinear with (1, n): pin a = 1 and fit the drift alone
    sol = _lstsq(np.column_stack([np.ones_like(E), n]), w - E)
    if sol is None:
        raise ValueError("linear_in_n fit needs points from at least 2 distinct sizes")
    return [1.0, float(sol[0]), float(sol[1])]


def fit_shift(points: Iterable[Sequence[float]], mode: str = LINEAR_IN_N,
              sizes: Iterable[int] | None = None) -> ShiftModel:
    """Least-squares map from raw expectation to clique number.

    Args:
        points: ``(n, E, omega)`` triples from a compositional-validation set.
        mode: ``per_size``, ``linear_in_n`` or ``per_parity``.
        sizes: sizes the model must cover; missing ones raise (per_size).
    """
    pts = [(int(n), float(e), int(w)) for n, e, w in points]
    if not pts:
        raise ValueError("calibration needs at least one point")
    if mode not in MODES:
        raise ValueError(f"unknown fit mode {mode!r}; expected one of {MODES}")
    n = np.array([p[0] for p in pts], dtype=float)
    E = np.array([p[1] for p in pts])
    w = np.array([p[2] for p in pts], dtype=float)
    have = sorted(set(int(x) for x in n))

    coeffs: dict = {}
    if mode == PER_SIZE:
        if sizes is not None:
            missing = sorted(set(sizes) - set(have))
            if missing:
                raise ValueError(f"per_size fit has no points for sizes {missing}")
        for size in have:
            sel = n == size
            coeffs[size] = _fit_affine(E[sel], w[sel])
    elif mode == LINEAR_IN_N:
        if len(have) < 2:
            raise ValueError(f"linear_in_n fit needs at least 2 distinct sizes, got {have}")
        coeffs["all"] = _fit_linear_n(n, E, w)
    else:
        for name, par in (("even", 0), ("odd", 1)):
            sel = (n % 2) == par
            if not sel.any():
                continue
            if len(set(n[sel])) >= 2:
                coeffs[name] = _fit_linear_n(n[sel], E[sel], w[sel])
            else:
                a, b = _fit_affine(E[sel], w[sel])
                coeffs[name] = [a, b, 0.0]
    model = ShiftModel(mode, coeffs, pts)
    model.residuals = [float(wi - apply_shift(model, int(ni), ei)) for ni, ei, wi in pts]
    return model


def apply_shift(shift: ShiftModel, n: int, E: float) -> float:
    c = shift.coefficients
    if shift.mode == PER_SIZE:
        if n not in c:
            raise ValueError(f"no per_size calibration for n={n}; covered sizes {sorted(c)}")
        a, b = c[n]
        return a * E + b
    key = "all" if shift.mode == LINEAR_IN_N else ("even" if n % 2 == 0 else "odd")
    if key not in c:
        raise ValueError(f"no {key} calibration in this {shift.mode} model")
    a, b0, b1 = c[key]
    return a * E + b0 + b1 * n


def round_size(x: float, n: int) -> int:
    """Nearest integer clique size, halves rounded up, clipped to [1, n]."""
    return int(min(max(math.floor(x + 0.5), 1), n))


def rounding_accuracy(points: Iterable[Sequence[float]], shift: ShiftModel | None = None
                      ) -> float:
    """Fraction of points whose (corrected) estimate rounds to omega."""
    hits = []
    for n, e, w in points:
        x = apply_shift(shift, int(n), float(e)) if shift is not None else float(e)
        hits.append(round_size(x, int(n)) == int(w))
    if not hits:
        raise ValueError("no points to score")
    return float(np.mean(hits))
