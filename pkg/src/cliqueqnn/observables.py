"""Diagonal readouts, training losses and evaluation metrics.

Every observable here is diagonal in the computational basis, so a model's
output is fully described by its probability vector ``p`` (length ``2**n``)
and, for the size-valued readouts, the expectation ``E = p @ eigenvalues``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .graphs import clique_mask

EPS = 1e-10

BITSTRING = "bitstring"
MOUNTAIN = "mountain"
CRATER = "crater"
OBSERVABLES = (BITSTRING, MOUNTAIN, CRATER)

MAX_CLIQUE = "max_clique"
CLIQUE_NUMBER = "clique_number"
TASKS = (MAX_CLIQUE, CLIQUE_NUMBER)

LOSSES = ("dist", "logwrong", "argmax", "mse", "mountain", "crater")
DIFFERENTIABLE = frozenset({"dist", "logwrong", "mse", "mountain", "crater"})


@lru_cache(maxsize=None)
def popcounts(n: int) -> np.ndarray:
    b = np.arange(1 << n, dtype=np.int64)
    w = np.zeros_like(b)
    for q in range(n):
        w += (b >> q) & 1
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def eigenvalues(name: str, n: int) -> np.ndarray:
    """Eigenvalue array of a readout on ``n`` qubits (read-only, cached)."""
    if name == BITSTRING:
        ev = np.ones(1 << n)
    elif name == MOUNTAIN:
        ev = popcounts(n).astype(float)
    elif name == CRATER:
        w = 2 * popcounts(n)
        ev = np.sign(n - w).astype(float)   # +1 below half, -1 above, 0 at half
    else:
        raise ValueError(f"unknown observable {name!r}; expected one of {OBSERVABLES}")
    ev.setflags(write=False)
    return ev


@dataclass(frozen=True)
class DiagObservable:
    name: str
    n: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.name, self.n)

    def expectation(self, probs: np.ndarray) -> np.ndarray:
        return probs @ self.eigenvalues


@dataclass
class LossValue:
    scalar: float
    components: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.scalar):
            raise FloatingPointError(f"non-finite loss {self.scalar} ({self.components})")


def target_mask(targets: Iterable[int] | np.ndarray, n: int) -> np.ndarray:
    """Boolean mask over ``2**n`` bitstrings; accepts a mask or an index set."""
    if isinstance(targets, np.ndarray) and targets.dtype == bool:
        if targets.shape != (1 << n,):
            raise ValueError(f"target mask shape {targets.shape} != ({1 << n},)")
        return targets
    mask = np.zeros(1 << n, dtype=bool)
    idx = np.fromiter((int(b) for b in targets), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= 1 << n):
        raise ValueError(f"target bitstring outside 0..{(1 << n) - 1}")
    mask[idx] = True
    return mask


def _n_of(probs: np.ndarray) -> int:
    n = probs.shape[-1].bit_length() - 1
    if probs.shape[-1] != 1 << n:
        raise ValueError(f"probability vector length {probs.shape[-1]} is not a power of two")
    return n


def _mask(probs, Y) -> np.ndarray:
    m = target_mask(Y, _n_of(np.asarray(probs)))
    if not m.any():
        raise ValueError("target set Y is empty")
    return m


# fsum is correctly rounded, so these sums do not depend on bit order: relabelling
# the vertices gives bit-identical losses.
def wrong_mass(probs: np.ndarray, Y) -> float:
    return math.fsum(probs[~_mask(probs, Y)])


def loss_dist(probs: np.ndarray, Y) -> float:
    wrong = probs[~_mask(probs, Y)]
    return math.fsum(wrong * wrong)


def loss_logwrong(probs: np.ndarray, Y, eps: float = EPS) -> float:
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return math.log(eps + wrong_mass(probs, Y))


def argmax_index(probs: np.ndarray) -> int:
    # np.argmax returns the first maximum: lowest index wins ties
    return int(np.argmax(probs))


def loss_argmax(probs: np.ndarray, Y) -> int:
    return 0 if _mask(probs, Y)[argmax_index(probs)] else 1


def loss_mse(expectation: float, y: float) -> float:
    return float((expectation - y) ** 2)


def loss_mountain(probs: np.ndarray, expectation: float, Y, y: float,
                  alpha: float = 0.5, eps: float = EPS) -> LossValue:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    mse = loss_mse(expectation, y)
    lw = loss_logwrong(probs, Y, eps)
    return LossValue((1 - alpha) * mse + alpha * lw, {"mse": mse, "logwrong": lw})


def in_band(x: float, interval: Sequence[float]) -> bool:
    lo, hi = interval
    return lo <= x <= hi


def loss_crater(expectation: float, y_interval: Sequence[float], alpha: float = 0.5,
                target: float | None = None) -> LossValue:
    lo, hi = (float(v) for v in y_interval)
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    t = 0.5 * (lo + hi) if target is None else float(target)
    if not lo <= t <= hi:
        raise ValueError(f"target {t} outside [{lo}, {hi}]")
    mse = loss_mse(expectation, t)
    miss = 0.0 if lo <= expectation <= hi else 1.0
    return LossValue(mse + alpha * miss, {"mse": mse, "outside_band": miss})


def crater_target(k: int, n: int) -> tuple[float, tuple[float, float]]:
    """Expectation target for clique number ``k`` and its closed band."""
    t = 1.0 - 2.0 * k / n
    return t, (t - 1.0 / n, t + 1.0 / n)


def crater_decode(expectation: float, n: int) -> float:
    """Invert :func:`crater_target`: clique-number estimate from ``E``."""
    return n * (1.0 - expectation) / 2.0


# --------------------------------------------------------------------------
# metrics


def metric_distribution_accuracy(probs: np.ndarray, Y) -> float:
    return math.fsum(probs[_mask(probs, Y)])


def metric_sureness_argmax(probs: np.ndarray, Y) -> float:
    return (1 - loss_argmax(probs, Y)) * float(probs[argmax_index(probs)])


def random_baseline_entry(task: str, n: int, omega: int, n_targets: int) -> float:
    if task == MAX_CLIQUE:
        return n_targets / 2 ** n
    if task == CLIQUE_NUMBER:
        return math.comb(n, omega) / 2 ** n
    raise ValueError(f"unknown task {task!r}")


def metric_random_baseline(task: str, entries: Sequence) -> float:
    """Mean single-shot accuracy of a uniformly random bitstring."""
    if not entries:
        raise ValueError("random baseline needs at least one entry")
    return float(np.mean([
        random_baseline_entry(task, e.n, e.omega, len(e.target_bitstrings)) for e in entries
    ]))


def approximation_ratio_max_clique(probs: np.ndarray, g, omega: int) -> float:
    """Expected size of the sampled set relative to omega, counting only cliques."""
    n = g.n
    w = popcounts(n) * clique_mask(g)
    return float(probs @ w) / omega


def approximation_ratio_size(estimate: float, omega: int) -> float:
    """Symmetric ratio ``min(k, omega) / max(k, omega)`` of a size estimate."""
    k = max(float(estimate), 0.0)
    hi = max(k, omega)
    return min(k, omega) / hi if hi > 0 else 1.0


# --------------------------------------------------------------------------
# task + readout + loss bundle


@dataclass(frozen=True)
class Objective:
    """What a model is trained to do on a dataset entry.

    Args:
        task: ``max_clique`` (targets are the maximum cliques) or
            ``clique_number`` (targets are all strings of weight omega).
        observable: readout used for the expectation-valued losses.
        loss: one of ``LOSSES``.
        alpha: mixing weight of the Mountain/Crater losses.
        eps: log guard.
    """

    task: str = MAX_CLIQUE
    observable: str = BITSTRING
    loss: str = "logwrong"
    alpha: float = 0.5
    eps: float = EPS

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.observable not in OBSERVABLES:
            raise ValueError(f"unknown observable {self.observable!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.loss in ("mse", "mountain", "crater") and self.observable == BITSTRING:
            raise ValueError(f"{self.loss} loss needs the mountain or crater observable")
        if self.loss == "mountain" and self.observable != MOUNTAIN:
            raise ValueError("mountain loss pairs with the mountain observable")
        if self.loss == "crater" and self.observable != CRATER:
            raise ValueError("crater loss pairs with the crater observable")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @classmethod
    def default(cls, task: str, observable: str | None = None) -> "Objective":
        if task == MAX_CLIQUE:
            return cls(task, observable or BITSTRING, "logwrong")
        obs = observable or MOUNTAIN
        return cls(task, obs, MOUNTAIN if obs == MOUNTAIN else CRATER)

    def to_json(self) -> dict:
        return {"task": self.task, "observable": self.observable, "loss": self.loss,
                "alpha": self.alpha, "eps": self.eps}

    @classmethod
    def from_json(cls, d: dict) -> "Objective":
        return cls(d["task"], d["observable"], d["loss"], float(d["alpha"]), float(d["eps"]))

    # -- targets

    def targets(self, entry) -> np.ndarray:
        n = entry.n
        if self.task == MAX_CLIQUE:
            return target_mask(entry.target_bitstrings, n)
        mask = popcounts(n) == entry.omega
        return mask

    def expectation_target(self, entry) -> tuple[float, tuple[float, float]]:
        n, k = entry.n, entry.omega
        if self.observable == CRATER:
            return crater_target(k, n)
        if self.observable == MOUNTAIN:
            return float(k), (k - 0.5, k + 0.5)
        return 1.0, (1.0, 1.0)

    # -- loss and its derivative with respect to the probabilities

    def loss_value(self, probs: np.ndarray, entry) -> LossValue:
        Y = self.targets(entry)
        kind = self.loss
        if kind == "dist":
            v = loss_dist(probs, Y)
            return LossValue(v, {"dist": v})
        if kind == "logwrong":
            v = loss_logwrong(probs, Y, self.eps)
            return LossValue(v, {"logwrong": v})
        if kind == "argmax":
            v = float(loss_argmax(probs, Y))
            return LossValue(v, {"argmax": v})
        E = float(probs @ eigenvalues(self.observable, entry.n))
        y, band = self.expectation_target(entry)
        if kind == "mse":
            v = loss_mse(E, y)
            return LossValue(v, {"mse": v})
        if kind == "mountain":
            return loss_mountain(probs, E, Y, y, self.alpha, self.eps)
        return loss_crater(E, band, self.alpha, target=y)

    def loss_grad_probs(self, probs: np.ndarray, entry) -> np.ndarray:
        """``dL/dp`` for the differentiable losses (argmax raises)."""
        kind = self.loss
        if kind not in DIFFERENTIABLE:
            raise ValueError(f"{kind} loss is evaluation-only and has no gradient")
        Y = self.targets(entry)
        wrong = ~Y
        out = np.zeros_like(probs)
        if kind == "dist":
            out[wrong] = 2.0 * probs[wrong]
            return out
        if kind in ("logwrong", "mountain"):
            w = (1.0 if kind == "logwrong" else self.alpha)
            out[wrong] = w / (self.eps + math.fsum(probs[wrong]))
            if kind == "logwrong":
                return out
        ev = eigenvalues(self.observable, entry.n)
        y, _ = self.expectation_target(entry)
        scale = {"mse": 1.0, "mountain": 1.0 - self.alpha, "crater": 1.0}[kind]
        out += scale * 2.0 * (float(probs @ ev) - y) * ev
        return out

    # -- evaluation

    def predicted_size(self, probs: np.ndarray, entry) -> float:
        E = float(probs @ eigenvalues(self.observable, entry.n))
        if self.observable == CRATER:
            return crater_decode(E, entry.n)
        return E

    def metrics(self, probs: np.ndarray, entry) -> dict:
        """Loss plus argmax/distribution accuracy, sureness and approximation ratio.

        With the Crater readout the prediction is the band the expectation
        falls into, so all three accuracies collapse to that band indicator.
        """
        lv = self.loss_value(probs, entry)
        Y = self.targets(entry)
        if self.observable == CRATER:
            E = float(probs @ eigenvalues(CRATER, entry.n))
            hit = float(in_band(E, self.expectation_target(entry)[1]))
            am = dist = sure = hit
        else:
            am = 1.0 - loss_argmax(probs, Y)
            dist = metric_distribution_accuracy(probs, Y)
            sure = metric_sureness_argmax(probs, Y)
        if self.task == MAX_CLIQUE:
            ratio = approximation_ratio_max_clique(probs, entry.graph, entry.omega)
        else:
            ratio = approximation_ratio_size(self.predicted_size(probs, entry), entry.omega)
        return {"loss": lv.scalar, "components": lv.components, "argmax_acc": am,
                "dist_acc": dist, "sureness": sure, "approx_ratio": ratio}
