"""Erdős–Rényi corpora, 2-WL deduplication, exact labels and JSONL manifests."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graphs import (
    CliqueLabel,
    Graph,
    all_labelled_graphs,
    bitstring_to_str,
    max_clique_label,
    popcount,
    str_to_bitstring,
)

MANIFEST_VERSION = 1

# Number of unlabelled simple graphs on n vertices (OEIS A000088).
ISOMORPHISM_CLASSES = {
    1: 1, 2: 2, 3: 4, 4: 11, 5: 34, 6: 156, 7: 1044, 8: 12346,
    9: 274668, 10: 12005168,
}

# Largest n for which hash buckets are confirmed with an exact isomorphism test.
EXACT_CHECK_MAX_N = 16

# Consecutive draws without a new class before a counted cell gives up.
STALL_LIMIT = 20_000


class ManifestError(ValueError):
    """Malformed or inconsistent dataset file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def sample_er(n: int, p: float, seed: int) -> Graph:
    """G(n, p): every pair ``u < v`` kept independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


def wl2_colouring(g: Graph) -> tuple[np.ndarray, bytes]:
    """Stable 2-dimensional Weisfeiler–Leman colouring of vertex pairs.

    Pair colours start from (u == v, adjacent) and are refined by the
    multiset of colour pairs over every intermediate vertex until the
    partition stops splitting. Returns the stable colour matrix and a digest
    of the whole refinement history; graphs with equal digests carry
    identically labelled colourings, so colours can be compared across them.
    """
    n = g.n
    colour = g.adjacency_matrix.astype(np.int64) + 2 * np.eye(n, dtype=np.int64)
    digest = hashlib.blake2b(digest_size=16)
    digest.update(np.int64(n).tobytes())
    digest.update(np.bincount(colour.ravel(), minlength=3).tobytes())
    n_classes = -1
    while True:
        # sig[u, v, w] pairs colour(u, w) with colour(w, v)
        sig = colour[:, None, :] * (n * n + 3) + colour.T[None, :, :]
        sig = np.sort(sig.reshape(n * n, n), axis=1)
        rows = np.ascontiguousarray(
            np.concatenate([colour.reshape(n * n, 1), sig], axis=1))
        # one opaque record per row: byte-wise ordering is canonical enough
        keys = rows.view(np.dtype((np.void, rows.shape[1] * 8))).ravel()
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        digest.update(uniq.tobytes())
        digest.update(counts.tobytes())
        colour = inv.reshape(n, n).astype(np.int64)
        if len(uniq) == n_classes:
            return colour, digest.digest()
        n_classes = len(uniq)


def wl2_hash(g: Graph) -> bytes:
    return wl2_colouring(g)[1]


def _colour_isomorphic(a: Graph, ca: np.ndarray, b: Graph, cb: np.ndarray) -> bool:
    """Exact isomorphism search restricted to colour-preserving maps."""
    n = a.n
    if a.n != b.n or len(a.edges) != len(b.edges):
        return False
    va, vb = np.diag(ca), np.diag(cb)
    if sorted(va.tolist()) != sorted(vb.tolist()):
        return False
    order = sorted(range(n), key=lambda v: (int(np.sum(va == va[v])), v))
    cand = {v: [w for w in range(n) if vb[w] == va[v]] for v in range(n)}
    ca_l, cb_l = ca.tolist(), cb.tolist()
    mapping: list[int] = [-1] * n
    used = [False] * n

    def extend(k: int) -> bool:
        if k == n:
            return True
        v = order[k]
        for w in cand[v]:
            if used[w]:
                continue
            if all(ca_l[v][order[j]] == cb_l[w][mapping[order[j]]]
                   and ca_l[order[j]][v] == cb_l[mapping[order[j]]][w]
                   for j in range(k)):
                mapping[v], used[w] = w, True
                if extend(k + 1):
                    return True
                mapping[v], used[w] = -1, False
        return False

    return extend(0)


def is_isomorphic(a: Graph, b: Graph) -> bool:
    """Exact isomorphism test."""
    if a.n != b.n or len(a.edges) != len(b.edges):
        return False
    ca, ha = wl2_colouring(a)
    cb, hb = wl2_colouring(b)
    return ha == hb and _colour_isomorphic(a, ca, b, cb)


class Deduplicator:
    """Incremental first-seen deduplication keyed by the 2-WL digest.

    Graphs sharing a digest are confirmed with an exact isomorphism search
    (up to ``EXACT_CHECK_MAX_N`` vertices) so WL-equivalent but
    non-isomorphic graphs are never merged.
    """

    def __init__(self, n: int):
        self.n = n
        self.buckets: dict[bytes, list[tuple[Graph, np.ndarray]]] = {}

    def add(self, g: Graph) -> bool:
        if g.n != self.n:
            raise ValueError(f"graph with n={g.n} in a deduplication group of n={self.n}")
        colour, key = wl2_colouring(g)
        bucket = self.buckets.setdefault(key, [])
        if not bucket:
            bucket.append((g, colour))
            return True
        if g.n > EXACT_CHECK_MAX_N:
            return False
        if any(_colour_isomorphic(g, colour, rep, c) for rep, c in bucket):
            return False
        bucket.append((g, colour))
        return True

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())


def dedup_wl2(graphs: Sequence[Graph]) -> list[Graph]:
    """Keep the first representative of every isomorphism class, in order."""
    if not graphs:
        return []
    sizes = {g.n for g in graphs}
    if len(sizes) > 1:
        raise ValueError(f"dedup_wl2 needs graphs of one size, got sizes {sorted(sizes)}")
    d = Deduplicator(graphs[0].n)
    return [g for g in graphs if d.add(g)]


@lru_cache(maxsize=None)
def isomorphism_classes(n: int) -> tuple[Graph, ...]:
    """One representative per isomorphism class of ``n``-vertex graphs."""
    if n > 6:
        raise ValueError(f"exhaustive enumeration is limited to n <= 6, got n={n}")
    return tuple(dedup_wl2(list(all_labelled_graphs(n))))


@dataclass(frozen=True)
class Cell:
    """One generation cell: ``count=None`` enumerates every isomorphism class."""

    n: int
    p: float | None = None
    count: int | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"cell n must be >= 1, got {self.n}")
        if self.count is not None:
            if self.count < 1:
                raise ValueError(f"cell count must be >= 1, got {self.count}")
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError(f"counted cell needs p in [0, 1], got {self.p}")

    @property
    def exhaustive(self) -> bool:
        return self.count is None

    def describe(self) -> str:
        if self.exhaustive:
            return f"n={self.n}, all"
        return f"n={self.n}, p={self.p}, count={self.count}"

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p, "count": self.count}

    @classmethod
    def from_json(cls, d: dict) -> "Cell":
        return cls(int(d["n"]), None if d.get("p") is None else float(d["p"]),
                   None if d.get("count") is None else int(d["count"]))


def parse_cells(text: str) -> list[Cell]:
    """Parse a compact cell list such as ``"2-6:all;8:0.1-0.9/0.1:111"``.

    Cells are separated by ``;``. Each cell is ``N:all`` or ``N:P:COUNT`` where
    ``N`` is an int, a range ``a-b`` or a comma list, and ``P`` is a float, a
    comma list or a range with step ``lo-hi/step``.
    """
    cells: list[Cell] = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        parts = chunk.split(":")
        ns = _parse_ints(parts[0])
        if len(parts) == 2 and parts[1] == "all":
            cells.extend(Cell(n) for n in ns)
        elif len(parts) == 3:
            ps, count = _parse_floats(parts[1]), int(parts[2])
            cells.extend(Cell(n, p, count) for n in ns for p in ps)
        else:
            raise ValueError(f"bad cell spec {chunk!r}")
    if not cells:
        raise ValueError("empty cell list")
    return cells


def _parse_ints(s: str) -> list[int]:
    out: list[int] = []
    for tok in s.split(","):
        if "-" in tok:
            lo, hi = tok.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return out


def _parse_floats(s: str) -> list[float]:
    if "/" in s:
        rng, step = s.split("/")
        lo, hi = (float(x) for x in rng.split("-"))
        k = int(round((hi - lo) / float(step)))
        return [round(lo + i * float(step), 10) for i in range(k + 1)]
    return [float(x) for x in s.split(",")]


@dataclass(frozen=True)
class DatasetEntry:
    graph: Graph
    omega: int
    target_bitstrings: frozenset[int]
    edge_probability: float | None = None
    source_seed: int | None = None

    def __post_init__(self) -> None:
        for b in self.target_bitstrings:
            if popcount(b) != self.omega:
                raise ValueError(
                    f"target {bitstring_to_str(b, self.graph.n)} inconsistent with "
                    f"omega={self.omega}"
                )

    @classmethod
    def label(cls, g: Graph, p: float | None = None, seed: int | None = None) -> "DatasetEntry":
        lab = max_clique_label(g)
        return cls(g, lab.omega, lab.max_cliques, p, seed)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def clique_label(self) -> CliqueLabel:
        return CliqueLabel(self.omega, self.target_bitstrings)

    def to_json(self) -> dict:
        n = self.graph.n
        return {
            "n": n,
            "edges": [list(e) for e in self.graph.sorted_edges()],
            "p": self.edge_probability,
            "omega": self.omega,
            "max_cliques": sorted(bitstring_to_str(b, n) for b in self.target_bitstrings),
            "seed": self.source_seed,
        }


@dataclass
class DatasetManifest:
    entries: list[DatasetEntry]
    cells: list[Cell] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def sizes(self) -> list[int]:
        return sorted({e.n for e in self.entries})

    def subset(self, indices: Iterable[int]) -> "DatasetManifest":
        return DatasetManifest([self.entries[i] for i in indices], list(self.cells), self.seed)

    def filter(self, n: int | None = None, p: float | None = None) -> "DatasetManifest":
        keep = [e for e in self.entries
                if (n is None or e.n == n) and (p is None or e.edge_probability == p)]
        return DatasetManifest(keep, list(self.cells), self.seed)


def _cell_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def build_cell(cell: Cell, seed: int, index: int = 0) -> list[DatasetEntry]:
    if cell.exhaustive:
        return [DatasetEntry.label(g) for g in isomorphism_classes(cell.n)]

    available = ISOMORPHISM_CLASSES.get(cell.n)
    if available is not None and cell.count > available:
        raise ValueError(
            f"cell ({cell.describe()}) asks for {cell.count} graphs but only "
            f"{available} isomorphism classes exist"
        )
    rng = _cell_rng(seed, index)
    dedup = Deduplicator(cell.n)
    out: list[DatasetEntry] = []
    stall = 0
    while len(out) < cell.count:
        s = int(rng.integers(0, 2**63 - 1))
        g = sample_er(cell.n, cell.p, s)
        if dedup.add(g):
            out.append(DatasetEntry.label(g, cell.p, s))
            stall = 0
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                raise ValueError(
                    f"cell ({cell.describe()}) exhausted: found only {len(out)} "
                    f"non-isomorphic graphs after {STALL_LIMIT} fruitless draws"
                )
    return out


def build_dataset(cells: Sequence[Cell], seed: int) -> DatasetManifest:
    entries: list[DatasetEntry] = []
    for i, cell in enumerate(cells):
        entries.extend(build_cell(cell, seed, i))
    return DatasetManifest(entries, list(cells), seed)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    header = {
        "version": MANIFEST_VERSION,
        "seed": manifest.seed,
        "cells": [c.to_json() for c in manifest.cells],
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(e.to_json(), sort_keys=True) for e in manifest.entries)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _entry_from_json(d: dict, line: int, validate: bool) -> DatasetEntry:
    try:
        n = int(d["n"])
        g = Graph.from_edges(n, d["edges"])
        omega = int(d["omega"])
        targets = frozenset(str_to_bitstring(s) for s in d["max_cliques"])
        p = None if d.get("p") is None else float(d["p"])
        seed = None if d.get("seed") is None else int(d["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad entry: {exc}", line) from exc
    if any(len(s) != n for s in d["max_cliques"]):
        raise ManifestError(f"bitstring length differs from n={n}", line)
    try:
        entry = DatasetEntry(g, omega, targets, p, seed)
    except ValueError as exc:
        raise ManifestError(str(exc), line) from exc
    if validate:
        lab = max_clique_label(g)
        if lab.omega != omega or lab.max_cliques != targets:
            raise ManifestError(
                f"stored label (omega={omega}) disagrees with exact oracle (omega={lab.omega})",
                line,
            )
    return entry


def load_manifest(path: str | Path, validate: bool = True) -> DatasetManifest:
    text = Path(path).read_text(encoding="utf-8")
    if not text.endswith("\n"):
        raise ManifestError("file truncated (no trailing newline)",
                            text.count("\n") + 1)
    lines = text.splitlines()
    if not lines:
        raise ManifestError("empty file", 1)
    try:
        header = json.loads(lines[0])
        if header.get("version") != MANIFEST_VERSION:
            raise ManifestError(f"unsupported version {header.get('version')!r}", 1)
        cells = [Cell.from_json(c) for c in header["cells"]]
        seed = int(header["seed"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"bad header: {exc}", 1) from exc
    entries = []
    for i, raw in enumerate(lines[1:], start=2):
        try:
            d = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON: {exc.msg}", i) from exc
        if not isinstance(d, dict):
            raise ManifestError("entry is not an object", i)
        entries.append(_entry_from_json(d, i, validate))
    return DatasetManifest(entries, cells, seed)
