"""DTW distances between signatures and average-linkage dendrograms."""

from __future__ import annotations

import csv
import math
import re
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def dtw_distance(a: Sequence[float], b: Sequence[float], band: int | None = None) -> float:
    """Classic DTW with absolute-difference local cost.

    ``band`` optionally restricts the path to ``|i - j| <= band`` (Sakoe-Chiba);
    ``None`` means unconstrained.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("DTW needs non-empty sequences")
    if band is not None:
        if band < 0:
            raise ValueError("band must be non-negative")
        band = max(band, abs(n - m))
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        ai = a[i - 1]
        lo, hi = 1, m
        if band is not None:
            lo, hi = max(1, i - band), min(m, i + band)
        for j in range(lo, hi + 1):
            best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            if prev[j - 1] < best:
                best = prev[j - 1]
            cur[j] = abs(ai - b[j - 1]) + best
        prev = cur
    return prev[m]


@dataclass
class DistanceMatrix:
    labels: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (len(self.labels), len(self.labels)):
            raise ValueError("matrix shape does not match labels")
        if np.any(np.diag(v) != 0.0):
            raise ValueError("diagonal must be zero")
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12):
            raise ValueError("matrix must be symmetric")
        if np.any(v < 0):
            raise ValueError("distances must be non-negative")
        self.values = v


def distance_matrix(
    signatures: Sequence, labels: Sequence[str] | None = None, band: int | None = None, executor: Executor | None = None
) -> DistanceMatrix:
    """Pairwise DTW over signatures (objects with ``values``/``label`` or plain sequences)."""
    if len(signatures) < 2:
        raise ValueError("need at least two signatures")
    seqs = [getattr(s, "values", s) for s in signatures]
    if labels is None:
        labels = [getattr(s, "label", str(i)) for i, s in enumerate(signatures)]
    n = len(seqs)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if executor is None:
        dists = [dtw_distance(seqs[i], seqs[j], band) for i, j in pairs]
    else:
        dists = list(executor.map(lambda ij: dtw_distance(seqs[ij[0]], seqs[ij[1]], band), pairs))
    values = np.zeros((n, n))
    for (i, j), d in zip(pairs, dists):
        values[i, j] = values[j, i] = d
    return DistanceMatrix(list(labels), values)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    """Binary merge tree; node ids ``0..n-1`` are leaves, ``n + k`` is merge ``k``."""

    labels: list[str]
    merges: list[Merge]

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.merges) - 1 if self.merges else 0

    def height(self, node: int) -> float:
        return 0.0 if node < self.n_leaves else self.merges[node - self.n_leaves].height

    def leaves(self, node: int) -> list[int]:
        if node < self.n_leaves:
            return [node]
        m = self.merges[node - self.n_leaves]
        return self.leaves(m.left) + self.leaves(m.right)

    def min_label(self, node: int) -> str:
        return min(self.labels[i] for i in self.leaves(node))

    def cut(self, height: float) -> list[list[str]]:
        """Clusters formed by merges at or below ``height``; a cut at 0 on distinct items gives singletons."""
        groups = {i: [i] for i in range(self.n_leaves)}
        for k, m in enumerate(self.merges):
            if m.height > height:
                continue
            node = self.n_leaves + k
            groups[node] = groups.pop(m.left) + groups.pop(m.right)
        return sorted(sorted(self.labels[i] for i in g) for g in groups.values())

    def to_json(self) -> list[dict]:
        def name(node: int):
            return self.labels[node] if node < self.n_leaves else node

        return [{"left": name(m.left), "right": name(m.right), "height": m.height} for m in self.merges]


def agglomerative_cluster(matrix: DistanceMatrix, linkage: str = "average") -> Dendrogram:
    """Agglomerative clustering with average linkage (UPGMA).

    Ties between equally close pairs go to the pair whose smallest member
    labels sort first.
    """
    if linkage != "average":
        raise ValueError("only average linkage is supported")
    labels = list(matrix.labels)
    n = len(labels)
    if n < 2:
        raise ValueError("need at least two items")
    dist: dict[int, dict[int, float]] = {i: {} for i in range(n)}
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i][j] = float(matrix.values[i, j])
    size = {i: 1 for i in range(n)}
    min_label = {i: labels[i] for i in range(n)}
    merges: list[Merge] = []
    next_id = n
    while len(size) > 1:
        best = None
        for a in size:
            for b, d in dist[a].items():
                if b <= a:
                    continue
                key = (d, tuple(sorted((min_label[a], min_label[b]))))
                if best is None or key < best[0]:
                    best = (key, a, b)
        (d, _), a, b = best
        if min_label[b] < min_label[a]:
            a, b = b, a
        new = next_id
        next_id += 1
        sa, sb = size.pop(a), size.pop(b)
        dist[new] = {}
        for c in size:
            dc = (sa * dist[a][c] + sb * dist[b][c]) / (sa + sb)
            dist[new][c] = dc
            dist[c][new] = dc
            del dist[c][a], dist[c][b]
        del dist[a], dist[b]
        size[new] = sa + sb
        min_label[new] = min(min_label[a], min_label[b])
        merges.append(Merge(a, b, d, sa + sb))
    return Dendrogram(labels, merges)


_PLAIN_LABEL = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _fmt(x: float) -> str:
    return format(x, ".12g")


def _quote(label: str) -> str:
    if _PLAIN_LABEL.match(label):
        return label
    return "'" + label.replace("'", "''") + "'"


def dendrogram_to_newick(tree: Dendrogram) -> str:
    if tree.n_leaves == 1:
        return _quote(tree.labels[0]) + ";"

    def render(node: int, parent_height: float | None) -> str:
        if node < tree.n_leaves:
            text = _quote(tree.labels[node])
        else:
            m = tree.merges[node - tree.n_leaves]
            kids = sorted((m.left, m.right), key=tree.min_label)
            text = "(" + ",".join(render(k, m.height) for k in kids) + ")"
        if parent_height is None:
            return text
        return f"{text}:{_fmt(parent_height - tree.height(node))}"

    return render(tree.root, None) + ";"


def parse_newick(text: str) -> Dendrogram:
    """Parse an ultrametric Newick tree written by :func:`dendrogram_to_newick`."""
    text = text.strip()
    text = re.sub(r"^\[[^\]]*\]\s*", "", text)
    if not text.endswith(";"):
        raise ValueError("Newick string must end with ';'")
    pos = 0

    def parse_label() -> str:
        nonlocal pos
        if text[pos] == "'":
            pos += 1
            out = []
            while True:
                ch = text[pos]
                if ch == "'":
                    if text[pos + 1] == "'":
                        out.append("'")
                        pos += 2
                        continue
                    pos += 1
                    break
                out.append(ch)
                pos += 1
            return "".join(out)
        start = pos
        while text[pos] not in ",():;":
            pos += 1
        return text[start:pos]

    def parse_length() -> float:
        nonlocal pos
        if text[pos] != ":":
            return 0.0
        pos += 1
        start = pos
        while text[pos] not in ",();":
            pos += 1
        return float(text[start:pos])

    def parse_node():
        # returns nested ("leaf", label) or ("node", [children]) with branch length
        nonlocal pos
        if text[pos] == "(":
            pos += 1
            children = [parse_node()]
            while text[pos] == ",":
                pos += 1
                children.append(parse_node())
            if text[pos] != ")":
                raise ValueError(f"expected ')' at {pos}")
            pos += 1
            if text[pos] not in ":,);":
                parse_label()
            return ("node", children, parse_length())
        label = parse_label()
        return ("leaf", label, parse_length())

    root = parse_node()

    labels: list[str] = []

    def collect(node) -> None:
        if node[0] == "leaf":
            labels.append(node[1])
        else:
            for ch in node[1]:
                collect(ch)

    collect(root)
    index = {lab: i for i, lab in enumerate(labels)}
    merges: list[Merge] = []

    def build(node) -> tuple[int, float, int]:
        if node[0] == "leaf":
            return index[node[1]], 0.0, 1
        kids = [build(ch) + (ch[2],) for ch in node[1]]
        if len(kids) != 2:
            raise ValueError("only binary trees are supported")
        (l_id, l_h, l_n, l_len), (r_id, _, r_n, _) = kids
        height = l_h + l_len
        merges.append(Merge(l_id, r_id, height, l_n + r_n))
        return len(labels) + len(merges) - 1, height, l_n + r_n

    build(root)
    return Dendrogram(labels, merges)


def write_distance_matrix(path, matrix: DistanceMatrix, header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + matrix.labels)
        for lab, row in zip(matrix.labels, matrix.values):
            w.writerow([lab] + [repr(float(v)) for v in row])


def read_distance_matrix(path) -> DistanceMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    labels = rows[0][1:]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:] if r])
    return DistanceMatrix(labels, values)
