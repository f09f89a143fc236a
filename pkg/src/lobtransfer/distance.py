"""Distance matrices between scenarios and average-linkage clustering."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np


@dataclass
class DistanceMatrix:
    values: np.ndarray
    labels: List[str]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise ValueError(f"matrix shape {self.values.shape} does not match {n} labels")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distance matrix has non-finite entries")

    def symmetrized(self) -> np.ndarray:
        return (self.values + self.values.T) / 2

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def rows(self) -> Iterable[Tuple[str, ...]]:
        for i, label in enumerate(self.labels):
            yield (label, *(repr(float(v)) for v in self.values[i]))


def cluster_scenarios(matrix, k: int = 2) -> List[List[int]]:
    """Agglomerative average-linkage clustering cut at ``k`` clusters.

    Works on the symmetrized matrix (the diagonal is ignored). Ties in
    the merge distance go to the pair with the lowest member ids. Returns
    clusters as sorted index lists, ordered by their smallest member.
    """
    d = matrix.symmetrized() if isinstance(matrix, DistanceMatrix) else np.asarray(matrix, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("cluster_scenarios needs a square matrix")
    d = (d + d.T) / 2
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and n={n}")
    clusters: List[List[int]] = [[i] for i in range(n)]
    while len(clusters) > k:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                ca, cb = clusters[a], clusters[b]
                link = float(np.mean(d[np.ix_(ca, cb)]))
                key = (link, min(ca[0], cb[0]), max(ca[0], cb[0]))
                if best is None or key < best[0]:
                    best = (key, a, b)
        _, a, b = best
        merged = sorted(clusters[a] + clusters[b])
        clusters = [c for i, c in enumerate(clusters) if i not in (a, b)] + [merged]
        clusters.sort(key=lambda c: c[0])
    return clusters


def label_clusters(clusters: Sequence[Sequence[int]], labels: Sequence[str]) -> List[List[str]]:
    return [[labels[i] for i in c] for c in clusters]


def within_cross_means(matrix, groups: Sequence[Sequence[int]]) -> Tuple[float, float]:
    """Mean off-diagonal distance inside the given groups, and across them."""
    d = matrix.values if isinstance(matrix, DistanceMatrix) else np.asarray(matrix, dtype=float)
    member = {}
    for g, group in enumerate(groups):
        for i in group:
            member[i] = g
    within, cross = [], []
    for i in member:
        for j in member:
            if i == j:
                continue
            (within if member[i] == member[j] else cross).append(d[i, j])
    return float(np.mean(within)), float(np.mean(cross))


def same_partition(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> bool:
    return sorted(map(sorted, a)) == sorted(map(sorted, b))

