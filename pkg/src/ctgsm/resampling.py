"""SMOTE oversampling, edited-nearest-neighbour cleaning and their combination."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .data import DataError, Dataset

# Candidate count above which neighbour distances are evaluated in row chunks.
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class SmoteParams:
    """``n_per_sample`` is an int, ``"balance"`` or a ``{class_id: int}`` map."""

    n_per_sample: Union[int, str, dict] = "balance"
    k_neighbors: int = 5
    target_classes: frozenset = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_classes", frozenset(int(c) for c in self.target_classes))
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if isinstance(self.n_per_sample, int) and self.n_per_sample < 0:
            raise ValueError("n_per_sample must be >= 0")
        if isinstance(self.n_per_sample, str) and self.n_per_sample != "balance":
            raise ValueError(f"unknown sampling strategy {self.n_per_sample!r}")


@dataclass(frozen=True)
class EnnParams:
    k_neighbors: int = 3

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def _rank_dists(queries: np.ndarray, cands: np.ndarray, cand_sq: np.ndarray) -> np.ndarray:
    """Squared distances minus the per-query constant |q|^2 (ordering is unchanged)."""
    d = queries @ cands.T
    d *= -2.0
    d += cand_sq
    return d


def _smallest_k(qpts: np.ndarray, cands: np.ndarray, d: np.ndarray, k: int, slack: np.ndarray) -> np.ndarray:
    """Column positions of the k nearest candidates per query row, ordered by (distance, position).

    ``d`` is a fast but rounding-prone screen. Every candidate within ``slack``
    of the k-th screened value is re-scored from direct coordinate differences,
    so near-ties are settled on exact-as-possible distances and then by index.
    """
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    band = d <= (kth + slack)[:, None]
    sizes = band.sum(axis=1)
    out = np.empty((d.shape[0], k), dtype=np.int64)

    simple = np.flatnonzero(sizes == k)
    if simple.size:
        pos = np.argpartition(d[simple], k - 1, axis=1)[:, :k]
        diff = cands[pos] - qpts[simple][:, None, :]
        exact = (diff * diff).sum(axis=2)
        out[simple] = np.take_along_axis(pos, np.lexsort((pos, exact)), axis=1)
    for r in np.flatnonzero(sizes != k):
        pos = np.flatnonzero(band[r])
        diff = cands[pos] - qpts[r]
        exact = (diff * diff).sum(axis=1)
        out[r] = pos[np.lexsort((pos, exact))[:k]]
    return out


def knn_table(points, k: int, queries=None, candidates=None, exclude_self: bool = True) -> np.ndarray:
    """k nearest candidate rows (Euclidean) for each query row, as global indices.

    ``queries`` and ``candidates`` are row-index arrays into ``points``
    (default: every row). Ties go to the lower row index. Distances are
    screened with the dot-product expansion, then every candidate near the
    k-th screened value is re-ranked on exact coordinate differences, so
    near-ties order the same way a direct computation would.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    queries = np.arange(n) if queries is None else np.asarray(queries, dtype=np.int64)
    candidates = np.arange(n) if candidates is None else np.sort(np.asarray(candidates, dtype=np.int64))
    avail = candidates.size
    if exclude_self:
        # Each query loses at most one candidate (itself).
        avail -= int(np.isin(queries, candidates).any())
    if k > avail or k < 1:
        raise DataError(f"need {k} neighbours but only {avail} candidates")
    cands = points[candidates]
    cand_sq = (cands * cands).sum(axis=1)
    # Bound on the rounding error of |c|^2 - 2 q.c relative to the magnitudes involved.
    err_scale = 8.0 * (points.shape[1] + 2) * np.finfo(np.float64).eps
    cand_sq_max = float(cand_sq.max())
    out = np.empty((queries.size, k), dtype=np.int64)
    step = max(1, _CHUNK_CELLS // max(1, candidates.size))
    for start in range(0, queries.size, step):
        q = queries[start:start + step]
        qpts = points[q]
        d = _rank_dists(qpts, cands, cand_sq)
        slack = err_scale * ((qpts * qpts).sum(axis=1) + cand_sq_max) + 1e-300
        if exclude_self:
            pos = np.searchsorted(candidates, q)
            hit = (pos < candidates.size) & (candidates[np.minimum(pos, candidates.size - 1)] == q)
            d[np.flatnonzero(hit), pos[hit]] = np.inf
        out[start:start + q.size] = candidates[_smallest_k(qpts, cands, d, k, slack)]
    return out


def knn_indices(points, query_index: int, k: int, exclude_self: bool = True, restrict_to=None) -> np.ndarray:
    """Indices of the k nearest rows to ``points[query_index]``."""
    return knn_table(points, k, queries=[query_index], candidates=restrict_to, exclude_self=exclude_self)[0]


def _per_class_counts(data: Dataset, params: SmoteParams) -> dict[int, np.ndarray]:
    """Synthetic rows to emit per source row, keyed by target class."""
    counts = data.class_counts()
    rng = np.random.default_rng([params.seed, 1])
    plan = {}
    for c in sorted(params.target_classes):
        n_c = int(counts[c]) if c < len(counts) else 0
        if n_c == 0:
            continue
        if params.n_per_sample == "balance":
            needed = max(0, int(counts.max()) - n_c)
            per = np.full(n_c, needed // n_c, dtype=np.int64)
            extra = needed % n_c
            if extra:
                per[rng.choice(n_c, size=extra, replace=False)] += 1
        elif isinstance(params.n_per_sample, dict):
            per = np.full(n_c, int(params.n_per_sample.get(c, 0)), dtype=np.int64)
        else:
            per = np.full(n_c, int(params.n_per_sample), dtype=np.int64)
        plan[c] = per
    return plan


def smote_with_provenance(data: Dataset, params: SmoteParams):
    """SMOTE that also reports, for each synthetic row, its source and neighbour row indices."""
    for c in params.target_classes:
        if not 0 <= c < data.n_classes:
            raise DataError(f"unknown target class {c}")
    counts = data.class_counts()
    for c in params.target_classes:
        if counts[c] < params.k_neighbors + 1:
            raise DataError(
                f"class {data.class_names[c]!r} has {counts[c]} rows; SMOTE with k={params.k_neighbors} "
                f"needs {params.k_neighbors + 1}"
            )
    plan = _per_class_counts(data, params)
    rng = np.random.default_rng([params.seed, 0])
    X = data.features
    feats, labs, srcs, nbrs = [], [], [], []
    for c, per in plan.items():
        members = np.flatnonzero(data.labels == c)
        if per.sum() == 0:
            continue
        neigh = knn_table(X, params.k_neighbors, queries=members, candidates=members)
        src_local = np.repeat(np.arange(members.size), per)
        pick = rng.integers(0, params.k_neighbors, size=src_local.size)
        lam = rng.random(src_local.size)
        src = members[src_local]
        nbr = neigh[src_local, pick]
        feats.append(X[src] + lam[:, None] * (X[nbr] - X[src]))
        labs.append(np.full(src.size, c, dtype=np.int64))
        srcs.append(src)
        nbrs.append(nbr)
    if not feats:
        empty = np.empty(0, dtype=np.int64)
        return data.with_rows(np.empty((0, X.shape[1])), empty), empty, empty
    synth = data.with_rows(np.vstack(feats), np.concatenate(labs))
    return synth, np.concatenate(srcs), np.concatenate(nbrs)


def smote(data: Dataset, params: SmoteParams) -> Dataset:
    """Synthetic minority rows x_i + lam * (x_ij - x_i), lam ~ U[0, 1)."""
    return smote_with_provenance(data, params)[0]


def enn_keep_mask(data: Dataset, params: EnnParams = EnnParams()) -> np.ndarray:
    """True for rows that survive edited-nearest-neighbour cleaning.

    A row is dropped only when more than half of its k neighbours share one
    class and that class differs from the row's own. All decisions use the
    unedited dataset.
    """
    k = params.k_neighbors
    if len(data) <= k + 1:
        raise DataError(f"ENN with k={k} needs more than {k + 1} rows")
    neigh = knn_table(data.features, k)
    votes = data.labels[neigh]
    counts = np.zeros((len(data), data.n_classes), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(len(data)), k), votes.ravel()), 1)
    top = counts.argmax(axis=1)
    has_majority = counts.max(axis=1) * 2 > k
    return ~(has_majority & (top != data.labels))


def enn_filter(data: Dataset, params: EnnParams = EnnParams()) -> Dataset:
    return data.subset(enn_keep_mask(data, params))


def smote_only(data: Dataset, params: SmoteParams) -> Dataset:
    return data.concat(smote(data, params))


def smoteenn(data: Dataset, smote_params: SmoteParams, enn_params: EnnParams = EnnParams()) -> Dataset:
    """ENN cleaning applied to the union of the input and its SMOTE rows."""
    return enn_filter(data.concat(smote(data, smote_params)), enn_params)


def minority_classes(data: Dataset, exclude: Iterable[int] = ()) -> frozenset:
    """Every class with rows, except the most frequent one."""
    counts = data.class_counts()
    majority = int(counts.argmax())
    skip = set(exclude) | {majority}
    return frozenset(int(c) for c in np.flatnonzero(counts > 0) if c not in skip)
