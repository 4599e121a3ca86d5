"""Uncertainty-band triplet constraints, the margin-floored loss, and
definitive epoch-indexed semi-hard mining.

A negative n is valid for an anchor/positive pair when both hold:

  * the violate constraint fails:   d_ap + alpha >= d_an
  * the obey constraint holds:      d_ap + gamma  < d_an

so every emitted triplet satisfies gamma < d_an - d_ap <= alpha at mining
time. Valid negatives are ranked by d_an descending (easiest first) and
epoch e selects the (e+1)-th.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import ClusterSet
from .core import ConfigurationError, DetectionStore, MarginSet

__all__ = [
    "Triplet",
    "TripletBatch",
    "mine_triplets",
    "obeys_uncertainty",
    "triplet_loss",
    "valid_negative_count",
    "violates_margin",
]


def violates_margin(d_ap: float, d_an: float, alpha: float) -> bool:
    """True when the alpha-margin constraint fails, i.e. the triplet is informative.

    Equality counts as violating: the constraint itself is strict.
    """
    return d_ap + alpha >= d_an


def obeys_uncertainty(d_ap: float, d_an: float, gamma: float) -> bool:
    """True when the negative clears the uncertainty margin: d_ap + gamma < d_an."""
    return d_ap + gamma < d_an


def triplet_loss(d_ap: float, d_an: float, margins: MarginSet) -> float:
    """max(gamma, d_ap - d_an + alpha); the gamma floor contributes no gradient."""
    return max(margins.gamma, d_ap - d_an + margins.alpha)


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


@dataclass
class TripletBatch:
    triplets: list[Triplet]
    epoch: int
    margins: MarginSet
    d_ap: np.ndarray  # squared distances at mining time
    d_an: np.ndarray

    def __len__(self) -> int:
        return len(self.triplets)

    @property
    def is_empty(self) -> bool:
        return not self.triplets

    def to_records(self) -> list[dict]:
        return [
            {
                "anchor": t.anchor,
                "positive": t.positive,
                "negative": t.negative,
                "d_ap": float(self.d_ap[i]),
                "d_an": float(self.d_an[i]),
            }
            for i, t in enumerate(self.triplets)
        ]


def _clustered_view(store, clusters, embeddings):
    """Ids, labels and embedding rows of clustered detections, in label then member order."""
    X = store.embedding_matrix() if embeddings is None else np.asarray(embeddings, dtype=np.float64)
    if X.shape[0] != len(store):
        raise ConfigurationError(f"embeddings rows {X.shape[0]} != store size {len(store)}")
    ids: list[int] = []
    labels: list[int] = []
    rows: list[int] = []
    for c in clusters.clusters:
        for det_id in c.member_ids:
            ids.append(det_id)
            labels.append(c.label)
            rows.append(store.row_of(det_id))
    return (
        np.asarray(ids, dtype=int),
        np.asarray(labels, dtype=int),
        X[np.asarray(rows, dtype=int)] if ids else X[:0],
    )


def _iter_pair_bands(ids, labels, Xc, margins, negative_pool, dedupe_pairs):
    """Yield (a_idx, p_idx, valid_idx, dists_from_anchor) per ordered anchor/positive pair."""
    n = len(ids)
    for a in range(n):
        diffs = Xc - Xc[a]
        dists = np.einsum("nd,nd->n", diffs, diffs)
        if negative_pool == "printed":
            pool = np.arange(n) != a
        else:
            pool = labels != labels[a]
        same = np.nonzero(labels == labels[a])[0]
        for p in same:
            if p == a:
                continue
            if dedupe_pairs and p < a:
                continue
            d_ap = dists[p]
            # violate fails (<= alpha above d_ap) and obey holds (> gamma above d_ap)
            valid = pool & (dists <= d_ap + margins.alpha) & (dists > d_ap + margins.gamma)
            yield a, p, np.nonzero(valid)[0], dists


def mine_triplets(
    store: DetectionStore,
    clusters: ClusterSet,
    margins: MarginSet,
    epoch: int,
    embeddings: np.ndarray | None = None,
    *,
    rank_overflow: str = "clamp",
    negative_pool: str = "pseudo_labels",
    dedupe_pairs: bool = False,
) -> TripletBatch:
    """Collect one triplet per anchor/positive pair using the rank-(epoch+1) rule.

    ``embeddings`` overrides the store's raw matrix (row-aligned), so mining
    can run under the current adapter. ``rank_overflow`` decides whether an
    epoch index past the valid-negative count clamps to the hardest negative
    or skips the pair. ``negative_pool`` is "pseudo_labels" (negatives must
    carry a different pseudo-label) or "printed" (anything but the anchor).
    """
    if epoch < 0:
        raise ConfigurationError(f"epoch must be >= 0, got {epoch}")
    if rank_overflow not in ("clamp", "skip"):
        raise ConfigurationError(f"unknown rank_overflow {rank_overflow!r}")
    if negative_pool not in ("pseudo_labels", "printed"):
        raise ConfigurationError(f"unknown negative_pool {negative_pool!r}")

    ids, labels, Xc = _clustered_view(store, clusters, embeddings)
    triplets: list[Triplet] = []
    aps: list[float] = []
    ans: list[float] = []
    for a, p, valid, dists in _iter_pair_bands(ids, labels, Xc, margins, negative_pool, dedupe_pairs):
        if valid.size == 0:
            continue
        if epoch >= valid.size:
            if rank_overflow == "skip":
                continue
            rank = valid.size - 1
        else:
            rank = epoch
        # d_an descending, ties by detection id ascending
        order = np.lexsort((ids[valid], -dists[valid]))
        chosen = valid[order[rank]]
        triplets.append(Triplet(int(ids[a]), int(ids[p]), int(ids[chosen])))
        aps.append(float(dists[p]))
        ans.append(float(dists[chosen]))
    return TripletBatch(triplets, epoch, margins, np.asarray(aps), np.asarray(ans))


def valid_negative_count(
    store: DetectionStore,
    clusters: ClusterSet,
    margins: MarginSet,
    embeddings: np.ndarray | None = None,
    *,
    negative_pool: str = "pseudo_labels",
    dedupe_pairs: bool = False,
) -> int:
    """Total band size over all anchor/positive pairs (for margin monotonicity checks)."""
    ids, labels, Xc = _clustered_view(store, clusters, embeddings)
    return sum(
        int(valid.size)
        for _, _, valid, _ in _iter_pair_bands(ids, labels, Xc, margins, negative_pool, dedupe_pairs)
    )
