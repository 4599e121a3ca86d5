"""Independent straight-line re-implementations used as test oracles.

Everything here is plain Python over lists of floats: no numpy, no imports
from the package under test, so a bug cannot be shared between the two
sides of a comparison.
"""

from __future__ import annotations


def sqd(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def brute_force_cluster(frames, radius):
    """Reference clustering pass.

    frames: list of frames, each a list of (det_id, vector-as-list).
    Returns (clusters, absorptions) where clusters is a list of
    {"label": int, "member_ids": [...], "center": [...]} and absorptions a
    list of (det_id, sq_distance, center_at_absorption).
    """
    clusters = []
    absorptions = []
    for frame in frames:
        pool = list(frame)
        for cluster in clusters:
            if not pool:
                continue
            best = None
            best_d = None
            for det_id, vec in pool:
                d = sqd(vec, cluster["center"])
                if best_d is None or d < best_d or (d == best_d and det_id < best[0]):
                    best, best_d = (det_id, vec), d
            if best_d < radius:
                absorptions.append((best[0], best_d, list(cluster["center"])))
                cluster["member_ids"].append(best[0])
                cluster["vectors"].append(best[1])
                dim = len(best[1])
                n = len(cluster["vectors"])
                cluster["center"] = [
                    sum(vec[k] for vec in cluster["vectors"]) / n for k in range(dim)
                ]
                pool.remove(best)
        for det_id, vec in pool:
            clusters.append(
                {
                    "label": len(clusters),
                    "member_ids": [det_id],
                    "vectors": [list(vec)],
                    "center": list(vec),
                }
            )
    return clusters, absorptions


def brute_force_mine(items, alpha, gamma, epoch, clamp=True, pool="labels"):
    """Reference triplet collection.

    items: list of (det_id, label, vector). Returns a set of
    (anchor, positive, negative) triples; one per ordered same-label pair
    with at least one valid negative.
    """
    triplets = set()
    for a_id, a_label, a_vec in items:
        for p_id, p_label, p_vec in items:
            if p_id == a_id or p_label != a_label:
                continue
            d_ap = sqd(a_vec, p_vec)
            candidates = []
            for n_id, n_label, n_vec in items:
                if pool == "labels":
                    if n_label == a_label:
                        continue
                elif n_id == a_id:
                    continue
                d_an = sqd(a_vec, n_vec)
                violates = d_ap + alpha >= d_an
                obeys = d_ap + gamma < d_an
                if violates and obeys:
                    candidates.append((d_an, n_id))
            if not candidates:
                continue
            candidates.sort(key=lambda item: (-item[0], item[1]))
            if epoch < len(candidates):
                rank = epoch
            elif clamp:
                rank = len(candidates) - 1
            else:
                continue
            triplets.add((a_id, p_id, candidates[rank][1]))
    return triplets


def brute_force_valid_count(items, alpha, gamma, pool="labels"):
    """Total number of valid negatives across all ordered same-label pairs."""
    total = 0
    for a_id, a_label, a_vec in items:
        for p_id, p_label, p_vec in items:
            if p_id == a_id or p_label != a_label:
                continue
            d_ap = sqd(a_vec, p_vec)
            for n_id, n_label, n_vec in items:
                if pool == "labels":
                    if n_label == a_label:
                        continue
                elif n_id == a_id:
                    continue
                d_an = sqd(a_vec, n_vec)
                if d_ap + alpha >= d_an and d_ap + gamma < d_an:
                    total += 1
    return total


def numerical_gradient(loss_fn, weight, bias, step=1e-6):
    """Central finite differences of loss_fn(weight, bias) in every entry."""
    import copy

    w_grad = [[0.0] * len(weight) for _ in weight]
    b_grad = [0.0] * len(bias)
    for i in range(len(weight)):
        for j in range(len(weight)):
            w_plus = copy.deepcopy(weight)
            w_minus = copy.deepcopy(weight)
            w_plus[i][j] += step
            w_minus[i][j] -= step
            w_grad[i][j] = (loss_fn(w_plus, bias) - loss_fn(w_minus, bias)) / (2 * step)
    for i in range(len(bias)):
        b_plus = list(bias)
        b_minus = list(bias)
        b_plus[i] += step
        b_minus[i] -= step
        b_grad[i] = (loss_fn(weight, b_plus) - loss_fn(weight, b_minus)) / (2 * step)
    return w_grad, b_grad
