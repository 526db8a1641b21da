"""Slow, obviously-correct reference implementations used only by tests."""
import itertools
import math


def brute_force(C, d):
    """Optimal monotone match/drop cost by enumerating kept-frame subsets and
    splitting each into K consecutive non-empty runs."""
    K, N = C.shape
    best = math.inf
    for m in range(K, N + 1):
        for kept in itertools.combinations(range(N), m):
            dropped = (N - m) * d
            for cuts in itertools.combinations(range(1, m), K - 1):
                bounds = (0,) + cuts + (m,)
                cost = dropped
                for k in range(K):
                    for idx in kept[bounds[k]:bounds[k + 1]]:
                        cost += C[k, idx]
                best = min(best, cost)
    return best


def set_metrics(pred, gt, K):
    """Metrics straight from the definitions, using Python sets of frame indices."""
    N = len(gt)
    mof = 100.0 * sum(p == g for p, g in zip(pred, gt)) / N
    rows = []
    for k in range(1, K + 1):
        P = {i for i in range(N) if pred[i] == k}
        G = {i for i in range(N) if gt[i] == k}
        if not P and not G:
            rows.append((100.0, 100.0, 100.0))
            continue
        prec = 100.0 * len(P & G) / len(P) if P else 0.0
        rec = 100.0 * len(P & G) / len(G) if G else 0.0
        rows.append((prec, rec, 100.0 * len(P & G) / len(P | G)))
    agg = [sum(r[j] for r in rows) / K for j in range(3)]
    return mof, agg, rows
