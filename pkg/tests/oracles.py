"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way on purpose: plain
loops, full enumeration, no shared code with aok itself.
"""

import itertools
import math

import numpy as np


def entropy_bits(labels):
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        return 0.0
    h = 0.0
    for c in (0, 1):
        p = float((labels == c).sum()) / n
        if p > 0:
            h -= p * math.log2(p)
    return h


def brute_ig_numeric(values, missing, labels):
    """Best-threshold information gain, scaled by the present fraction.

    Enumerates every distinct-value boundary of the present rows.
    """
    values = np.asarray(values, dtype=float)
    missing = np.asarray(missing, dtype=bool)
    labels = np.asarray(labels)
    v = values[~missing]
    y = labels[~missing]
    n_all = len(labels)
    if len(v) < 2 or n_all == 0:
        return 0.0
    frac = len(v) / n_all
    h = entropy_bits(y)
    order = np.argsort(v, kind="stable")
    sv, sy = v[order], y[order]
    best = 0.0
    for i in range(len(sv) - 1):
        if sv[i] == sv[i + 1]:
            continue
        t = (sv[i] + sv[i + 1]) / 2.0
        left = sy[: i + 1]
        right = sy[i + 1:]
        cond = (len(left) * entropy_bits(left)
                + len(right) * entropy_bits(right)) / len(sv)
        gain = frac * (h - cond)
        if gain > best:
            best = gain
    return best


def brute_ig_categorical(values, missing, labels):
    """Multiway information gain over distinct codes, present-fraction scaled."""
    values = np.asarray(values, dtype=float)
    missing = np.asarray(missing, dtype=bool)
    labels = np.asarray(labels)
    v = values[~missing]
    y = labels[~missing]
    n_all = len(labels)
    if len(v) == 0 or n_all == 0:
        return 0.0
    frac = len(v) / n_all
    h = entropy_bits(y)
    cond = 0.0
    for cat in np.unique(v):
        sub = y[v == cat]
        cond += len(sub) * entropy_bits(sub)
    cond /= len(v)
    return frac * (h - cond)


_MIN_GAIN = 1e-12


def c45_build(X, y, min_leaf=1.0, depth=0, max_depth=None):
    """Plain C4.5-style tree on a complete numeric table.

    Splits on the feature and midpoint threshold with the highest
    information gain; ties keep the lowest feature index and then the
    lowest threshold.  Leaves store raw class counts.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n, d = X.shape
    n1 = int((y == 1).sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0 or (max_depth is not None and depth >= max_depth):
        return {"counts": (n0, n1)}
    h = entropy_bits(y)
    best = None  # (gain, feature, threshold)
    for f in range(d):
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        sv, sy = v[order], y[order]
        for i in range(n - 1):
            if sv[i] == sv[i + 1]:
                continue
            if (i + 1) < min_leaf or (n - i - 1) < min_leaf:
                continue
            t = (sv[i] + sv[i + 1]) / 2.0
            cond = ((i + 1) * entropy_bits(sy[: i + 1])
                    + (n - i - 1) * entropy_bits(sy[i + 1:])) / n
            gain = h - cond
            if best is None or gain > best[0] + _MIN_GAIN:
                best = (gain, f, t)
    if best is None or best[0] <= _MIN_GAIN:
        return {"counts": (n0, n1)}
    _, f, t = best
    left = X[:, f] <= t
    return {
        "feature": f,
        "threshold": t,
        "children": (
            c45_build(X[left], y[left], min_leaf, depth + 1, max_depth),
            c45_build(X[~left], y[~left], min_leaf, depth + 1, max_depth),
        ),
    }


def c45_distribution(node, x):
    if "counts" in node:
        n0, n1 = node["counts"]
        total = n0 + n1
        if total == 0:
            return np.array([0.5, 0.5])
        return np.array([n0 / total, n1 / total])
    child = node["children"][0 if x[node["feature"]] <= node["threshold"] else 1]
    return c45_distribution(child, x)


def signflip_pvalue(diffs):
    """Exact two-sided sign-flip permutation p-value for a paired test.

    Uses the t statistic as the test statistic and enumerates all 2^n
    sign assignments, so it only suits small n.
    """
    d = np.asarray(diffs, dtype=float)
    n = len(d)

    def tstat(x):
        sd = x.std(ddof=1)
        if sd == 0.0:
            return 0.0 if x.mean() == 0.0 else math.inf * np.sign(x.mean())
        return x.mean() / (sd / math.sqrt(n))

    observed = abs(tstat(d))
    hits = 0
    total = 2 ** n
    for signs in itertools.product((1.0, -1.0), repeat=n):
        if abs(tstat(d * np.array(signs))) >= observed - 1e-12:
            hits += 1
    return hits / total


def mc_polygon_area(points, n_samples=200_000, seed=0):
    """Monte Carlo area of a simple polygon given as (n, 2) vertices."""
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    rng = np.random.default_rng(seed)
    samples = lo + rng.random((n_samples, 2)) * (hi - lo)
    inside = np.zeros(n_samples, dtype=bool)
    x, y = samples[:, 0], samples[:, 1]
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < np.where(crosses, xint, np.inf))
    box = float(np.prod(hi - lo))
    return box * inside.mean()


def wald_ci(p, n, z=1.96):
    half = z * math.sqrt(p * (1.0 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)
