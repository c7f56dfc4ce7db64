"""Independent reference implementations used only by the test suite.

Deliberately naive: brute-force enumeration, dense QP solving, and plain
interval-by-interval loops. They share no code with the package paths they
check.
"""

from __future__ import annotations

from itertools import product

import numpy as np


def brute_force_two_means(points: np.ndarray) -> float:
    """Globally optimal 2-cluster within-cluster sum of squares.

    Enumerates every bipartition with two non-empty sides; centroids are the
    part means.
    """
    n = len(points)
    best = np.inf
    for mask_bits in range(1, 2 ** (n - 1)):
        mask = np.array([(mask_bits >> i) & 1 for i in range(n)], dtype=bool)
        if mask.all() or not mask.any():
            continue
        obj = 0.0
        for part in (points[mask], points[~mask]):
            center = part.mean(axis=0)
            obj += ((part - center) ** 2).sum()
        best = min(best, obj)
    return float(best)


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty((len(A), len(B)))
    for i in range(len(A)):
        for j in range(len(B)):
            d = A[i] - B[j]
            out[i, j] = np.exp(-gamma * float(d @ d))
    return out


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def dual_qp_active_set(K: np.ndarray, y: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    """Exact dual optimum by enumerating the 3^n active-set configurations.

    Maximizes sum(alpha) - 0.5 (alpha*y)' K (alpha*y) subject to
    0 <= alpha <= c and y'alpha = 0. Every configuration's stationary point
    that is primal feasible is a candidate; the optimum is among them
    because the objective is concave.
    """
    n = len(y)
    Q = np.outer(y, y) * K
    best_alpha = np.zeros(n)
    best_obj = -np.inf
    for states in product((0, 1, 2), repeat=n):  # 0 -> alpha=0, 1 -> alpha=c, 2 -> free
        alpha = np.zeros(n)
        fixed_hi = [i for i, s in enumerate(states) if s == 1]
        free = [i for i, s in enumerate(states) if s == 2]
        alpha[fixed_hi] = c
        if free:
            m = len(free)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Q[np.ix_(free, free)]
            A[:m, m] = y[free]
            A[m, :m] = y[free]
            rhs = np.zeros(m + 1)
            rhs[:m] = 1.0 - Q[np.ix_(free, fixed_hi)] @ alpha[fixed_hi] if fixed_hi else 1.0
            rhs[m] = -float(y[fixed_hi] @ alpha[fixed_hi]) if fixed_hi else 0.0
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            alpha[free] = sol[:m]
        if np.any(alpha < -1e-9) or np.any(alpha > c + 1e-9):
            continue
        if abs(float(y @ alpha)) > 1e-8 * max(1.0, c):
            continue
        alpha = np.clip(alpha, 0.0, c)
        obj = dual_objective(alpha, y, K)
        if obj > best_obj:
            best_obj = obj
            best_alpha = alpha
    return best_alpha, best_obj


def _project_box_hyperplane(v: list[float], y: list[float], c: float) -> list[float]:
    """Project v onto {0 <= a <= c, y.a = 0} by bisection on the multiplier."""
    def constraint(nu: float) -> float:
        return sum(
            yi * min(c, max(0.0, vi + nu * yi)) for vi, yi in zip(v, y)
        )

    lo = -(c + max(abs(x) for x in v) + 1.0)
    hi = -lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if constraint(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    nu = 0.5 * (lo + hi)
    return [min(c, max(0.0, vi + nu * yi)) for vi, yi in zip(v, y)]


def dual_qp_projected_gradient(
    K: np.ndarray, y: np.ndarray, c: float, iters: int = 5000
) -> tuple[np.ndarray, float]:
    """Projected-gradient ascent on the dense dual, pure-python inner loops."""
    n = len(y)
    Q = (np.outer(y, y) * K).tolist()
    y_list = [float(v) for v in y]
    step = 1.0 / max(float(np.linalg.eigvalsh(np.outer(y, y) * K).max()), 1e-12)
    alpha = [0.0] * n
    for _ in range(iters):
        grad = [1.0 - sum(Q[i][j] * alpha[j] for j in range(n)) for i in range(n)]
        moved = [alpha[i] + step * grad[i] for i in range(n)]
        alpha = _project_box_hyperplane(moved, y_list, c)
    a = np.array(alpha)
    return a, dual_objective(a, y, K)


def naive_persistence(classifications, pt: int) -> np.ndarray:
    """Run-length rule: alarm when pt+1 consecutive positives end here."""
    out = []
    run = 0
    for v in classifications:
        run = run + 1 if v == 1 else 0
        out.append(1 if run >= pt + 1 else 0)
    return np.array(out, dtype=int)


def naive_unit_scores(labels, alarms):
    """Interval-by-interval tallies for one unit.

    Returns (n, agree, false_alarm_intervals, has_window, detected, delay,
    window_len); delay is None when undetected, 1-based at onset.
    """
    labels = list(labels)
    alarms = list(alarms)
    n = len(labels)
    agree = sum(1 for l, a in zip(labels, alarms) if l == a)
    fa = sum(1 for l, a in zip(labels, alarms) if l == 0 and a == 1)
    if 1 not in labels:
        return n, agree, fa, False, False, None, 0
    onset = labels.index(1)
    stop = onset
    while stop < n and labels[stop] == 1:
        stop += 1
    delay = None
    for t in range(onset, stop):
        if alarms[t] == 1:
            delay = t - onset + 1
            break
    return n, agree, fa, True, delay is not None, delay, stop - onset


def naive_metrics(units: dict[str, tuple[list[int], list[int]]]):
    """Aggregate DR/FAR/MTTD/CR over {unit_id: (labels, alarms)}."""
    total = agree = fa = windows = detected = 0
    delays = []
    max_window = 0
    for labels, alarms in units.values():
        n, a, f, has_window, det, delay, wlen = naive_unit_scores(labels, alarms)
        total += n
        agree += a
        fa += f
        max_window = max(max_window, wlen)
        if has_window:
            windows += 1
            if det:
                detected += 1
                delays.append(delay)
    dr = detected / windows
    far = fa / total
    cr = agree / total
    mttd = sum(delays) / len(delays) if delays else None
    return dr, far, mttd, cr, max_window


def naive_pool(centroids: np.ndarray, context: np.ndarray) -> np.ndarray:
    """Sum of triangle activations over stride-1 windows, plain loops."""
    k, d = centroids.shape
    total = np.zeros(k)
    for start in range(len(context) - d + 1):
        window = context[start : start + d]
        tau = np.array([np.sqrt(((window - centroids[j]) ** 2).sum()) for j in range(k)])
        mu = tau.mean()
        total += np.maximum(0.0, mu - tau)
    return total
