"""Soft-margin SVM with RBF kernel, trained by sequential minimal optimization.

The dual hinge-loss problem is solved with pairwise updates: scan for the
first example violating its KKT condition, pair it with a randomly chosen
partner (falling back to a random sweep when the first choice makes no
progress), and optimize the pair analytically. Features are standardized
per dimension with statistics from the training data before the kernel is
applied; zero-variance dimensions pass through unscaled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SvmHyperparams:
    c: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("c", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-dimension standardization; stds are pre-substituted (never zero)."""

    means: np.ndarray
    stds: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.stds

    @classmethod
    def fit(cls, X: np.ndarray) -> "FeatureScaler":
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        stds = np.where(stds > 0, stds, 1.0)
        return cls(means=means, stds=stds)


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained classifier: support vectors live in standardized feature space."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray  # alpha_i * y_i, signed
    bias: float
    gamma: float
    scaler: FeatureScaler

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]


@dataclass(frozen=True)
class TrainStatus:
    iterations: int
    kkt_violation: float
    converged: bool
    dual_objective: float
    objective_trace: tuple[float, ...] | None = None


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma!r}")
    diff = a - b
    return float(np.exp(-gamma * float(diff @ diff)))


def _rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def _kkt_residuals(alpha: np.ndarray, margins: np.ndarray, c: float) -> np.ndarray:
    """Per-example KKT residual for the dual solution.

    alpha=0 wants margin >= 1, alpha=c wants margin <= 1, interior alphas
    want margin == 1.
    """
    eps = 1e-8 * c
    res = np.empty_like(alpha)
    at_zero = alpha <= eps
    at_c = alpha >= c - eps
    interior = ~(at_zero | at_c)
    res[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    res[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    res[interior] = np.abs(margins[interior] - 1.0)
    return res


class _Smo:
    """Pairwise dual optimizer over a precomputed kernel matrix."""

    _STEP_EPS = 1e-12

    def __init__(
        self,
        K: np.ndarray,
        y: np.ndarray,
        c: float,
        tol: float,
        rng: np.random.Generator,
        track_objective: bool,
    ):
        self.K = K
        self.y = y
        self.c = c
        self.tol = tol
        self.rng = rng
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.errors = -y.astype(float)  # f(x) = 0 initially, E = f - y
        self.updates = 0
        self.trace: list[float] = [] if track_objective else None

    def _violates(self, i: int) -> bool:
        r = self.y[i] * self.errors[i]  # y*f - 1
        return (r < -self.tol and self.alpha[i] < self.c) or (
            r > self.tol and self.alpha[i] > 0
        )

    def _take_step(self, i: int, j: int) -> bool:
        if i == j:
            return False
        a1, a2 = self.alpha[i], self.alpha[j]
        y1, y2 = self.y[i], self.y[j]
        e1, e2 = self.errors[i], self.errors[j]
        s = y1 * y2
        if s < 0:
            lo, hi = max(0.0, a2 - a1), min(self.c, self.c + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - self.c), min(self.c, a1 + a2)
        if lo >= hi:
            return False
        k11 = self.K[i, i]
        k22 = self.K[j, j]
        k12 = self.K[i, j]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(hi, max(lo, a2_new))
        else:
            # Flat or concave direction: the dual gain along the pair line is
            # g(d) = y2 (e1 - e2) d - eta d^2 / 2; pick the better endpoint.
            slope = y2 * (e1 - e2)
            gain_lo = slope * (lo - a2) - 0.5 * eta * (lo - a2) ** 2
            gain_hi = slope * (hi - a2) - 0.5 * eta * (hi - a2) ** 2
            if gain_lo > gain_hi + self._STEP_EPS:
                a2_new = lo
            elif gain_hi > gain_lo + self._STEP_EPS:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < self._STEP_EPS * (a2_new + a2 + self._STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        a1_new = min(self.c, max(0.0, a1_new))
        d1 = a1_new - a1
        d2 = a2_new - a2
        b1 = self.b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1_new < self.c:
            b_new = b1
        elif 0.0 < a2_new < self.c:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        self.errors += y1 * d1 * self.K[i] + y2 * d2 * self.K[j] + (b_new - self.b)
        self.alpha[i] = a1_new
        self.alpha[j] = a2_new
        self.b = b_new
        self.updates += 1
        if self.trace is not None:
            self.trace.append(_dual_objective(self.alpha, self.y, self.K))
        return True

    def _productive_partners(self, i: int) -> np.ndarray:
        """Indices j for which the (i, j) pair update would make progress.

        Mirrors the feasibility, direction, and minimum-step checks of
        _take_step, vectorized over all candidates; an empty result means no
        partner can move the pair objective.
        """
        a = self.alpha
        y = self.y
        same = y == y[i]
        lo = np.where(same, np.maximum(0.0, a[i] + a - self.c), np.maximum(0.0, a - a[i]))
        hi = np.where(same, np.minimum(self.c, a[i] + a), np.minimum(self.c, self.c + a - a[i]))
        viable = lo < hi
        eta = self.K[i, i] + np.diagonal(self.K) - 2.0 * self.K[i]
        slope = y * (self.errors[i] - self.errors)
        with np.errstate(divide="ignore", invalid="ignore"):
            interior = a + slope / eta
        clipped = np.clip(interior, lo, hi)
        d_lo = lo - a
        d_hi = hi - a
        gain_lo = slope * d_lo - 0.5 * eta * d_lo * d_lo
        gain_hi = slope * d_hi - 0.5 * eta * d_hi * d_hi
        endpoint = np.where(gain_lo > gain_hi + self._STEP_EPS, lo, hi)
        endpoint_ok = np.abs(gain_lo - gain_hi) > self._STEP_EPS
        target = np.where(eta > 0, clipped, endpoint)
        moves = np.abs(target - a) >= self._STEP_EPS * (target + a + self._STEP_EPS)
        productive = viable & moves & np.where(eta > 0, True, endpoint_ok)
        productive[i] = False
        return np.flatnonzero(productive)

    _RANDOM_RETRIES = 12

    def _examine(self, i: int) -> bool:
        if not self._violates(i):
            return False
        # Random second choice; a handful of cheap redraws almost always
        # lands a productive partner, the vectorized scan is the rare rescue.
        for _ in range(self._RANDOM_RETRIES):
            j = int(self.rng.integers(self.n))
            if self._take_step(i, j):
                return True
        candidates = self._productive_partners(i)
        for j in self.rng.permutation(candidates):
            if self._take_step(i, int(j)):
                return True
        return False

    def _violators(self, candidates: np.ndarray) -> np.ndarray:
        """Candidates violating KKT right now, in index order."""
        r = self.y * self.errors
        mask = ((r < -self.tol) & (self.alpha < self.c)) | (
            (r > self.tol) & (self.alpha > 0)
        )
        return candidates[mask[candidates]]

    def run(self, max_passes: int) -> None:
        examine_all = True
        full_passes = 0
        everything = np.arange(self.n)
        while full_passes < max_passes:
            changed = 0
            if examine_all:
                full_passes += 1
                candidates = everything
            else:
                candidates = np.flatnonzero((self.alpha > 0) & (self.alpha < self.c))
            # The sweep-start violator list is a fast pre-filter; _examine
            # re-checks each index against fresh errors before acting. If a
            # full sweep changes nothing, the list was never stale, so an
            # empty result really means KKT holds within tol.
            for i in self._violators(candidates):
                changed += self._examine(int(i))
            if examine_all:
                if changed == 0:
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True


def _as_signed_labels(y: np.ndarray) -> np.ndarray:
    values = set(np.unique(y).tolist())
    if values <= {0, 1}:
        mapped = np.where(y == 1, 1.0, -1.0)
    elif values <= {-1, 1}:
        mapped = y.astype(float)
    else:
        raise ValueError(f"labels must be binary (0/1 or -1/+1), got {sorted(values)}")
    if len(values) < 2:
        raise ValueError("training data contains a single class")
    return mapped


def train_svm(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    hp: SvmHyperparams,
    tol: float = 1e-3,
    max_passes: int = 50,
    seed: int = 0,
    track_objective: bool = False,
) -> tuple[SvmModel, TrainStatus]:
    """Fit the classifier; returns the model and the solver status.

    The status carries the count of accepted pair updates, the final maximum
    KKT residual (recomputed from scratch), and the dual objective. With
    track_objective=True the per-update objective trace is recorded, which
    costs O(n^2) per update and is meant for small diagnostic runs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a (n_examples, n_features) matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    y_signed = _as_signed_labels(np.asarray(y))
    if len(y_signed) != X.shape[0]:
        raise ValueError("X and y lengths differ")
    scaler = FeatureScaler.fit(X)
    Xs = scaler.transform(X)
    K = _rbf_matrix(Xs, Xs, hp.gamma)
    solver = _Smo(K, y_signed, hp.c, tol, np.random.default_rng(seed), track_objective)
    solver.run(max_passes)

    f = K @ (solver.alpha * y_signed) + solver.b
    residuals = _kkt_residuals(solver.alpha, y_signed * f, hp.c)
    kkt_violation = float(residuals.max()) if len(residuals) else 0.0
    sv_mask = solver.alpha > 0
    model = SvmModel(
        support_vectors=Xs[sv_mask].copy(),
        dual_coefs=(solver.alpha * y_signed)[sv_mask].copy(),
        bias=float(solver.b),
        gamma=hp.gamma,
        scaler=scaler,
    )
    status = TrainStatus(
        iterations=solver.updates,
        kkt_violation=kkt_violation,
        converged=kkt_violation <= tol,
        dual_objective=_dual_objective(solver.alpha, y_signed, K),
        objective_trace=tuple(solver.trace) if solver.trace is not None else None,
    )
    return model, status


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match model dimension {model.n_features}"
        )
    K = _rbf_matrix(model.scaler.transform(X), model.support_vectors, model.gamma)
    return K @ model.dual_coefs + model.bias


def predict(model: SvmModel, x: np.ndarray) -> tuple[int, float]:
    """Classify one example; label is 1 iff the decision value is > 0."""
    value = float(decision_values(model, np.asarray(x, dtype=float)[None, :])[0])
    return int(value > 0), value


def predict_batch(model: SvmModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = decision_values(model, X)
    return (values > 0).astype(int), values


# ---------------------------------------------------------------------------
# Serialization


def model_to_dict(model: SvmModel) -> dict:
    return {
        "gamma": model.gamma,
        "bias": model.bias,
        "scaler_means": [float(v) for v in model.scaler.means],
        "scaler_stds": [float(v) for v in model.scaler.stds],
        "support_vectors": [[float(v) for v in row] for row in model.support_vectors],
        "dual_coefs": [float(v) for v in model.dual_coefs],
    }


def model_from_dict(doc: dict) -> SvmModel:
    return SvmModel(
        support_vectors=np.array(doc["support_vectors"], dtype=float),
        dual_coefs=np.array(doc["dual_coefs"], dtype=float),
        bias=float(doc["bias"]),
        gamma=float(doc["gamma"]),
        scaler=FeatureScaler(
            means=np.array(doc["scaler_means"], dtype=float),
            stds=np.array(doc["scaler_stds"], dtype=float),
        ),
    )


def save_model(model: SvmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True), "utf-8")


def load_model(path: str | Path) -> SvmModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
