"""Codebook learning and sparse activation encoding.

Per channel: sample random contiguous sub-windows (patches) from context
vectors, cluster them with K-means to obtain a codebook of centroids, then
encode any patch x' as f_k = max(0, mu(tau) - tau_k) where tau_k is the
Euclidean distance to centroid k and mu(tau) the mean distance. Pooling
sums the activations of all stride-1 sub-windows of a context vector, and
the enhanced feature is the raw vector with the four pooled blocks
appended.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .datamodel import CHANNELS, ContextVector

#: Per-channel codebook parameters: (patch dimension, centroids, patches sampled).
DEFAULT_CHANNEL_PARAMS: dict[str, tuple[int, int, int]] = {
    "vol_up": (11, 75, 20000),
    "occ_up": (6, 15, 20000),
    "vol_down": (11, 75, 20000),
    "occ_down": (6, 15, 20000),
}


@dataclass(frozen=True)
class PatchConfig:
    """Patch sampling parameters for one channel.

    ``normalize`` standardizes each patch (subtract its mean, divide by its
    standard deviation when positive); off by default, matching the
    raw-patch pipeline.
    """

    d: int
    n: int
    seed: int = 0
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"patch dimension must be >= 1, got {self.d}")
        if self.n < 1:
            raise ValueError(f"patch count must be >= 1, got {self.n}")


@dataclass(frozen=True, eq=False)
class Patch:
    """A contiguous sub-window of a context vector."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("patch values must be one-dimensional")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class KMeansConfig:
    restarts: int = 1
    max_iters: int = 300
    rel_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")


@dataclass(frozen=True, eq=False)
class Codebook:
    """K learned centroids of dimension d for one channel."""

    channel: str
    centroids: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.centroids, dtype=float)
        object.__setattr__(self, "centroids", c)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centroids must be a non-empty (K, d) matrix")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True, eq=False)
class ActivationVector:
    """Non-negative activations, one per centroid; zero at or above mean distance."""

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def sample_patches(vectors: Sequence[ContextVector], cfg: PatchConfig) -> list[Patch]:
    """Sample n contiguous sub-windows uniformly over (vector, offset) pairs.

    Sampling is with replacement from the seeded generator, so the result is
    deterministic given the seed.
    """
    if len(vectors) == 0:
        raise ValueError("cannot sample patches from an empty vector list")
    channel = vectors[0].channel
    width = len(vectors[0])
    for v in vectors:
        if v.channel != channel:
            raise ValueError(f"mixed channels: {channel!r} and {v.channel!r}")
        if len(v) != width:
            raise ValueError("context vectors must share one length")
    if cfg.d > width:
        raise ValueError(f"patch dimension {cfg.d} exceeds vector length {width}")
    stacked = np.stack([v.values for v in vectors])
    rng = np.random.default_rng(cfg.seed)
    rows = rng.integers(0, stacked.shape[0], size=cfg.n)
    offsets = rng.integers(0, width - cfg.d + 1, size=cfg.n)
    out = []
    for r, o in zip(rows, offsets):
        values = stacked[r, o : o + cfg.d].copy()
        if cfg.normalize:
            values -= values.mean()
            sd = values.std()
            if sd > 0:
                values /= sd
        out.append(Patch(values))
    return out


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (n_points, n_centers)."""
    sq = (
        (points * points).sum(axis=1)[:, None]
        + (centers * centers).sum(axis=1)[None, :]
        - 2.0 * points @ centers.T
    )
    return np.maximum(sq, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; falls back to uniform when all weights vanish."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = _squared_distances(points, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = rng.choice(n, p=probs)
        else:
            idx = rng.integers(n)
        centers[j] = points[idx]
        d2 = np.minimum(d2, _squared_distances(points, centers[j : j + 1]).ravel())
    return centers


def _repair_empty_clusters(
    points: np.ndarray, centers: np.ndarray, d2: np.ndarray, assign: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Re-seed empty clusters at the point farthest from its assigned centroid."""
    k = centers.shape[0]
    for _ in range(k):
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size == 0:
            break
        point_d2 = d2[np.arange(points.shape[0]), assign]
        if point_d2.max() <= 0.0:
            # Fewer distinct points than clusters; nothing left to split.
            break
        for e in empties:
            far = int(np.argmax(point_d2))
            centers[e] = points[far]
            point_d2[far] = -1.0
        d2 = _squared_distances(points, centers)
        assign = np.argmin(d2, axis=1)
    return centers, d2, assign


def lloyd(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 300,
    rel_tol: float = 1e-6,
) -> tuple[np.ndarray, float, list[float]]:
    """One K-means run from a k-means++ start.

    Returns (centroids, objective, per-iteration objective trace). The
    objective is the within-cluster sum of squared distances; ties in point
    assignment break toward the lowest centroid index.
    """
    centers = _kmeanspp_init(points, k, rng)
    prev = np.inf
    trace: list[float] = []
    for _ in range(max_iters):
        d2 = _squared_distances(points, centers)
        assign = np.argmin(d2, axis=1)
        centers, d2, assign = _repair_empty_clusters(points, centers, d2, assign)
        obj = float(d2[np.arange(points.shape[0]), assign].sum())
        trace.append(obj)
        if obj == 0.0 or prev - obj < rel_tol * prev:
            break
        prev = obj
        for j in range(k):
            mask = assign == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return centers, trace[-1], trace


def kmeans_fit(
    patches: Sequence[Patch], k: int, cfg: KMeansConfig, channel: str = ""
) -> Codebook:
    """Fit a codebook by Lloyd's algorithm, keeping the best of cfg.restarts runs.

    The winner is the restart with the lowest objective; ties keep the
    earlier restart, so results do not depend on execution order.
    """
    if k < 1:
        raise ValueError(f"need at least one centroid, got K={k}")
    if len(patches) < k:
        raise ValueError(f"{len(patches)} patches cannot support K={k} centroids")
    points = np.stack([p.values for p in patches])
    if not np.all(np.isfinite(points)):
        raise ValueError("patches contain non-finite values")
    best_centers: np.ndarray | None = None
    best_obj = np.inf
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(child)
        centers, obj, _ = lloyd(points, k, rng, cfg.max_iters, cfg.rel_tol)
        if obj < best_obj:
            best_obj = obj
            best_centers = centers
    assert best_centers is not None
    return Codebook(channel=channel, centroids=best_centers)


def encode_triangle(cb: Codebook, x_prime: Patch | np.ndarray) -> ActivationVector:
    """Activation f_k = max(0, mean(tau) - tau_k) for distances tau to centroids.

    Entry k is zero whenever x' is at or above the mean distance from
    centroid k; the output is non-negative and K-dimensional.
    """
    values = x_prime.values if isinstance(x_prime, Patch) else np.asarray(x_prime, float)
    if values.shape != (cb.d,):
        raise ValueError(f"patch dimension {values.shape} does not match codebook d={cb.d}")
    tau = np.sqrt(_squared_distances(values[None, :], cb.centroids).ravel())
    mu = tau.mean()
    return ActivationVector(np.maximum(0.0, mu - tau))


def pool_features(cb: Codebook, ctx: ContextVector) -> np.ndarray:
    """Sum triangle activations over every stride-1 sub-window of a context vector."""
    if ctx.channel != cb.channel:
        raise ValueError(f"channel mismatch: context {ctx.channel!r}, codebook {cb.channel!r}")
    if cb.d > len(ctx):
        raise ValueError(f"codebook d={cb.d} exceeds context length {len(ctx)}")
    return pool_batch(cb, ctx.values[None, :])[0]


def pool_batch(cb: Codebook, contexts: np.ndarray) -> np.ndarray:
    """Pooled activations for a stack of same-channel context rows, (n, K)."""
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2:
        raise ValueError("contexts must be a (n, z+1) matrix")
    if cb.d > contexts.shape[1]:
        raise ValueError(f"codebook d={cb.d} exceeds context length {contexts.shape[1]}")
    windows = sliding_window_view(contexts, cb.d, axis=1)  # (n, n_win, d)
    n, n_win, d = windows.shape
    flat = windows.reshape(n * n_win, d)
    tau = np.sqrt(_squared_distances(flat, cb.centroids))
    act = np.maximum(0.0, tau.mean(axis=1, keepdims=True) - tau)
    return act.reshape(n, n_win, cb.K).sum(axis=1)


def build_enhanced(
    raw: np.ndarray,
    ctxs: Mapping[str, ContextVector],
    cbs: Mapping[str, Codebook],
) -> np.ndarray:
    """Append the four pooled activation blocks to a raw feature vector.

    Block order follows the channel order vol_up, occ_up, vol_down,
    occ_down; output dimension is len(raw) + sum of codebook sizes.
    """
    raw = np.asarray(raw, dtype=float)
    parts = [raw]
    for ch in CHANNELS:
        if ch not in ctxs or ch not in cbs:
            raise ValueError(f"missing channel {ch!r}")
        ctx, cb = ctxs[ch], cbs[ch]
        if ctx.channel != ch or cb.channel != ch:
            raise ValueError(
                f"channel mismatch under key {ch!r}: context {ctx.channel!r}, "
                f"codebook {cb.channel!r}"
            )
        parts.append(pool_features(cb, ctx))
    return np.concatenate(parts)


def enhanced_dim(raw_dim: int, cbs: Mapping[str, Codebook]) -> int:
    return raw_dim + sum(cbs[ch].K for ch in CHANNELS)


# ---------------------------------------------------------------------------
# Serialization: {channel, K, d, centroids} round-trips exactly (repr floats).


def codebook_to_dict(cb: Codebook) -> dict:
    return {
        "channel": cb.channel,
        "K": cb.K,
        "d": cb.d,
        "centroids": [[float(v) for v in row] for row in cb.centroids],
    }


def codebook_from_dict(doc: dict) -> Codebook:
    cb = Codebook(channel=doc["channel"], centroids=np.array(doc["centroids"], dtype=float))
    if cb.K != doc["K"] or cb.d != doc["d"]:
        raise ValueError(
            f"codebook shape {cb.centroids.shape} disagrees with declared K={doc['K']}, d={doc['d']}"
        )
    return cb


def save_codebooks(cbs: Mapping[str, Codebook], path: str | Path) -> None:
    doc = {"codebooks": [codebook_to_dict(cbs[ch]) for ch in CHANNELS if ch in cbs]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


def load_codebooks(path: str | Path) -> dict[str, Codebook]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for entry in doc["codebooks"]:
        cb = codebook_from_dict(entry)
        out[cb.channel] = cb
    return out
