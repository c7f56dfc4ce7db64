"""Alarm logic, performance measures, and PI-driven model selection.

An alarm at interval t requires pt+1 consecutive positive classifications
ending at t. Detection rate counts units whose incident window contains at
least one alarm-active interval; false alarm rate counts alarm-active
intervals outside incident windows over all intervals; detection delay is
1-based (an alarm at onset counts as one 30-second interval); PI combines
the three as (1.01 - DR) * (FAR + 0.001) * MTTD, which stays positive even
at perfect DR and zero FAR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datamodel import Dataset, FeatureSet, ValidationError
from .svm import SvmHyperparams, predict_batch, train_svm


@dataclass(frozen=True, eq=False)
class AlarmSeries:
    """Post-persistence alarms for one unit, aligned with its records."""

    unit_id: str
    alarms: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "alarms", np.asarray(self.alarms, dtype=int))


@dataclass(frozen=True)
class Metrics:
    """DR/FAR/MTTD/PI/CR at one persistence level.

    mttd is None when nothing was detected; mttd_effective then falls back
    to the longest incident window among the evaluated units, which keeps PI
    finite and heavily penalized.
    """

    pt: int
    dr: float
    far: float
    mttd: float | None
    mttd_effective: float
    pi: float
    cr: float

    def __post_init__(self) -> None:
        for name in ("dr", "far", "cr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name}={v!r} outside [0, 1]")


@dataclass(frozen=True)
class CvResult:
    best_hyperparams: SvmHyperparams
    cv_pi: float
    fold_assignments: Mapping[str, int]
    grid_scores: tuple[tuple[SvmHyperparams, float], ...] = ()


def persistence_filter(classifications: Sequence[int] | np.ndarray, pt: int) -> np.ndarray:
    """Alarm at t iff classifications t-pt..t are all positive.

    Positions with t < pt cannot alarm. The consecutive-positive run is
    tracked on the classification stream alone; it does not reset at
    incident onset.
    """
    if pt < 0:
        raise ValueError(f"pt must be >= 0, got {pt}")
    c = np.asarray(classifications, dtype=int)
    if c.ndim != 1:
        raise ValueError("classification series must be one-dimensional")
    if not np.isin(c, (0, 1)).all():
        raise ValueError("classification series must be binary")
    if pt == 0:
        return c.copy()
    idx = np.arange(len(c))
    last_zero = np.maximum.accumulate(np.where(c == 0, idx, -1))
    streak = np.where(c == 1, idx - last_zero, 0)
    return (streak >= pt + 1).astype(int)


def compute_pi(dr: float, far: float, mttd: float) -> float:
    """Composite index (1.01 - dr) * (far + 0.001) * mttd; lower is better."""
    if not (0.0 <= dr <= 1.0):
        raise ValueError(f"dr={dr!r} outside [0, 1]")
    if not (0.0 <= far <= 1.0):
        raise ValueError(f"far={far!r} outside [0, 1]")
    if not (math.isfinite(mttd) and mttd >= 0):
        raise ValueError(f"mttd={mttd!r} must be finite and >= 0")
    return (1.01 - dr) * (far + 0.001) * mttd


def _normalize_alarms(
    alarms: Mapping[str, np.ndarray] | Sequence[AlarmSeries],
) -> dict[str, np.ndarray]:
    if isinstance(alarms, Mapping):
        return {uid: np.asarray(a, dtype=int) for uid, a in alarms.items()}
    return {s.unit_id: s.alarms for s in alarms}


def compute_metrics(
    alarms: Mapping[str, np.ndarray] | Sequence[AlarmSeries],
    ds: Dataset,
    pt: int,
) -> Metrics:
    """Score alarm series against the labeled units.

    Every unit must have an alarm series of matching length. Raises when no
    unit carries an incident window (DR would be undefined).
    """
    by_unit = _normalize_alarms(alarms)
    if set(by_unit) != set(ds.unit_ids):
        raise ValidationError("alarm series do not cover exactly the dataset's units")
    total = 0
    agree = 0
    false_alarm_intervals = 0
    units_with_window = 0
    detected = 0
    delays: list[int] = []
    max_window = 0
    for u in ds.units:
        a = by_unit[u.unit_id]
        if a.shape != (len(u),):
            raise ValidationError(
                f"alarm series for unit {u.unit_id!r} has length {a.shape}, unit has {len(u)}"
            )
        labels = u.labels()
        total += len(u)
        agree += int((a == labels).sum())
        false_alarm_intervals += int(a[labels == 0].sum())
        window = u.incident_window()
        if window is None:
            continue
        start, stop = window
        max_window = max(max_window, stop - start)
        units_with_window += 1
        in_window = a[start:stop]
        hits = np.flatnonzero(in_window)
        if hits.size:
            detected += 1
            delays.append(int(hits[0]) + 1)
    if units_with_window == 0:
        raise ValidationError("no unit has an incident window; DR is undefined")
    dr = detected / units_with_window
    far = false_alarm_intervals / total
    cr = agree / total
    mttd = float(np.mean(delays)) if delays else None
    mttd_effective = mttd if mttd is not None else float(max_window)
    return Metrics(
        pt=pt,
        dr=dr,
        far=far,
        mttd=mttd,
        mttd_effective=mttd_effective,
        pi=compute_pi(dr, far, mttd_effective),
        cr=cr,
    )


def classifications_to_alarms(
    features: FeatureSet, predictions: np.ndarray, pt: int
) -> dict[str, np.ndarray]:
    """Split a flat prediction vector into per-unit series and apply the persistence test."""
    predictions = np.asarray(predictions, dtype=int)
    if predictions.shape != (len(features),):
        raise ValidationError("predictions are not aligned with the feature set")
    return {
        uid: persistence_filter(predictions[sl], pt)
        for uid, sl in features.per_unit_slices().items()
    }


def default_grid() -> list[SvmHyperparams]:
    """Powers-of-two grid: c in 2^-3..2^7, gamma in 2^-9..2^1."""
    return [
        SvmHyperparams(c=2.0**i, gamma=2.0**j)
        for i in range(-3, 8)
        for j in range(-9, 2)
    ]


def cross_validate(
    features: FeatureSet,
    ds: Dataset,
    grid: Sequence[SvmHyperparams],
    folds: int = 10,
    seed: int = 0,
    svm_tol: float = 1e-3,
    svm_max_passes: int = 50,
) -> CvResult:
    """Pick the grid point with the lowest mean held-out-fold PI at pt=0.

    Units are shuffled by the seeded generator and dealt round-robin into
    folds; ties on PI break toward lower FAR, then lower MTTD, then grid
    order.
    """
    if len(ds.units) < folds:
        raise ValidationError(f"{len(ds.units)} units cannot fill {folds} folds")
    if not grid:
        raise ValueError("hyperparameter grid is empty")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds.units))
    fold_of = {ds.units[int(p)].unit_id: i % folds for i, p in enumerate(order)}

    slices = features.per_unit_slices()
    example_fold = np.empty(len(features), dtype=int)
    for uid, sl in slices.items():
        example_fold[sl] = fold_of[uid]

    seeds = np.random.SeedSequence(seed).spawn(len(grid) * folds)
    scored = []
    for gi, hp in enumerate(grid):
        fold_pis = []
        fold_fars = []
        fold_mttds = []
        for f in range(folds):
            train_mask = example_fold != f
            model, _ = train_svm(
                features.X[train_mask],
                features.labels[train_mask],
                hp,
                tol=svm_tol,
                max_passes=svm_max_passes,
                seed=int(seeds[gi * folds + f].generate_state(1)[0]),
            )
            held_ids = [uid for uid, fold in fold_of.items() if fold == f]
            held = ds.subset(held_ids)
            alarms = {}
            for uid in held.unit_ids:
                preds, _ = predict_batch(model, features.X[slices[uid]])
                alarms[uid] = persistence_filter(preds, 0)
            m = compute_metrics(alarms, held, pt=0)
            fold_pis.append(m.pi)
            fold_fars.append(m.far)
            fold_mttds.append(m.mttd_effective)
        scored.append(
            (
                float(np.mean(fold_pis)),
                float(np.mean(fold_fars)),
                float(np.mean(fold_mttds)),
                gi,
            )
        )
    best_pi, _, _, best_gi = min(scored)
    return CvResult(
        best_hyperparams=grid[best_gi],
        cv_pi=best_pi,
        fold_assignments=fold_of,
        grid_scores=tuple((grid[s[3]], s[0]) for s in scored),
    )
