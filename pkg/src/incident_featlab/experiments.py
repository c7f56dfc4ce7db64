"""End-to-end experiment runners: raw-pair grids and enhanced-feature runs.

A run fits per-channel codebooks from an unlabeled corpus (when the mode
asks for enhanced features), assembles features, selects hyperparameters by
unit-wise cross-validation on PI, trains a final model, and scores the test
set at every requested persistence level. Repeats re-randomize patch
sampling, K-means, and fold assignment from per-repeat seeds derived as
seed + r; results merge in repeat order, so reports do not depend on
scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence, TypeVar

import numpy as np

from .datamodel import (
    CHANNELS,
    ContextSet,
    Dataset,
    FeatureSet,
    PairConfig,
    PreprocessConfig,
    ValidationError,
    assemble_context_vectors,
    assemble_raw_features,
)
from .evaluation import (
    Metrics,
    classifications_to_alarms,
    compute_metrics,
    cross_validate,
    default_grid,
)
from .featlearn import (
    DEFAULT_CHANNEL_PARAMS,
    Codebook,
    KMeansConfig,
    PatchConfig,
    kmeans_fit,
    pool_batch,
    sample_patches,
)
from .svm import SvmHyperparams, SvmModel, predict_batch, train_svm

MODES = ("raw", "enhanced", "transfer-enhanced")

THREADS_ENV_VAR = "INCIDENT_FEATLAB_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def max_workers(n_tasks: int) -> int:
    """Parallelism cap from INCIDENT_FEATLAB_THREADS (0 or unset = auto)."""
    raw = os.environ.get(THREADS_ENV_VAR, "0").strip()
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map over independent tasks, preserving input order."""
    workers = max_workers(len(items))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ChannelLearnSpec:
    """Codebook-learning parameters for one channel."""

    patch_dim: int
    n_centroids: int
    n_patches: int

    def __post_init__(self) -> None:
        if self.patch_dim < 1 or self.n_centroids < 1:
            raise ValidationError("patch_dim and n_centroids must be >= 1")
        if self.n_patches < self.n_centroids:
            raise ValidationError(
                f"n_patches={self.n_patches} must be >= n_centroids={self.n_centroids}"
            )


@dataclass(frozen=True)
class FeatureLearnConfig:
    channels: Mapping[str, ChannelLearnSpec]
    kmeans: KMeansConfig = KMeansConfig()

    def __post_init__(self) -> None:
        missing = set(CHANNELS) - set(self.channels)
        if missing:
            raise ValidationError(f"missing channel specs: {sorted(missing)}")

    @classmethod
    def default(cls) -> "FeatureLearnConfig":
        return cls(
            channels={
                ch: ChannelLearnSpec(*DEFAULT_CHANNEL_PARAMS[ch]) for ch in CHANNELS
            }
        )

    def scaled(self, n_patches: int) -> "FeatureLearnConfig":
        """Same codebook shapes with a different per-channel sampling budget."""
        return FeatureLearnConfig(
            channels={
                ch: replace(spec, n_patches=max(n_patches, spec.n_centroids))
                for ch, spec in self.channels.items()
            },
            kmeans=self.kmeans,
        )


@dataclass(frozen=True)
class MetricStats:
    """Mean and sample standard deviation over repeats at one persistence level."""

    pt: int
    dr_mean: float
    dr_std: float
    far_mean: float
    far_std: float
    mttd_mean: float
    mttd_std: float
    pi_mean: float
    pi_std: float
    cr_mean: float
    cr_std: float


@dataclass(frozen=True)
class RepeatResult:
    seed: int
    best_hyperparams: SvmHyperparams
    cv_pi: float
    metrics: Mapping[int, Metrics]


@dataclass(frozen=True)
class ExperimentReport:
    mode: str
    pair: PairConfig
    repeats: int
    pt_levels: tuple[int, ...]
    feature_dim: int
    results: tuple[RepeatResult, ...]
    aggregates: Mapping[int, MetricStats]


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def infer_trim_depth(ds: Dataset) -> int:
    """History length shared by every unit of a trimmed dataset."""
    depths = {len(u.history) for u in ds.units}
    if len(depths) != 1:
        raise ValidationError(f"units carry mixed history depths {sorted(depths)}")
    return depths.pop()


def fit_codebooks(
    corpus: ContextSet, cfg: FeatureLearnConfig, seed: int
) -> dict[str, Codebook]:
    """Fit one codebook per channel from the unlabeled context corpus."""
    out: dict[str, Codebook] = {}
    channel_seeds = np.random.SeedSequence(seed).spawn(len(CHANNELS))
    for ch, ch_ss in zip(CHANNELS, channel_seeds):
        spec = cfg.channels[ch]
        patch_ss, km_ss = ch_ss.spawn(2)
        patches = sample_patches(
            corpus.vectors(ch),
            PatchConfig(d=spec.patch_dim, n=spec.n_patches, seed=_seed_int(patch_ss)),
        )
        out[ch] = kmeans_fit(
            patches,
            spec.n_centroids,
            replace(cfg.kmeans, seed=_seed_int(km_ss)),
            channel=ch,
        )
    return out


def enhance_feature_set(
    raw: FeatureSet, contexts: ContextSet, codebooks: Mapping[str, Codebook]
) -> FeatureSet:
    """Append pooled activation blocks (vol_up, occ_up, vol_down, occ_down) to raw features."""
    if len(raw) != len(contexts):
        raise ValidationError("raw features and context vectors are not aligned")
    parts = [raw.X]
    for ch in CHANNELS:
        cb = codebooks[ch]
        if cb.channel != ch:
            raise ValidationError(f"codebook under key {ch!r} tagged {cb.channel!r}")
        parts.append(pool_batch(cb, contexts.matrix(ch)))
    return FeatureSet(
        X=np.hstack(parts),
        labels=raw.labels,
        unit_ids=raw.unit_ids,
        t_indices=raw.t_indices,
    )


def _aggregate(pt: int, metrics: Sequence[Metrics]) -> MetricStats:
    def stats(values: Sequence[float]) -> tuple[float, float]:
        if not values:
            return float("nan"), float("nan")
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return mean, std

    dr = stats([m.dr for m in metrics])
    far = stats([m.far for m in metrics])
    mttd = stats([m.mttd for m in metrics if m.mttd is not None])
    pi = stats([m.pi for m in metrics])
    cr = stats([m.cr for m in metrics])
    return MetricStats(
        pt=pt,
        dr_mean=dr[0], dr_std=dr[1],
        far_mean=far[0], far_std=far[1],
        mttd_mean=mttd[0], mttd_std=mttd[1],
        pi_mean=pi[0], pi_std=pi[1],
        cr_mean=cr[0], cr_std=cr[1],
    )


def evaluate_model(
    model: SvmModel,
    features: FeatureSet,
    ds: Dataset,
    pt_levels: Sequence[int],
) -> dict[int, Metrics]:
    """Score a trained model on a labeled dataset at each persistence level."""
    predictions, _ = predict_batch(model, features.X)
    out = {}
    for pt in pt_levels:
        alarms = classifications_to_alarms(features, predictions, pt)
        out[pt] = compute_metrics(alarms, ds, pt)
    return out


def run_experiment(
    train: Dataset,
    test: Dataset,
    unlabeled_source: Dataset | None = None,
    *,
    mode: str,
    pair: PairConfig,
    repeats: int = 1,
    pt_levels: Sequence[int] = (0, 1, 2),
    seed: int = 0,
    feature_learning: FeatureLearnConfig | None = None,
    grid: Sequence[SvmHyperparams] | None = None,
    folds: int = 10,
    svm_tol: float = 1e-3,
    svm_max_passes: int = 50,
) -> ExperimentReport:
    """Run one experiment end to end and aggregate metrics over repeats.

    ``train`` and ``test`` must be head-trimmed already. For enhanced modes
    the codebooks are fit per repeat from the unlabeled corpus: the training
    site's own data (labels unused) for "enhanced", a different site for
    "transfer-enhanced".
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    if not pt_levels:
        raise ValidationError("pt_levels must be non-empty")
    z = infer_trim_depth(train)
    if infer_trim_depth(test) != z:
        raise ValidationError("train and test sets carry different trim depths")
    if pair.x > z:
        raise ValidationError(f"pair [{pair}] needs x <= trim depth z={z}")
    if feature_learning is None:
        feature_learning = FeatureLearnConfig.default()
    if grid is None:
        grid = default_grid()

    enhanced = mode != "raw"
    if mode == "transfer-enhanced":
        if unlabeled_source is None:
            raise ValidationError("transfer-enhanced mode needs an unlabeled source dataset")
        if unlabeled_source.site_tag == train.site_tag:
            raise ValidationError(
                "transfer-enhanced mode expects the unlabeled source to come from a "
                f"different site than the training data (both are {train.site_tag!r})"
            )
        source = unlabeled_source
    else:
        source = unlabeled_source if unlabeled_source is not None else train

    cfg_z = PreprocessConfig(z)
    raw_train = assemble_raw_features(train, pair)
    raw_test = assemble_raw_features(test, pair)
    if enhanced:
        corpus = assemble_context_vectors(source, PreprocessConfig(infer_trim_depth(source)))
        ctx_train = assemble_context_vectors(train, cfg_z)
        ctx_test = assemble_context_vectors(test, cfg_z)
        for ch in CHANNELS:
            spec = feature_learning.channels[ch]
            if spec.patch_dim > corpus.z + 1:
                raise ValidationError(
                    f"channel {ch!r}: patch_dim {spec.patch_dim} exceeds context length {corpus.z + 1}"
                )

    def one_repeat(r: int) -> RepeatResult:
        seed_r = seed + r
        feat_ss, cv_ss, svm_ss = np.random.SeedSequence(seed_r).spawn(3)
        if enhanced:
            codebooks = fit_codebooks(corpus, feature_learning, _seed_int(feat_ss))
            X_train = enhance_feature_set(raw_train, ctx_train, codebooks)
            X_test = enhance_feature_set(raw_test, ctx_test, codebooks)
        else:
            X_train, X_test = raw_train, raw_test
        cv = cross_validate(
            X_train,
            train,
            grid,
            folds=folds,
            seed=_seed_int(cv_ss),
            svm_tol=svm_tol,
            svm_max_passes=svm_max_passes,
        )
        model, _ = train_svm(
            X_train.X,
            X_train.labels,
            cv.best_hyperparams,
            tol=svm_tol,
            max_passes=svm_max_passes,
            seed=_seed_int(svm_ss),
        )
        metrics = evaluate_model(model, X_test, test, pt_levels)
        return RepeatResult(
            seed=seed_r,
            best_hyperparams=cv.best_hyperparams,
            cv_pi=cv.cv_pi,
            metrics=metrics,
        )

    results = tuple(parallel_map(one_repeat, list(range(repeats))))
    feature_dim = raw_train.dim
    if enhanced:
        feature_dim += sum(feature_learning.channels[ch].n_centroids for ch in CHANNELS)
    aggregates = {
        pt: _aggregate(pt, [r.metrics[pt] for r in results]) for pt in pt_levels
    }
    return ExperimentReport(
        mode=mode,
        pair=pair,
        repeats=repeats,
        pt_levels=tuple(pt_levels),
        feature_dim=feature_dim,
        results=results,
        aggregates=aggregates,
    )


def run_pair_grid(
    train: Dataset,
    test: Dataset,
    pairs: Sequence[PairConfig],
    seed: int = 0,
    *,
    pt_levels: Sequence[int] = (0,),
    repeats: int = 1,
    grid: Sequence[SvmHyperparams] | None = None,
    folds: int = 10,
    svm_tol: float = 1e-3,
    svm_max_passes: int = 50,
) -> list[tuple[PairConfig, ExperimentReport]]:
    """One raw-mode experiment per [x-y] pair, sharing the base seed."""
    if not pairs:
        raise ValidationError("no pairs given")

    def one_pair(pair: PairConfig) -> tuple[PairConfig, ExperimentReport]:
        report = run_experiment(
            train,
            test,
            mode="raw",
            pair=pair,
            repeats=repeats,
            pt_levels=pt_levels,
            seed=seed,
            grid=grid,
            folds=folds,
            svm_tol=svm_tol,
            svm_max_passes=svm_max_passes,
        )
        return pair, report

    return parallel_map(one_pair, list(pairs))


def trend_summary(
    rows: Sequence[tuple[PairConfig, ExperimentReport]], pt: int = 0
) -> dict[str, object]:
    """Direction of FAR and MTTD across pairs ordered by window size.

    Informational only: whether FAR is non-increasing and MTTD
    non-decreasing as more intervals enter the raw feature.
    """
    ordered = sorted(rows, key=lambda item: (item[0].x + item[0].y))
    fars = [rep.aggregates[pt].far_mean for _, rep in ordered]
    mttds = [rep.aggregates[pt].mttd_mean for _, rep in ordered]
    return {
        "pt": pt,
        "pairs": [str(p) for p, _ in ordered],
        "far": fars,
        "mttd": mttds,
        "far_non_increasing": all(b <= a + 1e-12 for a, b in zip(fars, fars[1:])),
        "mttd_non_decreasing": all(b >= a - 1e-12 for a, b in zip(mttds, mttds[1:])),
    }
