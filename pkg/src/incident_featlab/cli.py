"""Command-line surface: generate data, learn codebooks, train, evaluate, report.

Every subcommand reads one optional JSON config plus overriding flags,
validates cross-field constraints before doing any work, and writes a
manifest (resolved config, seeds, input/output hashes) sufficient to
reproduce the run bit-identically. Exit codes: 0 success, 1 validation or
configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .datamodel import (
    CHANNELS,
    DataError,
    Dataset,
    PairConfig,
    PreprocessConfig,
    ValidationError,
    assemble_context_vectors,
    assemble_raw_features,
    load_dataset,
    trim_head,
    write_dataset,
)
from .evaluation import cross_validate, default_grid
from .experiments import (
    ChannelLearnSpec,
    FeatureLearnConfig,
    enhance_feature_set,
    evaluate_model,
    fit_codebooks,
    run_experiment,
    run_pair_grid,
)
from .featlearn import KMeansConfig, load_codebooks, save_codebooks
from .reports import (
    format_trend,
    render_experiment_figures,
    render_metrics_figure,
    render_pair_grid_figures,
    write_metrics_csv,
    write_pair_grid_csv,
    write_report_csv,
    write_report_json,
)
from .svm import SvmHyperparams, load_model, save_model, train_svm
from .synth import SynthConfig, generate_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1, not argparse's default 2
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration shared by the pipeline subcommands."""

    seed: int = 0
    z: int = 12
    pair: PairConfig = PairConfig(4, 2)
    mode: str = "raw"
    repeats: int = 1
    pt_levels: tuple[int, ...] = (0, 1, 2)
    folds: int = 10
    svm_tol: float = 1e-3
    svm_max_passes: int = 50
    grid: tuple[SvmHyperparams, ...] = ()
    feature_learning: FeatureLearnConfig = field(default_factory=FeatureLearnConfig.default)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        if self.z < self.pair.x:
            raise ValidationError(
                f"trim depth z={self.z} must be >= pair x={self.pair.x}"
            )
        for ch, spec in self.feature_learning.channels.items():
            if spec.patch_dim > self.z + 1:
                raise ValidationError(
                    f"channel {ch!r}: patch_dim {spec.patch_dim} exceeds z+1={self.z + 1}"
                )
        if self.repeats < 1:
            raise ValidationError(f"repeats must be >= 1, got {self.repeats}")
        if any(pt < 0 for pt in self.pt_levels):
            raise ValidationError(f"pt levels must be >= 0, got {self.pt_levels}")


def _parse_grid(doc: Mapping) -> tuple[SvmHyperparams, ...]:
    cs = doc.get("c", [])
    gammas = doc.get("gamma", [])
    if not cs or not gammas:
        raise ValidationError("svm.grid needs non-empty 'c' and 'gamma' lists")
    return tuple(SvmHyperparams(c=float(c), gamma=float(g)) for c in cs for g in gammas)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{p}: config must be a JSON object")
    return doc


def resolve_config(doc: Mapping, args: argparse.Namespace) -> RunConfig:
    """Merge config file and flag overrides into a validated RunConfig."""
    def flag(name, default):
        v = getattr(args, name, None)
        return v if v is not None else default

    feat_doc = doc.get("feature_learning", {})
    channels = dict(FeatureLearnConfig.default().channels)
    for ch, spec in feat_doc.get("channels", {}).items():
        if ch not in CHANNELS:
            raise ValidationError(f"unknown channel {ch!r} in feature_learning.channels")
        channels[ch] = ChannelLearnSpec(
            patch_dim=int(spec["patch_dim"]),
            n_centroids=int(spec["n_centroids"]),
            n_patches=int(spec["n_patches"]),
        )
    km_doc = feat_doc.get("kmeans", {})
    kmeans = KMeansConfig(
        restarts=int(km_doc.get("restarts", 1)),
        max_iters=int(km_doc.get("max_iters", 300)),
        rel_tol=float(km_doc.get("rel_tol", 1e-6)),
    )
    if "n_patches" in feat_doc:
        budget = int(feat_doc["n_patches"])
        channels = {
            ch: ChannelLearnSpec(s.patch_dim, s.n_centroids, budget)
            for ch, s in channels.items()
        }
    svm_doc = doc.get("svm", {})
    grid = _parse_grid(svm_doc["grid"]) if "grid" in svm_doc else tuple(default_grid())

    synth_doc = dict(doc.get("synth", {}))
    if "post_len" in synth_doc:
        synth_doc["post_len"] = tuple(synth_doc["post_len"])
    seed = int(flag("seed", doc.get("seed", 0)))
    synth_doc.setdefault("seed", seed)
    if getattr(args, "site", None) is not None:
        synth_doc["site_tag"] = args.site
    if getattr(args, "units", None) is not None:
        synth_doc["n_units"] = args.units

    pt_raw = flag("pt", None)
    if pt_raw is not None:
        pt_levels = tuple(int(s) for s in str(pt_raw).split(","))
    else:
        pt_levels = tuple(int(v) for v in doc.get("pt_levels", (0, 1, 2)))

    rc = RunConfig(
        seed=seed,
        z=int(flag("z", doc.get("z", 12))),
        pair=PairConfig.from_string(str(flag("pair", doc.get("pair", "4-2")))),
        mode=str(flag("mode", doc.get("mode", "raw"))),
        repeats=int(flag("repeats", doc.get("repeats", 1))),
        pt_levels=pt_levels,
        folds=int(flag("folds", doc.get("folds", 10))),
        svm_tol=float(svm_doc.get("tol", 1e-3)),
        svm_max_passes=int(svm_doc.get("max_passes", 50)),
        grid=grid,
        feature_learning=FeatureLearnConfig(channels=channels, kmeans=kmeans),
        synth=SynthConfig(**synth_doc),
    )
    rc.validate()
    return rc


def _rc_dict(rc: RunConfig) -> dict:
    return {
        "seed": rc.seed,
        "z": rc.z,
        "pair": str(rc.pair),
        "mode": rc.mode,
        "repeats": rc.repeats,
        "pt_levels": list(rc.pt_levels),
        "folds": rc.folds,
        "svm": {
            "tol": rc.svm_tol,
            "max_passes": rc.svm_max_passes,
            "grid": [{"c": hp.c, "gamma": hp.gamma} for hp in rc.grid],
        },
        "feature_learning": {
            "kmeans": {
                "restarts": rc.feature_learning.kmeans.restarts,
                "max_iters": rc.feature_learning.kmeans.max_iters,
                "rel_tol": rc.feature_learning.kmeans.rel_tol,
            },
            "channels": {
                ch: {
                    "patch_dim": s.patch_dim,
                    "n_centroids": s.n_centroids,
                    "n_patches": s.n_patches,
                }
                for ch, s in rc.feature_learning.channels.items()
            },
        },
        "synth": {
            "n_units": rc.synth.n_units,
            "pre_len": rc.synth.pre_len,
            "inc_len": rc.synth.inc_len,
            "post_len": list(rc.synth.post_len),
            "base_vol": rc.synth.base_vol,
            "base_occ": rc.synth.base_occ,
            "noise_sd": rc.synth.noise_sd,
            "inc_occ_lift": rc.synth.inc_occ_lift,
            "inc_vol_drop": rc.synth.inc_vol_drop,
            "ramp_len": rc.synth.ramp_len,
            "seed": rc.synth.seed,
            "site_tag": rc.synth.site_tag,
        },
    }


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    path: Path,
    command: str,
    rc: RunConfig,
    inputs: Mapping[str, Path],
    outputs: Mapping[str, Path],
) -> None:
    doc = {
        "tool": "incident-featlab",
        "version": __version__,
        "command": command,
        "config": _rc_dict(rc),
        "inputs": {name: {"path": str(p), "sha256": _sha256(Path(p))} for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": _sha256(Path(p))} for name, p in outputs.items()},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


def _load_trimmed(path: str, rc: RunConfig, site_tag: str | None = None) -> Dataset:
    ds = load_dataset(path, site_tag=site_tag)
    return trim_head(ds, PreprocessConfig(rc.z))


def _file_manifest_path(out: Path) -> Path:
    return out.with_suffix(".manifest.json")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    ds = generate_dataset(rc.synth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    write_manifest(_file_manifest_path(out), "synth", rc, {}, {"data": out})
    print(f"wrote {ds.n_intervals} intervals over {len(ds.units)} units to {out}")
    return 0


def cmd_learn(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    trimmed = _load_trimmed(args.data, rc)
    corpus = assemble_context_vectors(trimmed, PreprocessConfig(rc.z))
    codebooks = fit_codebooks(corpus, rc.feature_learning, rc.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_codebooks(codebooks, out)
    write_manifest(
        _file_manifest_path(out), "learn", rc, {"data": Path(args.data)}, {"codebooks": out}
    )
    sizes = ", ".join(f"{ch}: K={codebooks[ch].K} d={codebooks[ch].d}" for ch in CHANNELS)
    print(f"learned codebooks ({sizes}) -> {out}")
    return 0


def _build_features(data_path: str, rc: RunConfig, codebooks_path: str | None):
    trimmed = _load_trimmed(data_path, rc)
    features = assemble_raw_features(trimmed, rc.pair)
    if rc.mode != "raw":
        if codebooks_path is None:
            raise ValidationError(f"mode {rc.mode!r} needs --codebooks")
        codebooks = load_codebooks(codebooks_path)
        contexts = assemble_context_vectors(trimmed, PreprocessConfig(rc.z))
        features = enhance_feature_set(features, contexts, codebooks)
    return trimmed, features


def cmd_train(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    trimmed, features = _build_features(args.train, rc, args.codebooks)
    if args.c is not None and args.gamma is not None:
        hp = SvmHyperparams(c=args.c, gamma=args.gamma)
    elif args.c is None and args.gamma is None:
        cv = cross_validate(
            features, trimmed, list(rc.grid),
            folds=rc.folds, seed=rc.seed,
            svm_tol=rc.svm_tol, svm_max_passes=rc.svm_max_passes,
        )
        hp = cv.best_hyperparams
        print(f"cross-validation picked c={hp.c} gamma={hp.gamma} (PI {cv.cv_pi:.6g})")
    else:
        raise ValidationError("give both --c and --gamma, or neither (for cross-validation)")
    model, status = train_svm(
        features.X, features.labels, hp,
        tol=rc.svm_tol, max_passes=rc.svm_max_passes, seed=rc.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    inputs = {"train": Path(args.train)}
    if args.codebooks:
        inputs["codebooks"] = Path(args.codebooks)
    write_manifest(_file_manifest_path(out), "train", rc, inputs, {"model": out})
    print(
        f"trained on {len(features)} examples ({features.dim} dims), "
        f"{model.support_vectors.shape[0]} support vectors, "
        f"kkt residual {status.kkt_violation:.2e} -> {out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    model = load_model(args.model)
    trimmed, features = _build_features(args.data, rc, args.codebooks)
    if features.dim != model.n_features:
        raise ValidationError(
            f"feature dimension {features.dim} does not match model dimension "
            f"{model.n_features}; check --mode/--pair/--codebooks"
        )
    metrics = evaluate_model(model, features, trimmed, rc.pt_levels)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "metrics.csv"
    write_metrics_csv(metrics, csv_path)
    json_path = outdir / "metrics.json"
    json_path.write_text(
        json.dumps(
            {
                str(pt): {
                    "dr": m.dr, "far": m.far, "mttd": m.mttd,
                    "mttd_effective": m.mttd_effective, "pi": m.pi, "cr": m.cr,
                }
                for pt, m in metrics.items()
            },
            indent=2, sort_keys=True,
        ),
        encoding="utf-8",
    )
    outputs = {"metrics_csv": csv_path, "metrics_json": json_path}
    if not args.no_figures:
        for p in render_metrics_figure(metrics, outdir):
            outputs[p.stem] = p
    inputs = {"model": Path(args.model), "data": Path(args.data)}
    if args.codebooks:
        inputs["codebooks"] = Path(args.codebooks)
    write_manifest(outdir / "manifest.json", "eval", rc, inputs, outputs)
    for pt in sorted(metrics):
        m = metrics[pt]
        mttd = f"{m.mttd:.3f}" if m.mttd is not None else "n/a"
        print(f"pt={pt}: dr={m.dr:.4f} far={m.far:.5f} mttd={mttd} pi={m.pi:.6g} cr={m.cr:.4f}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    pairs = [PairConfig.from_string(s) for s in args.pairs.split(",")]
    for pair in pairs:
        if pair.x > rc.z:
            raise ValidationError(f"pair [{pair}] needs x <= z={rc.z}")
    train = _load_trimmed(args.train, rc)
    test = _load_trimmed(args.test, rc)
    rows = run_pair_grid(
        train, test, pairs, seed=rc.seed,
        pt_levels=rc.pt_levels, repeats=rc.repeats, grid=list(rc.grid),
        folds=rc.folds, svm_tol=rc.svm_tol, svm_max_passes=rc.svm_max_passes,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "pair_grid.csv"
    write_pair_grid_csv(rows, csv_path)
    outputs = {"pair_grid": csv_path}
    if not args.no_figures:
        for p in render_pair_grid_figures(rows, outdir):
            outputs[p.stem] = p
    write_manifest(
        outdir / "manifest.json", "grid", rc,
        {"train": Path(args.train), "test": Path(args.test)}, outputs,
    )
    print(format_trend(rows, pt=rc.pt_levels[0]))
    return 0


def cmd_e2e(args: argparse.Namespace) -> int:
    rc = resolve_config(_load_config_file(args.config), args)
    train = _load_trimmed(args.train, rc)
    test = _load_trimmed(args.test, rc)
    unlabeled = _load_trimmed(args.unlabeled, rc) if args.unlabeled else None
    report = run_experiment(
        train, test, unlabeled,
        mode=rc.mode, pair=rc.pair, repeats=rc.repeats, pt_levels=rc.pt_levels,
        seed=rc.seed, feature_learning=rc.feature_learning, grid=list(rc.grid),
        folds=rc.folds, svm_tol=rc.svm_tol, svm_max_passes=rc.svm_max_passes,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "report.csv"
    write_report_csv([report], csv_path)
    json_path = outdir / "report.json"
    write_report_json(report, json_path)
    outputs = {"report_csv": csv_path, "report_json": json_path}
    if not args.no_figures:
        for p in render_experiment_figures(report, outdir):
            outputs[p.stem] = p
    inputs = {"train": Path(args.train), "test": Path(args.test)}
    if args.unlabeled:
        inputs["unlabeled"] = Path(args.unlabeled)
    write_manifest(outdir / "manifest.json", "e2e", rc, inputs, outputs)
    for pt in report.pt_levels:
        s = report.aggregates[pt]
        print(
            f"pt={pt}: dr={s.dr_mean:.4f}±{s.dr_std:.4f} far={s.far_mean:.5f}±{s.far_std:.5f} "
            f"mttd={s.mttd_mean:.3f}±{s.mttd_std:.3f} pi={s.pi_mean:.6g}"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="top-level seed for all randomness")
    p.add_argument("--z", type=int, help="head-trim depth in intervals")
    p.add_argument("--pair", help="[x-y] pair, e.g. 4-2")
    p.add_argument("--mode", choices=("raw", "enhanced", "transfer-enhanced"))
    p.add_argument("--repeats", type=int, help="number of repeated runs")
    p.add_argument("--pt", help="comma-separated persistence levels, e.g. 0,1,2")
    p.add_argument("--folds", type=int, help="cross-validation fold count")


def build_parser() -> _Parser:
    parser = _Parser(prog="incident-featlab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic incident dataset CSV")
    _add_common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--site", help="site tag for generated unit ids")
    p.add_argument("--units", type=int, help="number of units to generate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn", help="fit the four per-channel codebooks")
    _add_common(p)
    p.add_argument("--data", required=True, help="input dataset CSV (labels unused)")
    p.add_argument("--out", required=True, help="output codebooks JSON path")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("train", help="train a single classifier")
    _add_common(p)
    p.add_argument("--train", required=True, help="training dataset CSV")
    p.add_argument("--codebooks", help="codebooks JSON (required for enhanced modes)")
    p.add_argument("--c", type=float, help="penalty; give with --gamma to skip cross-validation")
    p.add_argument("--gamma", type=float, help="RBF width; give with --c to skip cross-validation")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on a labeled dataset")
    _add_common(p)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="labeled dataset CSV")
    p.add_argument("--codebooks", help="codebooks JSON (required for enhanced modes)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="raw-feature sweep over [x-y] pairs")
    _add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--pairs", required=True, help="comma-separated pairs, e.g. 4-2,8-8,12-12")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("e2e", help="full experiment: codebooks, CV, final model, metrics")
    _add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--unlabeled", help="unlabeled-source CSV for transfer-enhanced mode")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_e2e)

    return parser


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if getattr(args, "command", None) is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected runtime failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
