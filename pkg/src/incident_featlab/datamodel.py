"""Incident dataset loading, validation, preprocessing, and feature assembly.

A dataset is a collection of incident units. Each unit is a contiguous block
of 30-second detector intervals (upstream/downstream volume and occupancy)
with at most one contiguous run of incident-labeled intervals. Head-trimming
moves the first ``z`` intervals of every unit into a per-unit history buffer
so that every remaining interval has ``z`` intervals of lookback available
for feature windows, while the example count shrinks accordingly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

#: Channel order used everywhere a per-channel block layout matters.
CHANNELS = ("vol_up", "occ_up", "vol_down", "occ_down")

#: Canonical CSV schema (header required, comma-separated, UTF-8).
CSV_COLUMNS = ("unit_id", "t_index", "vol_up", "occ_up", "vol_down", "occ_down", "label")


class DataError(ValueError):
    """Base class for dataset problems."""


class ParseError(DataError):
    """Malformed file content; message carries the offending line number."""


class ValidationError(DataError):
    """A semantic constraint is violated (ranges, contiguity, alignment)."""


def _check_record_values(rec: "IntervalRecord") -> str | None:
    """Return a problem description for out-of-range values, or None."""
    for name in ("vol_up", "occ_up", "vol_down", "occ_down"):
        v = getattr(rec, name)
        if not np.isfinite(v):
            return f"{name} is not finite"
    if rec.vol_up < 0 or rec.vol_down < 0:
        return "volume must be non-negative"
    if not (0.0 <= rec.occ_up <= 1.0):
        return f"occ_up {rec.occ_up!r} outside [0, 1]"
    if not (0.0 <= rec.occ_down <= 1.0):
        return f"occ_down {rec.occ_down!r} outside [0, 1]"
    if rec.label not in (0, 1):
        return f"label {rec.label!r} not in {{0, 1}}"
    return None


@dataclass(frozen=True)
class IntervalRecord:
    """One 30-second interval of averaged detector readings."""

    unit_id: str
    t_index: int
    vol_up: float
    occ_up: float
    vol_down: float
    occ_down: float
    label: int


@dataclass(frozen=True)
class IncidentUnit:
    """A contiguous block of intervals containing at most one incident.

    ``history`` holds intervals removed by head-trimming (t_index -h..-1,
    oldest first). They provide lookback for feature windows but do not
    count as examples. ``onset`` is derived: the index into ``records`` of
    the first incident-labeled interval, or None.
    """

    unit_id: str
    records: tuple[IntervalRecord, ...]
    history: tuple[IntervalRecord, ...] = ()
    onset: int | None = field(init=False, default=None)

    def __post_init__(self) -> None:
        if not self.records:
            raise ValidationError(f"unit {self.unit_id!r}: no intervals")
        for seq, base in ((self.history, -len(self.history)), (self.records, 0)):
            for i, rec in enumerate(seq):
                if rec.unit_id != self.unit_id:
                    raise ValidationError(
                        f"unit {self.unit_id!r}: record carries unit_id {rec.unit_id!r}"
                    )
                if rec.t_index != base + i:
                    raise ValidationError(
                        f"unit {self.unit_id!r}: t_index {rec.t_index} at position "
                        f"{base + i} is not contiguous"
                    )
                problem = _check_record_values(rec)
                if problem is not None:
                    raise ValidationError(f"unit {self.unit_id!r}: {problem}")
        labels = [r.label for r in self.records]
        runs = 0
        prev = 0
        for lab in labels:
            if lab == 1 and prev == 0:
                runs += 1
            prev = lab
        if runs > 1:
            raise ValidationError(
                f"unit {self.unit_id!r}: incident labels form {runs} runs, expected one"
            )
        onset = labels.index(1) if runs == 1 else None
        object.__setattr__(self, "onset", onset)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def incident_count(self) -> int:
        return sum(r.label for r in self.records)

    def incident_window(self) -> tuple[int, int] | None:
        """(start, stop) of the incident run in record indices, stop exclusive."""
        if self.onset is None:
            return None
        return self.onset, self.onset + self.incident_count

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=int)

    def channel_values(self, channel: str, include_history: bool = False) -> np.ndarray:
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}")
        seq = self.history + self.records if include_history else self.records
        return np.array([getattr(r, channel) for r in seq], dtype=float)


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of incident units from one site."""

    units: tuple[IncidentUnit, ...]
    site_tag: str = ""

    def __post_init__(self) -> None:
        ids = [u.unit_id for u in self.units]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate unit ids: {dupes}")

    @property
    def n_intervals(self) -> int:
        return sum(len(u) for u in self.units)

    @property
    def incident_interval_count(self) -> int:
        return sum(u.incident_count for u in self.units)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(u.unit_id for u in self.units)

    def get(self, unit_id: str) -> IncidentUnit:
        for u in self.units:
            if u.unit_id == unit_id:
                return u
        raise KeyError(unit_id)

    def subset(self, unit_ids: Sequence[str]) -> "Dataset":
        wanted = set(unit_ids)
        missing = wanted - set(self.unit_ids)
        if missing:
            raise KeyError(f"unknown unit ids: {sorted(missing)}")
        return Dataset(tuple(u for u in self.units if u.unit_id in wanted), self.site_tag)


@dataclass(frozen=True)
class PairConfig:
    """Raw-feature window choice: x extra upstream and y extra downstream intervals."""

    x: int
    y: int

    def __post_init__(self) -> None:
        if not (0 <= self.y <= self.x):
            raise ValidationError(f"pair requires x >= y >= 0, got [{self.x}-{self.y}]")

    @property
    def dim(self) -> int:
        return 2 * (self.x + 1) + 2 * (self.y + 1)

    @classmethod
    def from_string(cls, text: str) -> "PairConfig":
        parts = text.strip().split("-")
        if len(parts) != 2:
            raise ValidationError(f"pair must look like '4-2', got {text!r}")
        try:
            x, y = (int(p) for p in parts)
        except ValueError as exc:
            raise ValidationError(f"pair must look like '4-2', got {text!r}") from exc
        return cls(x, y)

    def __str__(self) -> str:
        return f"{self.x}-{self.y}"


@dataclass(frozen=True)
class PreprocessConfig:
    """Head-trim depth in intervals."""

    z: int = 12

    def __post_init__(self) -> None:
        if self.z < 0:
            raise ValidationError(f"z must be >= 0, got {self.z}")


@dataclass(frozen=True, eq=False)
class ContextVector:
    """The z+1 most recent values of one channel, oldest first."""

    channel: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("context values must be one-dimensional")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class UnlabeledSeries:
    """A bare channel series; every length-(z+1) window is a context vector."""

    channel: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def context_matrix(self, z: int) -> np.ndarray:
        """All sliding windows of length z+1, one per row, oldest first."""
        if len(self.values) < z + 1:
            raise ValidationError(
                f"series of length {len(self.values)} is too short for z={z}"
            )
        return sliding_window_view(self.values, z + 1).copy()

    def context_vectors(self, z: int) -> list[ContextVector]:
        return [ContextVector(self.channel, row) for row in self.context_matrix(z)]


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Assembled per-interval examples, aligned with dataset unit order."""

    X: np.ndarray
    labels: np.ndarray
    unit_ids: tuple[str, ...]
    t_indices: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def rows(self) -> Iterator[tuple[np.ndarray, int, str, int]]:
        """Yield (feature_vector, label, unit_id, t_index) per example."""
        for i in range(len(self)):
            yield self.X[i], int(self.labels[i]), self.unit_ids[i], int(self.t_indices[i])

    def per_unit_slices(self) -> dict[str, slice]:
        """Contiguous example slice per unit, in first-appearance order."""
        out: dict[str, slice] = {}
        start = 0
        for i in range(1, len(self) + 1):
            if i == len(self) or self.unit_ids[i] != self.unit_ids[start]:
                uid = self.unit_ids[start]
                if uid in out:
                    raise ValidationError(f"examples of unit {uid!r} are not contiguous")
                out[uid] = slice(start, i)
                start = i
        return out


@dataclass(frozen=True, eq=False)
class ContextSet:
    """Per-interval context vectors for all four channels.

    ``channels[ch]`` is an (n_examples, z+1) matrix aligned with
    unit_ids/t_indices/labels; row order matches assemble_raw_features on
    the same dataset.
    """

    z: int
    unit_ids: tuple[str, ...]
    t_indices: np.ndarray
    labels: np.ndarray
    channels: Mapping[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.unit_ids)

    def matrix(self, channel: str) -> np.ndarray:
        return self.channels[channel]

    def vectors(self, channel: str) -> list[ContextVector]:
        return [ContextVector(channel, row) for row in self.channels[channel]]

    def context_at(self, i: int) -> dict[str, ContextVector]:
        """The four-channel context map for example i."""
        return {ch: ContextVector(ch, self.channels[ch][i]) for ch in CHANNELS}


# ---------------------------------------------------------------------------
# CSV I/O


def load_dataset(
    path: str | Path,
    site_tag: str | None = None,
    schema: Sequence[str] = CSV_COLUMNS,
) -> Dataset:
    """Load a dataset from the CSV schema.

    ``schema`` names the expected column order; it must contain exactly the
    canonical columns. Rows are grouped by unit_id (first-appearance order
    preserved across units) and sorted by t_index within each unit.
    Validates the single contiguous incident run, value ranges, and 0-based
    contiguous t_index.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if set(schema) != set(CSV_COLUMNS) or len(schema) != len(CSV_COLUMNS):
        raise ValueError(f"schema must contain exactly the columns {list(CSV_COLUMNS)}")
    col = {name: i for i, name in enumerate(schema)}
    groups: dict[str, list[tuple[int, IntervalRecord]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != tuple(schema):
            raise ParseError(
                f"{path}: line 1: header {header!r} does not match {list(schema)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(schema):
                raise ParseError(
                    f"{path}: line {lineno}: expected {len(schema)} fields, got {len(row)}"
                )
            try:
                rec = IntervalRecord(
                    unit_id=row[col["unit_id"]],
                    t_index=int(row[col["t_index"]]),
                    vol_up=float(row[col["vol_up"]]),
                    occ_up=float(row[col["occ_up"]]),
                    vol_down=float(row[col["vol_down"]]),
                    occ_down=float(row[col["occ_down"]]),
                    label=int(row[col["label"]]),
                )
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            problem = _check_record_values(rec)
            if problem is not None:
                raise ValidationError(f"{path}: line {lineno}: {problem}")
            groups.setdefault(rec.unit_id, []).append((rec.t_index, rec))

    units = []
    for unit_id, pairs in groups.items():
        pairs.sort(key=lambda p: p[0])
        indices = [t for t, _ in pairs]
        if indices != list(range(len(indices))):
            raise ValidationError(
                f"unit {unit_id!r}: t_index values are not 0-based contiguous"
            )
        units.append(IncidentUnit(unit_id, tuple(rec for _, rec in pairs)))
    if site_tag is None:
        site_tag = path.stem
    return Dataset(tuple(units), site_tag)


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """Write records (not history) in the canonical CSV schema.

    Floats are written with repr so a load/write/load round trip is
    bit-exact.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for u in ds.units:
            for r in u.records:
                writer.writerow(
                    [
                        r.unit_id,
                        r.t_index,
                        repr(float(r.vol_up)),
                        repr(float(r.occ_up)),
                        repr(float(r.vol_down)),
                        repr(float(r.occ_down)),
                        r.label,
                    ]
                )


# ---------------------------------------------------------------------------
# Preprocessing and assembly


def trim_head(ds: Dataset, cfg: PreprocessConfig) -> Dataset:
    """Move the first z intervals of every unit into its history buffer.

    Remaining records and the onset are re-indexed from 0. The trimmed
    intervals stay available as lookback for feature windows.
    """
    z = cfg.z
    if z == 0:
        return ds
    new_units = []
    for u in ds.units:
        if len(u.records) <= z:
            raise ValidationError(
                f"unit {u.unit_id!r} has {len(u.records)} intervals; trimming needs > {z}"
            )
        head = u.history + u.records[:z]
        h = len(head)
        history = tuple(replace(r, t_index=i - h) for i, r in enumerate(head))
        records = tuple(replace(r, t_index=i) for i, r in enumerate(u.records[z:]))
        new_units.append(IncidentUnit(u.unit_id, records, history=history))
    return Dataset(tuple(new_units), ds.site_tag)


def _unit_full_series(u: IncidentUnit) -> dict[str, np.ndarray]:
    return {ch: u.channel_values(ch, include_history=True) for ch in CHANNELS}


def assemble_raw_features(ds: Dataset, pair: PairConfig) -> FeatureSet:
    """Build one raw feature vector per remaining interval.

    Layout: [vol_up t-x..t, occ_up t-x..t, vol_down t-y..t, occ_down t-y..t],
    each block oldest first; dimension 2(x+1) + 2(y+1). Requires every unit
    to carry at least x intervals of history (i.e. trimmed with z >= x).
    """
    spans = {"vol_up": pair.x, "occ_up": pair.x, "vol_down": pair.y, "occ_down": pair.y}
    blocks = []
    labels = []
    unit_ids: list[str] = []
    t_indices = []
    for u in ds.units:
        h = len(u.history)
        if h < pair.x:
            raise ValidationError(
                f"unit {u.unit_id!r} has {h} history intervals, pair [{pair}] needs {pair.x}; "
                "trim the dataset with z >= x first"
            )
        series = _unit_full_series(u)
        n = len(u.records)
        parts = []
        for ch in CHANNELS:
            w = spans[ch] + 1
            windows = sliding_window_view(series[ch], w)
            parts.append(windows[h - spans[ch] : h - spans[ch] + n])
        blocks.append(np.hstack(parts))
        labels.append(u.labels())
        unit_ids.extend([u.unit_id] * n)
        t_indices.append(np.arange(n))
    X = np.vstack(blocks)
    assert X.shape[1] == pair.dim
    return FeatureSet(
        X=X,
        labels=np.concatenate(labels),
        unit_ids=tuple(unit_ids),
        t_indices=np.concatenate(t_indices),
    )


def assemble_context_vectors(ds: Dataset, cfg: PreprocessConfig) -> ContextSet:
    """Build the four z+1-length context vectors for every remaining interval.

    With labels ignored, the result doubles as the unlabeled patch-sampling
    corpus.
    """
    z = cfg.z
    per_channel: dict[str, list[np.ndarray]] = {ch: [] for ch in CHANNELS}
    labels = []
    unit_ids: list[str] = []
    t_indices = []
    for u in ds.units:
        h = len(u.history)
        if h < z:
            raise ValidationError(
                f"unit {u.unit_id!r} has {h} history intervals, context depth z={z} "
                "requires a matching head trim"
            )
        series = _unit_full_series(u)
        n = len(u.records)
        for ch in CHANNELS:
            windows = sliding_window_view(series[ch], z + 1)
            per_channel[ch].append(windows[h - z : h - z + n])
        labels.append(u.labels())
        unit_ids.extend([u.unit_id] * n)
        t_indices.append(np.arange(n))
    return ContextSet(
        z=z,
        unit_ids=tuple(unit_ids),
        t_indices=np.concatenate(t_indices),
        labels=np.concatenate(labels),
        channels={ch: np.vstack(mats) for ch, mats in per_channel.items()},
    )
