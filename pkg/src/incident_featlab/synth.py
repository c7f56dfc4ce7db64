"""Synthetic incident-unit generator.

A deliberately simple phenomenological model: each unit carries a slowly
drifting baseline shared by both detectors, multiplicative Gaussian noise
per channel, and an incident window during which upstream occupancy is
lifted and downstream volume is dropped, both ramped in linearly. Its job
is to make the pipeline exercisable and the detection problem learnable,
not to model traffic physics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, IncidentUnit, IntervalRecord, ValidationError

DRIFT_AMPLITUDE = 0.08
DRIFT_PERIOD = 150.0

#: Units must keep at least this many pre-incident intervals so the default
#: head trim (z=12) never consumes incident data.
MIN_PRE_LEN = 13


@dataclass(frozen=True)
class SynthConfig:
    n_units: int = 52
    pre_len: int = 60
    inc_len: int = 30
    post_len: tuple[int, int] = (0, 5)  # inclusive range, drawn per unit
    base_vol: float = 12.0
    base_occ: float = 0.12
    noise_sd: float = 0.08
    inc_occ_lift: float = 2.0
    inc_vol_drop: float = 0.6
    ramp_len: int = 3
    seed: int = 0
    site_tag: str = "site_a"

    def __post_init__(self) -> None:
        if self.n_units < 1:
            raise ValidationError(f"n_units must be >= 1, got {self.n_units}")
        if self.pre_len < MIN_PRE_LEN:
            raise ValidationError(
                f"pre_len must be >= {MIN_PRE_LEN} so head-trimming keeps the incident, "
                f"got {self.pre_len}"
            )
        if self.inc_len < 1:
            raise ValidationError(f"inc_len must be >= 1, got {self.inc_len}")
        lo, hi = self.post_len
        if not (0 <= lo <= hi):
            raise ValidationError(f"post_len range must satisfy 0 <= lo <= hi, got {self.post_len}")
        if not (self.inc_occ_lift > 0 and self.inc_vol_drop > 0):
            raise ValidationError("incident lift/drop factors must be > 0")
        if self.noise_sd < 0:
            raise ValidationError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if self.ramp_len < 0:
            raise ValidationError(f"ramp_len must be >= 0, got {self.ramp_len}")
        if self.base_vol <= 0 or not (0 < self.base_occ <= 1):
            raise ValidationError("base_vol must be > 0 and base_occ in (0, 1]")


def _incident_multiplier(length: int, start: int, stop: int, factor: float, ramp: int) -> np.ndarray:
    m = np.ones(length)
    k = np.arange(stop - start)
    frac = np.minimum(1.0, (k + 1) / ramp) if ramp > 0 else np.ones_like(k, dtype=float)
    m[start:stop] = 1.0 + (factor - 1.0) * frac
    return m


def _noise(rng: np.random.Generator, sd: float, length: int) -> np.ndarray:
    if sd == 0:
        return np.ones(length)
    # Multiplicative noise floored so readings stay positive.
    return np.maximum(1.0 + rng.normal(0.0, sd, size=length), 0.05)


def generate_dataset(cfg: SynthConfig) -> Dataset:
    """Generate cfg.n_units units, deterministic for a given cfg.seed."""
    units = []
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_units)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        post = int(rng.integers(cfg.post_len[0], cfg.post_len[1] + 1))
        length = cfg.pre_len + cfg.inc_len + post
        onset = cfg.pre_len
        clear = cfg.pre_len + cfg.inc_len

        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(length)
        drift = 1.0 + DRIFT_AMPLITUDE * np.sin(2.0 * np.pi * t / DRIFT_PERIOD + phase)
        base_vol = cfg.base_vol * drift
        base_occ = cfg.base_occ * drift

        occ_lift = _incident_multiplier(length, onset, clear, cfg.inc_occ_lift, cfg.ramp_len)
        vol_drop = _incident_multiplier(length, onset, clear, cfg.inc_vol_drop, cfg.ramp_len)

        vol_up = base_vol * _noise(rng, cfg.noise_sd, length)
        vol_down = base_vol * vol_drop * _noise(rng, cfg.noise_sd, length)
        occ_up = base_occ * occ_lift * _noise(rng, cfg.noise_sd, length)
        occ_down = base_occ * _noise(rng, cfg.noise_sd, length)

        vol_up = np.maximum(vol_up, 0.0)
        vol_down = np.maximum(vol_down, 0.0)
        occ_up = np.clip(occ_up, 0.0, 1.0)
        occ_down = np.clip(occ_down, 0.0, 1.0)

        labels = np.zeros(length, dtype=int)
        labels[onset:clear] = 1

        unit_id = f"{cfg.site_tag}_{i:04d}"
        records = tuple(
            IntervalRecord(
                unit_id=unit_id,
                t_index=int(k),
                vol_up=float(vol_up[k]),
                occ_up=float(occ_up[k]),
                vol_down=float(vol_down[k]),
                occ_down=float(occ_down[k]),
                label=int(labels[k]),
            )
            for k in t
        )
        units.append(IncidentUnit(unit_id, records))
    return Dataset(tuple(units), cfg.site_tag)
