import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from incident_featlab.datamodel import Dataset, IncidentUnit, IntervalRecord


def make_unit(
    unit_id: str,
    labels,
    *,
    vol_up=None,
    occ_up=None,
    vol_down=None,
    occ_down=None,
) -> IncidentUnit:
    """Build a unit from a label pattern, defaulting readings to mild ramps."""
    n = len(labels)
    vol_up = vol_up if vol_up is not None else [10.0 + 0.1 * i for i in range(n)]
    occ_up = occ_up if occ_up is not None else [0.1 + 0.001 * i for i in range(n)]
    vol_down = vol_down if vol_down is not None else [9.0 + 0.1 * i for i in range(n)]
    occ_down = occ_down if occ_down is not None else [0.09 + 0.001 * i for i in range(n)]
    records = tuple(
        IntervalRecord(
            unit_id=unit_id,
            t_index=i,
            vol_up=float(vol_up[i]),
            occ_up=float(occ_up[i]),
            vol_down=float(vol_down[i]),
            occ_down=float(occ_down[i]),
            label=int(labels[i]),
        )
        for i in range(n)
    )
    return IncidentUnit(unit_id, records)


def make_dataset(n_units=2, length=90, onset=None, inc_len=None, site_tag="test") -> Dataset:
    if onset is None:
        onset = (2 * length) // 3
    if inc_len is None:
        inc_len = max(1, length // 6)
    assert onset + inc_len <= length, "incident window must fit inside the unit"
    units = []
    for k in range(n_units):
        labels = [0] * length
        labels[onset : onset + inc_len] = [1] * inc_len
        units.append(make_unit(f"u{k:03d}", labels))
    return Dataset(tuple(units), site_tag)


@pytest.fixture
def small_dataset() -> Dataset:
    return make_dataset()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
