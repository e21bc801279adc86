import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from biascrowd.data import LabelDataset, load_dataset

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

DATA_ROOT_ENV = "BIASCROWD_DATA"

# name -> (K, n_workers, n_tasks)
REAL_DATASETS = {
    "RTE": (2, 164, 800),
    "TEMP": (2, 76, 462),
    "WSD": (3, 34, 177),
    "SP": (2, 143, 500),
}


def real_dataset(name: str) -> LabelDataset:
    """Load one of the public datasets or skip the calling test."""
    root = os.environ.get(DATA_ROOT_ENV)
    if not root:
        pytest.skip(
            f"{DATA_ROOT_ENV} not set; this check needs the public "
            "RTE/TEMP/WSD/SP datasets (see README for acquisition)"
        )
    base = Path(root) / name
    labels, gold = base / "labels.csv", base / "gold.csv"
    if not labels.exists() or not gold.exists():
        pytest.skip(f"dataset {name} not found under {root}")
    return load_dataset(labels, gold, REAL_DATASETS[name][0])


def make_dataset(triples, n_classes=2, gold=None, n_workers=None, n_tasks=None):
    return LabelDataset.from_triples(
        triples, n_classes=n_classes, gold=gold, n_workers=n_workers, n_tasks=n_tasks
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
