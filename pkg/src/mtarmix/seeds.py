"""Labelled random substreams derived from one master seed.

Stream ``(label, index...)`` is ``SeedSequence(master, spawn_key=(code, *index))``
with codes estimation=0, forecasting=1, simulation=2, replication=3. Streams
never overlap, so re-forecasting a stored chain cannot perturb estimation.
"""

from __future__ import annotations

import numpy as np

LABELS = {"estimation": 0, "forecasting": 1, "simulation": 2, "replication": 3}


def substream(master: int, label: str, *index: int) -> np.random.SeedSequence:
    if label not in LABELS:
        raise ValueError(f"unknown stream label {label!r}")
    return np.random.SeedSequence(int(master), spawn_key=(LABELS[label],) + tuple(int(i) for i in index))


def generator(master: int, label: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(substream(master, label, *index))


def int_seed(master: int, label: str, *index: int) -> int:
    """A 64-bit integer seed for APIs that take plain integers."""
    return int(substream(master, label, *index).generate_state(1, dtype=np.uint64)[0])
