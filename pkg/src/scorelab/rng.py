"""Deterministic random-stream derivation.

A master seed plus a list of labels (experiment name, trial index, path
index, ...) maps to an independent numpy Generator. The derivation is
counter-based, so results never depend on draw order between streams or on
how work is scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"stream label must be int or str, got {type(label).__name__}")


def substream(seed: int, *labels) -> np.random.Generator:
    """Derive an independent Generator from (seed, labels...)."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_to_int(lab) for lab in labels]
    return np.random.default_rng(np.random.SeedSequence(words))
