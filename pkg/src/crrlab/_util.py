"""Small shared helpers: named rng substreams and input validation."""

from __future__ import annotations

import zlib

import numpy as np

POLARITIES = ("negative", "neutral", "positive")
LABEL_INDEX = {name: i for i, name in enumerate(POLARITIES)}


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *extra: int | str) -> np.random.Generator:
    """Generator derived from (seed, name, *extra); stable across runs and platforms."""
    key = [int(seed) & 0xFFFFFFFF, stream_key(name)]
    for item in extra:
        key.append(stream_key(item) if isinstance(item, str) else int(item) & 0xFFFFFFFF)
    return np.random.default_rng(key)


def check_polarity(value: str, allow_conflict: bool = False) -> str:
    if value in LABEL_INDEX or (allow_conflict and value == "conflict"):
        return value
    raise ValueError(f"unknown polarity {value!r}")


def check_unit_interval(name: str, value: float, *, open_low=False, open_high=False) -> float:
    value = float(value)
    low_ok = value > 0 if open_low else value >= 0
    high_ok = value < 1 if open_high else value <= 1
    if not (low_ok and high_ok):
        raise ValueError(f"{name} must lie in the unit interval, got {value}")
    return value
