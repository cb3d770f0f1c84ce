"""Per-tile random streams derived from a global seed."""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(global_seed: int, *keys: object) -> int:
    """Stable 128-bit seed from the global seed and an ordered tuple of keys."""
    text = "|".join([str(int(global_seed))] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:16], "little")


def tile_stream(
    global_seed: int,
    slide_id: str,
    origin_x: int,
    origin_y: int,
    epoch: int = 0,
    stage: str = "",
) -> np.random.Generator:
    """Independent generator for one tile, epoch and pipeline stage.

    ``stage`` keeps augmentation, anchor sampling and scoring from sharing
    draws for the same tile.
    """
    return np.random.default_rng(
        stream_seed(global_seed, stage, slide_id, origin_x, origin_y, epoch)
    )


def stage_stream(global_seed: int, stage: str, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng(stream_seed(global_seed, stage, epoch))
