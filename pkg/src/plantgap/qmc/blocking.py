"""Blocking (binning) analysis for serially correlated Monte Carlo series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_BLOCKS = 32


@dataclass(frozen=True)
class BlockingResult:
    mean: float
    error: float
    block_size: int
    n_blocks: int
    errors: tuple[float, ...]  # naive standard error at block sizes 1, 2, 4, ...


def blocking(x, min_blocks: int = MIN_BLOCKS) -> BlockingResult:
    """Mean and autocorrelation-corrected standard error.

    Neighbouring samples are averaged pairwise repeatedly (block sizes 2^k).
    The reported error is the one at the largest block size that still
    leaves at least ``min_blocks`` blocks.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    mean = float(x.mean())
    errors = []
    level = x
    size = 1
    chosen = (0.0, 1, x.size)
    while level.size >= 2:
        err = float(level.std(ddof=1) / np.sqrt(level.size))
        errors.append(err)
        if level.size >= min_blocks or size == 1:
            chosen = (err, size, level.size)
        if level.size < 2 * min_blocks:
            break
        half = level.size // 2
        level = 0.5 * (level[: 2 * half : 2] + level[1 : 2 * half : 2])
        size *= 2
    return BlockingResult(mean, chosen[0], chosen[1], chosen[2], tuple(errors))
