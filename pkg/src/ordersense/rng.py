"""Counter-based uniform streams.

Uniforms are produced in fixed blocks of rows. Block ``b`` of stream ``(seed, stream)``
comes from a Philox generator keyed by ``SeedSequence([seed, stream, b])``, so any
row range yields the same numbers however the work is split.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_ROWS = 4096
DEFAULT_SEED = 42
_SCALE = 2.0**-53


def default_seed():
    """Seed taken from ``ORDERSENSE_SEED`` when set, else 42."""
    value = os.environ.get("ORDERSENSE_SEED")
    return int(value) if value else DEFAULT_SEED


def _block(seed, stream, block, n_cols):
    key = np.random.SeedSequence([int(seed), int(stream), int(block)])
    bits = np.random.Generator(np.random.Philox(key)).integers(
        0, 2**53, size=(BLOCK_ROWS, n_cols), dtype=np.int64
    )
    # strictly inside (0, 1)
    return (bits + 0.5) * _SCALE


def uniforms(seed, stream, n_rows, n_cols, *, start_row=0, n_jobs=1):
    """Rows ``start_row .. start_row + n_rows`` of the uniform matrix for ``(seed, stream)``."""
    if n_rows <= 0:
        return np.empty((0, n_cols))
    first = start_row // BLOCK_ROWS
    last = (start_row + n_rows - 1) // BLOCK_ROWS
    blocks = range(first, last + 1)
    if n_jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda b: _block(seed, stream, b, n_cols), blocks))
    else:
        parts = [_block(seed, stream, b, n_cols) for b in blocks]
    out = np.concatenate(parts, axis=0)
    offset = start_row - first * BLOCK_ROWS
    return out[offset : offset + n_rows]
