# src/skewlab/runtime.py
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import TypeVar

import numpy as np

from . import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")

SEED_MAX = 2**64


def parse_seed(raw: int | str | None) -> int | None:
    """Accept decimal or 0x-prefixed seeds; anything outside [0, 2**64) is rejected."""
    if raw is None:
        return None
    s = str(raw).strip().lower()
    try:
        n = int(s, 16) if s.startswith("0x") else int(s)
    except ValueError:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {raw!r}") from None
    if not (0 <= n < SEED_MAX):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {raw!r}")
    return n


def apply_runtime_options(
    *,
    config_path: str | Path | None = None,
    fixture: str | None = None,
    seed: int | str | None = None,
    output_dir: str | Path | None = None,
    threads: int | None = None,
) -> None:
    """
    Apply runtime options shared by the CLI and the Python API.

    A fixture and a config path are mutually exclusive; everything else is an
    override on top of whichever one is active.
    """
    if config_path is not None and fixture is not None:
        raise ValueError("--config and --fixture are mutually exclusive")
    if threads is not None and int(threads) < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    settings.set_runtime_context(
        config_path=config_path,
        fixture=fixture,
        seed=parse_seed(seed),
        output_dir=output_dir,
        threads=threads,
    )


def spawn_generators(seed: int | np.random.SeedSequence, chunks: int) -> list[np.random.Generator]:
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in root.spawn(chunks)]


def split_counts(total: int, chunks: int) -> list[int]:
    """Split `total` draws over `chunks` streams; earlier chunks take the remainder."""
    base, extra = divmod(int(total), int(chunks))
    return [base + (1 if i < extra else 0) for i in range(chunks)]


def parallel_sweep(
    seed: int | np.random.SeedSequence,
    chunks: int,
    threads: int,
    fn: Callable[[int, np.random.Generator], T],
) -> list[T]:
    """
    Run `fn(chunk_index, rng)` once per spawned stream and return results in chunk order.

    The streams depend only on (seed, chunks); the thread count changes the
    wall-clock time and nothing else.
    """
    rngs = spawn_generators(seed, chunks)
    if threads <= 1 or chunks == 1:
        return [fn(i, rng) for i, rng in enumerate(rngs)]

    logger.debug("sweep: %d chunks on %d threads", chunks, threads)
    with ThreadPoolExecutor(max_workers=min(threads, chunks), thread_name_prefix="skewlab") as pool:
        futures = [pool.submit(fn, i, rng) for i, rng in enumerate(rngs)]
        return [f.result() for f in futures]


def ordered_map(fn: Callable[[T], object], items: Sequence[T], threads: int) -> list[object]:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items)), thread_name_prefix="skewlab") as pool:
        return list(pool.map(fn, items))
