"""Per-sample random streams and an order-independent sample runner."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

__all__ = ["AUX_STREAM", "SEED_RULE", "derive_stream", "stream_id", "run_indexed"]

log = logging.getLogger(__name__)

#: Stream index reserved for auxiliary draws (modulus estimates), never a sample index.
AUX_STREAM = 2**63 - 1

SEED_RULE = "numpy.random.Generator(PCG64(SeedSequence(entropy=master, spawn_key=(index,))))"


def derive_stream(master: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of a run seeded by ``master``.

    The stream depends only on ``(master, index)``, never on which worker
    draws it or in what order.
    """
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def stream_id(master: int, index: int) -> str:
    return f"{int(master)}/{int(index)}"


_worker_ctx: Any = None


def _init_worker(builder, args):
    global _worker_ctx
    _worker_ctx = builder(*args)


def _call(task, index):
    return task(_worker_ctx, index)


def _chunk(task, indices):
    return [_call(task, i) for i in indices]


def run_indexed(
    task: Callable[[Any, int], Any],
    builder: Callable[..., Any],
    builder_args: tuple,
    indices: Sequence[int],
    workers: int = 1,
) -> list:
    """Evaluate ``task(ctx, i)`` for each index, results in index order.

    ``ctx = builder(*builder_args)`` is built once per worker process.  Both
    callables must be module-level so they can be pickled.
    """
    indices = list(indices)
    if workers <= 1 or len(indices) < 2:
        ctx = builder(*builder_args)
        return [task(ctx, i) for i in indices]
    n_chunks = max(workers * 4, 1)
    chunks = [indices[k::n_chunks] for k in range(n_chunks)]
    chunks = [c for c in chunks if c]
    out: dict[int, Any] = {}
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(builder, builder_args)) as pool:
        futures = [pool.submit(_chunk, task, c) for c in chunks]
        for c, fut in zip(chunks, futures):
            for i, r in zip(c, fut.result()):
                out[i] = r
    log.debug("collected %d results from %d workers", len(out), workers)
    return [out[i] for i in indices]
