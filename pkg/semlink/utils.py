# Standard library
from concurrent.futures import ThreadPoolExecutor
import os

# Third-party
import numpy as np

# Project
from . import conf

__all__ = ['RandomStreams', 'worker_count', 'parallel_map']

# Spawn keys of the named generator families. Never renumber: the key fixes
# which draws a stream produces for a given master seed.
STREAM_KEYS = {'channel': 0,
               'dataset': 1,
               'init': 2,
               'noise': 3,
               'baseline': 4,
               'shuffle': 5}


class RandomStreams:

    def __init__(self, seed):
        """Independent named random streams derived from one master seed.

        Each stream (and each indexed sub-stream) is a counter-based
        `~numpy.random.Philox` generator seeded from a
        `~numpy.random.SeedSequence` spawn key, so draws from one stream
        never shift the draws of another.

        Parameters
        ----------
        seed : int
            Master seed, ``0 <= seed < 2**64``.
        """
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("Master seed must be an unsigned 64-bit integer, "
                             "got {0}".format(seed))
        self.seed = seed

    def __repr__(self):
        return '<RandomStreams seed={0}>'.format(self.seed)

    def seed_sequence(self, stream, *index):
        if stream not in STREAM_KEYS:
            raise ValueError("Unknown random stream {0!r}; expected one of {1}"
                             .format(stream, sorted(STREAM_KEYS)))
        key = (STREAM_KEYS[stream], ) + tuple(int(i) for i in index)
        return np.random.SeedSequence(self.seed, spawn_key=key)

    def generator(self, stream, *index):
        """Return a fresh generator for ``stream``.

        Extra integer ``index`` values address sub-streams, e.g. one per
        sample or per epoch. Calling twice with the same arguments returns
        generators that produce identical draws.
        """
        return np.random.Generator(
            np.random.Philox(self.seed_sequence(stream, *index)))


def worker_count():
    """Number of worker threads, from ``SEMLINK_THREADS`` or
    ``semlink.conf.n_threads``."""
    env = os.environ.get('SEMLINK_THREADS', '').strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError("SEMLINK_THREADS must be an integer, got {0!r}"
                             .format(env))
    else:
        n = int(conf.n_threads)
    if n < 0:
        raise ValueError("Worker thread count must be non-negative, got {0}"
                         .format(n))
    if n == 0:
        n = os.cpu_count() or 1
    return n


def parallel_map(func, items):
    """Map ``func`` over ``items`` on a thread pool, preserving order."""
    items = list(items)
    n = min(worker_count(), max(len(items), 1))
    if n == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
