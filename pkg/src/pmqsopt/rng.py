"""Deterministic named random streams derived from a single master seed.

Every source of randomness in a run is one of three named streams, each a
PCG64 generator spawned from the master seed via ``numpy.random.SeedSequence``
with a fixed spawn key.  Two runs with the same master seed therefore draw
identical values on every stream, independently of how often the other
streams are consumed.  Determinism is per binary (numpy's PCG64 bit stream);
cross-language reproduction is expected only at the statistical level.
"""

from __future__ import annotations

import numpy as np

#: Stream names and their fixed spawn keys.
STREAMS = {"samples": 0, "instance": 1, "output": 2}


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for one of the named streams of ``seed``.

    Parameters
    ----------
    seed : int
        Master seed.
    name : str
        One of ``"samples"`` (per-iteration scenario draws), ``"instance"``
        (problem generation) or ``"output"`` (final iterate selection).
    """
    try:
        key = STREAMS[name]
    except KeyError:
        raise ValueError(
            f"unknown stream {name!r}; expected one of {sorted(STREAMS)}"
        ) from None
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))
