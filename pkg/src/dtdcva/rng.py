"""Counter-based random streams.

Every uniform is a pure function of (seed, scenario, bucket, stream, block)
through Philox4x64-10, so a scenario's draws do not depend on how scenarios
are split across threads.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from . import _kernels

# stream ids
MAIN = 1
CASE_I = 2
CASE_I_FRESH = 3
CASE_II = 4
CASE_II_FRESH = 5
TEST = 99


class CounterStream:
    """Sequential view of one (seed, scenario, bucket, stream) substream.

    Offers ``random`` and ``standard_normal`` like ``numpy.random.Generator``.
    """

    def __init__(self, seed: int, scenario: int = 0, bucket: int = 0, stream: int = TEST):
        self.seed = int(seed)
        self.scenario = int(scenario)
        self.bucket = int(bucket)
        self.stream = int(stream)
        self._block = 0

    def random(self, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape)) if shape else 1
        nblocks = (n + 3) // 4
        u = _kernels.uniforms(self.seed, np.array([self.scenario], dtype=np.uint64), self.bucket,
                              self.stream, 4 * nblocks, self._block)[0, :n]
        self._block += nblocks
        return u.reshape(shape) if shape else float(u[0])

    def standard_normal(self, size=None):
        return ndtri(self.random(size))


def scenario_uniforms(seed: int, scen, bucket: int, stream: int, n: int, first_block: int = 0) -> np.ndarray:
    """Uniforms for many scenarios at once, shape ``(len(scen), n)``."""
    return _kernels.uniforms(seed, np.asarray(scen, dtype=np.uint64), bucket, stream, n, first_block)


def scenario_normals(seed: int, scen, bucket: int, stream: int, n: int, first_block: int = 0) -> np.ndarray:
    return ndtri(scenario_uniforms(seed, scen, bucket, stream, n, first_block))
