"""Counter-based random streams with a pinned, replayable draw contract.

Stream algorithm (fixed):
    Philox4x64-10 keyed by the 64-bit master seed, with the 256-bit counter's
    most significant 64-bit word set to the stream id.  Doubles come from the
    standard 53-bit construction ``(next_uint64 >> 11) * 2**-53`` (numpy's
    ``Generator.random``).

Every consumer decision costs exactly one double ``u`` in ``[0, 1)``:

* probability gate: fire iff ``u < p``
* index into ``n`` items: ``min(floor(u * n), n - 1)``
* symmetric jitter: ``-a + 2 * a * u`` (consumed even when ``a == 0``)

Streams are split per record by their stable manifest index, so results do not
depend on worker count.  Conformance across implementations is checked with
fixture files of ``(seed, stream) -> first N draws``.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = ["UniformStream", "write_rng_fixture", "read_rng_fixture"]

_MASK64 = (1 << 64) - 1


class UniformStream:
    """One replayable stream of float64 uniforms in [0, 1)."""

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed) & _MASK64
        stream = int(stream)
        if stream < 0:
            raise ValueError(f"stream id must be non-negative, got {stream}")
        self.seed = seed
        self.stream = stream
        self._gen = np.random.Generator(
            np.random.Philox(key=seed, counter=stream << 192))
        self.n_drawn = 0

    def uniform(self) -> float:
        """Next double in [0, 1)."""
        self.n_drawn += 1
        return float(self._gen.random())

    def gate(self, p: float) -> bool:
        """Probability-p event; consumes one draw."""
        return self.uniform() < p

    def index(self, n: int) -> int:
        """Uniform index in [0, n); consumes one draw."""
        if n < 1:
            raise ValueError(f"index range must be >= 1, got {n}")
        return min(int(self.uniform() * n), n - 1)

    def symmetric(self, amplitude: float) -> float:
        """Uniform draw in [-amplitude, amplitude); consumes one draw."""
        return -amplitude + 2.0 * amplitude * self.uniform()


def write_rng_fixture(path, seeds, n_draws: int = 64, streams=(0, 1, 2)) -> None:
    """Emit a JSON-lines conformance fixture: first draws per (seed, stream)."""
    with open(path, "w", encoding="utf-8") as fh:
        for seed in seeds:
            for stream in streams:
                s = UniformStream(seed, stream)
                draws = [s.uniform() for _ in range(n_draws)]
                fh.write(json.dumps(
                    {"seed": int(seed), "stream": int(stream), "draws": draws}))
                fh.write("\n")


def read_rng_fixture(path) -> list:
    """Parse a fixture file into (seed, stream, draws) tuples."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            rows.append((int(obj["seed"]), int(obj["stream"]),
                         [float(v) for v in obj["draws"]]))
    return rows
