"""Named, independent random substreams from one master seed.

Every stochastic consumer in the package (site initialization, event
selection, residence times, episode resets, ...) pulls from its own
counter-based stream so that consuming one stream never shifts another.
That property is what makes trajectory outputs byte-reproducible even when
optional consumers (snapshots, audits) are toggled on and off.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Stream names used across the package. Free-form names are allowed too;
# these constants just keep call sites typo-safe.
INIT = "init"
SELECT = "select"
RESIDENCE = "residence"
EPISODE = "episode"
WEIGHTS = "weights"
SHUFFLE = "shuffle"


def _spawn_key(name: str) -> tuple[int, ...]:
    # Stable 128-bit digest of the stream name, split into 32-bit words so
    # it fits SeedSequence's spawn-key entries.
    digest = hashlib.sha256(name.encode("utf-8")).digest()[:16]
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, name: str) -> np.random.Generator:
    """Return the named Philox generator for (seed, name).

    Same (seed, name) always yields the same stream; distinct names yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=_spawn_key(name))
    return np.random.Generator(np.random.Philox(ss))


class StreamSet:
    """Lazy bundle of named substreams sharing one master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = substream(self.seed, name)
        return self._streams[name]

    def state(self) -> dict:
        """Bit-exact states of every stream touched so far."""
        return {name: gen.bit_generator.state for name, gen in self._streams.items()}

    def restore(self, state: dict) -> None:
        for name, bg_state in state.items():
            gen = self.get(name)
            gen.bit_generator.state = bg_state
