"""Named, reproducible random substreams.

Every random decision in the pipeline draws from an :class:`RngStream`
identified by ``(master_seed, stage_label, index)``. The triple is hashed
with BLAKE2b into the entropy of a numpy ``SeedSequence`` driving a PCG64
bit generator, so

* the same triple always yields the same sequence on a given build, and
* streams with different labels are independent: drawing from one never
  shifts another.

The derivation is versioned by :data:`DERIVATION_VERSION`; changing it is an
algorithmic change and invalidates golden files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

DERIVATION_VERSION = "lunarforge-rng1"

_MASK64 = (1 << 64) - 1


def derive_entropy(master_seed: int, stage_label: str, index: int = 0) -> int:
    """Hash a stream identity into a 256-bit integer."""
    h = hashlib.blake2b(digest_size=32, person=DERIVATION_VERSION.encode())
    h.update((master_seed & _MASK64).to_bytes(8, "little"))
    h.update((index & _MASK64).to_bytes(8, "little"))
    h.update(stage_label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Value-type handle on a deterministic random sequence.

    Calling :meth:`generator` twice returns two generators that replay the
    same numbers; forking a divergent stream requires a new label or index
    (see :meth:`child`).
    """

    master_seed: int
    stage_label: str
    index: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.master_seed, (int, np.integer)):
            raise TypeError("master_seed must be an integer")
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            derive_entropy(self.master_seed, self.stage_label, self.index)
        )
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, suffix: str, index: int | None = None) -> RngStream:
        """Stream for a sub-stage, labelled ``<stage_label>/<suffix>``."""
        label = f"{self.stage_label}/{suffix}" if self.stage_label else suffix
        return RngStream(self.master_seed, label, self.index if index is None else index)


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
