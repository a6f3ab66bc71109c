"""Deterministic, seed-derived random sources.

Every stochastic ingredient of a simulation (Brownian increments, jump
counts and marks, subordinator series terms) is drawn from a stream that
is a pure function of a (master_seed, path_index, stream_tag) triple.
Streams for distinct triples are statistically independent, and the
stream for a given triple is identical across runs, processes, and
thread counts, which is what makes parallel Monte Carlo reproducible.

Generators are counter-based (Philox) and derived through
``numpy.random.SeedSequence`` spawn keys, so no global RNG state exists
anywhere in the library.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StreamTag",
    "SeedSpec",
    "GaussianIncrement",
    "PathStreams",
    "derive_stream",
    "path_streams",
    "sample_gaussian_increment",
    "sample_poisson",
]


class StreamTag(enum.IntEnum):
    """Which noise source a stream feeds."""

    BROWNIAN = 0
    JUMPS = 1
    SUBORDINATOR = 2


_TAG_NAMES = {
    "brownian": StreamTag.BROWNIAN,
    "jumps": StreamTag.JUMPS,
    "subordinator": StreamTag.SUBORDINATOR,
}


def _coerce_tag(tag: "StreamTag | str | int") -> StreamTag:
    if isinstance(tag, StreamTag):
        return tag
    if isinstance(tag, str):
        try:
            return _TAG_NAMES[tag.lower()]
        except KeyError:
            raise ValueError(f"unknown stream tag {tag!r}") from None
    return StreamTag(tag)


@dataclass(frozen=True)
class SeedSpec:
    """Identity of one random stream.

    ``substream`` is an optional extension used when one logical path
    needs several independent variants of the same source (for example,
    one per step size in an uncoupled order study).  The empty tuple is
    the default and is what the plain per-path contract uses.
    """

    master_seed: int
    path_index: int = 0
    stream_tag: StreamTag = StreamTag.BROWNIAN
    substream: tuple = field(default=())

    def __post_init__(self):
        if self.path_index < 0:
            raise ValueError("path_index must be non-negative")
        object.__setattr__(self, "stream_tag", _coerce_tag(self.stream_tag))

    def spawn_key(self) -> tuple:
        return (self.path_index, int(self.stream_tag)) + tuple(self.substream)


@dataclass(frozen=True)
class GaussianIncrement:
    """A vector of iid N(0, delta) draws, one Brownian increment.

    ``scale`` carries sqrt(delta) so callers can recover the unit-normal
    draws without re-deriving the step size.
    """

    values: np.ndarray
    scale: float


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Build the generator for a seed triple.

    The output sequence is a pure function of the triple: the same spec
    always gives the same stream, and distinct triples give streams that
    are independent by construction of the underlying seed sequence.
    """
    ss = np.random.SeedSequence(seed.master_seed, spawn_key=seed.spawn_key())
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PathStreams:
    """The three independent sources one simulated path consumes."""

    brownian: np.random.Generator
    jumps: np.random.Generator
    subordinator: np.random.Generator


def path_streams(master_seed: int, path_index: int, substream: tuple = ()) -> PathStreams:
    """Derive the full stream bundle for one path index."""
    return PathStreams(
        brownian=derive_stream(
            SeedSpec(master_seed, path_index, StreamTag.BROWNIAN, substream)
        ),
        jumps=derive_stream(
            SeedSpec(master_seed, path_index, StreamTag.JUMPS, substream)
        ),
        subordinator=derive_stream(
            SeedSpec(master_seed, path_index, StreamTag.SUBORDINATOR, substream)
        ),
    )


def sample_gaussian_increment(
    stream: np.random.Generator, dim: int, delta: float
) -> GaussianIncrement:
    """Draw one m-dimensional Brownian increment over a step of size delta."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    scale = float(np.sqrt(delta))
    return GaussianIncrement(values=stream.standard_normal(dim) * scale, scale=scale)


def sample_poisson(stream: np.random.Generator, rate: float) -> int:
    """Draw a Poisson(rate) count; rate 0 degenerates to 0."""
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    if rate == 0:
        return 0
    return int(stream.poisson(rate))
