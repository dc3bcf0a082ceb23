"""Seed-derived random streams and the per-slot samplers."""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instance import ConstraintSpec, Model, NegatedArrivalFraction, Sign

RandomStream = np.random.Generator


class SignViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class StreamSeed:
    """Master seed plus a label path naming the consumer of a stream."""

    master_seed: int
    labels: tuple[tuple[str, int], ...] = ()

    def child(self, tag: str, index: int = 0) -> "StreamSeed":
        return StreamSeed(self.master_seed, self.labels + ((tag, int(index)),))

    def stream(self) -> RandomStream:
        return derive_stream(self.master_seed, self.labels)


def _spawn_key(labels: Sequence[tuple[str, int]]) -> tuple[int, ...]:
    key: list[int] = []
    for tag, index in labels:
        # crc32 rather than hash(): stable across interpreter runs
        key.extend((zlib.crc32(tag.encode("utf-8")), int(index)))
    return tuple(key)


def derive_stream(master_seed: int, labels: Sequence[tuple[str, int]]) -> RandomStream:
    """Independent generator for ``(master_seed, labels)``.

    Equal arguments always give the same sequence; different label paths map
    to different SeedSequence spawn keys.
    """
    if not labels:
        raise ValueError("labels must be non-empty")
    ss = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=_spawn_key(labels))
    return np.random.Generator(np.random.PCG64(ss))


def sample_arrivals(models: Sequence[Model], stream: RandomStream, n_slots: int | None = None) -> np.ndarray:
    """Arrival counts: shape (N,) for one slot, (n_slots, N) for a block of slots."""
    size = None if n_slots is None else (n_slots,)
    cols = [np.asarray(m.sample(stream, size)) for m in models]
    return np.stack(cols, axis=-1).astype(np.int64)


def sample_rewards(model: Model, count: int, stream: RandomStream) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return np.empty(0)
    return np.asarray(model.sample(stream, (count,)), dtype=float)


def _realize(model: Model, arrivals: np.ndarray, stream: RandomStream) -> np.ndarray:
    if isinstance(model, NegatedArrivalFraction):
        return model.realize(arrivals)
    return np.asarray(model.sample(stream, arrivals.shape[:-1] or None), dtype=float)


def sample_constraint_realization(spec: ConstraintSpec, arrivals: np.ndarray, stream: RandomStream,
                                  family_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Realized weights ``W`` (..., N, M) and requirements ``rho`` (..., M).

    ``arrivals`` is either one slot (N,) or a block (T, N); the leading shape
    of the outputs follows it. Requirement models see the same slot's arrivals.
    """
    arrivals = np.asarray(arrivals)
    lead = arrivals.shape[:-1]
    n = len(spec.weight_models)
    m = len(spec.requirement_models)
    W = np.empty(lead + (n, m))
    for i, row in enumerate(spec.weight_models):
        for j, model in enumerate(row):
            W[..., i, j] = _realize(model, arrivals, stream)
    rho = np.empty(lead + (m,))
    for j, model in enumerate(spec.requirement_models):
        rho[..., j] = _realize(model, arrivals, stream)

    bad = W < 0 if spec.sign is Sign.NON_NEGATIVE else W > 0
    if bad.any():
        i, j = np.argwhere(bad.reshape(-1, n, m).any(axis=0))[0]
        raise SignViolation(f"constraint {family_index} ({spec.name}) weight ({i},{j}) "
                            f"violates declared sign {spec.sign.value}")
    return W, rho
