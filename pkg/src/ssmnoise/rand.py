"""Counter-based deterministic random streams.

Every draw is a pure function of (key, lane, counter), so noise realizations
are reproducible regardless of execution order, worker count, or which other
tensors were perturbed.  The generator is a SplitMix64-style bit mixer applied
to the counter stream, with the lane folded in through a second mixing round.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_LANE_SALT = np.uint64(0x1F123BB5159A55E5)
_KEY_SALT = np.uint64(0xD1B54A32D192ED03)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def hash_label(label: str) -> int:
    """Stable 64-bit FNV-1a hash of a label string (e.g. a tensor name)."""
    h = _FNV_OFFSET
    for b in label.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class RngStream:
    """Position in a counter-based random stream.

    key identifies the experiment (master seed), lane the sub-stream
    (typically derived from a tensor name and trial index), counter the
    offset within the lane.
    """

    key: int
    lane: int
    counter: int = 0

    def advance(self, n: int) -> "RngStream":
        return replace(self, counter=self.counter + n)


def stream_for(seed: int, label: str, trial: int = 0) -> RngStream:
    """Stream keyed by (seed, hash(label), trial)."""
    with np.errstate(over="ignore"):
        lane = np.uint64(hash_label(label)) + np.uint64(trial % 2**64) * _GAMMA
    return RngStream(key=seed % 2**64, lane=int(lane))


def _raw_u64(stream: RngStream, count: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        ctr = np.uint64(stream.counter % 2**64) + np.arange(count, dtype=np.uint64)
        key_g = _mix64(np.uint64(stream.key % 2**64) + _KEY_SALT)
        lane_g = _mix64(np.uint64(stream.lane % 2**64) + _LANE_SALT)
        return _mix64(_mix64(key_g + ctr * _GAMMA) ^ lane_g)


def uniform_draw(stream: RngStream, count: int) -> np.ndarray:
    """i.i.d. uniforms on the open interval (0, 1)."""
    bits = _raw_u64(stream, count)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normal_draw(stream: RngStream, count: int) -> np.ndarray:
    """i.i.d. standard normals via Box-Muller over the counter stream.

    Identical output for identical (key, lane, counter, count) on every run.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.empty(0, dtype=np.float64)
    pairs = (count + 1) // 2
    u = uniform_draw(stream, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log(u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]
