"""Counter-based deterministic randomness.

Every draw is a pure function of (global seed, stream name, key, tick).
No generator state exists, so adding or removing draws in one stream can
never shift the values seen by another -- the property that makes
single-factor counterfactual runs share bit-identical prefixes.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a over raw bytes; also used for trace hashing."""
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a strong stateless 64-bit mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def draw(seed: int, stream: str, key: str, tick: int) -> int:
    """64-bit value for the derivation tuple; independent of call order."""
    h = fnv1a64(stream.encode("utf-8"))
    h = fnv1a64(b"\x00" + key.encode("utf-8"), h)
    x = (seed & MASK64) ^ h ^ ((tick & MASK64) * 0xD1B54A32D192ED03 & MASK64)
    return splitmix64(x)


def uniform(seed: int, stream: str, key: str, tick: int) -> float:
    """Map a draw to [0, 1) with 53 bits of precision."""
    return (draw(seed, stream, key, tick) >> 11) * (1.0 / (1 << 53))
