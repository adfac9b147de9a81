"""Seedable PRNG exposed as a stream of 16-bit words, plus the masked
rejection draw used to pick random backoff values.

The generator is SplitMix64; each 64-bit output contributes its low 16 bits
to the word stream.  Backoff draws consume words in a fixed order, so two
runs with the same seed consume identical word sequences.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

# Defect detector only: the rejection loop accepts with probability > 1/2
# per iteration, so hitting this bound means the word source is broken.
_REJECTION_PANIC_BOUND = 10**6


class Word16Source:
    """SplitMix64 stream viewed as 16-bit words (low 16 bits per output)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_word(self) -> int:
        """Next 16-bit word."""
        return self.next_u64() & 0xFFFF

    def next_float(self) -> float:
        """Uniform in [0, 1); uses a full 64-bit output (53 bits kept)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def derive_seed(seed: int, *salts: int) -> int:
    """Deterministically split one seed into independent stream seeds."""
    z = seed & _MASK64
    for s in salts:
        z = (z ^ (s & _MASK64)) * 0x2545F4914F6CDD1D & _MASK64
        z = (z ^ (z >> 29)) & _MASK64
    # One extra mix so that salt (0,) differs from no salt.
    z = (z * 0x9E3779B97F4A7C15 + 1) & _MASK64
    return z


def mask_for(cw: int) -> int:
    """Smallest 2^x - 1 that is >= cw."""
    if cw < 0:
        raise ValueError(f"cw must be non-negative, got {cw}")
    return (1 << cw.bit_length()) - 1


def draw_backoff(cw: int, rng: Word16Source) -> int:
    """Uniform integer in [0, cw] via mask-and-reject on 16-bit words.

    Each candidate word is ANDed with the smallest 2^x - 1 >= cw; masked
    values above cw are rejected and a fresh word is taken.  Word
    consumption order is part of the determinism contract.
    """
    if not 0 <= cw <= 0xFFFF:
        raise ValueError(f"cw out of range [0, 65535]: {cw}")
    mask = mask_for(cw)
    for _ in range(_REJECTION_PANIC_BOUND):
        h = rng.next_word() & mask
        if h <= cw:
            return h
    raise RuntimeError("rejection sampling failed to terminate; bad word source")
