"""Deterministic 64-bit PRNG used by all synthesis and shuffling code.

SplitMix64 (Steele, Lea & Flood's mix function) is small enough to be
re-implemented verbatim in any language, so datasets generated here are
byte-reproducible by ports.  Integer draws use plain modulo reduction;
the modulo bias is irrelevant at 64 bits and keeps the stream definition
trivial.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn from range(n), in draw order."""
        if k > n:
            raise ValueError("sample larger than population")
        picked: list[int] = []
        seen: set[int] = set()
        while len(picked) < k:
            i = self.randint(n)
            if i not in seen:
                seen.add(i)
                picked.append(i)
        return picked


def derive_seed(seed: int, tag: int) -> int:
    """Independent sub-stream seed for (seed, tag)."""
    return SplitMix64((seed ^ (tag * _GAMMA)) & MASK64).next_u64()
