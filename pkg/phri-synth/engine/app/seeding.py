"""Deterministic 64-bit seed streams shared by the interpreter and the collector."""

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    value = FNV_OFFSET
    for byte in text.encode("utf-8"):
        value ^= byte
        value = (value * FNV_PRIME) & MASK64
    return value


def mix64(value: int) -> int:
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 stream; ``next_float`` maps the top 53 bits to [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()


def episode_seed(master_seed: int, attempt: int) -> int:
    """Seed of the ``attempt``-th episode: the attempt-th output of the master stream."""
    return mix64((master_seed + (attempt + 1) * GOLDEN_GAMMA) & MASK64)


def derive_seed(seed: int, label: str) -> int:
    return mix64((seed ^ fnv1a64(label)) & MASK64)


def frame_seed(seed: int, frame: int) -> int:
    return mix64((seed ^ frame) & MASK64)
