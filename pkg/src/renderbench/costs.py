"""Seeded stage-cost distributions.

Stage costs stand in for real game workloads: every duration or size is
drawn from a constant, uniform(lo, hi), or normal(mu, sigma) distribution
(normal truncated at 0). Samples are integer nanoseconds (or bytes) and are
reproducible from a seed; independent streams are derived by name so adding
a consumer never perturbs another's sequence.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from renderbench.errors import ConfigError


def derive_seed(root_seed: int, *names) -> int:
    digest = hashlib.sha256(
        ("/".join([str(root_seed), *map(str, names)])).encode()
    ).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(root_seed: int, *names) -> random.Random:
    return random.Random(derive_seed(root_seed, *names))


@dataclass(frozen=True)
class Dist:
    """A sampleable distribution over non-negative integers."""

    kind: str  # constant | uniform | normal
    a: float = 0.0
    b: float = 0.0

    @staticmethod
    def constant(value: float) -> "Dist":
        return Dist("constant", float(value))

    @staticmethod
    def uniform(lo: float, hi: float) -> "Dist":
        if hi < lo:
            raise ConfigError(f"uniform bounds reversed: [{lo}, {hi}]")
        return Dist("uniform", float(lo), float(hi))

    @staticmethod
    def normal(mu: float, sigma: float) -> "Dist":
        if sigma < 0:
            raise ConfigError(f"normal sigma {sigma} < 0")
        return Dist("normal", float(mu), float(sigma))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def constant_value(self) -> int:
        if not self.is_constant:
            raise ConfigError(f"{self.kind} distribution has no constant value")
        return int(round(self.a))

    def mean(self) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "uniform":
            return (self.a + self.b) / 2
        return self.a

    def sample(self, rng: random.Random) -> int:
        if self.kind == "constant":
            value = self.a
        elif self.kind == "uniform":
            value = rng.uniform(self.a, self.b)
        else:
            value = rng.gauss(self.a, self.b)
        return max(0, int(round(value)))

    def validate_nonnegative(self, what: str) -> None:
        if self.kind in ("constant", "uniform") and self.a < 0:
            raise ConfigError(f"{what}: negative values not allowed")
        if self.kind == "normal" and self.a < 0:
            raise ConfigError(f"{what}: negative mean not allowed")


class Sampler:
    """A Dist bound to its own deterministic RNG stream."""

    def __init__(self, dist: Dist, root_seed: int, *names):
        self.dist = dist
        self._rng = derive_rng(root_seed, *names)

    def __call__(self) -> int:
        return self.dist.sample(self._rng)


@dataclass(frozen=True)
class StageCostModel:
    """Per-instance workload shape: AL time, render time, frame size.

    Durations are nanoseconds, frame size is bytes (the size used for
    transfer timing; the actual pixel buffer is width*height*4).
    """

    al: Dist
    rd: Dist
    frame_bytes: Dist

    def __post_init__(self):
        self.al.validate_nonnegative("al")
        self.rd.validate_nonnegative("rd")
        self.frame_bytes.validate_nonnegative("frame_bytes")

    @property
    def is_constant(self) -> bool:
        return all(d.is_constant for d in (self.al, self.rd, self.frame_bytes))
