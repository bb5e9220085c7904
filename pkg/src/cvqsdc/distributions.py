"""Amplitude and message distributions used to drive protocol runs.

Distributions are written in config files as ``uniform:LOW:HIGH`` or
``constant:VALUE``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate


class Distribution:
    """Base class; subclasses provide ``sample`` and ``expect``.

    The moment helpers fall back to quadrature through ``expect`` and are
    overridden with closed forms where those exist.
    """

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def expect(self, func) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        return self.expect(lambda v: v)

    def second_moment(self) -> float:
        return self.expect(lambda v: v * v)

    def mean_sqrt(self) -> float:
        return self.expect(np.sqrt)

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float
    high: float

    def __post_init__(self):
        if not self.high >= self.low:
            raise ValueError(f"uniform distribution needs low <= high, got [{self.low}, {self.high}]")

    @property
    def support(self):
        return (self.low, self.high)

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def expect(self, func):
        if self.high == self.low:
            return float(func(self.low))
        val, _ = integrate.quad(func, self.low, self.high)
        return val / (self.high - self.low)

    def mean(self):
        return 0.5 * (self.low + self.high)

    def second_moment(self):
        a, b = self.low, self.high
        return (a * a + a * b + b * b) / 3.0

    def mean_sqrt(self):
        a, b = self.low, self.high
        if a < 0:
            raise ValueError("mean_sqrt needs a non-negative support")
        if a == b:
            return float(np.sqrt(a))
        return (2.0 / 3.0) * (b ** 1.5 - a ** 1.5) / (b - a)

    def __str__(self):
        return f"uniform:{self.low!r}:{self.high!r}"


@dataclass(frozen=True)
class Constant(Distribution):
    value: float

    @property
    def support(self):
        return (self.value, self.value)

    def sample(self, rng, size):
        # consumes the same number of draws as a uniform so seeds stay aligned
        rng.uniform(0.0, 1.0, size)
        return np.full(size, float(self.value))

    def expect(self, func):
        return float(func(self.value))

    def mean(self):
        return float(self.value)

    def second_moment(self):
        return float(self.value) ** 2

    def mean_sqrt(self):
        return float(np.sqrt(self.value))

    def __str__(self):
        return f"constant:{self.value!r}"


def parse_distribution(text: str) -> Distribution:
    kind, _, rest = text.strip().partition(":")
    args = [float(a) for a in rest.split(":")] if rest else []
    kind = kind.lower()
    if kind == "uniform" and len(args) == 2:
        return Uniform(*args)
    if kind == "constant" and len(args) == 1:
        return Constant(*args)
    raise ValueError(f"cannot parse distribution {text!r}; expected uniform:LOW:HIGH or constant:VALUE")
