"""Monte Carlo estimates and order-independent reductions."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Estimate:
    """Value with standard error, sample count and seed provenance."""

    value: float
    stderr: float
    samples: int
    seed: str = ""

    def __post_init__(self):
        if not self.stderr >= 0 and not math.isnan(self.stderr):
            raise ValueError("stderr must be non-negative")

    @classmethod
    def exact(cls, value: float, seed: str = "") -> "Estimate":
        return cls(float(value), 0.0, 0, seed)

    @classmethod
    def from_samples(cls, x, seed: str = "") -> "Estimate":
        """Mean and i.i.d. standard error; sums are exact-rounded (fsum)."""
        x = np.asarray(x, dtype=float).ravel()
        n = x.size
        if n == 0:
            return cls(float("nan"), float("nan"), 0, seed)
        m = math.fsum(x) / n
        if n == 1:
            return cls(m, float("nan"), 1, seed)
        var = math.fsum((x - m) ** 2) / (n - 1)
        return cls(m, math.sqrt(var / n), n, seed)

    @classmethod
    def from_batches(cls, x, batches: int = 20, seed: str = "") -> "Estimate":
        """Batch-means error for correlated (nested) samples."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size < 2 * batches:
            return cls.from_samples(x, seed)
        parts = np.array_split(x, batches)
        means = [math.fsum(p) / p.size for p in parts]
        e = cls.from_samples(means, seed)
        return cls(math.fsum(x) / x.size, e.stderr, x.size, seed)

    @property
    def interval(self) -> tuple[float, float]:
        return self.value - 3 * self.stderr, self.value + 3 * self.stderr

    def scaled(self, c: float) -> "Estimate":
        return Estimate(self.value * c, self.stderr * abs(c), self.samples, self.seed)

    def zscore(self, other) -> float:
        if isinstance(other, Estimate):
            se = math.hypot(self.stderr, other.stderr)
            diff = self.value - other.value
        else:
            se = self.stderr
            diff = self.value - float(other)
        if se == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / se

    def agrees(self, other, k: float = 3.0) -> bool:
        return abs(self.zscore(other)) <= k

    def as_dict(self) -> dict:
        return asdict(self)

    def __str__(self) -> str:
        return f"{self.value:.6g} +- {self.stderr:.2g} (n={self.samples})"


def ratio(a: Estimate, b: Estimate) -> Estimate:
    """Delta-method ratio of independent estimates."""
    r = a.value / b.value
    rel = math.hypot(a.stderr / a.value if a.value else 0.0, b.stderr / b.value)
    return Estimate(r, abs(r) * rel, min(a.samples, b.samples), a.seed)


def thread_count() -> int:
    env = os.environ.get("CRITLAT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def chunk_ranges(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def parallel_map(fn: Callable[[int, int], np.ndarray], n: int, chunk: int = 1024,
                 workers: int | None = None) -> np.ndarray:
    """Evaluate ``fn(lo, hi)`` over index chunks and concatenate in index order.

    ``fn`` must be a pure function of its index range (per-index seeds), so
    the result is identical for every worker count.
    """
    ranges = chunk_ranges(n, chunk)
    if not ranges:
        return np.zeros(0)
    workers = workers or thread_count()
    if workers == 1 or len(ranges) == 1:
        parts = [fn(a, b) for a, b in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: fn(*r), ranges))
    return np.concatenate(parts, axis=0)


def fsum_mean(x: Sequence[float]) -> float:
    x = list(x)
    return math.fsum(x) / len(x) if x else float("nan")
