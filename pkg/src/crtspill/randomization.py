"""Cluster randomized assignment, realized trials and expectation oracles."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .population import PotentialTable

__all__ = [
    "DEFAULT_ENUMERATION_CAP",
    "EnumerationCapExceeded",
    "Design",
    "ObservedTrial",
    "replicate_rng",
    "sample_assignment",
    "enumerate_assignments",
    "realize",
    "exact_expectation",
    "monte_carlo",
]

DEFAULT_ENUMERATION_CAP = 10**6

SeedLike = Union[int, np.random.Generator, None]


class EnumerationCapExceeded(RuntimeError):
    """C(J, m) is larger than the enumeration cap; use Monte Carlo instead."""


@dataclass(frozen=True)
class Design:
    """Complete randomization of ``m`` out of ``J`` clusters to treatment."""

    J: int
    m: int

    def __post_init__(self):
        if not 0 < self.m < self.J:
            raise ValueError(f"design needs 0 < m < J, got J={self.J}, m={self.m}")

    @property
    def n_assignments(self) -> int:
        return math.comb(self.J, self.m)


@dataclass(frozen=True)
class ObservedTrial:
    """One realized trial: cluster assignments, receipts and outcomes."""

    z: tuple[int, ...]
    d: tuple[tuple[int, ...], ...]
    y: tuple[tuple[float, ...], ...]
    cluster_ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not (len(self.z) == len(self.d) == len(self.y)):
            raise ValueError("z, d and y must have one entry per cluster")
        for j, (dj, yj) in enumerate(zip(self.d, self.y)):
            if len(dj) != len(yj) or not dj:
                raise ValueError(f"cluster {j}: receipts and outcomes must be non-empty and equal length")
        if self.cluster_ids is not None and len(self.cluster_ids) != len(self.z):
            raise ValueError("cluster_ids must have one entry per cluster")

    @property
    def J(self) -> int:
        return len(self.z)

    @property
    def m(self) -> int:
        return sum(self.z)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(dj) for dj in self.d)

    @property
    def N(self) -> int:
        return sum(self.sizes)

    @property
    def design(self) -> Design:
        return Design(self.J, self.m)

    @cached_property
    def z_array(self) -> np.ndarray:
        return np.asarray(self.z, dtype=float)

    @cached_property
    def cluster_y(self) -> np.ndarray:
        return np.array([math.fsum(yj) for yj in self.y])

    @cached_property
    def cluster_d(self) -> np.ndarray:
        return np.array([float(sum(dj)) for dj in self.d])

    def is_binary(self) -> bool:
        return all(v in (0.0, 1.0) for yj in self.y for v in yj)

    def one_sided_violations(self) -> list[tuple[int, int]]:
        """(cluster, member) positions with receipt in a control cluster."""
        return [
            (j, i)
            for j, (zj, dj) in enumerate(zip(self.z, self.d))
            if not zj
            for i, dji in enumerate(dj)
            if dji
        ]

    def negated(self) -> "ObservedTrial":
        return ObservedTrial(self.z, self.d, tuple(tuple(-v for v in yj) for yj in self.y), self.cluster_ids)

    def canonical(self) -> tuple:
        """Trial with members sorted within each cluster, for label-free comparison."""
        return tuple(
            (zj, tuple(sorted(zip(dj, yj)))) for zj, dj, yj in zip(self.z, self.d, self.y)
        )


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent Philox stream for replicate ``replicate`` of a run seeded ``seed``.

    The stream depends only on ``(seed, replicate)``, so any scheduling of
    replicates reproduces the same draws.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def _as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def sample_assignment(design: Design, seed: SeedLike = None) -> tuple[int, ...]:
    """Draw ``z`` uniformly from the C(J, m) vectors with ``m`` ones."""
    rng = _as_rng(seed)
    treated = rng.choice(design.J, size=design.m, replace=False)
    z = [0] * design.J
    for j in treated:
        z[int(j)] = 1
    return tuple(z)


def enumerate_assignments(design: Design) -> Iterator[tuple[int, ...]]:
    """All assignments in ascending lexicographic order of ``z``."""
    J = design.J
    for zeros in itertools.combinations(range(J), J - design.m):
        z = [1] * J
        for j in zeros:
            z[j] = 0
        yield tuple(z)


def realize(pop: PotentialTable, z: Sequence[int]) -> ObservedTrial:
    z = tuple(int(v) for v in z)
    if len(z) != pop.J:
        raise ValueError(f"assignment has length {len(z)}, population has {pop.J} clusters")
    if any(v not in (0, 1) for v in z):
        raise ValueError("assignment entries must be 0 or 1")
    realized = pop._realized
    picked = [realized[j][zj] for j, zj in enumerate(z)]
    return ObservedTrial(z, tuple(p[0] for p in picked), tuple(p[1] for p in picked))


Statistic = Callable[[ObservedTrial], float]


def exact_expectation(
    pop: PotentialTable,
    design: Design,
    statistic: Statistic,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Average of ``statistic`` over every assignment, each with weight 1/C(J, m)."""
    if design.J != pop.J:
        raise ValueError("design and population disagree on the number of clusters")
    total = design.n_assignments
    if total > cap:
        raise EnumerationCapExceeded(f"C({design.J}, {design.m}) = {total} exceeds cap {cap}")
    values = [statistic(realize(pop, z)) for z in enumerate_assignments(design)]
    return math.fsum(values) / total


def monte_carlo(
    pop: PotentialTable,
    design: Design,
    statistic: Statistic,
    replications: int,
    seed: int,
) -> np.ndarray:
    """Statistic evaluated on ``replications`` independently drawn assignments.

    Replicate ``r`` draws its assignment from ``replicate_rng(seed, r)``.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if design.J != pop.J:
        raise ValueError("design and population disagree on the number of clusters")
    out = np.empty(replications)
    for r in range(replications):
        out[r] = statistic(realize(pop, sample_assignment(design, replicate_rng(seed, r))))
    return out
