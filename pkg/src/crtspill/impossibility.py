"""Two populations that no estimator can tell apart but whose subgroup sums differ.

In cluster 0, two designated members swap compliance roles between the
populations ``F`` and ``F'`` (always-taker with complier for the complier
total effect and always-taker spillover sums; never-taker with complier for
the never-taker spillover sum). Subgroup counts stay the same in every
cluster. The outcome tables are then adjusted so that every observable
entry lines up, while the entries the target sum depends on, but no
assignment reveals, differ by ``delta``.

Canonical outcome choice (many others work): integer entries drawn from
``seed``; with ``a`` always-takers and ``c`` compliers in cluster 0,
``s = a + c - 1`` and members ``u`` (index 0) and ``v`` (index 1):

* ``te_co``: ``F``: u=AT, v=CO, ``y_u(1, s) = y_v(1, s) + delta``;
  ``F'``: u=CO with ``y_u(0, a) := y_v(0, a)``, v=AT with
  ``y_v(1, a-1) := y_u(1, a-1)``.
* ``pe_at``: as ``te_co`` but ``y_v(1, s) = y_u(1, s) + delta``.
* ``pe_nt``: ``F``: u=NT, v=CO, ``y_u(0, a) = y_v(0, a) + delta``;
  ``F'``: u=CO with ``y_u(1, s) := y_v(1, s)``, v=NT with
  ``y_v(0, a+c) := y_u(0, a+c)``.

Observed data are compared after sorting members within each cluster, so
the equality covers every statistic that does not depend on arbitrary
member labels.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .population import (
    AT,
    CO,
    NT,
    Cluster,
    IndividualScience,
    PotentialTable,
    subgroup_sums,
)
from .randomization import (
    DEFAULT_ENUMERATION_CAP,
    Design,
    EnumerationCapExceeded,
    ObservedTrial,
    enumerate_assignments,
    exact_expectation,
    realize,
)

__all__ = [
    "TARGETS",
    "CounterexamplePair",
    "Verdict",
    "build_counterexample",
    "verify_counterexample",
    "random_symmetric_statistic",
]

TARGETS = {"te_co": "te_co_sum", "pe_at": "pe_at_sum", "pe_nt": "pe_nt_sum"}


@dataclass(frozen=True)
class CounterexamplePair:
    pop_F: PotentialTable
    pop_Fprime: PotentialTable
    target: str
    estimand_gap: float
    swapped: tuple[int, int] = (0, 1)


def _random_table(rng: np.random.Generator, n: int) -> tuple[list[float], list[float]]:
    return [float(v) for v in rng.integers(0, 4, n)], [float(v) for v in rng.integers(0, 4, n)]


def build_counterexample(
    target: str,
    cluster_sizes: Sequence[int],
    seed: Optional[int] = 0,
    delta: float = 1.0,
) -> CounterexamplePair:
    """Construct ``F`` and ``F'`` for one of the targets ``te_co``, ``pe_at``, ``pe_nt``."""
    if target not in TARGETS:
        raise ValueError(f"target must be one of {sorted(TARGETS)}, got {target!r}")
    sizes = [int(n) for n in cluster_sizes]
    if not sizes or sizes[0] < 2:
        raise ValueError("cluster 0 needs at least two members to swap")
    if any(n < 1 for n in sizes):
        raise ValueError("every cluster needs at least one member")
    if delta == 0:
        raise ValueError("delta must be non-zero")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    kinds = [CO, AT, NT]

    types = [[kinds[int(k)] for k in rng.integers(0, 3, n)] for n in sizes]
    tables = [[_random_table(rng, n) for _ in range(n)] for n in sizes]
    first_u = NT if target == "pe_nt" else AT
    types[0][0], types[0][1] = first_u, CO

    a = types[0].count(AT)
    c = types[0].count(CO)
    s = a + c - 1
    (u0, u1), (v0, v1) = tables[0][0], tables[0][1]
    if target == "te_co":
        u1[s] = v1[s] + delta
    elif target == "pe_at":
        v1[s] = u1[s] + delta
    else:
        u0[a] = v0[a] + delta

    # F': same tables except the aligned observable entries
    up0, up1, vp0, vp1 = list(u0), list(u1), list(v0), list(v1)
    if target == "pe_nt":
        up1[s] = v1[s]
        vp0[a + c] = u0[a + c]
    else:
        up0[a] = v0[a]
        vp1[a - 1] = u1[a - 1]

    def build(first_types, first_tables):
        clusters = []
        for j, n in enumerate(sizes):
            ctypes = first_types if j == 0 else types[j]
            ctables = first_tables if j == 0 else tables[j]
            clusters.append(
                Cluster(tuple(IndividualScience(t, y0, y1) for t, (y0, y1) in zip(ctypes, ctables)))
            )
        return PotentialTable(tuple(clusters), "real")

    pop_F = build(types[0], tables[0])
    types_p = list(types[0])
    types_p[0], types_p[1] = CO, first_u
    tables_p = list(tables[0])
    tables_p[0], tables_p[1] = (up0, up1), (vp0, vp1)
    pop_Fp = build(types_p, tables_p)
    return CounterexamplePair(pop_F, pop_Fp, target, float(delta))


@dataclass(frozen=True)
class Verdict:
    target: str
    n_assignments: int
    sequence_equal: bool
    multiset_equal: bool
    raw_equal: bool
    estimand_F: float
    estimand_Fprime: float
    gap: float
    expected_gap: float
    counts_preserved: bool

    @property
    def distributions_equal(self) -> bool:
        return self.sequence_equal and self.multiset_equal

    @property
    def confirmed(self) -> bool:
        return self.distributions_equal and self.gap != 0 and self.gap == self.expected_gap

    @property
    def conclusion(self) -> str:
        if not self.distributions_equal:
            return "rejected: observed-data distributions differ"
        if self.gap == 0:
            return "not a counterexample: estimands coincide"
        if self.gap != self.expected_gap:
            return "rejected: estimand gap differs from the constructed gap"
        return "counterexample confirmed"

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "n_assignments": self.n_assignments,
            "distributions_equal": self.distributions_equal,
            "sequence_equal": self.sequence_equal,
            "multiset_equal": self.multiset_equal,
            "raw_equal": self.raw_equal,
            "counts_preserved": self.counts_preserved,
            "estimand_F": self.estimand_F,
            "estimand_Fprime": self.estimand_Fprime,
            "gap": self.gap,
            "expected_gap": self.expected_gap,
            "confirmed": self.confirmed,
            "conclusion": self.conclusion,
            "implication": (
                "every label-invariant statistic has the same expectation under F and F'; "
                "it cannot be unbiased for the target under both"
            ),
        }


def _counts(pop: PotentialTable) -> list[tuple[int, int, int]]:
    return [(c.count(CO), c.count(AT), c.count(NT)) for c in pop.clusters]


def verify_counterexample(
    pair: CounterexamplePair,
    design: Design,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> Verdict:
    """Enumerate all assignments and compare observed data and target sums."""
    F, Fp = pair.pop_F, pair.pop_Fprime
    if F.J != design.J or Fp.J != design.J:
        raise ValueError("design and populations disagree on the number of clusters")
    if design.n_assignments > cap:
        raise EnumerationCapExceeded(f"C({design.J}, {design.m}) = {design.n_assignments} exceeds cap {cap}")
    seq_equal = raw_equal = True
    bag_F, bag_Fp = Counter(), Counter()
    for z in enumerate_assignments(design):
        t, tp = realize(F, z), realize(Fp, z)
        cf, cfp = t.canonical(), tp.canonical()
        seq_equal &= cf == cfp
        raw_equal &= (t.d, t.y) == (tp.d, tp.y)
        bag_F[cf] += 1
        bag_Fp[cfp] += 1
    key = TARGETS[pair.target]
    est_F, est_Fp = subgroup_sums(F)[key], subgroup_sums(Fp)[key]
    return Verdict(
        target=pair.target,
        n_assignments=design.n_assignments,
        sequence_equal=seq_equal,
        multiset_equal=bag_F == bag_Fp,
        raw_equal=raw_equal,
        estimand_F=est_F,
        estimand_Fprime=est_Fp,
        gap=est_Fp - est_F,
        expected_gap=pair.estimand_gap,
        counts_preserved=_counts(F) == _counts(Fp),
    )


def random_symmetric_statistic(rng: np.random.Generator) -> Callable[[ObservedTrial], float]:
    """A random nonlinear statistic of the within-cluster-sorted observed data."""
    w = rng.normal(size=4)
    p = float(rng.uniform(0.5, 2.0))

    def stat(trial: ObservedTrial) -> float:
        total = 0.0
        for j, (zj, members) in enumerate(trial.canonical()):
            for rank, (d, y) in enumerate(members):
                total += (w[0] + w[1] * zj + w[2] * d * (j + 1)) * abs(y + w[3]) ** p / (rank + 1)
        return float(np.tanh(total / 10.0) + total**2 / 100.0)

    return stat


def expectation_gap(pair: CounterexamplePair, design: Design, statistic, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """E[T | F'] - E[T | F] by exact enumeration."""
    return exact_expectation(pair.pop_Fprime, design, statistic, cap) - exact_expectation(
        pair.pop_F, design, statistic, cap
    )
