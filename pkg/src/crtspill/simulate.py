"""Random and reference populations."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .population import AT, CO, DF, NT, Cluster, ComplianceType, IndividualScience, PotentialTable

__all__ = [
    "ASSUMPTION_FLAGS",
    "InfeasibleGenerator",
    "GeneratorParams",
    "random_population",
    "toy_a",
    "one_sided_template",
    "constant_effect_template",
    "tile",
]

# A2: assignment moves receipt (tau_D != 0); A4: no defiers;
# A4.1: compliers and never-takers only; A6: non-negative effects
ASSUMPTION_FLAGS = ("A2", "A4", "A4.1", "A6")


class InfeasibleGenerator(ValueError):
    """Generator parameters cannot satisfy the requested assumptions."""


@dataclass
class GeneratorParams:
    n_clusters: int = 4
    min_size: int = 1
    max_size: int = 4
    type_probs: dict = field(default_factory=lambda: {"complier": 0.5, "always_taker": 0.2, "never_taker": 0.3})
    outcome_mode: str = "real"
    require: tuple = ()
    max_tries: int = 1000

    def validate(self) -> None:
        if self.n_clusters < 1:
            raise InfeasibleGenerator("n_clusters must be >= 1")
        if not 1 <= self.min_size <= self.max_size:
            raise InfeasibleGenerator("cluster sizes need 1 <= min_size <= max_size")
        unknown = set(self.require) - set(ASSUMPTION_FLAGS)
        if unknown:
            raise InfeasibleGenerator(f"unknown assumptions {sorted(unknown)}; choose from {ASSUMPTION_FLAGS}")
        probs = self.probabilities()
        if "A2" in self.require and probs[CO] == 0 and probs[DF] == 0:
            raise InfeasibleGenerator("A2 needs compliers (or defiers) with positive probability")
        if "A2" in self.require and "A4" in self.require and probs[CO] == 0:
            raise InfeasibleGenerator("A2 with A4 needs compliers with positive probability")
        if "A4.1" in self.require and probs[NT] + probs[CO] == 0:
            raise InfeasibleGenerator("A4.1 allows only compliers and never-takers")

    def probabilities(self) -> dict[ComplianceType, float]:
        probs = {ComplianceType.from_label(k): float(v) for k, v in self.type_probs.items()}
        probs = {t: probs.get(t, 0.0) for t in (CO, AT, NT, DF)}
        if any(p < 0 for p in probs.values()):
            raise InfeasibleGenerator("type probabilities must be non-negative")
        if "A4" in self.require or "A4.1" in self.require:
            probs[DF] = 0.0
        if "A4.1" in self.require:
            probs[AT] = 0.0
        total = sum(probs.values())
        if total <= 0:
            raise InfeasibleGenerator("type probabilities sum to zero")
        return {t: p / total for t, p in probs.items()}


def _tables(rng: np.random.Generator, n: int, mode: str, nonneg: bool) -> tuple[list[float], list[float]]:
    if mode == "binary":
        if not nonneg:
            return [float(v) for v in rng.integers(0, 2, n)], [float(v) for v in rng.integers(0, 2, n)]
        # y(0, .) a step from 0 to 1; y(1, k) >= y(0, k)
        step = int(rng.integers(0, n + 1))
        y0 = [float(k >= step) for k in range(n)]
        y1 = [max(v, float(rng.integers(0, 2))) for v in y0]
        return y0, y1
    if not nonneg:
        return list(rng.normal(size=n)), list(rng.normal(size=n))
    y0 = list(np.cumsum(np.concatenate(([rng.normal()], rng.exponential(0.5, n - 1)))))
    y1 = [v + float(rng.exponential(1.0)) for v in y0]
    return y0, y1


def random_population(params: GeneratorParams, seed=None) -> PotentialTable:
    """Draw a population satisfying every assumption in ``params.require``.

    Types are drawn independently per individual; A2 is met by redrawing
    until ``tau_D != 0``.
    """
    params.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed))
    )
    probs = params.probabilities()
    kinds = list(probs)
    p = np.array([probs[k] for k in kinds])
    nonneg = "A6" in params.require
    for _ in range(params.max_tries):
        clusters = []
        for _ in range(params.n_clusters):
            n = int(rng.integers(params.min_size, params.max_size + 1))
            members = []
            for _ in range(n):
                t = kinds[int(rng.choice(len(kinds), p=p))]
                y0, y1 = _tables(rng, n, params.outcome_mode, nonneg)
                members.append(IndividualScience(t, y0, y1))
            clusters.append(Cluster(tuple(members)))
        pop = PotentialTable(tuple(clusters), params.outcome_mode)
        if "A2" not in params.require or pop.relevance_holds:
            return pop
    raise InfeasibleGenerator(f"no population met {params.require} in {params.max_tries} draws")


def toy_a() -> PotentialTable:
    """Two clusters of two: (complier, never-taker) and (complier, complier).

    Compliers have ``y(0, k) = 0`` and ``y(1, k) = 1``; the never-taker has
    ``y(0, 0) = 0`` and ``y(0, 1) = 1``.
    """
    co = IndividualScience(CO, (0.0, 0.0), (1.0, 1.0))
    nt = IndividualScience(NT, (0.0, 1.0), (0.0, 1.0))
    return PotentialTable((Cluster((co, nt)), Cluster((co, co))), "binary")


def _binary_member(ctype: ComplianceType, y0: Iterable[int], y1: Iterable[int]) -> IndividualScience:
    return IndividualScience(ctype, tuple(float(v) for v in y0), tuple(float(v) for v in y1))


def one_sided_template() -> PotentialTable:
    """A fixed binary, one-sided block of four clusters that meets A6.

    Used (replicated) for the consistency, pivotality and coverage studies.
    True values: 11 compliers and 7 never-takers out of 18 individuals.
    """
    def co(step0, y1):
        n = len(y1)
        return _binary_member(CO, [int(k >= step0) for k in range(n)], y1)

    def nt(step0, n):
        return _binary_member(NT, [int(k >= step0) for k in range(n)], [int(k >= step0) for k in range(n)])

    c1 = Cluster((co(5, [1, 1, 0, 1, 1]), co(5, [0, 1, 1, 1, 1]), co(5, [0, 0, 1, 1, 1]), nt(2, 5), nt(9, 5)))
    c2 = Cluster((co(4, [1, 1, 1, 1]), co(4, [0, 0, 1, 1]), nt(1, 4), nt(3, 4)))
    c3 = Cluster((co(3, [1, 1, 1]), co(3, [0, 1, 1]), co(3, [0, 0, 0])))
    c4 = Cluster((co(6, [0, 1, 1, 1, 1, 1]), co(6, [1, 1, 1, 1, 1, 1]), co(6, [0, 0, 0, 1, 1, 1]),
                  nt(2, 6), nt(4, 6), nt(7, 6)))
    return PotentialTable((c1, c2, c3, c4), "binary")


def constant_effect_template() -> PotentialTable:
    """A binary, one-sided A6 block whose clusters all satisfy
    ``Y_j(1) - Y_j(0) = tau * D_j(1)`` with ``tau = 1/2``.

    The adjusted outcome then has the same effect in every cluster, which
    makes the difference-in-means variance estimator unbiased; complier
    counts still vary across clusters, so the plug-in ``r_hat`` is random.
    True values: x = 1/4, y = 2/5, tau = 1/2, 10 compliers and 4 never-takers.
    """
    def const(ctype, n, v):
        return _binary_member(ctype, [v] * n, [v] * n)

    def treated_only(n):  # complier with total effect 1
        return _binary_member(CO, [0] * n, [1] * n)

    k1 = Cluster((treated_only(2), const(CO, 2, 0)))
    k2 = Cluster((const(CO, 4, 0), const(CO, 4, 1), _binary_member(NT, [0, 0, 1, 1], [0, 0, 1, 1]), const(NT, 4, 1)))
    k3 = Cluster((treated_only(4), treated_only(4), const(CO, 4, 0), const(CO, 4, 1)))
    k4 = Cluster((treated_only(4), const(CO, 4, 0), const(NT, 4, 0), const(NT, 4, 1)))
    return PotentialTable((k1, k2, k3, k4), "binary")


def tile(pop: PotentialTable, J: int) -> PotentialTable:
    """Cycle through ``pop``'s clusters until there are ``J`` of them."""
    if J < 1:
        raise ValueError("J must be >= 1")
    return PotentialTable(tuple(pop.clusters[j % pop.J] for j in range(J)), pop.outcome_mode)
