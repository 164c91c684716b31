"""Finite-population potential outcomes under partial and stratified interference.

Every individual carries a compliance type and an outcome table ``y(d, k)``
indexed by own receipt ``d`` and the number ``k`` of treated peers in the
same cluster. Cluster assignment never enters the table directly, so the
network exclusion restriction holds by construction.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

__all__ = [
    "AssumptionViolation",
    "ComplianceType",
    "IndividualScience",
    "Cluster",
    "PotentialTable",
    "EstimandReport",
    "classify",
    "natural_receipt",
    "realized_outcome",
    "true_itt",
    "subgroup_sums",
    "true_estimands",
    "mixture_rhs",
]


class AssumptionViolation(ValueError):
    """A population does not meet the assumptions an operation needs."""


class ComplianceType(enum.Enum):
    """Compliance type, valued by the receipt pair ``(D(1), D(0))``."""

    COMPLIER = (1, 0)
    ALWAYS_TAKER = (1, 1)
    NEVER_TAKER = (0, 0)
    DEFIER = (0, 1)

    @property
    def d1(self) -> int:
        return self.value[0]

    @property
    def d0(self) -> int:
        return self.value[1]

    def receipt(self, z: int) -> int:
        return self.d1 if z else self.d0

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ComplianceType":
        key = label.strip().upper().replace("-", "_")
        aliases = {"CO": "COMPLIER", "AT": "ALWAYS_TAKER", "NT": "NEVER_TAKER", "DF": "DEFIER"}
        key = aliases.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown compliance type {label!r}") from None


CO = ComplianceType.COMPLIER
AT = ComplianceType.ALWAYS_TAKER
NT = ComplianceType.NEVER_TAKER
DF = ComplianceType.DEFIER


def classify(d1: int, d0: int) -> ComplianceType:
    """Return the compliance type with potential receipts ``(d1, d0)``."""
    if d1 not in (0, 1) or d0 not in (0, 1):
        raise ValueError(f"receipts must be bits, got ({d1}, {d0})")
    return ComplianceType((d1, d0))


@dataclass(frozen=True)
class IndividualScience:
    """Compliance type plus the outcome table ``y(d, k)``.

    ``y0[k]`` is the outcome when the individual does not take treatment
    and ``k`` peers do; ``y1[k]`` likewise when the individual takes it.
    """

    compliance: ComplianceType
    y0: tuple[float, ...]
    y1: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "y0", tuple(float(v) for v in self.y0))
        object.__setattr__(self, "y1", tuple(float(v) for v in self.y1))
        if len(self.y0) != len(self.y1) or not self.y0:
            raise ValueError("outcome table rows y(0, .) and y(1, .) must be non-empty and equal length")
        if not all(math.isfinite(v) for v in self.y0 + self.y1):
            raise ValueError("outcome table entries must be finite")

    @property
    def n_peers(self) -> int:
        return len(self.y0) - 1

    def outcome(self, d: int, k: int) -> float:
        if not 0 <= k < len(self.y0):
            raise IndexError(f"peer count {k} outside 0..{len(self.y0) - 1}")
        return self.y1[k] if d else self.y0[k]

    def is_binary(self) -> bool:
        return all(v in (0.0, 1.0) for v in self.y0 + self.y1)


@dataclass(frozen=True)
class Cluster:
    members: tuple[IndividualScience, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("a cluster needs at least one member")
        n = len(self.members)
        for i, member in enumerate(self.members):
            if len(member.y0) != n:
                raise ValueError(
                    f"member {i} has an outcome table for {len(member.y0)} peer counts; "
                    f"cluster of size {n} needs {n} (k = 0..{n - 1})"
                )

    @property
    def size(self) -> int:
        return len(self.members)

    def count(self, ctype: ComplianceType) -> int:
        return sum(1 for m in self.members if m.compliance is ctype)

    def receipts(self, z: int) -> tuple[int, ...]:
        return tuple(m.compliance.receipt(z) for m in self.members)

    def outcomes(self, z: int) -> tuple[float, ...]:
        d = self.receipts(z)
        total = sum(d)
        return tuple(m.outcome(di, total - di) for m, di in zip(self.members, d))


@dataclass(frozen=True)
class PotentialTable:
    """The fixed science of a whole study population."""

    clusters: tuple[Cluster, ...]
    outcome_mode: str = "real"

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.outcome_mode not in ("binary", "real"):
            raise ValueError(f"outcome_mode must be 'binary' or 'real', got {self.outcome_mode!r}")
        if not self.clusters:
            raise ValueError("population needs at least one cluster")
        if self.outcome_mode == "binary":
            for j, c in enumerate(self.clusters):
                for i, m in enumerate(c.members):
                    if not m.is_binary():
                        raise ValueError(f"binary mode: cluster {j} member {i} has a non-binary outcome")

    @classmethod
    def from_types(
        cls,
        types: Sequence[Sequence[ComplianceType]],
        tables: Sequence[Sequence[tuple[Sequence[float], Sequence[float]]]],
        outcome_mode: str = "real",
    ) -> "PotentialTable":
        clusters = []
        for ctypes, ctables in zip(types, tables, strict=True):
            members = [IndividualScience(t, y0, y1) for t, (y0, y1) in zip(ctypes, ctables, strict=True)]
            clusters.append(Cluster(tuple(members)))
        return cls(tuple(clusters), outcome_mode)

    @property
    def J(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.clusters)

    @property
    def N(self) -> int:
        return sum(self.sizes)

    def count(self, ctype: ComplianceType) -> int:
        return sum(c.count(ctype) for c in self.clusters)

    @property
    def monotonicity_holds(self) -> bool:
        return self.count(DF) == 0

    @property
    def one_sided_holds(self) -> bool:
        return self.count(DF) == 0 and self.count(AT) == 0

    @property
    def relevance_holds(self) -> bool:
        return true_itt(self)[1] != 0

    @cached_property
    def _realized(self) -> tuple[tuple[tuple, tuple], ...]:
        # per cluster: ((d under z=0, y under z=0), (d under z=1, y under z=1))
        return tuple(
            tuple((c.receipts(z), c.outcomes(z)) for z in (0, 1)) for c in self.clusters
        )

    def nonneg_effects_holds(self) -> bool:
        """Non-negative total and spillover effects for every individual.

        Total effects ``y(1, k1) - y(0, k0)`` are checked for ``k0 <= k1``
        (equal peer counts included, so a lone complier's total effect is
        covered); spillover effects ``y(0, k1) - y(0, k0)`` for ``k0 < k1``.
        """
        for c in self.clusters:
            for m in c.members:
                running_max = -math.inf
                for k in range(len(m.y0)):
                    if k and m.y0[k] < m.y0[k - 1]:
                        return False
                    running_max = max(running_max, m.y0[k])
                    if m.y1[k] < running_max:
                        return False
        return True

    def replicate(self, times: int) -> "PotentialTable":
        """Stack ``times`` copies of this population's clusters."""
        if times < 1:
            raise ValueError("times must be >= 1")
        return PotentialTable(self.clusters * times, self.outcome_mode)


def natural_receipt(pop: PotentialTable, j: int, z: int) -> tuple[int, ...]:
    return pop._realized[j][1 if z else 0][0]


def realized_outcome(pop: PotentialTable, j: int, i: int, z: int) -> float:
    return pop._realized[j][1 if z else 0][1][i]


def true_itt(pop: PotentialTable) -> tuple[float, float]:
    """Population ITT effects ``(tau_Y, tau_D)``."""
    dy, dd = [], []
    for (d0, y0), (d1, y1) in pop._realized:
        dy.extend(a - b for a, b in zip(y1, y0))
        dd.extend(a - b for a, b in zip(d1, d0))
    return math.fsum(dy) / pop.N, math.fsum(dd) / pop.N


def _require_monotone(pop: PotentialTable) -> None:
    if not pop.monotonicity_holds:
        raise AssumptionViolation("population contains defiers; monotonicity is required")


@dataclass(frozen=True)
class EstimandReport:
    """True ITT effects, the ratio, subgroup sizes and subgroup effects.

    Subgroup effects are evaluated at ``k1_vec[j] = n_j^AT + n_j^CO`` and
    ``k0_vec[j] = n_j^AT``. Averages are ``None`` for empty subgroups.
    """

    tau_Y: float
    tau_D: float
    tau: float
    N_CO: int
    N_AT: int
    N_NT: int
    k1_vec: tuple[int, ...]
    k0_vec: tuple[int, ...]
    te_co_sum: float
    pe_at_sum: float
    pe_nt_sum: float
    te_co_avg: Optional[float] = field(default=None)
    pe_at_avg: Optional[float] = field(default=None)
    pe_nt_avg: Optional[float] = field(default=None)


def subgroup_sums(pop: PotentialTable) -> dict[str, float]:
    """Sums of individual total and spillover effects over each subgroup.

    Contrasts per cluster, with ``a = n_j^AT`` and ``c = n_j^CO``:
    compliers ``y(1, a+c-1) - y(0, a)``; always-takers
    ``y(1, a+c-1) - y(1, a-1)``; never-takers ``y(0, a+c) - y(0, a)``.
    """
    _require_monotone(pop)
    te, pe_at, pe_nt = [], [], []
    for c in pop.clusters:
        a, k = c.count(AT), c.count(AT) + c.count(CO)
        for m in c.members:
            if m.compliance is CO:
                te.append(m.y1[k - 1] - m.y0[a])
            elif m.compliance is AT:
                pe_at.append(m.y1[k - 1] - m.y1[a - 1])
            else:
                pe_nt.append(m.y0[k] - m.y0[a])
    return {"te_co_sum": math.fsum(te), "pe_at_sum": math.fsum(pe_at), "pe_nt_sum": math.fsum(pe_nt)}


def true_estimands(pop: PotentialTable) -> EstimandReport:
    _require_monotone(pop)
    tau_Y, tau_D = true_itt(pop)
    if tau_D == 0:
        raise AssumptionViolation("tau_D = 0: assignment does not move receipt, the ratio is undefined")
    n_co, n_at, n_nt = pop.count(CO), pop.count(AT), pop.count(NT)
    sums = subgroup_sums(pop)

    def avg(total, n):
        return total / n if n else None

    return EstimandReport(
        tau_Y=tau_Y,
        tau_D=tau_D,
        tau=tau_Y / tau_D,
        N_CO=n_co,
        N_AT=n_at,
        N_NT=n_nt,
        k1_vec=tuple(c.count(AT) + c.count(CO) for c in pop.clusters),
        k0_vec=tuple(c.count(AT) for c in pop.clusters),
        te_co_avg=avg(sums["te_co_sum"], n_co),
        pe_at_avg=avg(sums["pe_at_sum"], n_at),
        pe_nt_avg=avg(sums["pe_nt_sum"], n_nt),
        **sums,
    )


def mixture_rhs(pop: PotentialTable) -> float:
    """Complier total effect plus count-weighted non-complier spillovers.

    ``te_co_avg + (N_AT/N_CO) pe_at_avg + (N_NT/N_CO) pe_nt_avg``; empty
    subgroups contribute nothing.
    """
    _require_monotone(pop)
    n_co, n_at, n_nt = pop.count(CO), pop.count(AT), pop.count(NT)
    if n_co == 0:
        raise AssumptionViolation("no compliers: the mixture weights are undefined")
    sums = subgroup_sums(pop)
    terms = [sums["te_co_sum"] / n_co]
    if n_at:
        terms.append(n_at / n_co * (sums["pe_at_sum"] / n_at))
    if n_nt:
        terms.append(n_nt / n_co * (sums["pe_nt_sum"] / n_nt))
    return math.fsum(terms)
