"""Observed-data estimators and plug-in bounds under non-negative effects."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numpy as np

from .randomization import Design, ObservedTrial

__all__ = [
    "INCREASE",
    "DECREASE",
    "BoundsInputError",
    "PointEstimates",
    "BoundSet",
    "point_estimates",
    "normalize_trial",
    "bounds_general",
    "bounds_binary",
    "bound_curves",
]

# effect directions: which way a beneficial treatment moves the outcome
INCREASE = "increase"
DECREASE = "decrease"


class BoundsInputError(ValueError):
    """Plug-in quantities cannot produce bounds (e.g. no estimated never-takers)."""


@dataclass(frozen=True)
class PointEstimates:
    tau_Y_hat: float
    tau_D_hat: float
    tau_hat: Optional[float]  # None when tau_D_hat == 0
    N_CO_hat: float
    N_NT_hat: float
    p_CO_hat: float
    p_NT_hat: float
    N: int

    @property
    def tau_defined(self) -> bool:
        return self.tau_hat is not None


def point_estimates(trial: ObservedTrial, design: Optional[Design] = None) -> PointEstimates:
    """Difference-in-means ITT estimators, the Wald ratio and subgroup sizes.

    Under one-sided noncompliance control clusters have no receipt, so
    ``tau_D_hat`` reduces to the scaled treated-arm receipt total and
    ``N_CO_hat = N * tau_D_hat`` to ``(J/m) * sum_j Z_j D_j``.
    ``N_NT_hat = N - N_CO_hat`` counts never-takers only when there are no
    always-takers.
    """
    design = design or trial.design
    J, m = design.J, design.m
    if trial.J != J or trial.m != m:
        raise ValueError(f"trial has J={trial.J}, m={trial.m}; design says J={J}, m={m}")
    z = trial.z_array
    Yj, Dj, N = trial.cluster_y, trial.cluster_d, trial.N

    def itt(v):
        return (J / m * float(np.dot(z, v)) - J / (J - m) * float(np.dot(1.0 - z, v))) / N

    tau_Y, tau_D = itt(Yj), itt(Dj)
    n_co = N * tau_D
    return PointEstimates(
        tau_Y_hat=tau_Y,
        tau_D_hat=tau_D,
        tau_hat=tau_Y / tau_D if tau_D != 0 else None,
        N_CO_hat=n_co,
        N_NT_hat=N - n_co,
        p_CO_hat=tau_D,
        p_NT_hat=1.0 - tau_D,
        N=N,
    )


def normalize_trial(trial: ObservedTrial, direction: str) -> ObservedTrial:
    """Flip outcome signs when a beneficial treatment decreases the outcome.

    All bound and region math assumes non-negative effects; for
    ``direction == DECREASE`` it runs on ``-Y`` and reports are restored
    with :meth:`BoundSet.restored`.
    """
    if direction == INCREASE:
        return trial
    if direction == DECREASE:
        return trial.negated()
    raise ValueError(f"direction must be {INCREASE!r} or {DECREASE!r}, got {direction!r}")


@dataclass(frozen=True)
class BoundSet:
    te_lower: float
    te_upper: float
    pe_lower: float
    pe_upper: float
    mode: str  # "general" or "binary"
    direction: str = INCREASE

    @property
    def te_empty(self) -> bool:
        return self.te_lower > self.te_upper

    @property
    def pe_empty(self) -> bool:
        return self.pe_lower > self.pe_upper

    @property
    def empty(self) -> bool:
        """Lower above upper: evidence against non-negative effects at these estimates."""
        return self.te_empty or self.pe_empty

    def restored(self, direction: str) -> "BoundSet":
        """Bounds on the original outcome scale for the given effect direction."""
        if direction == INCREASE:
            return replace(self, direction=INCREASE)
        if direction != DECREASE:
            raise ValueError(f"unknown direction {direction!r}")
        return BoundSet(
            te_lower=-self.te_upper,
            te_upper=-self.te_lower,
            pe_lower=-self.pe_upper,
            pe_upper=-self.pe_lower,
            mode=self.mode,
            direction=DECREASE,
        )

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "direction": self.direction,
            "te": [self.te_lower, self.te_upper],
            "pe": [self.pe_lower, self.pe_upper],
            "te_empty": self.te_empty,
            "pe_empty": self.pe_empty,
        }


def _check_counts(N_CO: float, N_NT: float) -> None:
    if not N_CO > 0:
        raise BoundsInputError(f"estimated number of compliers must be positive, got {N_CO}")
    if not N_NT > 0:
        raise BoundsInputError(
            f"estimated number of never-takers must be positive, got {N_NT} "
            "(estimated compliance rate at or above 1)"
        )


def bounds_general(tau_hat: float, N_CO_hat: float, N_NT_hat: float) -> BoundSet:
    """Bounds from non-negativity alone: TE in [0, tau], PE in [0, tau * N_CO/N_NT]."""
    _check_counts(N_CO_hat, N_NT_hat)
    return BoundSet(0.0, tau_hat, 0.0, tau_hat * N_CO_hat / N_NT_hat, mode="general")


def bounds_binary(tau_hat: float, N_CO_hat: float, N_NT_hat: float) -> BoundSet:
    """Bounds for binary outcomes, where both effects also lie in [0, 1]."""
    _check_counts(N_CO_hat, N_NT_hat)
    r = N_NT_hat / N_CO_hat
    return BoundSet(
        te_lower=max(0.0, tau_hat - r),
        te_upper=min(1.0, tau_hat),
        pe_lower=max(0.0, (tau_hat - 1.0) / r),
        pe_upper=min(1.0, tau_hat / r),
        mode="binary",
    )


def bound_curves(taus: Iterable[float], compliance_grid: Iterable[float]) -> list[dict]:
    """Binary bound endpoints over a grid of complier proportions.

    One row per ``(tau, p_co)`` pair, in long format suitable for plotting.
    """
    grid = [float(p) for p in compliance_grid]
    for p in grid:
        if not 0.0 < p < 1.0:
            raise ValueError(f"complier proportions must lie in (0, 1), got {p}")
    rows = []
    for tau in taus:
        for p in grid:
            b = bounds_binary(float(tau), p, 1.0 - p)
            rows.append(
                {
                    "tau": float(tau),
                    "p_co": p,
                    "te_lo": b.te_lower,
                    "te_hi": b.te_upper,
                    "pe_lo": b.pe_lower,
                    "pe_hi": b.pe_upper,
                }
            )
    return rows
