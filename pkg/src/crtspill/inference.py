"""Randomization-based test for the Wald ratio and its simultaneous (x, y) region.

Under the null ``tau = tau0`` the cluster-level adjusted outcomes
``A_j = Y_j - tau0 * D_j`` have equal means in both arms. The studentized
difference of arm means is compared with a standard normal quantile, and
inverting the test over ``tau0`` reduces to a quadratic inequality.

The simultaneous region for (x, y) = (never-taker spillover, complier total
effect) maps each point to ``tau0 = y + r_hat * x`` with
``r_hat = p_NT_hat / p_CO_hat``, so it is the unit square intersected with a
band (or pair of half-planes) between lines of slope ``-r_hat``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np
from scipy import stats

from .estimation import point_estimates
from .population import PotentialTable
from .randomization import Design, ObservedTrial, monte_carlo

__all__ = [
    "DegenerateVarianceError",
    "normal_quantile",
    "AdjustedOutcomes",
    "TauConfidenceSet",
    "ConfidenceRegion",
    "PivotalityDiagnostic",
    "adjusted_outcomes",
    "test_statistic",
    "tau_confidence_interval",
    "simultaneous_region",
    "pivotality_check",
]

DEFAULT_GRID = 201


class DegenerateVarianceError(ArithmeticError):
    """Adjusted outcomes are constant within both arms, so T is undefined."""


def normal_quantile(p: float) -> float:
    """Standard normal quantile (Wichura's AS241 rational approximation, ~1e-16)."""
    return NormalDist().inv_cdf(p)


def critical_value(alpha: float) -> float:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return 0.0
    return normal_quantile(1.0 - alpha / 2.0)


def _check_design(trial: ObservedTrial, design: Optional[Design]) -> Design:
    design = design or trial.design
    if trial.J != design.J or trial.m != design.m:
        raise ValueError(f"trial has J={trial.J}, m={trial.m}; design says J={design.J}, m={design.m}")
    if design.m < 2 or design.J - design.m < 2:
        raise ValueError("variance estimator needs at least two treated and two control clusters")
    return design


@dataclass(frozen=True)
class AdjustedOutcomes:
    """Cluster totals and the moments that make T(tau0) a ratio of quadratics."""

    Y: np.ndarray
    D: np.ndarray
    z: np.ndarray

    def at(self, tau0: float) -> np.ndarray:
        return self.Y - tau0 * self.D

    @property
    def m(self) -> int:
        return int(self.z.sum())

    @property
    def J(self) -> int:
        return len(self.z)

    def moments(self) -> tuple[float, float, float, float, float]:
        """``(a, b, v_yy, v_yd, v_dd)`` with numerator ``a - tau0 b`` and
        variance ``v_yy - 2 tau0 v_yd + tau0^2 v_dd``."""
        t = self.z.astype(bool)
        c = ~t
        m, mc = self.m, self.J - self.m
        Yt, Yc, Dt, Dc = self.Y[t], self.Y[c], self.D[t], self.D[c]
        a = Yt.mean() - Yc.mean()
        b = Dt.mean() - Dc.mean()
        yt, yc = Yt - Yt.mean(), Yc - Yc.mean()
        dt, dc = Dt - Dt.mean(), Dc - Dc.mean()
        wt, wc = 1.0 / (m * (m - 1)), 1.0 / (mc * (mc - 1))
        v_yy = wt * float(yt @ yt) + wc * float(yc @ yc)
        v_yd = wt * float(yt @ dt) + wc * float(yc @ dc)
        v_dd = wt * float(dt @ dt) + wc * float(dc @ dc)
        return float(a), float(b), v_yy, v_yd, v_dd


def adjusted_outcomes(trial: ObservedTrial) -> AdjustedOutcomes:
    return AdjustedOutcomes(trial.cluster_y.copy(), trial.cluster_d.copy(), trial.z_array.copy())


def test_statistic(trial: ObservedTrial, design: Optional[Design], tau0: float) -> float:
    """Studentized difference in mean adjusted outcomes, treated minus control."""
    _check_design(trial, design)
    adj = adjusted_outcomes(trial)
    A = adj.at(tau0)
    t = adj.z.astype(bool)
    At, Ac = A[t], A[~t]
    m, mc = len(At), len(Ac)
    var = ((At - At.mean()) ** 2).sum() / (m * (m - 1)) + ((Ac - Ac.mean()) ** 2).sum() / (mc * (mc - 1))
    if var <= 0.0:
        raise DegenerateVarianceError(f"variance estimate is zero at tau0={tau0}")
    return float((At.mean() - Ac.mean()) / math.sqrt(var))


test_statistic.__test__ = False  # keep pytest from collecting it when imported


@dataclass(frozen=True)
class TauConfidenceSet:
    """``{tau0 : T(tau0)^2 <= z^2}`` as a union of closed intervals.

    ``shape`` is one of ``interval``, ``point``, ``two_rays``, ``ray``,
    ``whole_line`` or ``empty``. Infinite ends use ``math.inf``.
    """

    alpha: float
    z: float
    intervals: tuple[tuple[float, float], ...]
    shape: str
    coefficients: tuple[float, float, float]  # q2 tau^2 + q1 tau + q0 <= 0
    diagnostics: tuple[str, ...] = ()

    def contains(self, tau0: float) -> bool:
        return any(lo <= tau0 <= hi for lo, hi in self.intervals)

    @property
    def lower(self) -> float:
        return self.intervals[0][0] if self.intervals else math.nan

    @property
    def upper(self) -> float:
        return self.intervals[-1][1] if self.intervals else math.nan

    @property
    def endpoints(self) -> list[float]:
        return [v for iv in self.intervals for v in iv if math.isfinite(v)]

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "z": self.z,
            "shape": self.shape,
            "intervals": [[_json_num(lo), _json_num(hi)] for lo, hi in self.intervals],
            "diagnostics": list(self.diagnostics),
        }


def _json_num(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def tau_confidence_interval(trial: ObservedTrial, design: Optional[Design], alpha: float) -> TauConfidenceSet:
    """Invert the test over ``tau0`` by solving a quadratic inequality.

    ``(a - tau0 b)^2 - z^2 V(tau0) <= 0`` expands to
    ``q2 tau0^2 + q1 tau0 + q0 <= 0``. Depending on the sign of ``q2`` and
    the discriminant the solution is a bounded interval, two rays, the
    whole line or empty (Fieller geometry of a weak instrument).
    """
    _check_design(trial, design)
    zc = critical_value(alpha)
    a, b, v_yy, v_yd, v_dd = adjusted_outcomes(trial).moments()
    z2 = zc * zc
    q2 = b * b - z2 * v_dd
    q1 = -2.0 * (a * b - z2 * v_yd)
    q0 = a * a - z2 * v_yy
    coef = (q2, q1, q0)
    inf = math.inf

    def result(intervals, shape, *diag):
        return TauConfidenceSet(alpha, zc, tuple(intervals), shape, coef, tuple(diag))

    scale2 = max(b * b, z2 * abs(v_dd))
    scale1 = max(abs(a * b), z2 * abs(v_yd))
    scale0 = max(a * a, z2 * abs(v_yy))
    eps = 1e-12
    if zc == 0.0 and b != 0.0:
        # T(tau0) = 0 only where the numerator vanishes
        point = a / b
        return result([(point, point)], "point")
    if abs(q2) <= eps * scale2 and abs(q1) <= eps * max(scale1, 1e-300) and abs(q0) <= eps * max(scale0, 1e-300):
        return result([(-inf, inf)], "whole_line", "degenerate quadratic: every tau0 is accepted")
    if abs(q2) <= eps * scale2:
        # linear: q1 tau + q0 <= 0
        if q1 == 0.0:
            return result([(-inf, inf)], "whole_line") if q0 <= 0 else result([], "empty")
        root = -q0 / q1
        return result([(-inf, root)] if q1 > 0 else [(root, inf)], "ray")
    disc = q1 * q1 - 4.0 * q2 * q0
    if disc < 0.0:
        if q2 > 0:
            return result([], "empty")
        return result([(-inf, inf)], "whole_line", "weak instrument: the test accepts every tau0")
    sq = math.sqrt(disc)
    q = -0.5 * (q1 + math.copysign(sq, q1))
    r1 = q / q2
    r2 = q0 / q if q != 0.0 else r1
    lo, hi = min(r1, r2), max(r1, r2)
    if q2 > 0:
        return result([(lo, hi)], "interval" if lo < hi else "point")
    return result([(-inf, lo), (hi, inf)], "two_rays", "weak instrument: the set is unbounded")


@dataclass(frozen=True)
class ConfidenceRegion:
    """Simultaneous region for (x, y) on the non-negative-effect scale."""

    alpha: float
    r_hat: float
    tau_set: TauConfidenceSet
    grid_resolution: int = 0
    raster: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def contains(self, x: float, y: float) -> bool:
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return False
        return self.tau_set.contains(y + self.r_hat * x)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_resolution)

    def x_extent(self) -> Optional[tuple[float, float]]:
        """Range of x over points in the region (projection onto the x-axis)."""
        # some y in [0, 1] with y + r x in [lo, hi]  <=>  r x in [lo - 1, hi]
        r = self.r_hat
        spans = []
        for lo, hi in self.tau_set.intervals:
            xl = (lo - 1.0) / r if math.isfinite(lo) else -math.inf
            xh = hi / r if math.isfinite(hi) else math.inf
            xl, xh = max(xl, 0.0), min(xh, 1.0)
            if xl <= xh:
                spans.append((xl, xh))
        if not spans:
            return None
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def y_extent(self) -> Optional[tuple[float, float]]:
        """Range of y over points in the region (projection onto the y-axis)."""
        # some x in [0, 1] with y + r x in [lo, hi]  <=>  y in [lo - r, hi]
        r = self.r_hat
        spans = []
        for lo, hi in self.tau_set.intervals:
            yl, yh = max(lo - r, 0.0), min(hi, 1.0)
            if yl <= yh:
                spans.append((yl, yh))
        if not spans:
            return None
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def covers_unit_square(self) -> bool:
        """True when the tau-set contains every value ``y + r x`` the square can produce."""
        top = 1.0 + self.r_hat
        return any(lo <= 0.0 and hi >= top for lo, hi in self.tau_set.intervals)


def simultaneous_region(
    trial: ObservedTrial,
    design: Optional[Design],
    alpha: float,
    grid_resolution: int = DEFAULT_GRID,
) -> ConfidenceRegion:
    """Confidence region for (never-taker spillover, complier total effect).

    ``trial`` must already be on the non-negative-effect scale (see
    :func:`crtspill.estimation.normalize_trial`). The raster, when requested,
    is indexed ``raster[ix, iy]`` over ``linspace(0, 1, grid_resolution)``.
    """
    design = _check_design(trial, design)
    if trial.one_sided_violations():
        raise ValueError("simultaneous region requires one-sided noncompliance (no receipt in control clusters)")
    est = point_estimates(trial, design)
    if not 0.0 < est.p_CO_hat < 1.0:
        raise ValueError(f"estimated complier proportion must lie in (0, 1), got {est.p_CO_hat}")
    r_hat = est.p_NT_hat / est.p_CO_hat
    tau_set = tau_confidence_interval(trial, design, alpha)
    raster = None
    if grid_resolution:
        g = np.linspace(0.0, 1.0, grid_resolution)
        taus = g[None, :] + r_hat * g[:, None]  # [ix, iy] -> y + r x
        raster = np.zeros(taus.shape, dtype=bool)
        for lo, hi in tau_set.intervals:
            raster |= (taus >= lo) & (taus <= hi)
    return ConfidenceRegion(alpha, r_hat, tau_set, grid_resolution, raster)


@dataclass(frozen=True)
class PivotalityDiagnostic:
    statistics: np.ndarray = field(repr=False)
    ks_distance: float
    rejection_rate: float
    alpha: float
    n_undefined: int
    J: int

    @property
    def replications(self) -> int:
        return len(self.statistics)


def pivotality_check(
    pop: PotentialTable,
    design: Design,
    x0: float,
    y0: float,
    replications: int,
    seed: int,
    alpha: float = 0.05,
) -> PivotalityDiagnostic:
    """Distribution of ``T(y0 + r_hat x0)`` over repeated assignments.

    Each replicate plugs in its own ``r_hat``. Draws with a zero variance
    estimate are counted in ``n_undefined`` and excluded.
    """

    def stat(trial: ObservedTrial) -> float:
        est = point_estimates(trial, design)
        if est.p_CO_hat <= 0.0:
            return math.nan
        tau0 = y0 + est.p_NT_hat / est.p_CO_hat * x0
        try:
            return test_statistic(trial, design, tau0)
        except DegenerateVarianceError:
            return math.nan

    values = monte_carlo(pop, design, stat, replications, seed)
    ok = values[np.isfinite(values)]
    zc = critical_value(alpha)
    ks = float(stats.kstest(ok, "norm").statistic) if len(ok) else math.nan
    rate = float(np.mean(np.abs(ok) > zc)) if len(ok) else math.nan
    return PivotalityDiagnostic(ok, ks, rate, alpha, int(len(values) - len(ok)), design.J)
