from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtspill import estimation as est
from crtspill.population import true_estimands
from crtspill.randomization import Design, ObservedTrial, exact_expectation, realize
from crtspill.simulate import GeneratorParams, random_population


class TestPointEstimates:
    def test_toy_treat_first(self, toy):
        pe = est.point_estimates(realize(toy, (1, 0)))
        assert (pe.tau_Y_hat, pe.tau_D_hat, pe.tau_hat, pe.N_CO_hat) == (1.0, 0.5, 2.0, 2.0)
        assert pe.N_NT_hat == 2.0

    def test_toy_treat_second(self, toy):
        pe = est.point_estimates(realize(toy, (0, 1)))
        assert (pe.tau_Y_hat, pe.tau_D_hat, pe.tau_hat, pe.N_CO_hat) == (1.0, 1.0, 1.0, 4.0)
        assert pe.N_NT_hat == 0.0

    def test_no_treated_receipt(self):
        t = ObservedTrial((1, 0), ((0, 0), (0,)), ((1.0, 0.0), (0.0,)))
        pe = est.point_estimates(t)
        assert pe.tau_D_hat == 0.0 and pe.tau_hat is None and not pe.tau_defined

    def test_design_mismatch(self, toy):
        with pytest.raises(ValueError):
            est.point_estimates(realize(toy, (1, 0)), Design(3, 1))

    def test_hand_formula(self):
        # unequal sizes: (1/N)[J/m sum_T Y_j - J/(J-m) sum_C Y_j]
        t = ObservedTrial((1, 1, 0), ((1, 0, 1), (1,), (0, 0)), ((1.0, 0.0, 2.0), (4.0,), (1.0, 0.5)))
        pe = est.point_estimates(t)
        N, J = 6, 3
        assert pe.tau_Y_hat == pytest.approx(((J / 2) * 7.0 - J * 1.5) / N, abs=1e-15)
        assert pe.tau_D_hat == pytest.approx((J / 2) * 3 / N, abs=1e-15)
        assert pe.N_CO_hat == pytest.approx(J / 2 * 3, abs=1e-15)


class TestBounds:
    def test_general(self):
        b = est.bounds_general(4 / 3, 3, 1)
        assert (b.te_lower, b.te_upper) == (0.0, 4 / 3)
        assert b.pe_lower == 0.0 and b.pe_upper == pytest.approx(4.0, abs=1e-15)

    def test_general_zero_tau(self):
        b = est.bounds_general(0.0, 3, 1)
        assert (b.te_lower, b.te_upper, b.pe_lower, b.pe_upper) == (0.0, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("fn", [est.bounds_general, est.bounds_binary])
    def test_rejects_no_never_takers(self, fn):
        with pytest.raises(est.BoundsInputError):
            fn(1.0, 4.0, 0.0)
        with pytest.raises(est.BoundsInputError):
            fn(1.0, 0.0, 4.0)

    def test_binary_equal_groups(self):
        b = est.bounds_binary(1.25, 5, 5)
        assert (b.te_lower, b.te_upper, b.pe_lower, b.pe_upper) == pytest.approx((0.25, 1.0, 0.25, 1.0), abs=1e-15)

    def test_binary_three_quarters_compliance(self):
        b = est.bounds_binary(0.75, 3, 1)
        assert b.te_lower == pytest.approx(0.75 - 1 / 3, abs=1e-15)
        assert b.te_upper == 0.75

    def test_toy_truth_collapses(self, toy):
        rep = true_estimands(toy)
        b = est.bounds_binary(rep.tau, rep.N_CO, rep.N_NT)
        assert (b.te_lower, b.te_upper, b.pe_lower, b.pe_upper) == pytest.approx((1, 1, 1, 1), abs=1e-15)

    def test_empty_is_reported_not_clipped(self):
        b = est.bounds_binary(-0.5, 1, 1)
        assert b.te_lower == 0.0 and b.te_upper == -0.5
        assert b.te_empty and b.empty

    def test_restore_decrease(self):
        b = est.BoundSet(0.12, 0.79, 0.0, 1.0, "binary").restored(est.DECREASE)
        assert (b.te_lower, b.te_upper, b.pe_lower, b.pe_upper) == (-0.79, -0.12, -1.0, -0.0)
        assert b.direction == est.DECREASE


class TestCurves:
    def test_six_rows(self):
        rows = est.bound_curves([0.75, 1.25], [0.25, 0.5, 0.75])
        assert len(rows) == 6
        for r in rows:
            b = est.bounds_binary(r["tau"], r["p_co"], 1 - r["p_co"])
            assert (r["te_lo"], r["te_hi"], r["pe_lo"], r["pe_hi"]) == (b.te_lower, b.te_upper, b.pe_lower, b.pe_upper)

    def test_low_compliance(self):
        (r,) = est.bound_curves([1.25], [0.25])
        assert (r["te_lo"], r["te_hi"]) == (0.0, 1.0)
        assert r["pe_lo"] == pytest.approx(0.25 / 3, abs=1e-12)
        assert r["pe_hi"] == pytest.approx(1.25 / 3, abs=1e-12)

    def test_equal_groups_pe_lower(self):
        (r,) = est.bound_curves([1.25], [0.5])
        assert r["pe_lo"] == pytest.approx(0.25, abs=1e-15)

    def test_high_compliance_shrinks(self):
        widths = [r["te_hi"] - r["te_lo"] for r in est.bound_curves([0.75], [0.9, 0.99, 0.999])]
        assert widths == sorted(widths, reverse=True)
        assert widths[-1] < 0.002

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_tau_one(self, p):
        (r,) = est.bound_curves([1.0], [p])
        assert r["te_hi"] == 1.0 and r["pe_lo"] == 0.0

    def test_empty_taus(self):
        assert est.bound_curves([], [0.5]) == []

    def test_grid_outside_unit_interval(self):
        with pytest.raises(ValueError):
            est.bound_curves([1.0], [1.0])


def _exact_bounds(tau, n_co, n_nt):
    r = Fraction(n_nt) / Fraction(n_co)
    return (max(Fraction(0), tau - r), min(Fraction(1), tau), max(Fraction(0), (tau - 1) / r), min(Fraction(1), tau / r))


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_identity_and_containment(self, seed, J):
        params = GeneratorParams(n_clusters=J, min_size=1, max_size=5,
                                 type_probs={"complier": 0.6, "never_taker": 0.4},
                                 outcome_mode="binary", require=("A2", "A4.1", "A6"))
        pop = random_population(params, seed)
        rep = true_estimands(pop)
        if rep.N_NT == 0:
            return
        x, y = rep.pe_nt_avg, rep.te_co_avg
        assert abs(y - (rep.tau - rep.N_NT / rep.N_CO * x)) < 1e-12
        # exact rational check: integer sums in binary mode
        xq = Fraction(rep.pe_nt_sum) / rep.N_NT
        yq = Fraction(rep.te_co_sum) / rep.N_CO
        tq = yq + Fraction(rep.N_NT, rep.N_CO) * xq
        lo_te, hi_te, lo_pe, hi_pe = _exact_bounds(tq, rep.N_CO, rep.N_NT)
        assert lo_te <= yq <= hi_te and lo_pe <= xq <= hi_pe

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_unbiased_with_always_takers(self, seed):
        design = Design(5, 2)
        params = GeneratorParams(n_clusters=5, max_size=4, require=("A2", "A4"))
        pop = random_population(params, seed)
        rep = true_estimands(pop)
        f = lambda t: est.point_estimates(t, design)  # noqa: E731
        assert abs(exact_expectation(pop, design, lambda t: f(t).tau_Y_hat) - rep.tau_Y) < 1e-12
        assert abs(exact_expectation(pop, design, lambda t: f(t).tau_D_hat) - rep.tau_D) < 1e-12
        assert abs(exact_expectation(pop, design, lambda t: f(t).N_CO_hat) - rep.N_CO) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), st.integers(1, 50), st.integers(1, 50))
    def test_decrease_restoration_is_mirror(self, tau, n_co, n_nt):
        b = est.bounds_general(tau, n_co, n_nt)
        r = b.restored(est.DECREASE)
        assert (r.te_lower, r.te_upper) == (-b.te_upper, -b.te_lower)
        assert r.restored(est.INCREASE).te_lower == r.te_lower

    def test_normalize_trial(self, toy):
        t = realize(toy, (1, 0))
        assert est.normalize_trial(t, est.INCREASE) is t
        neg = est.normalize_trial(t, est.DECREASE)
        assert est.point_estimates(neg).tau_Y_hat == -est.point_estimates(t).tau_Y_hat
        with pytest.raises(ValueError):
            est.normalize_trial(t, "sideways")


class TestConsistency:
    def test_unclipped_endpoints_shrink(self):
        from crtspill.verify import consistency

        m = consistency(Js=(20, 80, 320), reps=300, seed=1)["measured"]
        assert m["unclipped_passed"]
        assert set(m["clipped"]) == {"pe_lower", "pe_upper"}
        for k in m["clipped"]:
            assert all(v[k] == 0.0 for v in m["median_abs_error"].values())
