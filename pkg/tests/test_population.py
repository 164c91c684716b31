import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtspill.population import (
    AT,
    CO,
    DF,
    NT,
    AssumptionViolation,
    Cluster,
    ComplianceType,
    IndividualScience,
    PotentialTable,
    classify,
    natural_receipt,
    realized_outcome,
    subgroup_sums,
    mixture_rhs,
    true_estimands,
    true_itt,
)
from crtspill.simulate import GeneratorParams, InfeasibleGenerator, random_population

from oracles import brute_force_a6, brute_force_effects, constant_member


class TestClassify:
    def test_types(self):
        assert classify(1, 0) is CO
        assert classify(1, 1) is AT
        assert classify(0, 0) is NT
        assert classify(0, 1) is DF

    def test_rejects_non_bits(self):
        with pytest.raises(ValueError):
            classify(2, 0)

    def test_labels_round_trip(self):
        for t in ComplianceType:
            assert ComplianceType.from_label(t.label) is t
        assert ComplianceType.from_label("co") is CO
        with pytest.raises(ValueError):
            ComplianceType.from_label("sometimes")


class TestTableValidation:
    def test_table_length_must_match_cluster_size(self):
        with pytest.raises(ValueError, match="peer counts"):
            Cluster((IndividualScience(CO, [0, 0, 0], [1, 1, 1]), constant_member(NT, 3)))

    def test_binary_mode_rejects_fractional_outcomes(self):
        with pytest.raises(ValueError):
            PotentialTable((Cluster((IndividualScience(CO, [0.5], [1.0]),)),), "binary")

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            IndividualScience(CO, [math.nan], [1.0])


class TestToyA:
    def test_natural_receipt(self, toy):
        assert natural_receipt(toy, 0, 1) == (1, 0)
        assert natural_receipt(toy, 0, 0) == (0, 0)

    def test_natural_receipt_always_taker_defier(self):
        pop = PotentialTable((Cluster((constant_member(AT, 2), constant_member(DF, 2))),))
        assert natural_receipt(pop, 0, 0) == (1, 1)

    def test_realized_outcome(self, toy):
        assert realized_outcome(toy, 0, 1, 1) == 1.0  # NT sees one treated peer
        assert realized_outcome(toy, 0, 1, 0) == 0.0
        assert realized_outcome(toy, 1, 0, 1) == 1.0

    def test_itt(self, toy):
        assert true_itt(toy) == (1.0, 0.75)

    def test_estimands(self, toy):
        rep = true_estimands(toy)
        assert rep.te_co_avg == 1.0
        assert rep.pe_nt_avg == 1.0
        assert rep.pe_at_avg is None
        assert rep.tau == pytest.approx(4 / 3, abs=1e-15)
        assert (rep.N_CO, rep.N_AT, rep.N_NT) == (3, 0, 1)
        assert rep.k1_vec == (1, 2)
        assert rep.k0_vec == (0, 0)

    def test_mixture_rhs(self, toy):
        assert mixture_rhs(toy) == pytest.approx(1 + 1 / 3, abs=1e-15)

    def test_assumptions(self, toy):
        assert toy.one_sided_holds and toy.monotonicity_holds and toy.relevance_holds
        assert toy.nonneg_effects_holds()


class TestEdgeCases:
    def test_all_never_takers(self):
        pop = PotentialTable((Cluster((constant_member(NT, 2), constant_member(NT, 2))),))
        assert true_itt(pop) == (0.0, 0.0)
        with pytest.raises(AssumptionViolation):
            true_estimands(pop)

    def test_all_compliers(self):
        pop = PotentialTable((Cluster((constant_member(CO, 2),) * 2), Cluster((constant_member(CO, 1),))))
        assert true_itt(pop) == (1.0, 1.0)
        rep = true_estimands(pop)
        assert rep.pe_at_sum == rep.pe_nt_sum == 0.0
        assert rep.tau == rep.te_co_avg == mixture_rhs(pop) == 1.0

    def test_defiers_rejected(self):
        pop = PotentialTable((Cluster((constant_member(CO, 2), constant_member(DF, 2))),))
        with pytest.raises(AssumptionViolation):
            true_estimands(pop)
        assert not pop.monotonicity_holds

    def test_replicate(self, toy):
        big = toy.replicate(3)
        assert big.J == 6 and big.N == 12
        assert true_itt(big) == true_itt(toy)


GEN_PROBS = {"complier": 0.45, "always_taker": 0.25, "never_taker": 0.3}


@st.composite
def populations(draw, mode="real", require=("A2", "A4")):
    seed = draw(st.integers(0, 2**32 - 1))
    J = draw(st.integers(1, 6))
    params = GeneratorParams(n_clusters=J, min_size=1, max_size=5, type_probs=GEN_PROBS,
                             outcome_mode=mode, require=require)
    return random_population(params, seed)


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(populations())
    def test_subgroup_sums_match_realized_differences(self, pop):
        # individual effects from realized outcomes with peers recounted by hand
        eff = brute_force_effects(pop)
        sums = subgroup_sums(pop)
        assert sums["te_co_sum"] == pytest.approx(math.fsum(eff[CO]), abs=1e-12)
        assert sums["pe_at_sum"] == pytest.approx(math.fsum(eff[AT]), abs=1e-12)
        assert sums["pe_nt_sum"] == pytest.approx(math.fsum(eff[NT]), abs=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(populations())
    def test_mixture_identity(self, pop):
        assert abs(true_estimands(pop).tau - mixture_rhs(pop)) < 1e-12

    @settings(max_examples=150, deadline=None)
    @given(populations(mode="binary"))
    def test_mixture_identity_exact(self, pop):
        eff = brute_force_effects(pop)
        n_co = pop.count(CO)
        tau_D = Fraction(n_co, pop.N)
        tau_Y = Fraction(int(sum(sum(v) for v in eff.values())), pop.N)
        rhs = sum(Fraction(int(sum(eff[t]))) for t in (CO, AT, NT)) / n_co
        assert tau_Y / tau_D == rhs
        assert true_estimands(pop).tau == pytest.approx(float(rhs), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.one_of(populations(mode="binary", require=()), populations(mode="binary", require=("A6",))))
    def test_a6_validator_matches_brute_force(self, pop):
        assert pop.nonneg_effects_holds() == brute_force_a6(pop)

    @settings(max_examples=100, deadline=None)
    @given(populations(mode="real", require=("A2", "A4", "A6")))
    def test_generator_honours_a6(self, pop):
        assert pop.nonneg_effects_holds()
        assert brute_force_a6(pop)

    @settings(max_examples=100, deadline=None)
    @given(populations(mode="binary", require=("A2", "A4.1")))
    def test_one_sided_has_no_always_taker_spillover(self, pop):
        assert pop.one_sided_holds
        assert subgroup_sums(pop)["pe_at_sum"] == 0.0


class TestGenerator:
    def test_deterministic(self):
        p = GeneratorParams(n_clusters=5, require=("A2",))
        assert random_population(p, 7) == random_population(p, 7)

    def test_infeasible(self):
        with pytest.raises(InfeasibleGenerator):
            random_population(GeneratorParams(type_probs={"never_taker": 1.0}, require=("A2",)), 0)
        with pytest.raises(InfeasibleGenerator):
            random_population(GeneratorParams(require=("A7",)), 0)

    def test_lone_complier_total_effect_is_covered(self):
        # a lone complier's total effect compares equal peer counts
        pop = PotentialTable((Cluster((IndividualScience(CO, [1.0], [0.0]),)),), "binary")
        assert not pop.nonneg_effects_holds()
