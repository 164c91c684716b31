import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtspill.cli import main
from crtspill.io import (
    ColumnMap,
    RunConfig,
    TrialParseError,
    fmt,
    parse_trial_csv,
    population_from_dict,
    population_to_dict,
    read_population,
    trial_to_csv,
)
from crtspill.randomization import realize
from crtspill.simulate import GeneratorParams, random_population


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPopulationJSON:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["binary", "real"]))
    def test_round_trip(self, seed, mode):
        pop = random_population(GeneratorParams(n_clusters=4, outcome_mode=mode), seed)
        back = population_from_dict(json.loads(json.dumps(population_to_dict(pop))))
        assert back == pop

    def test_schema(self, toy):
        d = population_to_dict(toy)
        member = d["clusters"][0]["members"][1]
        assert member == {"compliance": "never_taker", "outcome_table": {"0": [0.0, 1.0], "1": [0.0, 1.0]}}
        assert d["outcome_mode"] == "binary"

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing"):
            population_from_dict({"clusters": [{"members": [{"compliance": "complier"}]}]})


class TestTrialCSV:
    def test_toy_rows(self, toy):
        text = trial_to_csv(realize(toy, (1, 0)))
        assert text.splitlines() == ["cluster_id,z,d,y", "0,1,1,1", "0,1,0,1", "1,0,0,0", "1,0,0,0"]

    def test_round_trip(self, toy):
        t = realize(toy, (0, 1))
        back = parse_trial_csv(io.StringIO(trial_to_csv(t))).trial
        assert (back.z, back.d, back.y) == (t.z, t.d, t.y)

    def test_seventeen_digits(self):
        assert fmt(0.1) == "0.10000000000000001"
        assert float(fmt(1 / 3)) == 1 / 3
        assert fmt(1.0) == "1"

    def test_empty(self):
        with pytest.raises(TrialParseError, match="row 1"):
            parse_trial_csv(io.StringIO(""))

    def test_bad_value_row_number(self):
        text = "cluster_id,z,d,y\na,1,1,0\na,1,2,0\nb,0,0,1\n"
        with pytest.raises(TrialParseError, match="row 3"):
            parse_trial_csv(io.StringIO(text))

    def test_z_not_constant(self):
        text = "cluster_id,z,d,y\na,1,1,0\nb,0,0,1\na,0,0,1\n"
        with pytest.raises(TrialParseError, match="row 4.*row 2"):
            parse_trial_csv(io.StringIO(text))

    def test_single_arm(self):
        with pytest.raises(TrialParseError, match="treated and one control"):
            parse_trial_csv(io.StringIO("cluster_id,z,d,y\na,1,1,0\nb,1,0,1\n"))

    def test_one_sided_rows(self):
        text = "cluster_id,z,d,y\na,1,1,0\nb,0,0,1\nb,0,1,1\n"
        data = parse_trial_csv(io.StringIO(text))
        assert data.one_sided_violation_rows() == [4]

    def test_column_mapping(self):
        text = "school,arm,takeup,pass,extra\ns1,1,1,1,x\ns2,0,0,0,y\n"
        cols = ColumnMap.parse("cluster_id=school,z=arm,d=takeup,y=pass")
        data = parse_trial_csv(io.StringIO(text), cols)
        assert data.trial.cluster_ids == ("s1", "s2")
        with pytest.raises(ValueError):
            ColumnMap.parse("outcome")


class TestConfig:
    def test_defaults_and_aliases(self):
        c = RunConfig(direction="beneficial-decreases-y")
        assert c.direction == "decrease" and c.alpha == 0.05 and c.output_format == "json"

    @pytest.mark.parametrize("kw", [{"alpha": 1.0}, {"seed": -1}, {"grid_resolution": 0}, {"output_format": "xml"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)


class TestCLI:
    def test_simulate_toy(self, tmp_path, capsys, toy):
        code, out, _ = run(["simulate", "--preset", "toy-a", "--assignment", "1,0", "--out-dir", str(tmp_path)], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["artifact"]["version"] and rep["seed"] == 0 and rep["config"]["alpha"] == 0.05
        assert (tmp_path / "trial.csv").read_text().splitlines()[1:] == ["0,1,1,1", "0,1,0,1", "1,0,0,0", "1,0,0,0"]
        assert read_population(tmp_path / "population.json") == toy

    def test_round_trip_estimate(self, tmp_path, capsys):
        run(["simulate", "--preset", "toy-a", "--assignment", "1,0", "--out-dir", str(tmp_path)], capsys)
        code, out, _ = run(["estimate", str(tmp_path / "trial.csv")], capsys)
        pe = json.loads(out)["result"]["point_estimates"]
        assert code == 0
        assert (pe["tau_Y_hat"], pe["tau_D_hat"], pe["tau_hat"], pe["N_CO_hat"]) == (1.0, 0.5, 2.0, 2.0)

    def test_full_compliance_rejects_bounds(self, tmp_path, capsys):
        run(["simulate", "--preset", "toy-a", "--assignment", "0,1", "--out-dir", str(tmp_path)], capsys)
        code, out, _ = run(["estimate", str(tmp_path / "trial.csv")], capsys)
        res = json.loads(out)["result"]
        assert code == 0 and res["point_estimates"]["tau_hat"] == 1.0 and res["point_estimates"]["N_CO_hat"] == 4.0
        assert res["bounds"] is None
        assert any("bounds rejected" in d for d in res["diagnostics"])

    def test_zero_receipt_effect_is_error(self, tmp_path, capsys):
        f = tmp_path / "t.csv"
        f.write_text("cluster_id,z,d,y\na,1,0,1\nb,1,0,0\nc,0,0,1\nd,0,0,0\n")
        code, _, err = run(["estimate", str(f)], capsys)
        assert code == 2 and "undefined" in err

    def test_empty_file(self, tmp_path, capsys):
        f = tmp_path / "empty.csv"
        f.write_text("")
        code, _, err = run(["estimate", str(f)], capsys)
        assert code == 2 and "row 1" in err

    def test_one_sided_refusal(self, tmp_path, capsys):
        f = tmp_path / "t.csv"
        f.write_text("cluster_id,z,d,y\na,1,1,1\nb,1,1,0\nc,0,1,1\nd,0,0,0\n")
        code, _, err = run(["estimate", "--one-sided", str(f)], capsys)
        assert code == 2 and "rows [4]" in err
        code, out, _ = run(["estimate", str(f)], capsys)
        assert code == 0 and json.loads(out)["result"]["bounds"] is None

    def test_generator_require_a6(self, tmp_path, capsys):
        args = ["simulate", "--clusters", "8", "--require", "A2", "A4.1", "A6", "--seed", "3", "--out-dir", str(tmp_path)]
        code, out, _ = run(args, capsys)
        assert code == 0 and json.loads(out)["result"]["assumptions"]["A6"]
        assert read_population(tmp_path / "population.json").nonneg_effects_holds()

    def test_deterministic(self, tmp_path, capsys):
        for d in ("a", "b"):
            run(["simulate", "--clusters", "6", "--seed", "11", "--out-dir", str(tmp_path / d),
                 "--out", str(tmp_path / d / "report.json")], capsys)
        for name in ("population.json", "trial.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_infeasible_generator(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--probs", "never_taker=1", "--require", "A2", "--out-dir", str(tmp_path)], capsys)
        assert code == 2 and "A2" in err

    def test_decrease_direction_restores_signs(self, tmp_path, capsys):
        pop = random_population(GeneratorParams(n_clusters=30, min_size=3, max_size=6, outcome_mode="binary",
                                                type_probs={"complier": 0.7, "never_taker": 0.3},
                                                require=("A2", "A4.1", "A6")), 1)
        z = tuple(j % 2 for j in range(30))
        flipped = realize(pop, z)
        flipped = type(flipped)(flipped.z, flipped.d, tuple(tuple(1.0 - v for v in yj) for yj in flipped.y))
        f = tmp_path / "t.csv"
        f.write_text(trial_to_csv(flipped))
        _, out, _ = run(["estimate", "--direction", "decrease", str(f)], capsys)
        res = json.loads(out)["result"]
        te, pe = res["bounds"]["te"], res["bounds"]["pe"]
        assert te[0] <= te[1] <= 0 and pe[0] <= pe[1] <= 0
        assert res["point_estimates"]["tau_hat"] < 0
        lo, hi = res["tau_confidence_set"]["intervals"][0]
        assert lo < res["point_estimates"]["tau_hat"] < hi
        _, out, _ = run(["region", "--direction", "decrease", str(f)], capsys)
        reg = json.loads(out)["result"]
        assert -1.0 <= reg["x_extent"][0] <= reg["x_extent"][1] <= 0.0
        assert -1.0 <= reg["y_extent"][0] <= reg["y_extent"][1] <= 0.0

    def test_region_raster(self, tmp_path, capsys):
        run(["simulate", "--clusters", "20", "--min-size", "2", "--require", "A2", "A4.1", "--seed", "2",
             "--out-dir", str(tmp_path)], capsys)
        code, out, _ = run(["region", str(tmp_path / "trial.csv"), "--grid", "11", "--raster", str(tmp_path / "r.csv")], capsys)
        assert code == 0
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert rows[0] == "x,y,inside" and len(rows) == 1 + 121
        res = json.loads(out)["result"]
        assert {"r_hat", "tau_set", "x_extent", "y_extent"} <= set(res)

    def test_region_needs_binary(self, tmp_path, capsys):
        f = tmp_path / "t.csv"
        f.write_text("cluster_id,z,d,y\na,1,1,0.5\nb,1,0,0\nc,0,0,1\nd,0,0,0\n")
        code, _, err = run(["region", str(f)], capsys)
        assert code == 2 and "binary" in err

    def test_curves(self, capsys):
        code, out, _ = run(["curves", "--taus", "0.75,1.25", "--compliance", "0.25,0.5,0.75"], capsys)
        lines = out.splitlines()
        assert code == 0 and lines[0] == "tau,p_co,te_lo,te_hi,pe_lo,pe_hi" and len(lines) == 7
        row = dict(zip(lines[0].split(","), lines[5].split(",")))
        assert (row["tau"], row["p_co"]) == ("1.25", "0.5") and float(row["pe_lo"]) == 0.25

    def test_curves_empty(self, capsys):
        _, out, _ = run(["curves", "--taus", ""], capsys)
        assert out == "tau,p_co,te_lo,te_hi,pe_lo,pe_hi\n"

    def test_curves_json(self, capsys):
        _, out, _ = run(["curves", "--format", "json", "--taus", "1"], capsys)
        assert json.loads(out)["result"]["rows"][0]["te_hi"] == 1.0

    def test_impossible(self, capsys):
        code, out, _ = run(["impossible"], capsys)
        assert code == 0 and json.loads(out)["result"]["verdict"] == "counterexample confirmed"

    def test_verify_curves_csv(self, capsys):
        code, out, _ = run(["verify", "curves", "--format", "csv"], capsys)
        assert code == 0 and "result.passed,1" in out.splitlines()

    def test_verify_impossibility(self, capsys):
        code, out, _ = run(["verify", "impossibility"], capsys)
        assert code == 0 and json.loads(out)["result"]["suites"][0]["verdict"] == "counterexample confirmed"

    def test_verify_options_forwarded(self, capsys):
        code, out, _ = run(["verify", "coverage", "--J", "12", "--reps", "50"], capsys)
        m = json.loads(out)["result"]["suites"][0]["measured"]
        assert (m["J"], m["replications"]) == (12, 50)
