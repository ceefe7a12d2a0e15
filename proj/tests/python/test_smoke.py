"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import dtrsurv


@pytest.fixture(scope="module")
def draws():
    design = dtrsurv.SimDesign.default()
    design.n = 80
    cohort = dtrsurv.simulate_cohort(design, seed=11)
    return dtrsurv.fit(cohort, {"M": 220, "burnin": 120, "thin": 2, "seed": 5})


def test_simulate_and_roundtrip(tmp_path):
    design = dtrsurv.SimDesign.default()
    design.n = 25
    cohort = dtrsurv.simulate_cohort(design, seed=3)
    assert len(cohort) == 25
    path = tmp_path / "cohort.csv"
    cohort.write(path)
    back = dtrsurv.Cohort.read(path, cohort.schema)
    assert back.to_csv() == cohort.to_csv()


def test_simulation_is_deterministic():
    design = dtrsurv.SimDesign.default()
    design.n = 30
    a = dtrsurv.simulate_cohort(design, seed=7)
    b = dtrsurv.simulate_cohort(design, seed=7)
    assert a.to_csv() == b.to_csv()


def test_fit_emits_thinned_draws(draws):
    assert len(draws) == 50  # (220 - 120) / 2


def test_gcompute_shapes_and_bounds(draws):
    rule = dtrsurv.Rule.parse("below(x,0)")
    res = dtrsurv.gcompute(draws, rule, grid=[5.0, 10.0, 15.0], B=300, s=-100.0, seed=9)
    assert len(res["psi"]) == len(draws)
    for curve in res["psi"]:
        assert all(0.0 <= v <= 1.0 for v in curve)
        assert all(a >= b for a, b in zip(curve, curve[1:]))
    # a threshold below the covariate support makes the adverse event impossible
    assert all(v == 0.0 for v in res["phi"])
    assert res["mean"][0] >= res["mean"][-1]


def test_gcompute_seed_determinism(draws):
    rule = dtrsurv.Rule.threshold(-0.1, 0.5)
    a = dtrsurv.gcompute(draws, rule, grid=[5.0, 12.0], B=200, seed=4, threads=1)
    b = dtrsurv.gcompute(draws, rule, grid=[5.0, 12.0], B=200, seed=4, threads=4)
    assert a["psi"] == b["psi"]
    assert a["utility"] == b["utility"]


def test_optimize_returns_distribution(draws):
    res = dtrsurv.optimize(
        draws,
        tau1=[0.0, -0.2],
        tau2=[0.4, 0.6],
        objective="utility",
        t_ref=10.0,
        s=0.0,
        B=150,
        alpha=0.2,
        seed=13,
    )
    assert len(res["pmf"]) == 4
    assert math.isclose(sum(res["pmf"]), 1.0, abs_tol=1e-9)
    assert res["mode"] in res["grid"]
    assert all(0 <= c < 4 for c in res["credible_set"])


def test_draws_file_roundtrip(tmp_path, draws):
    path = tmp_path / "draws.ndjson"
    draws.write(path)
    back = dtrsurv.Draws.read(path)
    assert len(back) == len(draws)
    rule = dtrsurv.Rule.fixed([0, 0, 0, 0])
    a = dtrsurv.gcompute(draws, rule, grid=[8.0], B=100, seed=2)
    b = dtrsurv.gcompute(back, rule, grid=[8.0], B=100, seed=2)
    assert a["psi"] == b["psi"]


def test_low_level_helpers():
    # exponential special case of the piecewise model
    s = dtrsurv.piecewise_survival([0.0, 10.0], [1.0], 1.0)
    assert math.isclose(s, math.exp(-1.0), rel_tol=1e-12)
    w = dtrsurv.piecewise_sample_waiting_time([0.0, 10.0], [2.0], 0.5)
    assert math.isclose(w, math.log(2.0) / 2.0, rel_tol=1e-12)
    assert dtrsurv.encode_waiting_time(35.0, [20.0, 35.0, 50.0]) == 2
    assert dtrsurv.hdi_set([0.5, 0.3, 0.2], 0.8) == [0, 1]


def test_validation_errors_surface():
    schema = dtrsurv.Schema.from_text(
        "courses = 2\ncovariate = ef proportion timevarying\nw_cutpoints = 1,2,3\n"
    )
    with pytest.raises(dtrsurv.DataValidationError):
        dtrsurv.Cohort.from_text(
            "subject_id,k,a,w,delta,ef\np1,1,1,0,1,0.5\n", schema
        )


def test_truth_oracle_runs():
    design = dtrsurv.SimDesign.default()
    rule = dtrsurv.Rule.assign_if_below("x", 0.0)
    truth = dtrsurv.true_survival(design, rule, t=[0.0, 5.0], n_mc=20000, seed=3)
    assert truth["psi"][0] == 1.0
    assert 0.8 < truth["psi"][1] < 1.0
