import json
import os
from pathlib import Path

import numpy as np
import pytest

from oracles import planted_curves
from topodemon import experiments as ex
from topodemon.errors import ParameterError
from topodemon.experiments import (
    ExperimentSpec,
    FitResult,
    bootstrap_crossing,
    default_spec,
    estimate_crossing,
    estimate_p_succ,
    run_experiment,
    simulate,
)
from topodemon.geometry import build_geometry
from topodemon.noise import NoiseParams

GOLDEN = Path(__file__).parent / "golden"

SMALL_SPECS = {
    "suppression": dict(n_list=(4,), l_list=(1, 3), p_list=(0.02, 0.05), rounds=3, shots=300, master_seed=1),
    "threshold_scan": dict(n_list=(4,), l_list=(1, 3), p_list=(0.02, 0.05, 0.1, 0.2), rounds=3, shots=300,
                           master_seed=1, bootstrap=20),
    "phasecut": dict(n_list=(6,), l_list=(3,), p_list=(0.01, 0.05), shots=300, master_seed=1),
    "horizon": dict(n_list=(4, 6, 8), l_list=(3,), p_list=(0.01,), shots=300, master_seed=1),
    "temporal": dict(n_list=(5,), l_list=(3,), p_list=(0.02,), max_rounds=5, shots=200, master_seed=1),
    "info_fraction": dict(n_list=(6,), l_list=(3,), p_list=(0.01,), shots=300, master_seed=1,
                          f_list=(0.0, 0.5, 0.8, 1.0)),
    "phase_diagram": dict(n_list=(6,), l_list=(3,), p_list=(0.01, 0.05), shots=300, master_seed=1,
                          f_list=(0.0, 0.5, 1.0)),
}


@pytest.mark.parametrize("kind", sorted(SMALL_SPECS))
def test_golden_csv(kind, tmp_path):
    spec = ExperimentSpec(kind=kind, **SMALL_SPECS[kind])
    run_experiment(spec, out_dir=tmp_path, stem=kind)
    names = sorted(p.name for p in tmp_path.glob("*.csv"))
    if os.environ.get("TOPODEMON_REGEN_GOLDEN"):
        GOLDEN.mkdir(exist_ok=True)
        for name in names:
            (GOLDEN / name).write_bytes((tmp_path / name).read_bytes())
    for name in names:
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def test_rerun_bit_identical_from_metadata(tmp_path):
    spec = ExperimentSpec(kind="suppression", **SMALL_SPECS["suppression"])
    first = run_experiment(spec, out_dir=tmp_path / "a")
    meta = json.loads((tmp_path / "a" / "suppression.json").read_text())
    again = ExperimentSpec(kind="suppression", **{k: tuple(v) if isinstance(v, list) else v
                                                   for k, v in meta["spec"].items() if k != "kind"})
    assert again == spec
    assert run_experiment(again).csv_text() == first.csv_text()


def test_thread_count_does_not_change_output():
    spec = ExperimentSpec(kind="phasecut", n_list=(8,), l_list=(3,), p_list=(0.02, 0.04), shots=1500, master_seed=3)
    texts = {ex.run_phasecut(spec, threads=t).csv_text() for t in (1, 3)}
    assert len(texts) == 1


def test_sidecar_precedes_csv(tmp_path, monkeypatch):
    seen = {}

    def fake(spec, threads):
        seen["json"] = (tmp_path / "temporal.json").exists()
        seen["csv"] = (tmp_path / "temporal.csv").exists()
        seen["status"] = json.loads((tmp_path / "temporal.json").read_text())["status"]
        return ex.ExperimentResult(("a",), [{"a": 1}])

    monkeypatch.setitem(ex.RUNNERS, "temporal", fake)
    run_experiment(ExperimentSpec(kind="temporal"), out_dir=tmp_path)
    assert seen == {"json": True, "csv": False, "status": "running"}
    meta = json.loads((tmp_path / "temporal.json").read_text())
    assert meta["status"] == "complete" and "wall_time_s" in meta and meta["seed"] == 2024


def test_estimate_noiseless():
    est, (lo, hi) = estimate_p_succ(build_geometry(5, 3), NoiseParams(0.0), 5, 8000, 1)
    assert est == 1.0 and hi == 1.0 and 0.9995 < lo < 1.0


def test_estimate_deterministic():
    g = build_geometry(6, 3)
    assert estimate_p_succ(g, NoiseParams(0.03), 6, 500, 9) == estimate_p_succ(g, NoiseParams(0.03), 6, 500, 9)


def test_estimate_within_exact_decoder_interval():
    g = build_geometry(20, 3)
    noise = NoiseParams(0.03)
    shots = 300
    fast = simulate(g, noise, 20, shots, 5)
    exact = simulate(g, noise, 20, shots, 5, engine="exact")
    lo, hi = exact.interval
    assert lo <= fast.p_succ <= hi


def test_estimate_rejects_zero_shots():
    with pytest.raises(ParameterError):
        estimate_p_succ(build_geometry(2, 2), NoiseParams(0.01), 2, 0, 1)


@pytest.mark.parametrize("field,value", [("shots", 0), ("l_list", ()), ("p_list", (0.7,)), ("kind", "nope")])
def test_spec_validation(field, value):
    kwargs = {"kind": "suppression", field: value}
    with pytest.raises(ParameterError) as err:
        ExperimentSpec(**kwargs)
    assert err.value.field == field


def test_fit_result_rejects_negative_error():
    with pytest.raises(ValueError):
        FitResult("x", {"a": 1.0}, {"a": -1.0})


def test_intervals_contain_estimates():
    res = run_experiment(ExperimentSpec(kind="suppression", **SMALL_SPECS["suppression"]))
    for row in res.rows:
        assert row["ci_low"] <= row["p_succ"] <= row["ci_high"]
        assert row["seed"] > 0


def test_planted_threshold_exact_curves():
    p = np.geomspace(0.004, 0.04, 12)
    for p_star in (0.009, 0.013, 0.021):
        curves = planted_curves(p, (3, 5, 7), 0.03, p_star, 1.0)
        assert estimate_crossing(p, curves, cap=10.0) == pytest.approx(p_star, abs=5e-4)


def test_planted_threshold_coverage():
    rng = np.random.default_rng(11)
    p = np.geomspace(0.006, 0.03, 10)
    p_star, shots, hits, reps = 0.013, 8000, 0, 50
    for rep in range(reps):
        truth = planted_curves(p, (3, 5, 7), 0.1, p_star, 1.0)
        noisy = {l: rng.binomial(shots, np.clip(v, 0, 1)) / shots for l, v in truth.items()}
        est = estimate_crossing(p, noisy)
        boot = bootstrap_crossing(p, noisy, shots, 200, 1000 + rep)
        se = np.std(boot, ddof=1)
        hits += est is not None and abs(est - p_star) <= 2 * se
    assert hits >= 0.9 * reps


def test_crossing_needs_two_distances():
    with pytest.raises(ParameterError, match="need ≥ 2 distances"):
        estimate_crossing([0.01, 0.02], {3: [0.1, 0.2]})
    with pytest.raises(ParameterError, match="need ≥ 2 distances"):
        ex.run_threshold_scan(default_spec("threshold_scan", l_list=(3,), shots=10))


def test_suppression_exponent_small_distance():
    spec = default_spec("suppression", l_list=(3,), p_list=(0.002, 0.003, 0.005, 0.008))
    res = ex.run_suppression(spec)
    fit = res.fits["exponent_n20_l3"]
    assert fit.parameters["exponent"] == pytest.approx(2.0, abs=0.5)


def test_planted_suppression_fit():
    # Feed exact curves through the suppression fit and recover p_th and A.
    n, r, amp, p_th = 20, 20, 0.05, 0.02
    rows = []
    for l in (3, 5, 7):
        p_log = amp * n * r * (0.005 / p_th) ** ((l + 1) / 2)
        rows.append((l, p_log))
    ls, pl = zip(*rows)
    (c, s), _, _ = ex.linear_fit(ls, np.log(pl))
    assert 0.005 * np.exp(-2 * s) == pytest.approx(p_th, rel=1e-10)
    assert np.exp(c - s) / (n * r) == pytest.approx(amp, rel=1e-10)


def test_monotone_in_p_within_ci():
    spec = ExperimentSpec(kind="phasecut", n_list=(10,), l_list=(3,), p_list=(0.01, 0.02, 0.04, 0.08), shots=2000)
    rows = ex.run_phasecut(spec).rows
    for a, b in zip(rows[:-1], rows[1:]):
        assert b["ci_low"] <= a["ci_high"]


def test_temporal_noiseless():
    spec = default_spec("temporal", n_list=(6,), l_list=(3,), p_list=(0.0,), max_rounds=3, shots=50)
    res = ex.run_temporal(spec)
    first = res.rows[0]
    assert first["e_b_ec"] == spec.delta_e and first["e_b_no_ec"] == spec.delta_e


def test_temporal_no_ec_matches_closed_form():
    spec = default_spec("temporal", n_list=(6,), l_list=(3,), p_list=(0.02,), max_rounds=6, shots=4000)
    for row in ex.run_temporal(spec).rows:
        assert row["ci_low_no_ec"] <= row["p_succ_no_ec_exact"] <= row["ci_high_no_ec"] or \
            abs(row["p_succ_no_ec"] - row["p_succ_no_ec_exact"]) < 0.03


def test_info_fraction_closed_form():
    spec = default_spec("info_fraction", shots=400)
    res = ex.run_info_fraction(spec)
    f0 = res.rows[0]
    assert f0["f"] == 0 and f0["e_b"] == 0 and f0["w_net"] < 0
    assert res.fits["onset_exponent"].parameters["exponent"] == pytest.approx(2.7, abs=1e-9)
    f_c = res.fits["f_c"].parameters["f_c"]
    p_raw = f0["p_raw_full"]
    params = spec.thermo(7)
    assert ex.info_net_work(f_c, p_raw, 0.005, params, 40, 2.7) == pytest.approx(0, abs=1e-9)


def test_info_fraction_perfect_decoding_root():
    params = ex.ThermoParams()
    f_c = ex.break_even_fraction(1.0, 0.005, params, 40, 2.7)
    # 146.5 f^2.7 = w_ops f + w_bulk, solved by bisection in a separate form
    lo, hi = 0.0, 1.0
    ops = ex.w_ops(7, ex.temperature_from_p(0.005))
    bulk = ex.w_bulk(7, 1.0, params.epsilon_m, 40)
    for _ in range(200):
        mid = (lo + hi) / 2
        if 146.5 * mid**2.7 - ops * mid - bulk > 0:
            hi = mid
        else:
            lo = mid
    assert f_c == pytest.approx(lo, abs=1e-10)
    assert f_c == pytest.approx(0.64, abs=0.01)


def test_phase_diagram_no_break_even_when_random():
    assert ex.break_even_fraction(0.5, 0.05, ex.ThermoParams(), 40, 2.7) is None


def test_phase_diagram_small():
    spec = ExperimentSpec(kind="phase_diagram", **SMALL_SPECS["phase_diagram"])
    res = ex.run_phase_diagram(spec)
    assert len(res.rows) == 6
    cols, contour = res.tables["contour"]
    assert [c["p"] for c in contour] == [0.01, 0.05]
    frac = res.fits["demon_fraction"].parameters["fraction"]
    assert frac == pytest.approx(np.mean([r["w_net"] > 0 for r in res.rows]))
