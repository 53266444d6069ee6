import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topodemon.errors import ParameterError
from topodemon.experiments import simulate
from topodemon.geometry import build_geometry
from topodemon.noise import NoiseParams, shot_rng
from topodemon.protocol import (
    PULSE_AREA,
    BatteryState,
    ChargeStage,
    InfoChannel,
    effective_success,
    ergotropy_from_success,
    run_shot,
)
from topodemon.thermo import ThermoParams


def test_charge_stage_empties_alice():
    stage = ChargeStage(146.5)
    assert stage.pulse_area == math.pi / 2 == PULSE_AREA
    assert stage.apply(BatteryState(1, 146.5)).level == 0
    with pytest.raises(ParameterError):
        ChargeStage(146.5, pulse_area=math.pi)


def test_battery_validation():
    with pytest.raises(ParameterError):
        BatteryState(1, 0.0)
    with pytest.raises(ParameterError):
        BatteryState(2, 1.0)


def test_noiseless_shot():
    out = run_shot(build_geometry(10, 3), NoiseParams(0.0), 10, ThermoParams(), shot_rng(0, 0))
    assert out.success and out.alice_spent == 146.5
    assert out.syndromes_available == 6 and out.rounds_used == 10


def test_shot_determinism():
    g = build_geometry(20, 3)
    a = run_shot(g, NoiseParams(0.01), 20, ThermoParams(), shot_rng(7, 3), seed_index=3)
    b = run_shot(g, NoiseParams(0.01), 20, ThermoParams(), shot_rng(7, 3), seed_index=3)
    assert a == b


def test_protocol_matches_decoder_counts():
    g = build_geometry(40, 7)
    noise = NoiseParams(0.005)
    shots = 8000
    outcomes = [run_shot(g, noise, 40, ThermoParams(), shot_rng(13, i), i, engine="pymatching") for i in range(shots)]
    tally = simulate(g, noise, 40, shots, 13)
    assert sum(o.success for o in outcomes) == tally.successes
    assert np.var([o.alice_spent for o in outcomes]) == 0.0


def test_effective_success_examples():
    assert effective_success(InfoChannel(1.0, 0.93)) == 0.93
    assert effective_success(InfoChannel(0.0, 0.93)) == 0.5
    assert effective_success(InfoChannel(0.62, 1.0)) == pytest.approx(0.5 + 0.5 * 0.62**2.7, rel=1e-14)
    exact = Decimal("0.5") + Decimal("0.5") * (Decimal("2.7") * Decimal("0.62").ln()).exp()
    assert effective_success(InfoChannel(0.62, 1.0)) == pytest.approx(float(exact), rel=1e-14)
    assert effective_success(InfoChannel(0.62, 1.0)) == pytest.approx(0.6377, abs=5e-4)


@pytest.mark.parametrize("kwargs,field", [
    (dict(fraction=1.2, p_raw_full=0.9), "fraction"),
    (dict(fraction=0.5, p_raw_full=0.4), "p_raw_full"),
    (dict(fraction=0.5, p_raw_full=0.9, alpha=0.0), "alpha"),
])
def test_channel_validation(kwargs, field):
    with pytest.raises(ParameterError) as err:
        InfoChannel(**kwargs)
    assert err.value.field == field


@settings(max_examples=300, deadline=None)
@given(st.floats(0.5, 1.0), st.floats(0.1, 5.0), st.floats(0, 1), st.floats(0, 1))
def test_effective_success_monotone(p_raw, alpha, f1, f2):
    lo, hi = sorted((f1, f2))
    a = effective_success(InfoChannel(lo, p_raw, alpha))
    b = effective_success(InfoChannel(hi, p_raw, alpha))
    assert 0.5 <= a <= b <= p_raw + 1e-15


def test_ergotropy_examples():
    assert ergotropy_from_success(0.5, 146.5) == 0
    assert ergotropy_from_success(1.0, 146.5) == 146.5
    assert ergotropy_from_success(0.25, 100) == 0


@settings(max_examples=500, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 1e3))
def test_ergotropy_properties(a, b, gap):
    lo, hi = sorted((a, b))
    assert ergotropy_from_success(lo, gap) <= ergotropy_from_success(hi, gap) <= gap
    if lo <= 0.5:
        assert ergotropy_from_success(lo, gap) == 0
