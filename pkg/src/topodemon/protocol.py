"""The five-stage charging protocol reduced to its classical consequences.

Stage 1 (the pi/2 pulse on Alice's battery) and stage 2 (code energy
invariance) are exact, so Alice always spends ``delta_e`` and no state
vector is carried. Bob's conditional unitary collapses to the success bit
of his decode; his battery statistics only depend on P_succ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoder import decode_success
from .errors import ParameterError
from .geometry import CodeGeometry
from .noise import NoiseParams, sample_history
from .thermo import ThermoParams, ergotropy

PULSE_AREA = math.pi / 2
DEFAULT_ALPHA = 2.7


@dataclass(frozen=True)
class BatteryState:
    level: int  # 1 charged, 0 empty
    gap: float

    def __post_init__(self):
        if self.level not in (0, 1):
            raise ParameterError("level", f"must be 0 or 1, got {self.level}")
        if not self.gap > 0:
            raise ParameterError("gap", f"must be > 0, got {self.gap}")


@dataclass(frozen=True)
class ChargeStage:
    energy_moved: float
    pulse_area: float = PULSE_AREA

    def __post_init__(self):
        if self.pulse_area != PULSE_AREA:
            raise ParameterError("pulse_area", "full transfer requires a pi/2 pulse")

    def apply(self, alice: BatteryState) -> BatteryState:
        """A pi/2 pulse swaps the excitation out: |e> -> |g> exactly."""
        return BatteryState(0, alice.gap)


@dataclass(frozen=True)
class ShotOutcome:
    success: bool
    alice_spent: float
    syndromes_available: int
    rounds_used: int
    seed_index: int


@dataclass(frozen=True)
class InfoChannel:
    fraction: float
    p_raw_full: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ParameterError("fraction", f"must lie in [0, 1], got {self.fraction}")
        if not self.alpha > 0:
            raise ParameterError("alpha", f"must be > 0, got {self.alpha}")
        if not 0.5 <= self.p_raw_full <= 1.0:
            raise ParameterError("p_raw_full", f"must lie in [0.5, 1], got {self.p_raw_full}")


def run_shot(geom: CodeGeometry, noise: NoiseParams, rounds: int, thermo_params: ThermoParams,
             rng: np.random.Generator, seed_index: int = 0, engine: str = "exact") -> ShotOutcome:
    alice = ChargeStage(thermo_params.delta_e).apply(BatteryState(1, thermo_params.delta_e))
    spent = thermo_params.delta_e * (1 - alice.level)
    history, truth = sample_history(geom, noise, rounds, rng)
    ok = decode_success(geom, noise, history, truth, engine=engine)
    return ShotOutcome(
        success=bool(ok),
        alice_spent=spent,
        syndromes_available=len(geom.alice_boundary_stabilizers),
        rounds_used=rounds,
        seed_index=seed_index,
    )


def effective_success(channel: InfoChannel) -> float:
    p = 0.5 + (channel.p_raw_full - 0.5) * channel.fraction**channel.alpha
    return min(1.0, max(0.5, p))


def ergotropy_from_success(p_succ: float, delta_e: float) -> float:
    if not 0.0 <= p_succ <= 1.0:
        raise ParameterError("p_succ", f"must lie in [0, 1], got {p_succ}")
    if not delta_e > 0:
        raise ParameterError("delta_e", f"must be > 0, got {delta_e}")
    return ergotropy(p_succ, delta_e)
