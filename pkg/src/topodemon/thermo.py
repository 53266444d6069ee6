"""Energy and entropy bookkeeping for one demon configuration.

Units: J = 1 and k_B = 1, so every energy is in units of the stabilizer
coupling and temperatures are k_B T. Entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import bisect

from .errors import ParameterError

LN2 = math.log(2.0)
DEFAULT_DELTA_E = 146.5
DEFAULT_DISTANCE = 7
CALIBRATION_P = 0.005
CALIBRATION_N_MAX = 78.0


def temperature_from_p(p: float) -> float:
    """k_B T from the thermal anyon density p = exp(-4J / k_B T)."""
    if not 0.0 < p < 1.0:
        raise ParameterError("p", f"must lie in (0, 1), got {p}")
    return -4.0 / math.log(p)


def w_ops(distance: int, kbt: float) -> float:
    """Landauer cost of erasing the M = 2L boundary syndrome bits on both sides."""
    return 2 * (2 * distance) * kbt * LN2


def w_bulk(distance: int, r0: float, epsilon_m: float, separation: float) -> float:
    """Measurement cost of 2L stabilizers per column over R = r0 N rounds."""
    return 2 * distance * r0 * epsilon_m * separation**2


def ergotropy(p_succ: float, delta_e: float) -> float:
    return max(0.0, (2 * p_succ - 1) * delta_e)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def _calibrated_epsilon_m(delta_e=DEFAULT_DELTA_E, distance=DEFAULT_DISTANCE, p=CALIBRATION_P,
                          target_n_max=CALIBRATION_N_MAX, p_succ=1.0, r0=1.0) -> float:
    numerator = (2 * p_succ - 1) * delta_e - w_ops(distance, temperature_from_p(p))
    if numerator <= 0:
        raise ParameterError("p_succ", "calibration point is never profitable")
    return numerator / (2 * distance * r0 * target_n_max**2)


# Frozen once from the N_max = 78 calibration, then reused everywhere.
CALIBRATED_EPSILON_M = _calibrated_epsilon_m()


@dataclass(frozen=True)
class ThermoParams:
    delta_e: float = DEFAULT_DELTA_E
    epsilon_m: float = CALIBRATED_EPSILON_M
    r0: float = 1.0
    distance: int = DEFAULT_DISTANCE  # sets M = 2L syndrome bits for W_ops and W_bulk
    coupling_j: float = 1.0
    boltzmann: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ParameterError(f.name, f"must be > 0, got {value}")
        if self.coupling_j != 1.0 or self.boltzmann != 1.0:
            raise ParameterError("coupling_j", "energies are expressed in units of J with k_B = 1")

    @property
    def n_syndromes(self) -> int:
        return 2 * self.distance


LEDGER_COLUMNS = (
    "p_succ", "kbt", "e_b", "w_ops", "w_bulk", "w_net", "q_bath",
    "ds_bob", "ds_total", "mi_diag", "su_bound_margin",
)


@dataclass(frozen=True)
class ThermoLedger:
    p_succ: float
    kbt: float
    e_b: float
    w_ops: float
    w_bulk: float
    w_net: float
    q_bath: float
    ds_bob: float
    ds_total: float
    mi_diag: float
    su_bound_margin: float

    def as_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list:
        return [format_number(getattr(self, c)) for c in LEDGER_COLUMNS]


def format_number(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def ledger(p_succ: float, p: float, params: ThermoParams, separation: float, mi_estimate: float = float("nan")) -> ThermoLedger:
    if not 0.0 <= p_succ <= 1.0:
        raise ParameterError("p_succ", f"must lie in [0, 1], got {p_succ}")
    if separation < 0:
        raise ParameterError("separation", f"must be >= 0, got {separation}")
    kbt = temperature_from_p(p)
    e_b = ergotropy(p_succ, params.delta_e)
    ops = w_ops(params.distance, kbt)
    bulk = w_bulk(params.distance, params.r0, params.epsilon_m, separation)
    q_bath = params.delta_e + ops + bulk - e_b
    ds_bob = binary_entropy(p_succ)
    return ThermoLedger(
        p_succ=p_succ,
        kbt=kbt,
        e_b=e_b,
        w_ops=ops,
        w_bulk=bulk,
        w_net=e_b - ops - bulk,
        q_bath=q_bath,
        ds_bob=ds_bob,
        ds_total=q_bath / kbt + ds_bob,
        mi_diag=mi_estimate,
        su_bound_margin=kbt * params.n_syndromes * LN2 - e_b,
    )


def horizon_n_max(p_succ: float, params: ThermoParams, kbt: float):
    """Separation where W_net crosses zero, or None when it is never profitable."""
    numerator = (2 * p_succ - 1) * params.delta_e - w_ops(params.distance, kbt)
    if numerator <= 0:
        return None
    return math.sqrt(numerator / (2 * params.distance * params.r0 * params.epsilon_m))


def calibrate_infrastructure(target_n_max: float = CALIBRATION_N_MAX, p_succ: float = 1.0,
                             params: ThermoParams | None = None, p: float = CALIBRATION_P) -> float:
    """epsilon_m * r0 that puts the horizon at ``target_n_max``."""
    if not target_n_max > 0:
        raise ParameterError("target_n_max", f"must be > 0, got {target_n_max}")
    params = params or ThermoParams()
    return _calibrated_epsilon_m(params.delta_e, params.distance, p, target_n_max, p_succ, r0=1.0)


def net_work(p: float, p_succ: float, params: ThermoParams, separation: float) -> float:
    kbt = temperature_from_p(p)
    return ergotropy(p_succ, params.delta_e) - w_ops(params.distance, kbt) - w_bulk(
        params.distance, params.r0, params.epsilon_m, separation
    )


def critical_p(params: ThermoParams, separation: float, p_succ_curve, bracket=(1e-4, 0.25), xtol=1e-5):
    """Error rate where W_net changes sign, or None if it does not in ``bracket``.

    The ergotropy enters unclamped, (2 P_succ - 1) dE, so the root is also
    found when P_succ drops below one half inside the bracket.
    """
    lo, hi = bracket
    if not 0 < lo < hi < 1:
        raise ParameterError("bracket", f"need 0 < lo < hi < 1, got {bracket}")

    def g(p):
        return ((2 * p_succ_curve(p) - 1) * params.delta_e - w_ops(params.distance, temperature_from_p(p))
                - w_bulk(params.distance, params.r0, params.epsilon_m, separation))

    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0:
        return lo
    if np.sign(g_lo) == np.sign(g_hi):
        return None
    return bisect(g, lo, hi, xtol=xtol)


def mutual_information_plugin(truth, predicted) -> float:
    """Plug-in I(truth; predicted) in nats from paired binary samples."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape or truth.size == 0:
        raise ParameterError("truth", "need two equal-length nonempty binary samples")
    table = np.zeros((2, 2))
    np.add.at(table, (truth, predicted), 1)
    return mutual_information_table(table)


def mutual_information_table(table) -> float:
    table = np.asarray(table, dtype=float)
    joint = table / table.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))
