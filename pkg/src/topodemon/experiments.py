"""Monte Carlo sweeps and fits behind each reported figure.

Every sweep point gets its own seed derived from the master seed and the
point's physical coordinates (N, L, R, p). Shots inside a point are split
into fixed-size chunks whose size depends only on the problem dimensions;
chunks may run on any number of threads and their tallies are summed in
chunk order, so outputs do not depend on the thread count.
"""
from __future__ import annotations

import csv
import io
import json
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .decoder import graph_from_defects, mwpm_decode, spacetime_matcher
from .errors import ParameterError
from .geometry import build_geometry
from .noise import NoiseParams, derive_seed, detection_events, logical_parity, sample_batch
from .protocol import DEFAULT_ALPHA, InfoChannel, effective_success
from .thermo import (
    CALIBRATED_EPSILON_M,
    DEFAULT_DELTA_E,
    LEDGER_COLUMNS,
    ThermoParams,
    critical_p,
    format_number,
    ledger,
    mutual_information_table,
    temperature_from_p,
    w_bulk,
    w_ops,
)

KINDS = ("suppression", "threshold_scan", "phasecut", "horizon", "temporal", "info_fraction", "phase_diagram")
CELLS_PER_CHUNK = 4_000_000
P_LOG_CAP = 0.45


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    n_list: tuple = (40,)
    l_list: tuple = (7,)
    p_list: tuple = (0.005,)
    rounds: int | None = None  # None: R = r0 * N
    shots: int = 8000
    master_seed: int = 2024
    delta_e: float = DEFAULT_DELTA_E
    epsilon_m: float = CALIBRATED_EPSILON_M
    r0: float = 1.0
    alpha: float = DEFAULT_ALPHA
    f_list: tuple = tuple(np.round(np.linspace(0.0, 1.0, 51), 6))
    meas_factor: float = 0.1
    max_rounds: int = 80  # temporal sweep length
    bootstrap: int = 200
    engine: str = "pymatching"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError("kind", f"must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if int(self.shots) != self.shots or self.shots < 1:
            raise ParameterError("shots", f"must be an integer >= 1, got {self.shots!r}")
        for name in ("n_list", "l_list", "p_list", "f_list"):
            if len(getattr(self, name)) == 0:
                raise ParameterError(name, "must be nonempty")
        for n in self.n_list:
            if int(n) != n or n < 1:
                raise ParameterError("n_list", f"entries must be integers >= 1, got {n!r}")
        for l in self.l_list:
            if int(l) != l or l < 1:
                raise ParameterError("l_list", f"entries must be integers >= 1, got {l!r}")
        for p in self.p_list:
            if not 0 <= p < 0.5:
                raise ParameterError("p_list", f"entries must lie in [0, 0.5), got {p!r}")
        for f in self.f_list:
            if not 0 <= f <= 1:
                raise ParameterError("f_list", f"entries must lie in [0, 1], got {f!r}")
        if self.rounds is not None and (int(self.rounds) != self.rounds or self.rounds < 1):
            raise ParameterError("rounds", f"must be an integer >= 1, got {self.rounds!r}")
        if self.max_rounds < 1:
            raise ParameterError("max_rounds", f"must be >= 1, got {self.max_rounds!r}")
        if self.bootstrap < 2:
            raise ParameterError("bootstrap", f"must be >= 2, got {self.bootstrap!r}")
        if self.engine not in ("pymatching", "exact"):
            raise ParameterError("engine", f"must be 'pymatching' or 'exact', got {self.engine!r}")
        for name in ("delta_e", "epsilon_m", "r0", "alpha"):
            if not getattr(self, name) > 0:
                raise ParameterError(name, f"must be > 0, got {getattr(self, name)!r}")

    def rounds_for(self, n: int) -> int:
        return int(self.rounds) if self.rounds is not None else max(1, int(round(self.r0 * n)))

    def thermo(self, distance: int) -> ThermoParams:
        return ThermoParams(delta_e=self.delta_e, epsilon_m=self.epsilon_m, r0=self.r0, distance=distance)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [x.item() if isinstance(x, np.generic) else x for x in v]
        return d


DEFAULT_SPECS = {
    "suppression": dict(n_list=(20,), l_list=(3, 5, 7), p_list=(0.003, 0.005, 0.008, 0.015), rounds=20),
    "threshold_scan": dict(n_list=(20,), l_list=(3, 5, 7),
                           p_list=tuple(np.round(np.geomspace(0.004, 0.08, 12), 6)), rounds=20),
    "phasecut": dict(n_list=(40,), l_list=(7,), p_list=tuple(np.round(np.linspace(0.0025, 0.04, 16), 6))),
    "horizon": dict(n_list=tuple(range(10, 95, 5)), l_list=(7,), p_list=(0.005,)),
    "temporal": dict(n_list=(40,), l_list=(7,), p_list=(0.005,), max_rounds=80),
    "info_fraction": dict(n_list=(40,), l_list=(7,), p_list=(0.005,)),
    "phase_diagram": dict(n_list=(40,), l_list=(7,), p_list=tuple(np.round(np.geomspace(0.002, 0.02, 13), 6))),
}


def default_spec(kind: str, **overrides) -> ExperimentSpec:
    if kind not in DEFAULT_SPECS:
        raise ParameterError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    return ExperimentSpec(kind=kind, **{**DEFAULT_SPECS[kind], **overrides})


@dataclass(frozen=True)
class FitResult:
    name: str
    parameters: dict
    stderr: dict = field(default_factory=dict)
    residual_norm: float = 0.0

    def __post_init__(self):
        for k, v in self.stderr.items():
            if v is not None and not (v >= 0 or np.isnan(v)):
                raise ValueError(f"standard error for {k} is negative")

    def to_dict(self) -> dict:
        return {"name": self.name, "parameters": dict(self.parameters), "stderr": dict(self.stderr),
                "residual_norm": self.residual_norm}


@dataclass
class ExperimentResult:
    columns: tuple
    rows: list
    fits: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows), written as extra CSVs

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def csv_text(self) -> str:
        return _csv_text(self.columns, self.rows)

    def write(self, out_dir, stem: str, wall_time: float | None = None) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {**self.metadata, "fits": {k: v.to_dict() for k, v in self.fits.items()}, "status": "complete"}
        if wall_time is not None:
            meta["wall_time_s"] = wall_time
        write_sidecar(out / f"{stem}.json", meta)
        paths = [out / f"{stem}.csv"]
        paths[0].write_text(self.csv_text())
        for name, (cols, rows) in self.tables.items():
            path = out / f"{stem}_{name}.csv"
            path.write_text(_csv_text(cols, rows))
            paths.append(path)
        return paths


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_number(r.get(c)) for c in columns])
    return buf.getvalue()


def write_sidecar(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def version_string() -> str:
    from . import __version__

    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _metadata(spec: ExperimentSpec) -> dict:
    return {"spec": spec.to_dict(), "seed": spec.master_seed, "version": version_string()}


# ---------------------------------------------------------------- sampling


def wilson_interval(successes: int, shots: int, level: float = 0.95) -> tuple:
    ci = stats.binomtest(int(successes), int(shots)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def point_seed(master_seed: int, n: int, l: int, rounds: int, p: float) -> int:
    return derive_seed(master_seed, n, l, rounds, int(round(p * 1e12)))


def _chunk_size(geom, rounds: int) -> int:
    return max(1, CELLS_PER_CHUNK // (rounds * (geom.n_edges + geom.n_plaquettes)))


def _chunks(shots: int, size: int) -> list:
    return [range(a, min(a + size, shots)) for a in range(0, shots, size)]


def _pool_map(fn, items, threads: int) -> list:
    threads = (os.cpu_count() or 1) if threads == 0 else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _decode_flips(geom, noise, rounds, det, engine):
    if engine == "pymatching":
        return spacetime_matcher(geom, noise, rounds).decode_batch(det)
    n_p = geom.n_plaquettes
    out = np.zeros(det.shape[0], dtype=np.uint8)
    for s, row in enumerate(det):
        idx = np.flatnonzero(row)
        nodes = sorted(((int(i % n_p), int(i // n_p)) for i in idx), key=lambda d: (d[1], d[0]))
        out[s] = mwpm_decode(graph_from_defects(geom, noise, rounds, nodes)).inferred_logical_flip
    return out


@dataclass(frozen=True)
class ShotTally:
    shots: int
    successes: int
    table: tuple  # ((t0p0, t0p1), (t1p0, t1p1)) counts of (true class, decoded class)

    @property
    def p_succ(self) -> float:
        return self.successes / self.shots

    @property
    def interval(self) -> tuple:
        return wilson_interval(self.successes, self.shots)

    @property
    def mutual_information(self) -> float:
        return mutual_information_table(self.table)


def _tally(truth, pred) -> np.ndarray:
    t = np.zeros((2, 2), dtype=np.int64)
    np.add.at(t, (truth.astype(np.int64), pred.astype(np.int64)), 1)
    return t


def _sum_tallies(tables) -> ShotTally:
    total = np.sum(tables, axis=0)
    return ShotTally(int(total.sum()), int(total[0, 0] + total[1, 1]), tuple(map(tuple, total.tolist())))


def simulate(geom, noise: NoiseParams, rounds: int, shots: int, seed: int, threads: int = 1,
             engine: str = "pymatching") -> ShotTally:
    """Sample ``shots`` memory histories and decode each one."""

    def work(chunk):
        data, meas = sample_batch(geom, noise, rounds, seed, chunk)
        det = detection_events(geom, data, meas)
        return _tally(logical_parity(geom, data), _decode_flips(geom, noise, rounds, det, engine))

    return _sum_tallies(_pool_map(work, _chunks(shots, _chunk_size(geom, rounds)), threads))


def estimate_p_succ(geom, noise: NoiseParams, rounds: int, shots: int, seed: int, threads: int = 1,
                    engine: str = "pymatching"):
    if int(shots) != shots or shots < 1:
        raise ParameterError("shots", f"must be an integer >= 1, got {shots!r}")
    tally = simulate(geom, noise, rounds, shots, seed, threads, engine)
    return tally.p_succ, tally.interval


def _noise(spec, p) -> NoiseParams:
    return NoiseParams(p, meas_factor=spec.meas_factor)


def _measure(spec, n, l, p, threads):
    rounds = spec.rounds_for(n)
    seed = point_seed(spec.master_seed, n, l, rounds, p)
    tally = simulate(build_geometry(n, l), _noise(spec, p), rounds, spec.shots, seed, threads, spec.engine)
    return rounds, seed, tally


def _point_row(n, l, rounds, p, seed, tally) -> dict:
    lo, hi = tally.interval
    return {"n": n, "l": l, "rounds": rounds, "p": p, "shots": tally.shots, "successes": tally.successes,
            "p_succ": tally.p_succ, "ci_low": lo, "ci_high": hi, "seed": seed}


POINT_COLUMNS = ("n", "l", "rounds", "p", "shots", "successes", "p_succ", "ci_low", "ci_high", "seed")


# ---------------------------------------------------------------- fitting


def linear_fit(x, y):
    """Ordinary least squares y = a + b x: (params, stderr, residual norm)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ParameterError("points", "need at least 2 points to fit a line")
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    se_b = float(res.stderr) if x.size > 2 else float("nan")
    se_a = float(res.intercept_stderr) if x.size > 2 else float("nan")
    return (float(res.intercept), float(res.slope)), (se_a, se_b), float(np.linalg.norm(resid))


def _log_fail(p_succ):
    return np.log(np.clip(1.0 - np.asarray(p_succ, dtype=float), 1e-300, None))


def _local_crossing(p, pa, pb, cap=P_LOG_CAP):
    """ln p where two P_log(p) curves cross, from local log-log line fits.

    The first grid interval on which ln P_a - ln P_b changes sign brackets
    the crossing; each curve is fitted with a line in (ln p, ln P_log) over
    that interval plus one neighbour on either side, keeping only points
    with 0 < P_log < cap.
    """
    p, pa, pb = (np.asarray(v, dtype=float) for v in (p, pa, pb))
    ok = (pa > 0) & (pb > 0) & (pa < cap) & (pb < cap)
    idx = np.flatnonzero(ok)
    if idx.size < 2:
        return None
    d = np.log(pa[idx]) - np.log(pb[idx])
    flips = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    zeros = np.flatnonzero(d == 0)
    if zeros.size and (flips.size == 0 or zeros[0] <= flips[0]):
        return float(np.log(p[idx[zeros[0]]]))
    if flips.size == 0:
        return None
    k = flips[0]
    window = idx[max(0, k - 1): k + 3]
    lx = np.log(p[window])
    (a1, b1), _, _ = linear_fit(lx, np.log(pa[window]))
    (a2, b2), _, _ = linear_fit(lx, np.log(pb[window]))
    if b1 != b2:
        root = (a2 - a1) / (b1 - b2)
        if lx[0] <= root <= lx[-1]:
            return float(root)
    # Fallback: linear interpolation of the log-ratio across the bracket.
    x0, x1 = np.log(p[idx[k]]), np.log(p[idx[k + 1]])
    return float(x0 + d[k] * (x1 - x0) / (d[k] - d[k + 1]))


def estimate_crossing(p_list, p_log_by_distance: dict, cap: float = P_LOG_CAP):
    """Threshold from the crossings of adjacent-distance P_log(p) curves.

    Returns the geometric mean of the pairwise crossing estimates, or None
    if no pair crosses inside the grid.
    """
    distances = sorted(p_log_by_distance)
    if len(distances) < 2:
        raise ParameterError("l_list", "need ≥ 2 distances")
    roots = []
    for la, lb in zip(distances[:-1], distances[1:]):
        r = _local_crossing(p_list, p_log_by_distance[la], p_log_by_distance[lb], cap)
        if r is not None:
            roots.append(r)
    if not roots:
        return None
    return float(np.exp(np.mean(roots)))


def bootstrap_crossing(p_list, p_log_by_distance: dict, shots: int, reps: int, seed: int,
                       cap: float = P_LOG_CAP):
    """Parametric bootstrap: redraw failures ~ Binomial(shots, P_log) per point."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    distances = sorted(p_log_by_distance)
    out = []
    for _ in range(reps):
        sample = {l: rng.binomial(shots, np.asarray(p_log_by_distance[l], dtype=float)) / shots for l in distances}
        est = estimate_crossing(p_list, sample, cap)
        if est is not None:
            out.append(est)
    return np.array(out)


# ---------------------------------------------------------------- sweeps


def run_suppression(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """P_succ over (p, L) and the fit ln P_log = c + s L for each p.

    With P_log = A N R (p / p_th)^((L+1)/2) the slope gives p_th = p e^(-2s)
    and the intercept A = e^(c - s) / (N R).
    """
    rows = []
    for n in spec.n_list:
        for p in spec.p_list:
            for l in spec.l_list:
                rounds, seed, tally = _measure(spec, n, l, p, threads)
                row = _point_row(n, l, rounds, p, seed, tally)
                row["p_log"] = 1.0 - tally.p_succ
                rows.append(row)
    fits = {}
    for n in spec.n_list:
        rounds = spec.rounds_for(n)
        for p in spec.p_list:
            pts = [(r["l"], r["p_log"]) for r in rows if r["n"] == n and r["p"] == p and r["p_log"] > 0]
            if len(pts) < 2:
                continue
            ls, pl = zip(*pts)
            (c, s), (se_c, se_s), resid = linear_fit(ls, np.log(pl))
            p_th = p * np.exp(-2 * s)
            amp = np.exp(c - s) / (n * rounds)
            fits[f"suppression_n{n}_p{p:g}"] = FitResult(
                f"suppression_n{n}_p{p:g}",
                {"slope": s, "intercept": c, "p_th": p_th, "prefactor": amp},
                {"slope": se_s, "intercept": se_c, "p_th": p_th * 2 * se_s, "prefactor": amp * np.hypot(se_c, se_s)},
                resid,
            )
        for l in spec.l_list:
            pts = [(r["p"], r["p_log"]) for r in rows
                   if r["n"] == n and r["l"] == l and 0 < r["p_log"] and r["p"] <= 0.008]
            if len(pts) < 2:
                continue
            ps, pl = zip(*pts)
            (c, b), (se_c, se_b), resid = linear_fit(np.log(ps), np.log(pl))
            fits[f"exponent_n{n}_l{l}"] = FitResult(f"exponent_n{n}_l{l}", {"exponent": b, "intercept": c},
                                                   {"exponent": se_b, "intercept": se_c}, resid)
    return ExperimentResult(POINT_COLUMNS + ("p_log",), rows, fits, _metadata(spec))


def run_threshold_scan(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    if len(spec.l_list) < 2:
        raise ParameterError("l_list", "need ≥ 2 distances")
    n = spec.n_list[0]
    rows = []
    for l in spec.l_list:
        for p in spec.p_list:
            rounds, seed, tally = _measure(spec, n, l, p, threads)
            row = _point_row(n, l, rounds, p, seed, tally)
            row["p_log"] = 1.0 - tally.p_succ
            rows.append(row)
    p_list = np.array(spec.p_list, dtype=float)
    curves = {l: np.array([r["p_log"] for r in rows if r["l"] == l]) for l in spec.l_list}
    est = estimate_crossing(p_list, curves)
    boot = bootstrap_crossing(p_list, curves, spec.shots, spec.bootstrap, derive_seed(spec.master_seed, 7))
    se = float(np.std(boot, ddof=1)) if boot.size >= 2 else float("nan")
    fit = FitResult("threshold", {"p_th": est, "bootstrap_valid": int(boot.size)}, {"p_th": se})
    return ExperimentResult(POINT_COLUMNS + ("p_log",), rows, {"threshold": fit}, _metadata(spec))


def _ledger_row(base: dict, led) -> dict:
    row = dict(base)
    for c in LEDGER_COLUMNS:
        row[c] = getattr(led, c)
    row["w_cost"] = led.w_ops + led.w_bulk
    return row


LEDGER_ROW_COLUMNS = POINT_COLUMNS + tuple(c for c in LEDGER_COLUMNS if c != "p_succ") + ("w_cost",)


def run_phasecut(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    n, l = spec.n_list[0], spec.l_list[0]
    params = spec.thermo(l)
    rows = []
    for p in spec.p_list:
        rounds, seed, tally = _measure(spec, n, l, p, threads)
        led = ledger(tally.p_succ, p, params, n, tally.mutual_information)
        row = _ledger_row(_point_row(n, l, rounds, p, seed, tally), led)
        lo, hi = tally.interval
        row["w_net_low"] = ledger(lo, p, params, n).w_net
        row["w_net_high"] = ledger(hi, p, params, n).w_net
        rows.append(row)
    ps = np.array(spec.p_list, dtype=float)
    fits = {}
    if ps.size >= 2:
        roots = {}
        for key in ("p_succ", "ci_low", "ci_high"):
            curve = np.minimum.accumulate(np.array([r[key] for r in rows]))
            roots[key] = critical_p(params, n, lambda x, c=curve: float(np.interp(x, ps, c)), (ps[0], ps[-1]))
        spread = [abs(roots[k] - roots["p_succ"]) for k in ("ci_low", "ci_high")
                  if roots[k] is not None and roots["p_succ"] is not None]
        fits["critical_p"] = FitResult("critical_p", {"p_c": roots["p_succ"]},
                                       {"p_c": max(spread) / 1.96 if spread else float("nan")})
    cols = LEDGER_ROW_COLUMNS + ("w_net_low", "w_net_high")
    return ExperimentResult(cols, rows, fits, _metadata(spec))


def run_horizon(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    l, p = spec.l_list[0], spec.p_list[0]
    params = spec.thermo(l)
    rows = []
    for n in spec.n_list:
        rounds, seed, tally = _measure(spec, n, l, p, threads)
        rows.append(_ledger_row(_point_row(n, l, rounds, p, seed, tally),
                                ledger(tally.p_succ, p, params, n, tally.mutual_information)))
    ns = np.array(spec.n_list, dtype=float)
    e_b = np.array([r["e_b"] for r in rows])
    fits = {}
    if ns.size >= 2:
        (c, k), (se_c, se_k), resid = linear_fit(np.log(ns), np.log([r["w_bulk"] for r in rows]))
        fits["w_bulk_scaling"] = FitResult("w_bulk_scaling", {"exponent": k, "log_prefactor": c},
                                           {"exponent": se_k, "log_prefactor": se_c}, resid)
        ops = w_ops(l, temperature_from_p(p))

        def g(x):
            return float(np.interp(x, ns, e_b)) - ops - w_bulk(l, params.r0, params.epsilon_m, x)

        w_net = np.array([r["w_net"] for r in rows])
        flips = np.flatnonzero(np.sign(w_net[:-1]) * np.sign(w_net[1:]) < 0)
        n_max = float(brentq(g, ns[flips[0]], ns[flips[0] + 1])) if flips.size else None
        fits["horizon"] = FitResult("horizon", {"n_max": n_max, "sign_changes": int(flips.size)})
        span = (ns >= 10) & (ns <= 80)
        if span.any():
            sel = e_b[span]
            fits["e_b_variation"] = FitResult("e_b_variation",
                                              {"relative_variation": float((sel.max() - sel.min()) / sel.max())
                                               if sel.max() > 0 else float("nan")})
    return ExperimentResult(LEDGER_ROW_COLUMNS, rows, fits, _metadata(spec))


def run_temporal(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Ergotropy after r rounds, with and without decoding, r = 1..max_rounds.

    Each shot draws ``max_rounds`` rounds once; the r-round history is its
    prefix (with a noiseless closing measurement at round r), so every r
    reuses the same physical error stream. Without error correction Bob
    keeps the trivial class, so he succeeds when the accumulated frame is
    trivial.
    """
    n, l, p = spec.n_list[0], spec.l_list[0], spec.p_list[0]
    geom = build_geometry(n, l)
    noise = _noise(spec, p)
    r_max = spec.max_rounds
    seed = point_seed(spec.master_seed, n, l, r_max, p)

    def work(chunk):
        data, meas = sample_batch(geom, replace(noise, final_round_perfect=False), r_max, seed, chunk)
        per_r = np.zeros((r_max, 2, 2, 2), dtype=np.int64)  # (r, with/without EC, truth, pred)
        for r in range(1, r_max + 1):
            d, m = data[:, :r], meas[:, :r].copy()
            m[:, -1] = False
            truth = logical_parity(geom, d)
            pred = _decode_flips(geom, noise, r, detection_events(geom, d, m), spec.engine)
            per_r[r - 1, 0] = _tally(truth, pred)
            per_r[r - 1, 1] = _tally(truth, np.zeros_like(truth))
        return per_r

    total = np.sum(_pool_map(work, _chunks(spec.shots, _chunk_size(geom, r_max)), threads), axis=0)
    rows = []
    de = spec.delta_e
    for r in range(1, r_max + 1):
        ec = _sum_tallies([total[r - 1, 0]])
        raw = _sum_tallies([total[r - 1, 1]])
        lo, hi = ec.interval
        lo0, hi0 = raw.interval
        exact_no_ec = 0.5 * (1 + (1 - 2 * p) ** (r * n))
        rows.append({
            "round": r, "n": n, "l": l, "p": p, "shots": ec.shots, "seed": seed,
            "p_succ_ec": ec.p_succ, "ci_low_ec": lo, "ci_high_ec": hi, "e_b_ec": max(0.0, (2 * ec.p_succ - 1) * de),
            "p_succ_no_ec": raw.p_succ, "ci_low_no_ec": lo0, "ci_high_no_ec": hi0,
            "e_b_no_ec": max(0.0, (2 * raw.p_succ - 1) * de),
            "p_succ_no_ec_exact": exact_no_ec, "e_b_no_ec_exact": max(0.0, (2 * exact_no_ec - 1) * de),
        })
    area = float(sum(r["e_b_ec"] - r["e_b_no_ec"] for r in rows))
    cols = ("round", "n", "l", "p", "shots", "seed", "p_succ_ec", "ci_low_ec", "ci_high_ec", "e_b_ec",
            "p_succ_no_ec", "ci_low_no_ec", "ci_high_no_ec", "e_b_no_ec", "p_succ_no_ec_exact", "e_b_no_ec_exact")
    fits = {"recovered_area": FitResult("recovered_area", {"area": area})}
    return ExperimentResult(cols, rows, fits, _metadata(spec))


def info_net_work(f: float, p_raw_full: float, p: float, params: ThermoParams, n: int, alpha: float) -> float:
    """W_net at information fraction f; the Landauer term scales with f, the bulk term does not."""
    p_eff = effective_success(InfoChannel(f, max(0.5, p_raw_full), alpha))
    e_b = max(0.0, (2 * p_eff - 1) * params.delta_e)
    return e_b - f * w_ops(params.distance, temperature_from_p(p)) - w_bulk(params.distance, params.r0, params.epsilon_m, n)


def break_even_fraction(p_raw_full, p, params, n, alpha):
    """Root f_c of W_net(f) in (0, 1], or None if full information does not pay."""
    if info_net_work(1.0, p_raw_full, p, params, n, alpha) <= 0:
        return None
    return float(brentq(lambda f: info_net_work(f, p_raw_full, p, params, n, alpha), 0.0, 1.0, xtol=1e-12))


def _info_rows(spec, n, l, p, p_raw, params):
    rows = []
    kbt = temperature_from_p(p)
    for f in spec.f_list:
        p_eff = effective_success(InfoChannel(f, max(0.5, p_raw), spec.alpha))
        e_b = max(0.0, (2 * p_eff - 1) * spec.delta_e)
        ops = f * w_ops(l, kbt)
        bulk = w_bulk(l, spec.r0, spec.epsilon_m, n)
        rows.append({"p": p, "f": f, "p_raw_full": p_raw, "p_eff": p_eff, "e_b": e_b, "w_ops": ops,
                     "w_bulk": bulk, "w_net": e_b - ops - bulk})
    return rows


def run_info_fraction(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    n, l, p = spec.n_list[0], spec.l_list[0], spec.p_list[0]
    params = spec.thermo(l)
    rounds, seed, tally = _measure(spec, n, l, p, threads)
    rows = _info_rows(spec, n, l, p, tally.p_succ, params)
    for r in rows:
        r.update(n=n, l=l, rounds=rounds, seed=seed, shots=tally.shots, successes=tally.successes)
    f_c = break_even_fraction(tally.p_succ, p, params, n, spec.alpha)
    lo, hi = tally.interval
    bounds = [break_even_fraction(x, p, params, n, spec.alpha) for x in (lo, hi)]
    spread = [abs(b - f_c) for b in bounds if b is not None and f_c is not None]
    fits = {"f_c": FitResult("f_c", {"f_c": f_c}, {"f_c": max(spread) / 1.96 if spread else float("nan")})}
    sel = [(r["f"], r["e_b"]) for r in rows if 0.7 <= r["f"] <= 1.0 and r["e_b"] > 0]
    if len(sel) >= 2:
        fs, eb = zip(*sel)
        (c, k), (se_c, se_k), resid = linear_fit(np.log(fs), np.log(eb))
        fits["onset_exponent"] = FitResult("onset_exponent", {"exponent": k, "intercept": c},
                                           {"exponent": se_k, "intercept": se_c}, resid)
    cols = ("n", "l", "rounds", "p", "f", "shots", "successes", "seed", "p_raw_full", "p_eff", "e_b", "w_ops",
            "w_bulk", "w_net")
    return ExperimentResult(cols, rows, fits, _metadata(spec))


def run_phase_diagram(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    n, l = spec.n_list[0], spec.l_list[0]
    params = spec.thermo(l)
    rows, contour = [], []
    for p in spec.p_list:
        rounds, seed, tally = _measure(spec, n, l, p, threads)
        for r in _info_rows(spec, n, l, p, tally.p_succ, params):
            r.update(seed=seed)
            rows.append(r)
        lo, hi = tally.interval
        contour.append({"p": p, "p_raw_full": tally.p_succ, "ci_low": lo, "ci_high": hi, "seed": seed,
                        "f_c": break_even_fraction(tally.p_succ, p, params, n, spec.alpha)})
    w = np.array([r["w_net"] for r in rows])
    fraction = float(np.mean(w > 0))
    fits = {
        "demon_fraction": FitResult("demon_fraction", {"fraction": fraction, "cells": int(w.size)}),
        "break_even": FitResult("break_even", {f"f_c@p={c['p']:g}": c["f_c"] for c in contour}),
    }
    cols = ("p", "f", "seed", "p_raw_full", "p_eff", "e_b", "w_ops", "w_bulk", "w_net")
    tables = {"contour": (("p", "p_raw_full", "ci_low", "ci_high", "seed", "f_c"), contour)}
    return ExperimentResult(cols, rows, fits, _metadata(spec), tables)


RUNNERS = {
    "suppression": run_suppression,
    "threshold_scan": run_threshold_scan,
    "phasecut": run_phasecut,
    "horizon": run_horizon,
    "temporal": run_temporal,
    "info_fraction": run_info_fraction,
    "phase_diagram": run_phase_diagram,
}


def run_experiment(spec: ExperimentSpec, threads: int = 1, out_dir=None, stem: str | None = None) -> ExperimentResult:
    """Run a sweep; with ``out_dir`` the sidecar is written before any CSV."""
    stem = stem or spec.kind
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_sidecar(Path(out_dir) / f"{stem}.json", {**_metadata(spec), "status": "running"})
    start = time.perf_counter()
    result = RUNNERS[spec.kind](spec, threads)
    wall = time.perf_counter() - start
    result.metadata = {**_metadata(spec), **result.metadata, "wall_time_s": wall}
    if out_dir is not None:
        result.write(out_dir, stem, wall)
    return result
