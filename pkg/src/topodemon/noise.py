"""Phenomenological bit-flip noise over repeated plaquette measurements.

Each round every data edge takes an X flip with probability ``p`` and every
plaquette outcome is misreported with probability ``p * meas_factor``. Only
the X sector is simulated: it is the one that flips the Z-bar class Bob has
to recover.

Random numbers come from one counter-based Philox stream per shot, keyed by
``(seed, shot_index)``. A shot consumes ``rounds * (|E| + |P|)`` uniforms in
row-major order (per round: all edges, then all plaquettes), so an r-round
history is exactly the first r rounds of any longer draw from the same
stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .geometry import CodeGeometry, logical_z

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseParams:
    p: float
    meas_factor: float = 0.1
    final_round_perfect: bool = True
    meas_p: float | None = None  # explicit measurement flip rate, overrides p * meas_factor

    def __post_init__(self):
        if not 0.0 <= self.p < 0.5:
            raise ParameterError("p", f"must lie in [0, 0.5), got {self.p}")
        if self.meas_factor < 0:
            raise ParameterError("meas_factor", f"must be >= 0, got {self.meas_factor}")
        if not 0.0 <= self.q < 0.5:
            raise ParameterError("meas_p", f"measurement flip rate must lie in [0, 0.5), got {self.q}")

    @property
    def q(self) -> float:
        return self.p * self.meas_factor if self.meas_p is None else self.meas_p


@dataclass(frozen=True)
class SyndromeHistory:
    rounds: int
    outcomes: np.ndarray = field(repr=False)  # rounds x |P| uint8
    detections: tuple  # sorted (plaquette, round) pairs

    @property
    def detection_array(self) -> np.ndarray:
        """rounds x |P| uint8 indicator of detection events."""
        out = np.zeros_like(self.outcomes)
        for c, r in self.detections:
            out[r, c] = 1
        return out

    def dump(self, geom: CodeGeometry, noise: NoiseParams, seed=None) -> str:
        lines = [
            f"# geometry n_cols={geom.n_cols} distance={geom.distance}",
            f"# noise p={noise.p!r} q={noise.q!r} final_round_perfect={noise.final_round_perfect}",
            f"# seed={seed} rounds={self.rounds}",
        ]
        lines += ["".join(str(int(b)) for b in row) for row in self.outcomes]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ErrorTruth:
    accumulated_x_errors: frozenset
    true_logical_flip: int  # parity of the final frame on Z-bar at row 0


def shot_rng(seed: int, shot_index: int) -> np.random.Generator:
    key = (int(seed) & MASK64) | ((int(shot_index) & MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed for a sweep point, stable in (master_seed, path)."""
    ss = np.random.SeedSequence([int(master_seed) & MASK64, *[int(v) for v in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def syndrome_of_frame(geom: CodeGeometry, x_errors) -> np.ndarray:
    frame = np.zeros(geom.n_edges, dtype=np.uint8)
    for e in x_errors:
        if not 0 <= e < geom.n_edges:
            raise ParameterError("x_errors", f"edge index {e} out of range [0, {geom.n_edges})")
        frame[e] ^= 1
    return ((geom.plaquette_matrix.astype(np.int64) @ frame) % 2).astype(np.uint8)


def draw_faults(geom: CodeGeometry, noise: NoiseParams, rounds: int, rng: np.random.Generator):
    """Per-round data flips (rounds x |E|) and outcome flips (rounds x |P|).

    The final-round outcome flips are drawn but zeroed when the last round
    is noiseless, which keeps the stream layout independent of that flag.
    """
    if int(rounds) != rounds or rounds < 1:
        raise ParameterError("rounds", f"must be an integer >= 1, got {rounds!r}")
    u = rng.random((rounds, geom.n_edges + geom.n_plaquettes))
    data = u[:, : geom.n_edges] < noise.p
    meas = u[:, geom.n_edges :] < noise.q
    if noise.final_round_perfect:
        meas[-1] = False
    return data, meas


def sample_history(geom: CodeGeometry, noise: NoiseParams, rounds: int, rng: np.random.Generator):
    data, meas = draw_faults(geom, noise, rounds, rng)
    h = geom.plaquette_matrix.astype(np.int64)
    frames = np.cumsum(data, axis=0) % 2
    syndromes = (frames @ h.T) % 2
    outcomes = (syndromes ^ meas).astype(np.uint8)
    prev = np.vstack([np.zeros((1, geom.n_plaquettes), dtype=np.uint8), outcomes[:-1]])
    det = outcomes ^ prev
    rs, cs = np.nonzero(det)
    detections = tuple(sorted((int(c), int(r)) for r, c in zip(rs, cs)))
    final = frozenset(int(e) for e in np.flatnonzero(frames[-1]))
    zbar = logical_z(geom, 0).support
    truth = ErrorTruth(final, len(final & zbar) % 2)
    return SyndromeHistory(rounds, outcomes, detections), truth


def detection_events(geom: CodeGeometry, data: np.ndarray, meas: np.ndarray) -> np.ndarray:
    """Flattened detection indicators ``(shots, rounds * |P|)`` for stacked faults.

    ``data`` is (shots, rounds, |E|) and ``meas`` (shots, rounds, |P|). Index
    ``r * |P| + c`` is plaquette c in round r.
    """
    shots, rounds, n_e = data.shape
    n_p = geom.n_plaquettes
    width = rounds * n_p
    targets = []
    s, r, e = np.nonzero(data)
    ep = geom.edge_plaquettes[e]
    for col in (0, 1):
        ok = ep[:, col] >= 0
        targets.append(s[ok] * width + r[ok] * n_p + ep[ok, col])
    s, r, c = np.nonzero(meas)
    targets.append(s * width + r * n_p + c)
    nxt = r + 1 < rounds
    targets.append(s[nxt] * width + (r[nxt] + 1) * n_p + c[nxt])
    idx = np.concatenate(targets)
    counts = np.bincount(idx, minlength=shots * width)
    return (counts % 2).astype(np.uint8).reshape(shots, width)


def logical_parity(geom: CodeGeometry, data: np.ndarray, row: int = 0) -> np.ndarray:
    """Parity of accumulated flips on Z-bar(row), per shot. ``data`` is (shots, rounds, |E|)."""
    cols = sorted(logical_z(geom, row).support)
    return (data[:, :, cols].sum(axis=(1, 2)) % 2).astype(np.uint8)


def sample_batch(geom: CodeGeometry, noise: NoiseParams, rounds: int, seed: int, shot_indices):
    """Stacked faults for the given shots, each from its own stream."""
    shot_indices = list(shot_indices)
    data = np.empty((len(shot_indices), rounds, geom.n_edges), dtype=bool)
    meas = np.empty((len(shot_indices), rounds, geom.n_plaquettes), dtype=bool)
    for k, i in enumerate(shot_indices):
        data[k], meas[k] = draw_faults(geom, noise, rounds, shot_rng(seed, i))
    return data, meas
