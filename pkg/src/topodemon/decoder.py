"""Minimum-weight perfect matching on the (2+1)-D plaquette decoding graph.

Defects live at (plaquette, round). Two defects are joined by the
shortest spacetime path: ``w_s`` per plaquette step, ``w_t`` per round.
Every defect may instead terminate on the y = 0 / y = L boundary (or, when
the last round is noisy, on the future time boundary) at its cheapest
boundary distance.

Two exact solvers share one tie-breaking rule, so they return the same
matching: among minimum-weight matchings, the one whose partner vector
``(partner(0), partner(1), ...)`` is lexicographically smallest, with a
boundary match ranked after every defect partner. Weights are compared as
integers built from integer step counts, so ties are exact.

``SpacetimeMatcher`` is the batch engine used by the Monte Carlo sweeps.
It solves the same matching problem with PyMatching and only differs from
the exact solvers on exact ties.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import networkx as nx
import numpy as np
import pymatching

from .errors import CapacityError
from .geometry import CodeGeometry, logical_z
from .noise import ErrorTruth, NoiseParams, SyndromeHistory

WEIGHT_SCALE = 1 << 20
MIN_PROB = 1e-12
EXHAUSTIVE_DEFECT_LIMIT = 16

BOTTOM, TOP, FUTURE = "bottom", "top", "future"


def log_likelihood_weight(prob: float) -> float:
    prob = min(max(prob, MIN_PROB), 0.5 - MIN_PROB)
    return float(np.log((1 - prob) / prob))


@dataclass(frozen=True)
class DecodingGraph:
    defect_nodes: tuple  # (plaquette, round), sorted by (round, plaquette)
    coords: np.ndarray = field(repr=False)  # k x 3: x, y, round
    space_steps: np.ndarray = field(repr=False)  # k x k Manhattan plaquette distance
    time_steps: np.ndarray = field(repr=False)  # k x k
    boundary_side: tuple = field(repr=False)  # per defect: bottom / top / future
    boundary_steps: np.ndarray = field(repr=False)  # per defect, in units of its side's step
    space_weight: float = 1.0
    time_weight: float = 1.0
    distance: int = 1

    @property
    def n_defects(self) -> int:
        return len(self.defect_nodes)

    @property
    def pair_weights(self) -> np.ndarray:
        return self.space_weight * self.space_steps + self.time_weight * self.time_steps

    @property
    def boundary_weights(self) -> np.ndarray:
        unit = np.array([self.time_weight if s == FUTURE else self.space_weight for s in self.boundary_side])
        return unit * self.boundary_steps

    @property
    def _units(self):
        return round(self.space_weight * WEIGHT_SCALE), round(self.time_weight * WEIGHT_SCALE)

    def pair_weights_int(self) -> list:
        ws, wt = self._units
        k = self.n_defects
        return [[int(self.space_steps[i, j]) * ws + int(self.time_steps[i, j]) * wt for j in range(k)] for i in range(k)]

    def boundary_weights_int(self) -> list:
        ws, wt = self._units
        return [int(n) * (wt if s == FUTURE else ws) for s, n in zip(self.boundary_side, self.boundary_steps)]

    def scaled(self, factor: float) -> "DecodingGraph":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return DecodingGraph(
            self.defect_nodes, self.coords, self.space_steps, self.time_steps, self.boundary_side,
            self.boundary_steps, self.space_weight * factor, self.time_weight * factor, self.distance,
        )

    def pair_crosses(self, i: int, j: int, row: int) -> int:
        """Parity with which a shortest i-j path crosses Z-bar(row)."""
        lo, hi = sorted((int(self.coords[i, 1]), int(self.coords[j, 1])))
        return int(lo < row <= hi)

    def boundary_crosses(self, i: int, row: int) -> int:
        y = int(self.coords[i, 1])
        side = self.boundary_side[i]
        if side == BOTTOM:
            return int(row <= y)
        if side == TOP:
            return int(row > y)
        return 0


@dataclass(frozen=True)
class Matching:
    pairs: tuple  # (i, j) defect pairs, i < j
    boundary: tuple  # defects matched to the boundary
    total_weight: float
    inferred_logical_flip: int
    total_weight_int: int = 0


def build_decoding_graph(geom: CodeGeometry, noise: NoiseParams, history: SyndromeHistory) -> DecodingGraph:
    if history.outcomes.shape[1] != geom.n_plaquettes:
        raise ValueError("history does not match the geometry")
    nodes = tuple(sorted(history.detections, key=lambda d: (d[1], d[0])))
    return graph_from_defects(geom, noise, history.rounds, nodes)


def graph_from_defects(geom: CodeGeometry, noise: NoiseParams, rounds: int, nodes) -> DecodingGraph:
    n = geom.n_cols
    l = geom.distance
    k = len(nodes)
    coords = np.array([(c % n, c // n, r) for c, r in nodes], dtype=np.int64).reshape(k, 3)
    space = np.abs(coords[:, None, 0] - coords[None, :, 0]) + np.abs(coords[:, None, 1] - coords[None, :, 1])
    time = np.abs(coords[:, None, 2] - coords[None, :, 2])
    w_s = log_likelihood_weight(noise.p)
    w_t = log_likelihood_weight(noise.q)
    sides, steps = [], []
    for x, y, r in coords:
        options = [(int(y) + 1) * w_s, (l - int(y)) * w_s]
        labels = [(BOTTOM, int(y) + 1), (TOP, l - int(y))]
        if not noise.final_round_perfect and r == rounds - 1:
            options.append(w_t)
            labels.append((FUTURE, 1))
        best = int(np.argmin(options))  # first minimum: bottom, then top, then future
        sides.append(labels[best][0])
        steps.append(labels[best][1])
    return DecodingGraph(
        defect_nodes=tuple(nodes),
        coords=coords,
        space_steps=space,
        time_steps=time,
        boundary_side=tuple(sides),
        boundary_steps=np.array(steps, dtype=np.int64),
        space_weight=w_s,
        time_weight=w_t,
        distance=l,
    )


def _finish(graph: DecodingGraph, pairs, boundary, reference_row: int) -> Matching:
    pairs = tuple(sorted(tuple(sorted(p)) for p in pairs))
    boundary = tuple(sorted(boundary))
    pw = graph.pair_weights
    bw = graph.boundary_weights
    pwi = graph.pair_weights_int()
    bwi = graph.boundary_weights_int()
    total = sum(pw[i, j] for i, j in pairs) + sum(bw[i] for i in boundary)
    total_int = sum(pwi[i][j] for i, j in pairs) + sum(bwi[i] for i in boundary)
    flip = 0
    for i, j in pairs:
        flip ^= graph.pair_crosses(i, j, reference_row)
    for i in boundary:
        flip ^= graph.boundary_crosses(i, reference_row)
    return Matching(pairs, boundary, float(total), flip, total_int)


def _components(k: int, keep) -> list:
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in keep:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _solve_component(members, pwi, bwi):
    """Canonical min-weight matching of one component via blossom on the twin graph.

    Nodes 0..m-1 are the defects (global order kept), m..2m-1 their boundary
    twins. Edge cost is ``weight * K + tiebreak`` with a perturbation whose
    sum over a perfect matching encodes the partner vector in base B, so the
    minimum is the lexicographically first minimum-weight matching.
    """
    m = len(members)
    n = 2 * m
    base = n + 1
    big_k = base**n

    def tiebreak(u, v):
        return v * base ** (n - 1 - u) + u * base ** (n - 1 - v)

    costs = []
    for a in range(m):
        gi = members[a]
        for b in range(a + 1, m):
            gj = members[b]
            if pwi[gi][gj] <= bwi[gi] + bwi[gj]:
                costs.append((a, b, pwi[gi][gj] * big_k + tiebreak(a, b)))
        costs.append((a, m + a, bwi[gi] * big_k + tiebreak(a, m + a)))
        for b in range(a + 1, m):
            costs.append((m + a, m + b, tiebreak(m + a, m + b)))
    ceiling = max(c for _, _, c in costs) + 1
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_weighted_edges_from((u, v, ceiling - c) for u, v, c in costs)
    mate = nx.max_weight_matching(g, maxcardinality=True)
    pairs, boundary = [], []
    for u, v in mate:
        u, v = min(u, v), max(u, v)
        if v < m:
            pairs.append((members[u], members[v]))
        elif u < m:
            boundary.append(members[u])
    return pairs, boundary


def mwpm_decode(graph: DecodingGraph, reference_row: int = 0) -> Matching:
    k = graph.n_defects
    if k == 0:
        return Matching((), (), 0.0, 0, 0)
    pwi = graph.pair_weights_int()
    bwi = graph.boundary_weights_int()
    # A pair dearer than sending both ends to the boundary is never optimal.
    keep = [(i, j) for i in range(k) for j in range(i + 1, k) if pwi[i][j] <= bwi[i] + bwi[j]]
    pairs, boundary = [], []
    for members in _components(k, keep):
        if len(members) == 1:
            boundary.append(members[0])
            continue
        p, b = _solve_component(members, pwi, bwi)
        pairs += p
        boundary += b
    return _finish(graph, pairs, boundary, reference_row)


def exhaustive_decode(graph: DecodingGraph, reference_row: int = 0) -> Matching:
    """Oracle: recursive enumeration of every defect pairing / boundary choice."""
    k = graph.n_defects
    if k > EXHAUSTIVE_DEFECT_LIMIT:
        raise CapacityError(f"exhaustive matching limited to {EXHAUSTIVE_DEFECT_LIMIT} defects, got {k}")
    pwi = graph.pair_weights_int()
    bwi = graph.boundary_weights_int()

    @lru_cache(maxsize=None)
    def best(mask: int):
        if mask == 0:
            return 0, ()
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        # Options in partner order: defects ascending, then the boundary.
        options = []
        for j in range(i + 1, k):
            if rest >> j & 1:
                w, choice = best(rest & ~(1 << j))
                options.append((pwi[i][j] + w, ((i, j),) + choice))
        w, choice = best(rest)
        options.append((bwi[i] + w, ((i, None),) + choice))
        return min(options, key=lambda o: o[0])  # min() keeps the first of equal weights

    _, choice = best((1 << k) - 1)
    pairs = [c for c in choice if c[1] is not None]
    boundary = [c[0] for c in choice if c[1] is None]
    return _finish(graph, pairs, boundary, reference_row)


class SpacetimeMatcher:
    """PyMatching graph over rounds x plaquettes for batch decoding.

    Detector ``r * |P| + c`` is plaquette c in round r. Observable 0 is the
    parity of the correction on Z-bar(``reference_row``).
    """

    def __init__(self, geom: CodeGeometry, noise: NoiseParams, rounds: int, reference_row: int = 0):
        self.geom = geom
        self.rounds = rounds
        n_p = geom.n_plaquettes
        w_s = log_likelihood_weight(noise.p)
        w_t = log_likelihood_weight(noise.q)
        zrow = logical_z(geom, reference_row).support
        ep = geom.edge_plaquettes
        m = pymatching.Matching()
        # Bottom-row edges go in first so that, for L = 1, "keep-original"
        # resolves the parallel boundary edges the same way as the exact solvers.
        order = sorted(range(geom.n_edges), key=lambda e: (ep[e, 1] >= 0, e))
        for r in range(rounds):
            off = r * n_p
            for e in order:
                a, b = ep[e]
                if a < 0:
                    continue
                faults = {0} if e in zrow else set()
                if b >= 0:
                    m.add_edge(off + a, off + b, fault_ids=faults, weight=w_s, merge_strategy="keep-original")
                else:
                    m.add_boundary_edge(off + a, fault_ids=faults, weight=w_s, merge_strategy="keep-original")
            if r < rounds - 1:
                for c in range(n_p):
                    m.add_edge(off + c, off + n_p + c, weight=w_t)
            elif not noise.final_round_perfect:
                for c in range(n_p):
                    m.add_boundary_edge(off + c, weight=w_t, merge_strategy="keep-original")
        if m.num_detectors < rounds * n_p:
            raise ValueError("decoding graph is missing detectors")
        self._matching = m

    def decode_batch(self, detections: np.ndarray) -> np.ndarray:
        out = self._matching.decode_batch(np.ascontiguousarray(detections, dtype=np.uint8))
        return out[:, 0].astype(np.uint8)


@lru_cache(maxsize=512)
def spacetime_matcher(geom: CodeGeometry, noise: NoiseParams, rounds: int, reference_row: int = 0) -> SpacetimeMatcher:
    return SpacetimeMatcher(geom, noise, rounds, reference_row)


def decode_success(
    geom: CodeGeometry,
    noise: NoiseParams,
    history: SyndromeHistory,
    truth: ErrorTruth,
    reference_row: int = 0,
    engine: str = "exact",
) -> bool:
    if engine == "exact":
        flip = mwpm_decode(build_decoding_graph(geom, noise, history), reference_row).inferred_logical_flip
    elif engine == "pymatching":
        det = history.detection_array.reshape(1, -1)
        flip = int(spacetime_matcher(geom, noise, history.rounds, reference_row).decode_batch(det)[0])
    else:
        raise ValueError(f"unknown decoder engine {engine!r}")
    actual = len(truth.accumulated_x_errors & logical_z(geom, reference_row).support) % 2
    return flip == actual
