"""Planar surface-code strip with qubits on the edges of an (N+1) x (L+1) grid.

Edge indexing is row-major with horizontal edges first::

    h(x, y) = y * N + x                       0 <= x < N, 0 <= y <= L
    v(x, y) = N * (L + 1) + y * (N + 1) + x   0 <= x <= N, 0 <= y < L

Vertices are ``y * (N + 1) + x`` and plaquettes ``y * N + x`` (lower-left
corner). Alice sits on the column x = 0, Bob on x = N.

Boundaries: the short sides x = 0 and x = N are where horizontal Z-strings
end. Plaquettes there omit the boundary vertical edge and the vertex stars
there keep only their vertical edges, so a horizontal path commutes with
every stabilizer. The long sides y = 0 and y = L end dual X-strings: the
horizontal edges on those rows belong to a single plaquette.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapacityError, ParameterError

Z_TERMINATING = "logical-Z-terminating"
X_TERMINATING = "logical-X-terminating"

EXHAUSTIVE_EDGE_LIMIT = 24


@dataclass(frozen=True)
class CodeGeometry:
    n_cols: int
    distance: int
    edges: tuple = field(repr=False)
    vertices: tuple = field(repr=False)
    plaquettes: tuple = field(repr=False)
    vertex_stabilizers: tuple = field(repr=False)
    plaquette_stabilizers: tuple = field(repr=False)
    boundary_class: dict = field(repr=False, hash=False, compare=False)
    alice_boundary_stabilizers: tuple = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_plaquettes(self) -> int:
        return len(self.plaquettes)

    def h_edge(self, x: int, y: int) -> int:
        return y * self.n_cols + x

    def v_edge(self, x: int, y: int) -> int:
        return self.n_cols * (self.distance + 1) + y * (self.n_cols + 1) + x

    def plaquette_index(self, x: int, y: int) -> int:
        return y * self.n_cols + x

    @cached_property
    def plaquette_matrix(self) -> np.ndarray:
        """|P| x |E| incidence matrix of the Z-type checks (uint8)."""
        mat = np.zeros((self.n_plaquettes, self.n_edges), dtype=np.uint8)
        for i, support in enumerate(self.plaquette_stabilizers):
            mat[i, sorted(support)] = 1
        return mat

    @cached_property
    def edge_plaquettes(self) -> np.ndarray:
        """|E| x 2 array of the plaquettes containing each edge, -1 padded.

        Bottom/left plaquette first, so a one-plaquette edge stores it in
        column 0.
        """
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        fill = np.zeros(self.n_edges, dtype=np.int64)
        for i, support in enumerate(self.plaquette_stabilizers):
            for e in sorted(support):
                out[e, fill[e]] = i
                fill[e] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "n_cols": self.n_cols,
            "distance": self.distance,
            "edges": [[list(a), list(b)] for a, b in self.edges],
            "vertices": [list(v) for v in self.vertices],
            "plaquettes": [list(p) for p in self.plaquettes],
            "vertex_stabilizers": [sorted(s) for s in self.vertex_stabilizers],
            "plaquette_stabilizers": [sorted(s) for s in self.plaquette_stabilizers],
            "boundary_class": dict(self.boundary_class),
            "alice_boundary_stabilizers": [list(s) for s in self.alice_boundary_stabilizers],
        }


@dataclass(frozen=True)
class LogicalOperator:
    kind: str  # "Z" or "X"
    support: frozenset
    row_or_col: int


def build_geometry(n_cols: int, distance: int) -> CodeGeometry:
    if int(n_cols) != n_cols or n_cols < 1:
        raise ParameterError("n_cols", f"must be an integer >= 1, got {n_cols!r}")
    if int(distance) != distance or distance < 1:
        raise ParameterError("distance", f"must be an integer >= 1, got {distance!r}")
    n, l = int(n_cols), int(distance)
    n_h = n * (l + 1)

    def h(x, y):
        return y * n + x

    def v(x, y):
        return n_h + y * (n + 1) + x

    edges = [((x, y), (x + 1, y)) for y in range(l + 1) for x in range(n)]
    edges += [((x, y), (x, y + 1)) for y in range(l) for x in range(n + 1)]
    vertices = tuple((x, y) for y in range(l + 1) for x in range(n + 1))
    plaquettes = tuple((x, y) for y in range(l) for x in range(n))

    plaq_stabs = []
    for x, y in plaquettes:
        support = {h(x, y), h(x, y + 1)}
        if x > 0:
            support.add(v(x, y))
        if x < n - 1:
            support.add(v(x + 1, y))
        plaq_stabs.append(frozenset(support))

    vert_stabs = []
    for x, y in vertices:
        support = set()
        if 0 < x < n:
            support.update((h(x - 1, y), h(x, y)))
        if y > 0:
            support.add(v(x, y - 1))
        if y < l:
            support.add(v(x, y))
        vert_stabs.append(frozenset(support))

    # Stars on x = 0 carry one dependency (their product is the identity),
    # so the top vertex is left out of Alice's independent set.
    alice = [("X", y * (n + 1)) for y in range(l)]
    alice += [("Z", y * n) for y in range(l)]

    return CodeGeometry(
        n_cols=n,
        distance=l,
        edges=tuple(edges),
        vertices=vertices,
        plaquettes=plaquettes,
        vertex_stabilizers=tuple(vert_stabs),
        plaquette_stabilizers=tuple(plaq_stabs),
        boundary_class={
            "x=0": Z_TERMINATING,
            "x=N": Z_TERMINATING,
            "y=0": X_TERMINATING,
            "y=L": X_TERMINATING,
        },
        alice_boundary_stabilizers=tuple(alice),
    )


def logical_z(geom: CodeGeometry, row: int) -> LogicalOperator:
    """Horizontal Z-string of N edges at height ``row``."""
    if not 0 <= row <= geom.distance:
        raise ParameterError("row", f"must lie in [0, {geom.distance}], got {row}")
    support = frozenset(geom.h_edge(x, row) for x in range(geom.n_cols))
    return LogicalOperator("Z", support, row)


def logical_x(geom: CodeGeometry, col: int) -> LogicalOperator:
    """Dual X-string crossing the strip from y = 0 to y = L at column ``col``.

    It cuts the horizontal edges h(col, 0..L), one per row, so it has L + 1
    edges and overlaps every Z-row representative exactly once.
    """
    if not 0 <= col < geom.n_cols:
        raise ParameterError("col", f"must lie in [0, {geom.n_cols - 1}], got {col}")
    support = frozenset(geom.h_edge(col, y) for y in range(geom.distance + 1))
    return LogicalOperator("X", support, col)


def verify_path_independence(geom: CodeGeometry, row_a: int, row_b: int) -> bool:
    """True iff the plaquettes between two rows multiply to Z(row_a) Z(row_b)."""
    for name, row in (("row_a", row_a), ("row_b", row_b)):
        if not 0 <= row <= geom.distance:
            raise ParameterError(name, f"must lie in [0, {geom.distance}], got {row}")
    lo, hi = sorted((row_a, row_b))
    region = set()
    for y in range(lo, hi):
        for x in range(geom.n_cols):
            region ^= geom.plaquette_stabilizers[geom.plaquette_index(x, y)]
    paths = logical_z(geom, lo).support ^ logical_z(geom, hi).support
    return region == paths


def gf2_rank(rows) -> int:
    """Rank over GF(2) of rows given as Python-int bitmasks."""
    basis = {}
    for r in rows:
        while r:
            top = r.bit_length() - 1
            if top not in basis:
                basis[top] = r
                break
            r ^= basis[top]
    return len(basis)


def _mask(support) -> int:
    m = 0
    for e in support:
        m |= 1 << e
    return m


def stabilizer_rank(geom: CodeGeometry) -> int:
    x_rank = gf2_rank(_mask(s) for s in geom.vertex_stabilizers)
    z_rank = gf2_rank(_mask(s) for s in geom.plaquette_stabilizers)
    return x_rank + z_rank


def min_logical_weight(geom: CodeGeometry) -> int:
    """Smallest X error with no plaquette syndrome and odd overlap with Z(0).

    Exhaustive: every subset of each weight is tried in increasing order of
    weight, so the first hit is the minimum.
    """
    if geom.n_edges > EXHAUSTIVE_EDGE_LIMIT:
        raise CapacityError(
            f"exhaustive search limited to {EXHAUSTIVE_EDGE_LIMIT} edges, "
            f"geometry has {geom.n_edges}"
        )
    synd = [0] * geom.n_edges
    for i, support in enumerate(geom.plaquette_stabilizers):
        for e in support:
            synd[e] |= 1 << i
    zbar = logical_z(geom, 0).support
    for w in range(1, geom.n_edges + 1):
        for subset in itertools.combinations(range(geom.n_edges), w):
            s = 0
            parity = 0
            for e in subset:
                s ^= synd[e]
                parity ^= e in zbar
            if s == 0 and parity:
                return w
    raise AssertionError("no logical operator found")  # unreachable: X-bar exists
