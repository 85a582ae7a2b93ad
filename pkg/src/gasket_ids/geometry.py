"""Exact integer geometry of the one-sided infinite Sierpinski gasket.

Points live on the skew lattice spanned by a2 = (1, 0) and a3 = (1/2, sqrt(3)/2).
A point is stored as (i, j, n) and represents (i * a2 + j * a3) * 2^{-n}, so the
mesh unit at refinement level n is 2^{-n} in the gasket (shortest-path) metric.
The blow-up G_M is the triangle with corners 0, 2^M a2, 2^M a3 together with its
gasket structure; the infinite gasket is the increasing union over M.

All projection / fiber computations are exact integer affine maps; floating
point enters only through derived quantities (weights as floats, distances).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

D_F = math.log(3) / math.log(2)   # Hausdorff dimension
D_W = math.log(5) / math.log(2)   # walk dimension
D_S = 2.0 * D_F / D_W             # spectral dimension

MESH_CAP = 9  # maximum M + n for build_mesh


def cell_is_in_gasket(I: int, J: int) -> bool:
    """Membership of the upward unit cell with lower-left corner (I, J).

    Bitwise rule: the cell belongs to the gasket iff I AND J == 0 (the
    Pascal-triangle-mod-2 pattern of the iterated function system).
    """
    if I < 0 or J < 0:
        return False
    return (I & J) == 0


def cell_is_in_gasket_ifs(I: int, J: int, depth: int) -> bool:
    """Reference oracle: descend the three-branch IFS for `depth` levels.

    Covers cells with I + J <= 2^depth - 1 (the blow-up G_depth at unit
    resolution); cells outside that triangle are not reachable at this depth.
    """
    if I < 0 or J < 0 or I + J > 2 ** depth - 1:
        return False
    if depth == 0:
        return I == 0 and J == 0
    h = 2 ** (depth - 1)
    # three contracted copies sit at offsets (0,0), (h,0), (0,h)
    for oi, oj in ((0, 0), (h, 0), (0, h)):
        if oi <= I and oj <= J and (I - oi) + (J - oj) <= h - 1:
            return cell_is_in_gasket_ifs(I - oi, J - oj, depth - 1)
    return False


def point_is_on_gasket(i: int, j: int) -> bool:
    """True iff lattice point (i, j) is a corner of some admissible cell."""
    if i < 0 or j < 0:
        return False
    # (i, j) is corner P0 of cell (i, j), P1 of cell (i-1, j), P2 of cell (i, j-1)
    if cell_is_in_gasket(i, j):
        return True
    if i >= 1 and cell_is_in_gasket(i - 1, j):
        return True
    if j >= 1 and cell_is_in_gasket(i, j - 1):
        return True
    return False


@dataclass(frozen=True)
class LatticePoint:
    """Gasket point i * 2^{-n} a2 + j * 2^{-n} a3."""

    i: int
    j: int
    n: int

    def __post_init__(self):
        if self.i < 0 or self.j < 0 or self.n < 0:
            raise ValueError("coordinates and level must be non-negative")
        if not point_is_on_gasket(self.i, self.j):
            raise ValueError(f"({self.i},{self.j}) at level {self.n} is not on the gasket")

    def canonical(self) -> tuple:
        i, j, n = self.i, self.j, self.n
        while n > 0 and i % 2 == 0 and j % 2 == 0:
            i //= 2
            j //= 2
            n -= 1
        return (i, j, n)

    def at_level(self, n: int) -> "LatticePoint":
        """Rescale to level n (must be representable there)."""
        if n >= self.n:
            k = n - self.n
            return LatticePoint(self.i << k, self.j << k, n)
        k = self.n - n
        if self.i % (1 << k) or self.j % (1 << k):
            raise ValueError("point not representable at coarser level")
        return LatticePoint(self.i >> k, self.j >> k, n)

    def __eq__(self, other):
        if not isinstance(other, LatticePoint):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def xy(self) -> tuple:
        """Euclidean coordinates (floats)."""
        u = self.i / 2 ** self.n
        v = self.j / 2 ** self.n
        return (u + 0.5 * v, v * math.sqrt(3) / 2)


# --- labels -----------------------------------------------------------------

LABELS = ("A", "B", "C")


def label_index(i: int, j: int, n: int) -> int:
    """Label of a point of V_0 given at mesh level n: (u - v) mod 3 in unit units.

    The three-cycles p1 = (A->B->C) and p2 = (A->C->B) act as +1 and -1 in Z_3,
    so l(u a2 + v a3) = (u - v) mod 3 with index(A)=0, index(B)=1, index(C)=2.
    """
    step = 1 << n
    if i % step or j % step:
        raise ValueError("point is not on the unit lattice V_0")
    return ((i >> n) - (j >> n)) % 3


def vertex_label(p: LatticePoint, M: int) -> str:
    """Label of a vertex of V_M (coordinates multiples of 2^M in unit units)."""
    step = 1 << (M + p.n)
    if p.i % step or p.j % step:
        raise ValueError("point is not on the 2^M lattice V_M")
    return LABELS[label_index(p.i, p.j, p.n)]


def _corner_by_label(M: int, s: int):
    """Map label index -> mesh coordinates of the G_M corner with that label.

    s = 2^{M+n} is the side of G_M in mesh units. The origin carries label A;
    the corner 2^M a2 carries label index 2^M mod 3, the corner 2^M a3 the
    inverse index.
    """
    c = pow(2, M, 3)
    return {0: (0, 0), c: (s, 0), (-c) % 3: (0, s)}


def _cell_corner_labels(I: int, J: int, M: int):
    """Label indices of the three corners of the size-2^M cell (I, J)."""
    c = pow(2, M, 3)
    l0 = ((I - J) * c) % 3
    return l0, (l0 + c) % 3, (l0 - c) % 3


def project(p: LatticePoint, M: int) -> LatticePoint:
    """Barycentric label-matching projection pi_M onto G_M (exact integers)."""
    n = p.n
    s = 1 << (M + n)
    i, j = p.i, p.j
    target = _corner_by_label(M, s)
    if i % s == 0 and j % s == 0:
        # p in V_M: mapped to the G_M corner carrying its own label
        ti, tj = target[label_index(i, j, n)]
        return LatticePoint(ti, tj, n)
    I, J = i // s, j // s
    r1, r2 = i - I * s, j - J * s
    if not cell_is_in_gasket(I, J) or r1 + r2 > s:
        raise ValueError("point does not lie in an admissible 2^M cell")
    l0, l1, l2 = _cell_corner_labels(I, J, M)
    t0, t1, t2 = target[l0], target[l1], target[l2]
    w0 = s - r1 - r2
    num_i = w0 * t0[0] + r1 * t1[0] + r2 * t2[0]
    num_j = w0 * t0[1] + r1 * t1[1] + r2 * t2[1]
    assert num_i % s == 0 and num_j % s == 0
    return LatticePoint(num_i // s, num_j // s, n)


def scaled_cells(M: int, K: int):
    """Size-2^M cells of G_{M+K}, addressed at their own scale, lex order."""
    top = (1 << K) - 1
    out = []
    for I in range(top + 1):
        for J in range(top + 1 - I):
            if (I & J) == 0:
                out.append((I, J))
    out.sort()
    return out


def fiber(q: LatticePoint, M: int, K: int) -> list:
    """Preimages of q under pi_M, one per size-2^M cell of G_{M+K}.

    Returns 3^K points; for q in V_M the per-cell preimages coincide at shared
    junction vertices, so the list then contains repeats -- this multiplicity
    is exactly the factor 2 carried by fiber sums at V_M \\ {0}.
    """
    n = q.n
    s = 1 << (M + n)
    i, j = q.i, q.j
    if i + j > s:
        raise ValueError("q is not in G_M")
    c = pow(2, M, 3)
    # barycentric weights of q with respect to the G_M corners, keyed by label
    w = {0: s - i - j, c: i, (-c) % 3: j}
    out = []
    for I, J in scaled_cells(M, K):
        l0, l1, l2 = _cell_corner_labels(I, J, M)
        p0 = (I * s, J * s)
        p1 = ((I + 1) * s, J * s)
        p2 = (I * s, (J + 1) * s)
        num_i = w[l0] * p0[0] + w[l1] * p1[0] + w[l2] * p2[0]
        num_j = w[l0] * p0[1] + w[l1] * p1[1] + w[l2] * p2[1]
        assert num_i % s == 0 and num_j % s == 0
        out.append(LatticePoint(num_i // s, num_j // s, n))
    return out


def fiber_distinct(q: LatticePoint, M: int, K: int):
    """Distinct fiber points with multiplicities (in fiber-list order)."""
    pts, mult = [], []
    seen = {}
    for p in fiber(q, M, K):
        key = (p.i, p.j)
        if key in seen:
            mult[seen[key]] += 1
        else:
            seen[key] = len(pts)
            pts.append(p)
            mult.append(1)
    return pts, mult


# --- meshes -----------------------------------------------------------------

class GasketMesh:
    """Level-n graph approximation of G_M.

    vertices are lex-sorted (i, j) mesh coordinates; adjacency lists are
    sorted; cells are the admissible unit-mesh upward triangles; the vertex
    weight lumps 1/3 of each incident cell's mass 3^{-n}.
    """

    def __init__(self, M: int, n: int, cap: int = MESH_CAP):
        if M < 0 or n < 0:
            raise ValueError("M and n must be non-negative")
        if M + n > cap:
            raise ValueError(f"mesh size cap exceeded: M+n = {M+n} > {cap}")
        self.M = M
        self.n = n
        self.side = 1 << (M + n)
        side = self.side

        cells = []
        for I in range(side):
            for J in range(side - I):
                if (I & J) == 0:
                    cells.append((I, J))
        cells.sort()
        self.cells = cells

        vert = set()
        for I, J in cells:
            vert.add((I, J))
            vert.add((I + 1, J))
            vert.add((I, J + 1))
        coords = sorted(vert)
        self.coords = coords
        self.index = {c: k for k, c in enumerate(coords)}
        self.points = [LatticePoint(i, j, n) for i, j in coords]

        nv = len(coords)
        adj = [set() for _ in range(nv)]
        incident = np.zeros(nv, dtype=np.int64)
        for I, J in cells:
            a = self.index[(I, J)]
            b = self.index[(I + 1, J)]
            c = self.index[(I, J + 1)]
            adj[a].update((b, c))
            adj[b].update((a, c))
            adj[c].update((a, b))
            incident[a] += 1
            incident[b] += 1
            incident[c] += 1
        self.adjacency = [sorted(s) for s in adj]
        self.incident_cells = incident
        self.degree = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        # vertex mass: (incident cells)/3 * 3^{-n}
        self.vertex_weight = incident / 3.0 * 3.0 ** (-n)
        self._hops_cache = {}
        self._dist_matrix = None

    # -- basic queries

    def __len__(self):
        return len(self.coords)

    def _coords_array(self) -> np.ndarray:
        if not hasattr(self, "_coords_np"):
            self._coords_np = np.array(self.coords, dtype=np.int64)
        return self._coords_np

    def corner_indices(self):
        s = self.side
        return (self.index[(0, 0)], self.index[(s, 0)], self.index[(0, s)])

    def vertex_weight_exact(self):
        return [Fraction(int(c), 3 ** (self.n + 1)) for c in self.incident_cells]

    def total_mass_exact(self) -> Fraction:
        return sum(self.vertex_weight_exact(), Fraction(0))

    def contains(self, p: LatticePoint) -> bool:
        try:
            q = p.at_level(self.n)
        except ValueError:
            return False
        return (q.i, q.j) in self.index

    def vertex_id(self, p: LatticePoint) -> int:
        q = p.at_level(self.n)
        return self.index[(q.i, q.j)]

    def submesh_indices(self, M_sub: int):
        """Indices of vertices lying in G_{M_sub} (requires M_sub <= M).

        The returned order is lex on (i, j), matching the vertex order of
        build_mesh(M_sub, n), so restriction commutes with indexing.
        """
        if M_sub > self.M:
            raise ValueError("M_sub exceeds mesh level")
        s = 1 << (M_sub + self.n)
        return np.array([k for k, (i, j) in enumerate(self.coords) if i + j <= s],
                        dtype=np.int64)

    # -- distances

    def hops_from(self, src: int) -> np.ndarray:
        """BFS hop counts from vertex index src."""
        if src in self._hops_cache:
            return self._hops_cache[src]
        nv = len(self.coords)
        hops = np.full(nv, -1, dtype=np.int64)
        hops[src] = 0
        dq = deque([src])
        while dq:
            u = dq.popleft()
            for v in self.adjacency[u]:
                if hops[v] < 0:
                    hops[v] = hops[u] + 1
                    dq.append(v)
        self._hops_cache[src] = hops
        return hops

    def distance_matrix(self) -> np.ndarray:
        """All-pairs gasket distances (hops * 2^{-n}), cached."""
        if self._dist_matrix is None:
            from scipy.sparse import csr_matrix
            from scipy.sparse.csgraph import shortest_path
            nv = len(self.coords)
            rows, cols = [], []
            for u, nbrs in enumerate(self.adjacency):
                rows.extend([u] * len(nbrs))
                cols.extend(nbrs)
            g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, nv))
            hops = shortest_path(g, method="D", unweighted=True)
            self._dist_matrix = hops * 2.0 ** (-self.n)
        return self._dist_matrix

    def to_json_dict(self) -> dict:
        edges = []
        for u, nbrs in enumerate(self.adjacency):
            for v in nbrs:
                if u < v:
                    edges.append([u, v])
        return {
            "M": self.M,
            "n": self.n,
            "vertices": [[i, j] for i, j in self.coords],
            "edges": edges,
            "weights": [float(w) for w in self.vertex_weight],
        }


_MESH_CACHE = {}


def build_mesh(M: int, n: int, cap: int = MESH_CAP) -> GasketMesh:
    """Memoized mesh constructor (meshes are immutable; BFS/distance caches
    accumulate on the shared instance)."""
    if M < 0 or n < 0:
        raise ValueError("M and n must be non-negative")
    if M + n > cap:
        raise ValueError(f"mesh size cap exceeded: M+n = {M+n} > {cap}")
    key = (M, n)
    if key not in _MESH_CACHE:
        _MESH_CACHE[key] = GasketMesh(M, n, cap=cap)
    return _MESH_CACHE[key]


def geodesic_distance(u: LatticePoint, v: LatticePoint, mesh: GasketMesh) -> Fraction:
    a = mesh.vertex_id(u)
    b = mesh.vertex_id(v)
    hops = mesh.hops_from(a)[b]
    return Fraction(int(hops), 1 << mesh.n)


def collar_measure(M: int, r) -> Fraction:
    """Exact m(B(0, 2^M) \\ B(0, 2^M - r)) by cell counting.

    r must be a dyadic rational in (0, 2^M); counting happens at the finest
    level where r is resolvable, where every mesh cell lies entirely inside
    or entirely outside the closed ball B(0, 2^M - r).
    """
    r = Fraction(r)
    if not (0 < r < 2 ** M):
        raise ValueError("r must lie in (0, 2^M)")
    den = r.denominator
    if den & (den - 1):
        raise ValueError("r must be a dyadic rational")
    n = den.bit_length() - 1
    mesh = build_mesh(M, n)
    hops = mesh.hops_from(mesh.index[(0, 0)])
    thr = (2 ** M - r) * 2 ** n
    assert thr.denominator == 1
    thr = int(thr)
    count = 0
    for I, J in mesh.cells:
        h = min(hops[mesh.index[(I, J)]],
                hops[mesh.index[(I + 1, J)]],
                hops[mesh.index[(I, J + 1)]])
        if h >= thr:
            count += 1
    return Fraction(count, 3 ** n)
