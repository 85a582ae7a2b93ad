"""Poisson clouds, profile functions W, potentials and their periodizations.

Cloud points are snapped to finest-level mesh cells; a point is the interior
of its cell, represented by the cell's lower-left corner vertex. Integrals
over the Hausdorff measure m become weighted sums over cells (mass 3^{-n}),
which makes the Poisson exponential formula an exact identity in this model,
testable to Monte Carlo error only.

Profile families:
  cellwise  -- W(x,y) = psi(pi_{M0}(y)) when x and y share a (closed) size
               2^{M0} triangle, else 0; psi is piecewise constant on the
               depth-d cells of G_{M0}.
  radial    -- W(x,y) = step function of the gasket distance d(x,y),
               supported in [0, R].
  shellwise -- W(x,y) = a_k where k is the smallest scale at which x and y
               share a closed 2^k triangle; (a_k) finite list plus geometric
               tail.
  custom    -- arbitrary callable on mesh vertex pairs (not serializable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GasketMesh, LatticePoint, build_mesh, project, scaled_cells


# ---------------------------------------------------------------------------
# profile specs

@dataclass(frozen=True)
class ProfileSpec:
    family: str                      # cellwise | radial | shellwise | custom
    # cellwise
    M0: int = 0
    psi_depth: int = 0
    psi_values: tuple = (1.0,)       # one value per depth-d cell of G_{M0}, lex order
    # radial
    R: float = 1.0
    knots: tuple = ()                # ((r1, v1), ..., (rk, vk)), rk = R; W = v_i
                                     # for the first r_i with d <= r_i, else 0
    # shellwise
    coeffs: tuple = ()               # a_0 ... a_m
    tail_ratio: float = 0.0          # a_n = a_m * tail_ratio^(n-m) for n > m
    # custom
    func: object = None              # func(mesh, xi, yi) -> float

    def __post_init__(self):
        f = self.family
        if f == "cellwise":
            if self.M0 < 0 or self.psi_depth < 0:
                raise ValueError("cellwise requires M0 >= 0, psi_depth >= 0")
            ncell = len(scaled_cells(0, self.psi_depth))
            if len(self.psi_values) != ncell:
                raise ValueError(f"psi_values must have {ncell} entries")
            if any(v < 0 for v in self.psi_values):
                raise ValueError("psi must be non-negative")
        elif f == "radial":
            ks = tuple(self.knots) if self.knots else ((float(self.R), 1.0),)
            rs = [k[0] for k in ks]
            if rs != sorted(rs) or any(v < 0 for _, v in ks) or any(r <= 0 for r in rs):
                raise ValueError("radial knots must be ascending with values >= 0")
            object.__setattr__(self, "knots", ks)
            object.__setattr__(self, "R", float(rs[-1]))
        elif f == "shellwise":
            if not self.coeffs or any(a < 0 for a in self.coeffs):
                raise ValueError("shellwise requires non-negative coefficients")
            if not (0 <= self.tail_ratio < 1.0 / 3.0):
                raise ValueError("tail_ratio must lie in [0, 1/3) so that "
                                 "sum 3^n a_n converges")
            object.__setattr__(self, "coeffs", tuple(float(a) for a in self.coeffs))
        elif f == "custom":
            if not callable(self.func):
                raise ValueError("custom family requires a callable")
        else:
            raise ValueError(f"unknown profile family {self.family!r}")

    # -- family helpers

    def radial_value(self, d):
        """Vectorized step-function evaluation for the radial family."""
        d = np.asarray(d, dtype=float)
        out = np.zeros_like(d)
        prev = -1.0
        for r, v in self.knots:
            out[(d > prev) & (d <= r + 1e-12)] = v
            prev = r
        out[d <= 1e-15] = self.knots[0][1]
        return out

    def shell_coeff(self, k: int) -> float:
        cs = self.coeffs
        if k < len(cs):
            return cs[k]
        if self.tail_ratio == 0.0:
            return 0.0
        return cs[-1] * self.tail_ratio ** (k - len(cs) + 1)

    def shell_tail_sum(self, k_from: int) -> float:
        """sum_{k >= k_from} 2 * 3^{k-1} a_k (closed form beyond the stored list)."""
        total = 0.0
        m = len(self.coeffs)
        for k in range(k_from, m):
            total += 2.0 * 3.0 ** (k - 1) * self.coeffs[k]
        rho = self.tail_ratio
        if rho > 0:
            k0 = max(k_from, m)
            a_k0 = self.shell_coeff(k0)
            # geometric with ratio 3 * rho < 1
            total += 2.0 * 3.0 ** (k0 - 1) * a_k0 / (1.0 - 3.0 * rho)
        return total


def radial_indicator(c: float, R: float) -> ProfileSpec:
    return ProfileSpec("radial", knots=((float(R), float(c)),))


# ---------------------------------------------------------------------------
# cell containment helpers (exact integer logic)

def vertex_cells_at_scale(i: int, j: int, n: int, k: int):
    """Admissible closed scale-2^k cells containing mesh vertex (i, j)."""
    s = 1 << (k + n)
    out = []
    for A in (i // s, i // s - 1):
        if A < 0:
            continue
        for B in (j // s, j // s - 1):
            if B < 0 or (A & B):
                continue
            r1, r2 = i - A * s, j - B * s
            if 0 <= r1 and 0 <= r2 and r1 + r2 <= s:
                out.append((A, B))
    return out


def cell_ancestor(cI: int, cJ: int, n: int, k: int):
    """Scale-2^k cell containing the mesh cell (cI, cJ) (interior inclusion)."""
    return (cI >> (k + n), cJ >> (k + n))


def shared_scale(xi: int, xj: int, yi_cell: int, yj_cell: int, n: int,
                 k_max: int) -> int:
    """Smallest k such that vertex x lies in the closed scale-2^k ancestor of
    the cell y; k_max+1 if none up to k_max."""
    for k in range(k_max + 1):
        anc = cell_ancestor(yi_cell, yj_cell, n, k)
        if anc in vertex_cells_at_scale(xi, xj, n, k):
            return k
    return k_max + 1


def vertex_shared_scale(xi: int, xj: int, yi: int, yj: int, n: int,
                        k_max: int) -> int:
    """Smallest k at which two mesh vertices share a closed scale-2^k cell."""
    for k in range(k_max + 1):
        cx = vertex_cells_at_scale(xi, xj, n, k)
        cy = vertex_cells_at_scale(yi, yj, n, k)
        if set(cx) & set(cy):
            return k
    return k_max + 1


def project_cell(cI: int, cJ: int, n: int, M: int):
    """Image of mesh cell (cI, cJ) under pi_M, as a mesh cell address of G_M."""
    p0 = project(LatticePoint(cI, cJ, n), M)
    p1 = project(LatticePoint(cI + 1, cJ, n), M)
    p2 = project(LatticePoint(cI, cJ + 1, n), M)
    return (min(p0.i, p1.i, p2.i), min(p0.j, p1.j, p2.j))


def _fiber_cells(cI: int, cJ: int, n: int, M: int, K: int):
    """Label-matching copies of mesh cell (cI, cJ) in G_{M+K}, one per
    size-2^M cell (the cell must lie inside G_M)."""
    p0 = LatticePoint(cI, cJ, n)
    p1 = LatticePoint(cI + 1, cJ, n)
    p2 = LatticePoint(cI, cJ + 1, n)
    from .geometry import fiber
    f0 = fiber(p0, M, K)
    f1 = fiber(p1, M, K)
    f2 = fiber(p2, M, K)
    return [(min(a.i, b.i, c.i), min(a.j, b.j, c.j))
            for a, b, c in zip(f0, f1, f2)]


def _psi_lookup(spec: ProfileSpec, cell_addr, n: int):
    """psi value for a point of G_{M0} given by its containing mesh cell."""
    d = spec.psi_depth
    side_shift = spec.M0 - d + n
    if side_shift < 0:
        raise ValueError("psi_depth finer than the mesh resolution")
    A, B = cell_addr[0] >> side_shift, cell_addr[1] >> side_shift
    cells = scaled_cells(0, d)
    return spec.psi_values[cells.index((A, B))]


def _psi_lookup_vertex(spec: ProfileSpec, i: int, j: int, n: int):
    """psi at a vertex of the G_{M0} mesh (lex-smallest containing cell)."""
    d = spec.psi_depth
    k = spec.M0 - d
    cands = vertex_cells_at_scale(i, j, n, k)
    cells = scaled_cells(0, d)
    cands = [c for c in cands if c in cells]
    return spec.psi_values[cells.index(min(cands))]


# ---------------------------------------------------------------------------
# pointwise profile evaluation (vertex pairs)

def profile_eval_idx(spec: ProfileSpec, mesh: GasketMesh, xi: int, yi: int) -> float:
    """W at a pair of mesh vertex indices."""
    f = spec.family
    if f == "radial":
        d = mesh.distance_matrix()[xi, yi]
        return float(spec.radial_value(d))
    x = mesh.coords[xi]
    y = mesh.coords[yi]
    n = mesh.n
    if f == "cellwise":
        cx = vertex_cells_at_scale(x[0], x[1], n, spec.M0)
        cy = vertex_cells_at_scale(y[0], y[1], n, spec.M0)
        if not (set(cx) & set(cy)):
            return 0.0
        q = project(LatticePoint(y[0], y[1], n), spec.M0)
        return float(_psi_lookup_vertex(spec, q.i, q.j, n))
    if f == "shellwise":
        k = vertex_shared_scale(x[0], x[1], y[0], y[1], n, mesh.M)
        if k > mesh.M:
            return 0.0
        return float(spec.shell_coeff(k))
    return float(spec.func(mesh, xi, yi))


def profile_eval(spec: ProfileSpec, x: LatticePoint, y: LatticePoint,
                 mesh: GasketMesh) -> float:
    return profile_eval_idx(spec, mesh, mesh.vertex_id(x), mesh.vertex_id(y))


# ---------------------------------------------------------------------------
# Poisson clouds

@dataclass
class PoissonCloud:
    window: GasketMesh
    intensity: float
    seed: object
    cell_ids: np.ndarray             # indices into window.cells

    @property
    def cells(self):
        return [self.window.cells[k] for k in self.cell_ids]

    @property
    def rep_vertex_ids(self) -> np.ndarray:
        return np.array([self.window.index[c] for c in self.cells], dtype=np.int64)

    @property
    def points(self):
        n = self.window.n
        return [LatticePoint(cI, cJ, n) for cI, cJ in self.cells]

    def __len__(self):
        return len(self.cell_ids)

    def restrict_cells(self, M: int):
        """Cells of the cloud lying inside G_M (as (cI, cJ) mesh addresses)."""
        s = 1 << (M + self.window.n)
        return [(cI, cJ) for cI, cJ in self.cells if cI < s and cJ < s]

    def to_json_dict(self) -> dict:
        n = self.window.n
        return {
            "seed": self.seed if isinstance(self.seed, int) else str(self.seed),
            "intensity": self.intensity,
            "points": [[int(cI), int(cJ), n] for cI, cJ in self.cells],
        }


def sample_cloud(intensity: float, window: GasketMesh, seed) -> PoissonCloud:
    """Poisson(intensity * m(window)) points, uniform over finest cells."""
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    rng = np.random.default_rng(seed)
    count = rng.poisson(intensity * 3.0 ** window.M)
    cell_ids = rng.integers(0, len(window.cells), size=count)
    return PoissonCloud(window, float(intensity), seed, cell_ids)


# ---------------------------------------------------------------------------
# potentials

@dataclass
class PotentialVector:
    values: np.ndarray
    source: str
    tail_bound: float = 0.0


def _single_point_potential(spec: ProfileSpec, mesh: GasketMesh,
                            cell_addr, k_max: int) -> np.ndarray:
    """W(., y) over all mesh vertices for one cell-resolved point y."""
    nv = len(mesh)
    n = mesh.n
    cI, cJ = cell_addr
    f = spec.family
    if f == "radial":
        yid = mesh.index[(cI, cJ)]
        return spec.radial_value(mesh.distance_matrix()[:, yid])
    if f == "cellwise":
        anc = cell_ancestor(cI, cJ, n, spec.M0)
        s = 1 << (spec.M0 + n)
        A, B = anc
        coords = mesh._coords_array()
        r1 = coords[:, 0] - A * s
        r2 = coords[:, 1] - B * s
        inside = (r1 >= 0) & (r2 >= 0) & (r1 + r2 <= s)
        img = project_cell(cI, cJ, n, spec.M0)
        val = _psi_lookup(spec, img, n)
        return np.where(inside, val, 0.0)
    if f == "shellwise":
        coords = mesh._coords_array()
        shell = np.full(nv, k_max + 1, dtype=np.int64)
        for k in range(k_max, -1, -1):
            s = 1 << (k + n)
            A, B = cell_ancestor(cI, cJ, n, k)
            r1 = coords[:, 0] - A * s
            r2 = coords[:, 1] - B * s
            inside = (r1 >= 0) & (r2 >= 0) & (r1 + r2 <= s)
            shell[inside] = k
        vals = np.array([spec.shell_coeff(k) for k in range(k_max + 2)])
        vals[k_max + 1] = 0.0
        return vals[shell]
    yid = mesh.index[(cI, cJ)]
    return np.array([spec.func(mesh, xi, yid) for xi in range(nv)])


def potential_on_mesh(cloud: PoissonCloud, spec: ProfileSpec,
                      mesh: GasketMesh = None) -> PotentialVector:
    """V(x) = sum_i W(x, y_i) over the vertices of the cloud's window mesh."""
    mesh = cloud.window if mesh is None else mesh
    if mesh.n != cloud.window.n:
        raise ValueError("mesh refinement must match the cloud window")
    nv = len(mesh)
    V = np.zeros(nv)
    tail = 0.0
    for cell in cloud.cells:
        V += _single_point_potential(spec, mesh, cell, mesh.M)
        if spec.family == "shellwise":
            tail += spec.shell_tail_sum(mesh.M + 1)
    return PotentialVector(V, "raw", tail_bound=tail)


def periodize_usual(values_on_M: np.ndarray, M: int, target: GasketMesh) -> PotentialVector:
    """V_M(x) = V(project(x, M)) on the target mesh."""
    sub = build_mesh(M, target.n)
    if len(values_on_M) != len(sub):
        raise ValueError("values must live on the G_M mesh at the target refinement")
    out = np.empty(len(target))
    for k, p in enumerate(target.points):
        out[k] = values_on_M[sub.vertex_id(project(p, M))]
    return PotentialVector(out, "periodized")


def periodize_sznitman(cloud: PoissonCloud, spec: ProfileSpec, M: int,
                       K_trunc: int) -> PotentialVector:
    """Sznitman periodization on the G_M mesh.

    V*(x) = sum over cloud points inside G_M and all their fiber copies in
    G_{M + K_trunc} of W(x, copy); W is evaluated in the ambient mesh so the
    compact-range families are exact once K_trunc covers the range.
    """
    if K_trunc < 1:
        raise ValueError("K_trunc must be at least 1")
    n = cloud.window.n
    amb = build_mesh(M + K_trunc, n)
    sub_rows = amb.submesh_indices(M)
    V = np.zeros(len(sub_rows))
    tail = 0.0
    for cI, cJ in cloud.restrict_cells(M):
        for copy in _fiber_cells(cI, cJ, n, M, K_trunc):
            V += _single_point_potential(spec, amb, copy, amb.M)[sub_rows]
        if spec.family == "shellwise":
            # copies beyond the ambient window contribute at shells > M+K_trunc
            tail += 3.0 ** K_trunc * spec.shell_tail_sum(M + K_trunc + 1)
        elif spec.family == "radial" and spec.R >= 2.0 ** (M + K_trunc - 1):
            raise ValueError("radial range exceeds the fiber truncation window")
    return PotentialVector(V, "sznitman", tail_bound=tail)


# ---------------------------------------------------------------------------
# obstacles

def obstacle_masks(cloud: PoissonCloud, a: float, M: int, K_trunc: int) -> dict:
    """Blocked-vertex masks over the G_M mesh.

    usual:    O_M = balls of radius a around the cloud points inside G_M;
    sznitman: O*_M = balls around every fiber copy of those points, computed
              in the ambient G_{M+K_trunc} and restricted to G_M (this picks
              up spill-over from copies just outside G_M).
    """
    if a < 0:
        raise ValueError("radius must be non-negative")
    win = cloud.window
    n = win.n
    if win.M < M:
        raise ValueError("cloud window smaller than G_M")
    amb = build_mesh(M + K_trunc, n)
    sub_rows_win = win.submesh_indices(M)
    sub_rows_amb = amb.submesh_indices(M)
    inside = cloud.restrict_cells(M)

    # O cap G_M uses balls around every cloud point (window geometry), so
    # spill-over from points just outside G_M is captured
    blocked_win = np.zeros(len(win), dtype=bool)
    D_win = win.distance_matrix()
    for cI, cJ in cloud.cells:
        blocked_win |= D_win[:, win.index[(cI, cJ)]] <= a + 1e-12

    # O*_M: balls around every fiber copy of the points inside G_M
    blocked_amb = np.zeros(len(amb), dtype=bool)
    D_amb = amb.distance_matrix()
    for cI, cJ in inside:
        for copy in _fiber_cells(cI, cJ, n, M, K_trunc):
            blocked_amb |= D_amb[:, amb.index[copy]] <= a + 1e-12
    return {"usual": blocked_win[sub_rows_win], "sznitman": blocked_amb[sub_rows_amb]}


# ---------------------------------------------------------------------------
# (W2)/(W3) checkers and the exponential formula

def generic_vertex_ids(mesh: GasketMesh) -> np.ndarray:
    """Vertices interior to their unit-scale cell (away from V_0)."""
    n = mesh.n
    s = 1 << n
    out = []
    for k, (i, j) in enumerate(mesh.coords):
        r1, r2 = i % s, j % s
        if r1 > 0 and r2 > 0 and r1 + r2 < s:
            out.append(k)
    return np.array(out, dtype=np.int64)


def check_W3(spec: ProfileSpec, M_range, mesh: GasketMesh, n_pairs: int = 200,
             seed: int = 7, tol: float = 1e-10) -> dict:
    """Test the fiber-sum inequality (projection at level M vs M+1).

    Pairs (x, y) are sampled among generic mesh vertices; fibers are expanded
    to the edge of the ambient window. Returns the first violating witness.
    """
    from .geometry import fiber as point_fiber
    rng = np.random.default_rng(seed)
    gen = generic_vertex_ids(mesh)
    if len(gen) == 0:
        raise ValueError("mesh has no generic vertices; use n >= 2")
    xs = rng.choice(gen, size=n_pairs)
    ys = rng.choice(gen, size=n_pairs)
    witnesses = []
    for M in M_range:
        K = mesh.M - M
        if K < 2:
            # one blow-up of margin is not enough: fiber copies within profile
            # range of pi_{M+1}(x) must not be cut off by the window boundary
            raise ValueError("window too small for the requested M; "
                             "need mesh.M >= M + 2")
        for xi, yi in zip(xs, ys):
            x = mesh.points[xi]
            y = mesh.points[yi]
            pMx = mesh.vertex_id(project(x, M))
            pM1x = mesh.vertex_id(project(x, M + 1))
            fib = point_fiber(project(y, M), M, K)
            fib_ids = [mesh.vertex_id(p) for p in fib]
            lhs = sum(profile_eval_idx(spec, mesh, pMx, fid) for fid in fib_ids)
            rhs = sum(profile_eval_idx(spec, mesh, pM1x, fid) for fid in fib_ids)
            if lhs > rhs + tol:
                witnesses.append({"x": mesh.coords[xi], "y": mesh.coords[yi],
                                  "M": M, "lhs": lhs, "rhs": rhs})
                return {"holds": False, "witnesses": witnesses}
    return {"holds": True, "witnesses": witnesses}


def check_W2(spec: ProfileSpec, M_max: int, mesh: GasketMesh,
             n_starts: int = 20, seed: int = 11) -> dict:
    """Terms sup_x int_{d(x,y) > 2^{M/4}} W(x,y) dm(y) by mesh quadrature."""
    rng = np.random.default_rng(seed)
    gen = generic_vertex_ids(mesh)
    starts = rng.choice(gen, size=min(n_starts, len(gen)), replace=False)
    D = mesh.distance_matrix()
    w = mesh.vertex_weight
    terms = []
    for M in range(1, M_max + 1):
        radius = 2.0 ** (M / 4.0)
        best = 0.0
        for xi in starts:
            wcol = np.array([profile_eval_idx(spec, mesh, int(xi), yi)
                             for yi in range(len(mesh))])
            val = float(np.sum(w * wcol * (D[xi] > radius)))
            best = max(best, val)
        terms.append(best)
    nz = [t for t in terms if t > 0]
    convergent = len(nz) < 2 or (terms[-1] <= terms[0] + 1e-12)
    return {"partial_sums": terms, "convergent_trend": bool(convergent)}


def exponential_formula_rhs(intensity: float, window: GasketMesh,
                            f_cell_values: np.ndarray) -> float:
    """Exact E exp(-sum_i f(y_i)) for the cell-snapped Poisson model:
    exp(-intensity * sum_cells 3^{-n} (1 - e^{-f(cell)}))."""
    mass = 3.0 ** (-window.n)
    return float(np.exp(-intensity * mass * np.sum(1.0 - np.exp(-f_cell_values))))


def w3_counterexample(mesh: GasketMesh) -> ProfileSpec:
    """W(x,y) = exp(-d(x,0)) 1{d(x,y) <= 1}: the x-dependence through d(x,0)
    breaks (W3) once pi_{M+1}(x) lands in a far copy of G_M."""
    D = mesh.distance_matrix()
    origin = mesh.index[(0, 0)]

    def func(m, xi, yi):
        if D[xi, yi] <= 1.0 + 1e-12:
            return float(np.exp(-D[xi, origin]))
        return 0.0

    return ProfileSpec("custom", func=func)
