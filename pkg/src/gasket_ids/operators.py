"""Graph Laplacians on gasket meshes, quotient (reflected) chains, and the
Bernstein spectral calculus phi(L).

The ambient generator is L = 5^n (I - P) where P is the simple random walk on
the mesh (reflecting at the outer corners); 5^n is the walk-dimension clock.
All matrices are stored in the measure-symmetrized basis: with m the
stationary measure (proportional to vertex degree, normalized to total mass
3^M), sym = Dm^{1/2} L Dm^{-1/2} is symmetric.

The quotient chain on G_M is the pushforward of the ambient walk on G_{M+K}
under the projection pi_M; well-definedness over fiber representatives is
verified at construction, which is the discrete fiber-sum invariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geometry
from .geometry import GasketMesh, build_mesh, fiber, fiber_distinct, project
from .subordinators import SubordinatorSpec


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray   # ascending
    vectors: np.ndarray       # orthonormal columns (symmetrized basis)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.eigenvalues) @ self.vectors.T


class GeneratorMatrix:
    """Symmetric PSD generator in the measure-symmetrized basis."""

    def __init__(self, mesh: GasketMesh, kind: str, sym: np.ndarray,
                 measure: np.ndarray, time_scale: float):
        self.mesh = mesh
        self.kind = kind
        self.sym = sym
        self.measure = measure
        self.time_scale = time_scale
        self._eig = None

    @property
    def dim(self) -> int:
        return self.sym.shape[0]

    def eig(self) -> EigenDecomposition:
        if self._eig is None:
            w, v = scipy.linalg.eigh(self.sym)
            w = np.clip(w, 0.0, None)
            # snap numerically-zero eigenvalues: phi with infinite slope at 0
            # (stable families) would otherwise amplify O(eps) fuzz
            if w.size and w[-1] > 0:
                w[w < 1e-10 * w[-1]] = 0.0
            self._eig = EigenDecomposition(w, v)
        return self._eig

    # heat matrices in the three useful normalizations

    def heat_sym(self, t: float) -> np.ndarray:
        return heat_matrix(self.eig(), t)

    def spectrum(self) -> np.ndarray:
        return np.sort(self.eig().eigenvalues)

    def heat_raw(self, t: float) -> np.ndarray:
        """Transition-kernel normalization: rows sum to 1 for conservative chains."""
        s = np.sqrt(self.measure)
        return (self.heat_sym(t) / s[:, None]) * s[None, :]

    def heat_kernel(self, t: float) -> np.ndarray:
        """Density with respect to the stationary measure (symmetric)."""
        s = np.sqrt(self.measure)
        return self.heat_sym(t) / s[:, None] / s[None, :]

    def trace_heat(self, t: float) -> float:
        w = self.eig().eigenvalues
        return float(np.exp(-t * w).sum())


def _walk_sym(mesh: GasketMesh) -> np.ndarray:
    """Symmetrized SRW transition matrix D^{-1/2} A D^{-1/2}."""
    nv = len(mesh)
    S = np.zeros((nv, nv))
    inv_sqrt_deg = 1.0 / np.sqrt(mesh.degree.astype(float))
    for u, nbrs in enumerate(mesh.adjacency):
        for v in nbrs:
            S[u, v] = inv_sqrt_deg[u] * inv_sqrt_deg[v]
    return S


def laplacian_ambient(mesh: GasketMesh) -> GeneratorMatrix:
    """L = 5^n (I - P_sym), reflecting chain on the full mesh."""
    scale = 5.0 ** mesh.n
    S = _walk_sym(mesh)
    sym = scale * (np.eye(len(mesh)) - S)
    sym = 0.5 * (sym + sym.T)
    return GeneratorMatrix(mesh, "ambient-reflected", sym, mesh.vertex_weight.copy(), scale)


class QuotientConsistencyError(RuntimeError):
    pass


def laplacian_reflected(M: int, n: int, K: int, tol: float = 1e-12) -> GeneratorMatrix:
    """Quotient chain on G_M from pushing forward the ambient walk on G_{M+K}.

    P^M(x, .) = pushforward of P(x, .) under project(., M); the construction
    checks that every fiber representative of x gives the same row (discrete
    fiber-sum invariance) and that the symmetrization w.r.t. the pushforward
    stationary measure is exact.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    amb = build_mesh(M + K, n)
    sub = build_mesh(M, n)
    nv = len(sub)

    # ambient index of each sub vertex (orders agree: both lex on (i, j))
    sub_in_amb = amb.submesh_indices(M)
    assert len(sub_in_amb) == nv

    def push_row(amb_idx: int) -> np.ndarray:
        row = np.zeros(nv)
        p = 1.0 / amb.degree[amb_idx]
        for nb in amb.adjacency[amb_idx]:
            q = project(amb.points[nb], M)
            row[sub.vertex_id(q)] += p
        return row

    Q = np.zeros((nv, nv))
    mu = np.zeros(nv)
    for k in range(nv):
        x = sub.points[k]
        reps, _ = fiber_distinct(x, M, K)
        rows = []
        for r in reps:
            aidx = amb.vertex_id(r)
            rows.append(push_row(aidx))
            mu[k] += amb.vertex_weight[aidx]
        base = rows[0]
        for r_i, extra in enumerate(rows[1:], start=1):
            dev = np.max(np.abs(extra - base))
            if dev > tol:
                raise QuotientConsistencyError(
                    f"fiber-sum invariance violated at vertex {sub.coords[k]}, "
                    f"representative {r_i}: deviation {dev:.3e}")
        Q[k] = base
    mu *= 3.0 ** (-K)  # normalize to total mass 3^M

    s = np.sqrt(mu)
    sym_P = (Q * s[:, None]) / s[None, :]
    asym = np.max(np.abs(sym_P - sym_P.T))
    if asym > 1e-11:
        raise QuotientConsistencyError(f"quotient chain not reversible: {asym:.3e}")
    sym_P = 0.5 * (sym_P + sym_P.T)
    scale = 5.0 ** n
    sym = scale * (np.eye(nv) - sym_P)
    return GeneratorMatrix(sub, f"quotient-{M}", sym, mu, scale)


def subordinate_generator(gen: GeneratorMatrix, spec: SubordinatorSpec) -> GeneratorMatrix:
    """A = U phi(Lambda) U^T on the same mesh/measure.

    The eigenbasis of L is reused, so no second eigensolve is needed.
    """
    dec = gen.eig()
    phi_w = np.clip(np.atleast_1d(spec.phi(dec.eigenvalues)), 0.0, None)
    sym = (dec.vectors * phi_w) @ dec.vectors.T
    sym = 0.5 * (sym + sym.T)
    out = GeneratorMatrix(gen.mesh, gen.kind, sym, gen.measure, gen.time_scale)
    order = np.argsort(phi_w, kind="stable")
    out._eig = EigenDecomposition(phi_w[order], dec.vectors[:, order])
    return out


def heat_matrix(decomp: EigenDecomposition, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    return (decomp.vectors * np.exp(-t * decomp.eigenvalues)) @ decomp.vectors.T


def eigenvalues_of(gen: GeneratorMatrix) -> np.ndarray:
    return gen.spectrum()


def fiber_sum_invariance(M: int, n: int, K: int, gen_amb: GeneratorMatrix,
                         t: float) -> float:
    """Max over z in G_M and fiber-equivalent x, x' of the heat fiber-sum gap."""
    amb = gen_amb.mesh
    sub = build_mesh(M, n)
    H = gen_amb.heat_raw(t)
    worst = 0.0
    fiber_cols = []
    for z in sub.points:
        reps, _ = fiber_distinct(z, M, K)
        fiber_cols.append(np.array([amb.vertex_id(r) for r in reps]))
    for x in sub.points:
        reps, _ = fiber_distinct(x, M, K)
        ridx = [amb.vertex_id(r) for r in reps]
        sums = np.stack([np.array([H[r, cols].sum() for cols in fiber_cols])
                         for r in ridx])
        worst = max(worst, float(np.max(np.abs(sums - sums[0]))))
    return worst


def kernel_comparison_report(M: int, n: int, K: int, spec: SubordinatorSpec,
                             t: float, amb_gen: GeneratorMatrix = None,
                             quo_gen: GeneratorMatrix = None) -> dict:
    """Fiber-tail sup C_tail, averaged diagonal gap, and rotation residual.

    C_tail: sup over x, y in G_M of the kernel fiber sum over preimages of y
    outside G_{M+1} (per-cell copies, so junction preimages count per copy).
    diag_gap: 3^{-M} sum_x mu(x) |p(t,x,x) - p^M(t,x,x)| in density units.
    rotation_residual: max |p^M row - fiber sums of ambient rows| at the
    transition normalization; exact (machine precision) by construction.
    """
    if amb_gen is None:
        amb_gen = subordinate_generator(laplacian_ambient(build_mesh(M + K, n)), spec)
    if quo_gen is None:
        quo_gen = subordinate_generator(laplacian_reflected(M, n, K), spec)
    amb = amb_gen.mesh
    sub = quo_gen.mesh
    sub_in_amb = amb.submesh_indices(M)

    kern_amb = amb_gen.heat_kernel(t)
    kern_quo = quo_gen.heat_kernel(t)
    raw_amb = amb_gen.heat_raw(t)
    raw_quo = quo_gen.heat_raw(t)

    outer = 1 << (M + 1 + n)
    nv = len(sub)
    tail_cols = []      # per sub vertex: ambient indices outside G_{M+1} (with copies)
    all_cols = []       # distinct preimage indices (for the rotation identity)
    for z in sub.points:
        copies = fiber(z, M, K)
        tail_cols.append(np.array([amb.vertex_id(p) for p in copies
                                   if p.i + p.j > outer], dtype=np.int64))
        reps, _ = fiber_distinct(z, M, K)
        all_cols.append(np.array([amb.vertex_id(p) for p in reps], dtype=np.int64))

    c_tail = 0.0
    rot = 0.0
    for k in range(nv):
        arow_kern = kern_amb[sub_in_amb[k]]
        tails = np.array([arow_kern[cols].sum() if len(cols) else 0.0
                          for cols in tail_cols])
        c_tail = max(c_tail, float(tails.max()))
        arow_raw = raw_amb[sub_in_amb[k]]
        sums = np.array([arow_raw[cols].sum() for cols in all_cols])
        rot = max(rot, float(np.max(np.abs(sums - raw_quo[k]))))

    diag_amb = kern_amb[sub_in_amb, sub_in_amb]
    diag_quo = np.diag(kern_quo)
    diag_gap = float(3.0 ** (-M) * np.sum(quo_gen.measure * np.abs(diag_amb - diag_quo)))
    return {"C_tail": c_tail, "diag_gap": diag_gap, "rotation_residual": rot}


def eigenvalue_csv_rows(gen: GeneratorMatrix):
    return [(k, float(w)) for k, w in enumerate(eigenvalues_of(gen))]
