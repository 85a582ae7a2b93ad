"""Dirichlet / Neumann / obstacle Schrodinger operators and their spectra.

Boundary conditions:
  dirichlet          -- principal submatrix of the ambient subordinated
                        generator on G_{M+K} over the G_M mesh minus the three
                        corners (the jump process is killed on exiting).
  neumann            -- quotient (reflected) subordinated generator on G_M.
  obstacle-dirichlet -- submatrix over unblocked vertices.

Laplace transforms are 3^{-M} sum_n e^{-t lambda_n} = 3^{-M} tr of the heat
matrix. Only values of the potential on G_M enter the Dirichlet submatrix, so
the ambient potential is implicitly its fiber-constant (pi_M-pullback)
extension; this makes L_N >= L_D structural rather than approximate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import build_mesh
from .operators import (GeneratorMatrix, laplacian_ambient, laplacian_reflected,
                        subordinate_generator)
from .potentials import (PoissonCloud, ProfileSpec, obstacle_masks,
                         periodize_sznitman, potential_on_mesh)
from .subordinators import SubordinatorSpec

_BASE_CACHE = {}


def _spec_key(spec: SubordinatorSpec):
    return (spec.family, spec.alpha, spec.drift, spec.mass, spec.beta,
            spec.mixture, id(spec.custom_phi) if spec.custom_phi else None)


def ambient_base(M: int, n: int, K: int, spec: SubordinatorSpec) -> GeneratorMatrix:
    """Subordinated ambient generator on G_{M+K} (cached, eig shared)."""
    key = ("amb", M + K, n, _spec_key(spec))
    if key not in _BASE_CACHE:
        _BASE_CACHE[key] = subordinate_generator(
            laplacian_ambient(build_mesh(M + K, n)), spec)
    return _BASE_CACHE[key]


def quotient_base(M: int, n: int, K: int, spec: SubordinatorSpec) -> GeneratorMatrix:
    """Subordinated quotient generator on G_M (cached)."""
    key = ("quo", M, n, K, _spec_key(spec))
    if key not in _BASE_CACHE:
        _BASE_CACHE[key] = subordinate_generator(laplacian_reflected(M, n, K), spec)
    return _BASE_CACHE[key]


@dataclass
class SchrodingerOperator:
    matrix: np.ndarray          # symmetric, in the measure-symmetrized basis
    bc: str
    M: int
    vertex_ids: np.ndarray      # positions in the G_M mesh vertex order
    _eigs: np.ndarray = None

    def eigenvalues(self) -> np.ndarray:
        if self._eigs is None:
            if self.matrix.shape[0] == 0:
                self._eigs = np.zeros(0)
            else:
                self._eigs = np.sort(scipy.linalg.eigvalsh(self.matrix))
        return self._eigs

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SpectralMeasure:
    atoms: np.ndarray
    M: int
    bc: str
    omega: object = None        # seed / cloud descriptor

    def laplace(self, t: float) -> float:
        return float(3.0 ** (-self.M) * np.exp(-t * self.atoms).sum())

    def counting(self, lam: float) -> float:
        return float(3.0 ** (-self.M) * np.count_nonzero(self.atoms <= lam))


def laplace_transform(measure: SpectralMeasure, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return measure.laplace(t)


def ids_counting(measure: SpectralMeasure, lam: float) -> float:
    return measure.counting(lam)


def eigenvalues(H) -> np.ndarray:
    """Ordered spectrum of a SchrodingerOperator or plain symmetric matrix."""
    if isinstance(H, SchrodingerOperator):
        return H.eigenvalues()
    H = np.asarray(H, dtype=float)
    if H.shape[0] and np.max(np.abs(H - H.T)) > 1e-10 * max(1.0, np.max(np.abs(H))):
        raise ValueError("matrix is not symmetric")
    return np.sort(scipy.linalg.eigvalsh(H))


def _interior_positions(M: int, n: int) -> np.ndarray:
    sub = build_mesh(M, n)
    corners = set(sub.corner_indices())
    return np.array([k for k in range(len(sub)) if k not in corners], dtype=np.int64)


def assemble(base: GeneratorMatrix, potential: np.ndarray, bc: str, M: int,
             blocked: np.ndarray = None) -> SchrodingerOperator:
    """H = base|_{vertex set} + diag(V).

    `potential` and `blocked` are indexed by the G_M mesh vertex order.
    For dirichlet* the base must be the ambient subordinated generator on
    G_{M+K}; for neumann* the quotient generator on G_M.
    """
    n = base.mesh.n
    sub = build_mesh(M, n)
    nv = len(sub)
    potential = np.zeros(nv) if potential is None else np.asarray(potential, float)
    if len(potential) != nv:
        raise ValueError("potential must live on the G_M mesh")
    keep = np.ones(nv, dtype=bool)
    if bc in ("dirichlet", "obstacle-dirichlet"):
        keep[list(sub.corner_indices())] = False
    elif bc not in ("neumann", "obstacle-neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if blocked is not None:
        keep &= ~np.asarray(blocked, dtype=bool)
    ids = np.flatnonzero(keep)

    if base.kind.startswith("quotient"):
        if base.dim != nv:
            raise ValueError("quotient base dimension mismatch")
        sel = ids
        mat = base.sym[np.ix_(sel, sel)]
    else:
        amb = base.mesh
        if amb.M < M:
            raise ValueError("ambient base smaller than G_M")
        rows = amb.submesh_indices(M)
        sel = rows[ids]
        mat = base.sym[np.ix_(sel, sel)]
    H = mat + np.diag(potential[ids])
    return SchrodingerOperator(H, bc, M, ids)


def spectral_measure(H: SchrodingerOperator, omega=None) -> SpectralMeasure:
    return SpectralMeasure(H.eigenvalues(), H.M, H.bc, omega)


def four_transform_suite(M: int, n: int, K: int, spec: SubordinatorSpec,
                         profile: ProfileSpec, cloud: PoissonCloud, t_list,
                         obstacle_a: float = None) -> dict:
    """L_D, L_N, L_D*, L_N* for one cloud at each t.

    With a profile: potentials V (restriction of the full-window field) and
    V* (Sznitman periodization). With obstacle_a set: hard killing on the
    usual / Sznitman periodized obstacle sets instead of a potential.
    Returns {"L_D": {t: value}, ..., "eigencount": {...}, "runtime_ms": ...}.
    """
    t0 = time.perf_counter()
    window = cloud.window
    if window.n != n or window.M < M:
        raise ValueError("cloud window must share n and cover G_M")
    sub_rows = window.submesh_indices(M)

    base_D = ambient_base(M, n, K, spec)
    base_N = quotient_base(M, n, K, spec)

    if obstacle_a is None:
        V_raw = potential_on_mesh(cloud, profile).values
        V_M = V_raw[sub_rows]
        V_star = periodize_sznitman(cloud, profile, M, K).values
        ops = {
            "L_D": assemble(base_D, V_M, "dirichlet", M),
            "L_N": assemble(base_N, V_M, "neumann", M),
            "L_Dstar": assemble(base_D, V_star, "dirichlet", M),
            "L_Nstar": assemble(base_N, V_star, "neumann", M),
        }
    else:
        masks = obstacle_masks(cloud, obstacle_a, M, K)
        ops = {
            "L_D": assemble(base_D, None, "obstacle-dirichlet", M,
                            blocked=masks["usual"]),
            "L_N": assemble(base_N, None, "obstacle-neumann", M,
                            blocked=masks["usual"]),
            "L_Dstar": assemble(base_D, None, "obstacle-dirichlet", M,
                                blocked=masks["sznitman"]),
            "L_Nstar": assemble(base_N, None, "obstacle-neumann", M,
                                blocked=masks["sznitman"]),
        }

    out = {name: {} for name in ops}
    scale = 3.0 ** (-M)
    for name, H in ops.items():
        w = H.eigenvalues()
        for t in t_list:
            out[name][t] = float(scale * np.exp(-t * w).sum())
    out["eigencount"] = {name: ops[name].dim for name in ops}
    out["runtime_ms"] = (time.perf_counter() - t0) * 1e3
    return out
