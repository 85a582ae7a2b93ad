"""Path-level Monte Carlo: subordinator variates, the continuous-time walk,
displacement / exit-time lemma checks, and cloud-averaged (annealed)
transform estimates.

Subordinator increments use the Kanter integral representation of the
positive stable law; the relativistic family is obtained from it by
exponential tilting with rejection (acceptance rate exp(-dt * mass) per
increment, reported by the sampler). Cloud averages use common random
numbers across M: each cloud is sampled once on the largest window and
reused for every M.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import GasketMesh, LatticePoint, build_mesh
from .potentials import PoissonCloud, ProfileSpec, sample_cloud
from .spectra import four_transform_suite
from .subordinators import SubordinatorSpec

_SAMPLEABLE = ("identity-drift", "stable", "stable-mixture",
               "stable-with-drift", "relativistic")


class UnsupportedSamplingError(ValueError):
    """Family has no path sampler (the spectral route remains available)."""


@dataclass
class WalkPath:
    times: np.ndarray           # jump times, increasing, times[0] = 0
    states: list                # LatticePoint per jump epoch
    horizon: float

    def state_at(self, s: float):
        k = int(np.searchsorted(self.times, s, side="right")) - 1
        return self.states[k]


@dataclass
class SubordinatePath:
    grid_times: np.ndarray
    positions: list
    subordinator_values: np.ndarray


def _stable_standard(gamma: float, size: int, rng) -> np.ndarray:
    """Positive gamma-stable variates with E e^{-lam S} = e^{-lam^gamma}
    (Kanter's representation)."""
    u = rng.uniform(0.0, math.pi, size)
    e = rng.exponential(1.0, size)
    a = (np.sin(gamma * u) ** gamma * np.sin((1 - gamma) * u) ** (1 - gamma)
         / np.sin(u)) ** (1.0 / (1.0 - gamma))
    return (a / e) ** ((1.0 - gamma) / gamma)


def _stable_increments(gamma: float, dt: np.ndarray, rng) -> np.ndarray:
    return dt ** (1.0 / gamma) * _stable_standard(gamma, len(dt), rng)


def _relativistic_increments(spec: SubordinatorSpec, dt: np.ndarray, rng):
    """Tilted-stable increments; returns (values, overall acceptance rate)."""
    gamma = spec.gamma
    m = spec.mass ** (1.0 / gamma)   # tilting parameter: phi = (lam+m)^g - m^g
    out = np.empty(len(dt))
    attempts = 0
    for k, h in enumerate(dt):
        while True:
            attempts += 1
            x = float(h ** (1.0 / gamma) * _stable_standard(gamma, 1, rng)[0])
            if rng.uniform() <= math.exp(-m * x):
                out[k] = x
                break
    return out, len(dt) / attempts


def sample_subordinator_path(spec: SubordinatorSpec, grid, seed) -> np.ndarray:
    """S_t on an increasing grid starting at 0, by independent increments."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must increase from 0")
    if spec.family not in _SAMPLEABLE:
        raise UnsupportedSamplingError(
            f"no path sampler for family {spec.family!r}")
    rng = np.random.default_rng(seed)
    dt = np.diff(grid)
    if spec.family == "identity-drift":
        inc = spec.drift * dt
    elif spec.family == "stable":
        inc = _stable_increments(spec.gamma, dt, rng)
    elif spec.family == "stable-mixture":
        from .geometry import D_W
        inc = sum(_stable_increments(a / D_W, dt, rng) for a in spec.mixture)
    elif spec.family == "stable-with-drift":
        inc = spec.drift * dt + _stable_increments(spec.gamma, dt, rng)
    else:
        inc, _ = _relativistic_increments(spec, dt, rng)
    return np.concatenate([[0.0], np.cumsum(inc)])


def relativistic_acceptance_rate(spec: SubordinatorSpec, dt: float) -> float:
    """Theoretical acceptance probability of the tilting-rejection step."""
    return math.exp(-dt * spec.mass)


def simulate_walk(mesh: GasketMesh, x0: LatticePoint, clock_horizon: float,
                  seed) -> WalkPath:
    """Continuous-time SRW: holding rate 5^n, uniform jumps to neighbors."""
    idx = mesh.vertex_id(x0)
    rng = np.random.default_rng(seed)
    rate = 5.0 ** mesh.n
    times = [0.0]
    states = [idx]
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t > clock_horizon:
            break
        nbrs = mesh.adjacency[states[-1]]
        states.append(nbrs[rng.integers(len(nbrs))])
        times.append(t)
    return WalkPath(np.asarray(times), [mesh.points[k] for k in states],
                    clock_horizon)


class _SpectralStepper:
    """Exact sampling of the walk at arbitrary time increments.

    Heavy-tailed subordinators make jump-by-jump simulation to the internal
    horizon S_t unbounded in cost; transition rows of exp(-dt L) give the same
    marginal law in O(nv^2) per step.
    """

    def __init__(self, mesh: GasketMesh):
        from .operators import laplacian_ambient
        gen = laplacian_ambient(mesh)
        dec = gen.eig()
        self.w = dec.eigenvalues
        self.V = dec.vectors
        self.sqrt_m = np.sqrt(gen.measure)

    def step(self, cur: int, dt: float, rng) -> int:
        if dt <= 0.0:
            return cur
        row = ((self.V[cur] * np.exp(-dt * self.w)) @ self.V.T) \
            * self.sqrt_m / self.sqrt_m[cur]
        row = np.clip(row, 0.0, None)
        row /= row.sum()
        return int(rng.choice(len(row), p=row))


def subordinate_path(mesh: GasketMesh, x0: LatticePoint,
                     spec: SubordinatorSpec, grid, seed,
                     stepper: _SpectralStepper = None) -> SubordinatePath:
    """X_{t_k} = Z_{S_{t_k}}, sampled exactly at the grid times."""
    s_vals = sample_subordinator_path(spec, grid, (seed, 0))
    if stepper is None:
        stepper = _SpectralStepper(mesh)
    rng = np.random.default_rng((seed, 1))
    cur = mesh.vertex_id(x0)
    ids = [cur]
    for ds in np.diff(s_vals):
        cur = stepper.step(cur, float(ds), rng)
        ids.append(cur)
    return SubordinatePath(np.asarray(grid, float),
                           [mesh.points[k] for k in ids], s_vals)


def wilson_interval(successes: int, trials: int, z: float = 1.96):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials ** 2)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


def sup_displacement_tail(M_list, t: float, spec: SubordinatorSpec,
                          trials: int, mesh: GasketMesh, seed,
                          grid_points: int = 64) -> dict:
    """Empirical P[sup_{s<=t} d(X_s, x0) > 2^M] per M, with Wilson bounds.

    X is observed on a uniform grid of s-values (a documented discretization
    of the path supremum). x0 is the mesh origin.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    x0 = LatticePoint(0, 0, mesh.n)
    x0i = mesh.vertex_id(x0)
    hops = mesh.hops_from(x0i)
    scale = 2.0 ** (-mesh.n)
    grid = np.linspace(0.0, t, grid_points + 1)
    stepper = _SpectralStepper(mesh)
    sups = np.empty(trials)
    for r in range(trials):
        s_vals = sample_subordinator_path(spec, grid, (seed, r, 0))
        rng = np.random.default_rng((seed, r, 1))
        cur = x0i
        worst = 0
        for ds in np.diff(s_vals):
            cur = stepper.step(cur, float(ds), rng)
            worst = max(worst, hops[cur])
        sups[r] = worst * scale
    out = {}
    for M in M_list:
        hits = int(np.count_nonzero(sups > 2.0 ** M))
        p, lo, hi = wilson_interval(hits, trials)
        out[M] = {"prob": p, "lo": lo, "hi": hi, "trials": trials}
    return out


def exit_time_solve(mesh: GasketMesh, x0: LatticePoint, r: float) -> float:
    """Oracle E_x tau by solving L u = 1 on {d(., x0) < r}."""
    hops = mesh.hops_from(mesh.vertex_id(x0))
    inside = np.flatnonzero(hops * 2.0 ** (-mesh.n) < r)
    rate = 5.0 ** mesh.n
    pos = {v: k for k, v in enumerate(inside)}
    L = np.zeros((len(inside), len(inside)))
    for k, v in enumerate(inside):
        L[k, k] = rate
        p = rate / mesh.degree[v]
        for nb in mesh.adjacency[v]:
            if nb in pos:
                L[k, pos[nb]] -= p
    u = scipy.linalg.solve(L, np.ones(len(inside)))
    return float(u[pos[mesh.vertex_id(x0)]])


def mean_exit_time(r_list, trials: int, mesh: GasketMesh, seed,
                   n_starts: int = 6) -> dict:
    """Empirical sup over sampled starts of E_x tau_{B(x, r)}.

    Exit = first time the walk is at distance >= r from its start. r below
    the mesh resolution is rejected.
    """
    res = 2.0 ** (-mesh.n)
    for r in r_list:
        if r < res - 1e-12:
            raise ValueError(f"r={r} below mesh resolution {res}")
    rng = np.random.default_rng((seed, 0))
    starts = rng.choice(len(mesh), size=min(n_starts, len(mesh)), replace=False)
    rate = 5.0 ** mesh.n
    out = {}
    for r in r_list:
        per_start = []
        for s_i, v0 in enumerate(starts):
            hops = mesh.hops_from(int(v0))
            thresh = r / res          # exit when hop distance >= r / 2^{-n}
            rng_t = np.random.default_rng((seed, 1, int(v0), int(r / res)))
            total = 0.0
            for _ in range(trials):
                v = int(v0)
                t = 0.0
                while hops[v] < thresh - 1e-12:
                    t += rng_t.exponential(1.0 / rate)
                    nbrs = mesh.adjacency[v]
                    v = nbrs[rng_t.integers(len(nbrs))]
                total += t
            per_start.append(total / trials)
        out[r] = {"sup_mean": max(per_start), "per_start": per_start,
                  "trials": trials}
    return out


def empirical_laplace(spec: SubordinatorSpec, t: float, lam: float,
                      draws: int, seed) -> tuple:
    """(mean, stderr) of e^{-lam S_t} over independent draws."""
    vals = np.exp(-lam * _draws_at(spec, t, draws, seed))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(draws))


def _draws_at(spec: SubordinatorSpec, t: float, draws: int, seed) -> np.ndarray:
    """Independent copies of S_t."""
    if spec.family not in _SAMPLEABLE:
        raise UnsupportedSamplingError(
            f"no path sampler for family {spec.family!r}")
    rng = np.random.default_rng(seed)
    dt = np.full(draws, float(t))
    if spec.family == "identity-drift":
        return spec.drift * dt
    if spec.family == "stable":
        return _stable_increments(spec.gamma, dt, rng)
    if spec.family == "stable-mixture":
        from .geometry import D_W
        return sum(_stable_increments(a / D_W, dt, rng) for a in spec.mixture)
    if spec.family == "stable-with-drift":
        return spec.drift * dt + _stable_increments(spec.gamma, dt, rng)
    vals, _ = _relativistic_increments(spec, dt, rng)
    return vals


def fk_cloud_average(window: GasketMesh, f_values: np.ndarray, nu: float,
                     n_clouds: int, seed) -> tuple:
    """(mean, stderr) of e^{-sum_i f(y_i)} over independent clouds.

    f_values is indexed by the window's cell order (value at the cell's
    representative vertex); compare with potentials.exponential_formula_rhs.
    """
    f_values = np.asarray(f_values, dtype=float)
    vals = np.empty(n_clouds)
    for k in range(n_clouds):
        cloud = sample_cloud(nu, window, (seed, k))
        vals[k] = math.exp(-float(f_values[list(cloud.cell_ids)].sum()))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_clouds))


def _mean_stderr(vals: np.ndarray) -> tuple:
    m = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return m, se


def annealed_transform_estimate(M_list, t_list, spec: SubordinatorSpec,
                                profile: ProfileSpec, nu: float,
                                R_clouds: int, seed, n: int = 2, K: int = 2,
                                obstacle_a: float = None,
                                threads: int = 1) -> dict:
    """Cloud-averaged L_D, L_N, L_D*, L_N* with standard errors.

    Returns {(M, t, name): {"mean", "stderr", "trials"}}. Clouds are sampled
    on the window G_{max M} and shared by every M (common random numbers), so
    cross-M comparisons are low-variance. nu = 0 degenerates to the free
    transforms with zero stderr.
    """
    if R_clouds < 1:
        raise ValueError("R_clouds must be positive")
    M_list = sorted(M_list)
    window = build_mesh(M_list[-1], n)
    t_list = list(t_list)

    def one(k):
        cloud = sample_cloud(nu, window, (seed, k))
        return {M: four_transform_suite(M, n, K, spec, profile, cloud, t_list,
                                        obstacle_a=obstacle_a)
                for M in M_list}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_cloud = list(ex.map(one, range(R_clouds)))
    else:
        per_cloud = [one(k) for k in range(R_clouds)]

    out = {}
    for M in M_list:
        for t in t_list:
            for name in ("L_D", "L_N", "L_Dstar", "L_Nstar"):
                vals = np.array([per_cloud[k][M][name][t]
                                 for k in range(R_clouds)])
                m, se = _mean_stderr(vals)
                out[(M, t, name)] = {"mean": m, "stderr": se,
                                     "trials": R_clouds, "values": vals}
    return out
