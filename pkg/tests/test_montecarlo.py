import math

import numpy as np
import pytest

from gasket_ids.geometry import D_W, LatticePoint, build_mesh
from gasket_ids.montecarlo import (UnsupportedSamplingError,
                                   annealed_transform_estimate,
                                   empirical_laplace, exit_time_solve,
                                   fk_cloud_average, mean_exit_time,
                                   relativistic_acceptance_rate,
                                   sample_subordinator_path, simulate_walk,
                                   subordinate_path, sup_displacement_tail,
                                   wilson_interval)
from gasket_ids.potentials import exponential_formula_rhs, radial_indicator
from gasket_ids.subordinators import SubordinatorSpec

STABLE_HALF = SubordinatorSpec("stable", alpha=D_W / 2)


class TestSubordinatorSampling:
    def test_identity_exact(self):
        s = sample_subordinator_path(SubordinatorSpec("identity-drift"),
                                     [0.0, 0.5, 1.0], 1)
        assert np.allclose(s, [0.0, 0.5, 1.0])

    def test_nondecreasing_from_zero(self):
        s = sample_subordinator_path(STABLE_HALF, np.linspace(0, 1, 33), 5)
        assert s[0] == 0.0
        assert np.all(np.diff(s) >= 0)

    def test_grid_validated(self):
        with pytest.raises(ValueError):
            sample_subordinator_path(STABLE_HALF, [0.5, 1.0], 1)
        with pytest.raises(ValueError):
            sample_subordinator_path(STABLE_HALF, [0.0, 1.0, 1.0], 1)

    def test_unsupported_families(self):
        for spec in (SubordinatorSpec("log-stable", alpha=1.0, beta=-0.3),
                     SubordinatorSpec("custom", custom_phi=lambda x: x)):
            with pytest.raises(UnsupportedSamplingError):
                sample_subordinator_path(spec, [0.0, 1.0], 1)

    def test_deterministic_per_seed(self):
        a = sample_subordinator_path(STABLE_HALF, [0.0, 1.0, 2.0], 7)
        b = sample_subordinator_path(STABLE_HALF, [0.0, 1.0, 2.0], 7)
        assert np.array_equal(a, b)

    def test_stable_laplace_identity(self):
        # E e^{-S_1} = e^{-phi(1)} = e^{-1} for gamma = 1/2
        mean, se = empirical_laplace(STABLE_HALF, 1.0, 1.0, 40_000, 3)
        assert abs(mean - math.exp(-1.0)) < 4 * se

    @pytest.mark.parametrize("spec", [
        SubordinatorSpec("stable-mixture", mixture=(1.0, 1.5)),
        SubordinatorSpec("stable-with-drift", alpha=1.0, drift=0.3),
        SubordinatorSpec("relativistic", alpha=1.2, mass=0.5),
    ])
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_marginal_laplace_transforms(self, spec, lam):
        t = 0.7
        mean, se = empirical_laplace(spec, t, lam, 30_000, int(lam * 10))
        target = math.exp(-t * float(spec.phi(lam)))
        assert abs(mean - target) < 4 * se

    def test_increments_uncorrelated(self):
        N = 4000
        incs = np.array([np.diff(sample_subordinator_path(
            STABLE_HALF, [0.0, 1.0, 2.0], (29, k))) for k in range(N)])
        # stable has infinite variance: correlate bounded transforms
        u = np.exp(-incs[:, 0])
        v = np.exp(-incs[:, 1])
        corr = np.corrcoef(u, v)[0, 1]
        assert abs(corr) < 4.0 / math.sqrt(N)

    def test_relativistic_acceptance_rate(self):
        spec = SubordinatorSpec("relativistic", alpha=1.2, mass=0.5)
        assert relativistic_acceptance_rate(spec, 1.0) == \
            pytest.approx(math.exp(-0.5))


class TestWalk:
    def test_zero_horizon(self):
        mesh = build_mesh(0, 2)
        path = simulate_walk(mesh, LatticePoint(0, 0, 2), 0.0, 1)
        assert len(path.states) == 1
        assert path.states[0] == LatticePoint(0, 0, 2)

    def test_nearest_neighbor_steps(self):
        mesh = build_mesh(0, 2)
        path = simulate_walk(mesh, LatticePoint(0, 0, 2), 5.0, 2)
        for a, b in zip(path.states, path.states[1:]):
            u = mesh.vertex_id(a)
            v = mesh.vertex_id(b)
            assert v in mesh.adjacency[u]

    def test_holding_times_positive_increasing(self):
        mesh = build_mesh(0, 2)
        path = simulate_walk(mesh, LatticePoint(0, 0, 2), 5.0, 3)
        assert np.all(np.diff(path.times) > 0)

    def test_one_step_distribution_uniform(self):
        # chi^2 over the 4 neighbors of an interior vertex
        mesh = build_mesh(0, 2)
        start = LatticePoint(1, 0, 2)
        nbrs = mesh.adjacency[mesh.vertex_id(start)]
        counts = {v: 0 for v in nbrs}
        n_steps = 20_000
        done = 0
        k = 0
        while done < n_steps:
            # horizon 2 at rate 25: the first jump fails to happen with
            # probability e^{-50}
            p = simulate_walk(mesh, start, 2.0, (5, k))
            k += 1
            if len(p.states) > 1:
                counts[mesh.vertex_id(p.states[1])] += 1
                done += 1
        total = sum(counts.values())
        assert total == n_steps
        expect = total / len(nbrs)
        chi2 = sum((c - expect) ** 2 / expect for c in counts.values())
        # chi2_{3df} upper 0.001 quantile is 16.27
        assert chi2 < 16.27

    def test_occupation_matches_stationary(self):
        mesh = build_mesh(0, 2)
        path = simulate_walk(mesh, LatticePoint(0, 0, 2), 1500.0, 11)
        ids = [mesh.vertex_id(p) for p in path.states]
        dt = np.diff(np.append(path.times, path.horizon))
        occ = np.zeros(len(mesh))
        for i, d in zip(ids, dt):
            occ[i] += d
        occ /= occ.sum()
        pi = mesh.vertex_weight / mesh.vertex_weight.sum()
        assert 0.5 * np.abs(occ - pi).sum() < 0.05

    def test_subordinate_path_composition(self):
        mesh = build_mesh(1, 2)
        grid = np.linspace(0.0, 1.0, 9)
        sp = subordinate_path(mesh, LatticePoint(0, 0, 2), STABLE_HALF,
                              grid, 21)
        assert len(sp.positions) == len(grid)
        assert np.all(np.diff(sp.subordinator_values) >= 0)


class TestDisplacementTails:
    def test_decreasing_in_M(self):
        mesh = build_mesh(3, 1)
        tails = sup_displacement_tail([0, 1, 2], 1.0, STABLE_HALF, 400,
                                      mesh, 13)
        probs = [tails[M]["prob"] for M in (0, 1, 2)]
        assert probs[0] > probs[1] > probs[2]

    def test_out_of_reach_is_zero(self):
        mesh = build_mesh(1, 1)
        tails = sup_displacement_tail([1], 1e-4,
                                      SubordinatorSpec("identity-drift"),
                                      50, mesh, 1)
        assert tails[1]["prob"] == 0.0

    def test_wilson_interval(self):
        p, lo, hi = wilson_interval(50, 100)
        assert lo < p < hi
        assert wilson_interval(0, 100)[0] == 0.0


class TestExitTimes:
    def test_single_jump_exit(self):
        mesh = build_mesh(0, 2)
        res = mean_exit_time([0.25], 500, mesh, 7)
        # exit at the first jump: mean = 1/rate = 5^{-2}
        rate_mean = 5.0 ** (-2)
        for m in res[0.25]["per_start"]:
            assert m == pytest.approx(rate_mean, abs=4 * rate_mean
                                      / math.sqrt(500))

    def test_oracle_single_jump(self):
        mesh = build_mesh(0, 2)
        assert exit_time_solve(mesh, LatticePoint(0, 0, 2), 0.25) == \
            pytest.approx(0.04)

    def test_doubling_scales_like_walk_dimension(self):
        mesh = build_mesh(0, 5)
        t1 = exit_time_solve(mesh, LatticePoint(0, 0, 5), 0.25)
        t2 = exit_time_solve(mesh, LatticePoint(0, 0, 5), 0.5)
        assert t2 / t1 == pytest.approx(5.0, rel=0.25)

    def test_monotone_in_r(self):
        mesh = build_mesh(0, 3)
        res = mean_exit_time([0.125, 0.25, 0.5], 200, mesh, 5)
        sups = [res[r]["sup_mean"] for r in (0.125, 0.25, 0.5)]
        assert sups[0] < sups[1] < sups[2]

    def test_simulation_matches_oracle(self):
        mesh = build_mesh(0, 3)
        res = mean_exit_time([0.25], 800, mesh, 9, n_starts=1)
        # compare against the linear-solve value for the sampled start
        rng = np.random.default_rng((9, 0))
        start = int(rng.choice(len(mesh), size=1, replace=False)[0])
        oracle = exit_time_solve(mesh, mesh.points[start], 0.25)
        assert res[0.25]["sup_mean"] == pytest.approx(oracle, rel=0.2)

    def test_below_resolution_rejected(self):
        mesh = build_mesh(0, 2)
        with pytest.raises(ValueError):
            mean_exit_time([0.1], 10, mesh, 1)


class TestCloudAveraging:
    def test_fk_matches_closed_form(self):
        win = build_mesh(1, 2)
        f = np.zeros(len(win.cells))
        f[:5] = 0.9
        mean, se = fk_cloud_average(win, f, 0.6, 4000, 3)
        rhs = exponential_formula_rhs(0.6, win, f)
        assert abs(mean - rhs) < 4 * se

    def test_disjoint_seed_blocks_agree(self):
        win = build_mesh(1, 2)
        f = np.zeros(len(win.cells))
        f[:5] = 0.9
        m1, s1 = fk_cloud_average(win, f, 0.6, 3000, 100)
        m2, s2 = fk_cloud_average(win, f, 0.6, 3000, 200)
        assert abs(m1 - m2) < 4 * math.hypot(s1, s2)

    def test_annealed_zero_intensity(self):
        res = annealed_transform_estimate([1], [1.0], STABLE_HALF,
                                          radial_indicator(1.0, 1.0), 0.0,
                                          3, 1, n=1, K=1)
        assert res[(1, 1.0, "L_D")]["stderr"] == 0.0

    def test_annealed_overwhelming_potential(self):
        # enormous intensity + strictly positive profile kills everything
        res = annealed_transform_estimate([1], [1.0], STABLE_HALF,
                                          radial_indicator(30.0, 1.0), 1000.0,
                                          3, 2, n=1, K=1)
        assert res[(1, 1.0, "L_N")]["mean"] < 1e-6

    def test_annealed_deterministic(self):
        prof = radial_indicator(1.0, 1.0)
        a = annealed_transform_estimate([1], [1.0], STABLE_HALF, prof, 0.5,
                                        4, 11, n=1, K=1)
        b = annealed_transform_estimate([1], [1.0], STABLE_HALF, prof, 0.5,
                                        4, 11, n=1, K=1, threads=4)
        assert a[(1, 1.0, "L_N")]["mean"] == b[(1, 1.0, "L_N")]["mean"]
