import math

import numpy as np
import pytest

from gasket_ids.geometry import LatticePoint, build_mesh
from gasket_ids.potentials import (PoissonCloud, ProfileSpec, check_W2,
                                   check_W3, exponential_formula_rhs,
                                   generic_vertex_ids, obstacle_masks,
                                   periodize_sznitman, potential_on_mesh,
                                   profile_eval, profile_eval_idx,
                                   radial_indicator, sample_cloud,
                                   w3_counterexample)


class TestProfileSpec:
    def test_radial_default_knots(self):
        spec = ProfileSpec("radial", R=1.0)
        assert spec.knots == ((1.0, 1.0),)

    def test_shellwise_tail_ratio_bound(self):
        with pytest.raises(ValueError):
            ProfileSpec("shellwise", coeffs=(1.0,), tail_ratio=1.0 / 3.0)

    def test_cellwise_needs_psi(self):
        with pytest.raises(ValueError):
            ProfileSpec("cellwise", M0=0, psi_depth=1, psi_values=())

    def test_custom_needs_callable(self):
        with pytest.raises(ValueError):
            ProfileSpec("custom")


class TestProfileEval:
    def test_radial_indicator(self):
        mesh = build_mesh(1, 2)
        spec = radial_indicator(2.5, 0.5)
        x = mesh.vertex_id(LatticePoint(0, 0, 2))
        near = mesh.vertex_id(LatticePoint(1, 0, 2))   # distance 1/4
        far = mesh.vertex_id(LatticePoint(4, 0, 2))    # distance 1
        assert profile_eval_idx(spec, mesh, x, near) == pytest.approx(2.5)
        assert profile_eval_idx(spec, mesh, x, far) == 0.0

    def test_radial_symmetric(self):
        mesh = build_mesh(1, 2)
        spec = radial_indicator(1.0, 1.0)
        for a, b in [(0, 5), (3, 11), (2, 7)]:
            assert profile_eval_idx(spec, mesh, a, b) == \
                profile_eval_idx(spec, mesh, b, a)

    def test_cellwise_constant_on_cells(self):
        # psi constant on depth-1 cells of G_0: points sharing the closed
        # unit cell see the value of y's subcell
        mesh = build_mesh(1, 2)
        spec = ProfileSpec("cellwise", M0=0, psi_depth=1,
                           psi_values=(0.5, 1.0, 2.0))
        x = mesh.vertex_id(LatticePoint(1, 0, 2))
        y = mesh.vertex_id(LatticePoint(1, 1, 2))
        v = profile_eval_idx(spec, mesh, x, y)
        assert v in (0.5, 1.0, 2.0)
        # different unit cells -> 0
        far = mesh.vertex_id(LatticePoint(7, 0, 2))
        assert profile_eval_idx(spec, mesh, x, far) == 0.0

    def test_shellwise_scales(self):
        mesh = build_mesh(2, 2)
        spec = ProfileSpec("shellwise", coeffs=(1.0, 0.25), tail_ratio=0.25)
        x = mesh.vertex_id(LatticePoint(1, 0, 2))
        same_unit = mesh.vertex_id(LatticePoint(2, 1, 2))
        assert profile_eval_idx(spec, mesh, x, same_unit) == pytest.approx(1.0)

    def test_profile_eval_point_api(self):
        mesh = build_mesh(1, 2)
        spec = radial_indicator(1.0, 1.0)
        v = profile_eval(spec, LatticePoint(0, 0, 2), LatticePoint(1, 0, 2),
                         mesh)
        assert v == pytest.approx(1.0)


class TestPoissonCloud:
    def test_deterministic(self):
        win = build_mesh(2, 2)
        c1 = sample_cloud(0.5, win, (3, 1))
        c2 = sample_cloud(0.5, win, (3, 1))
        assert list(c1.cell_ids) == list(c2.cell_ids)

    def test_seed_sensitivity(self):
        win = build_mesh(2, 2)
        assert list(sample_cloud(0.8, win, (3, 1)).cell_ids) != \
            list(sample_cloud(0.8, win, (4, 1)).cell_ids)

    def test_mean_count(self):
        win = build_mesh(1, 1)
        nu = 0.7
        counts = [len(sample_cloud(nu, win, (9, k)).cell_ids)
                  for k in range(3000)]
        expect = nu * 3.0 ** win.M
        assert np.mean(counts) == pytest.approx(expect, abs=4 * np.std(counts)
                                                / math.sqrt(len(counts)))

    def test_zero_intensity(self):
        win = build_mesh(1, 1)
        assert len(sample_cloud(0.0, win, 1).cell_ids) == 0

    def test_json_schema(self):
        win = build_mesh(1, 1)
        d = sample_cloud(0.5, win, 2).to_json_dict()
        assert set(d) == {"seed", "intensity", "points"}

    def test_restrict(self):
        win = build_mesh(2, 1)
        cloud = sample_cloud(1.0, win, 5)
        inside = cloud.restrict_cells(1)
        s = 1 << (1 + win.n)
        for cI, cJ in inside:
            assert cI < s and cJ < s


class TestPotentialField:
    def test_zero_cloud_zero_potential(self):
        win = build_mesh(1, 2)
        cloud = sample_cloud(0.0, win, 1)
        V = potential_on_mesh(cloud, radial_indicator(1.0, 1.0))
        assert np.all(V.values == 0.0)

    def test_superposition(self):
        win = build_mesh(1, 2)
        spec = radial_indicator(1.0, 1.0)
        c1 = PoissonCloud(win, 1.0, 0, (0,))
        c2 = PoissonCloud(win, 1.0, 0, (4,))
        c12 = PoissonCloud(win, 1.0, 0, (0, 4))
        v = potential_on_mesh(c12, spec).values
        assert np.allclose(v, potential_on_mesh(c1, spec).values
                           + potential_on_mesh(c2, spec).values, atol=1e-12)

    def test_nonnegative(self):
        win = build_mesh(2, 2)
        cloud = sample_cloud(1.0, win, 8)
        V = potential_on_mesh(cloud, radial_indicator(0.7, 1.5))
        assert np.all(V.values >= 0.0)


class TestPeriodization:
    def test_sznitman_dominates_inside_cloud(self):
        # for a cloud fully inside G_M the periodization only adds copies,
        # so V* >= V on G_M
        win = build_mesh(2, 2)
        spec = radial_indicator(1.0, 0.5)
        cloud = PoissonCloud(win, 1.0, 0, (0, 3))   # cells inside G_1
        M = 1
        V_star = periodize_sznitman(cloud, spec, M, K_trunc=2)
        V_win = potential_on_mesh(cloud, spec).values[win.submesh_indices(M)]
        assert np.all(V_star.values >= V_win - 1e-12)

    def test_sznitman_zero_cloud(self):
        win = build_mesh(1, 2)
        cloud = sample_cloud(0.0, win, 1)
        V = periodize_sznitman(cloud, radial_indicator(1.0, 0.5), 1, 1)
        assert np.all(V.values == 0.0)

    def test_sznitman_radial_radius_guard(self):
        win = build_mesh(1, 2)
        cloud = PoissonCloud(win, 1.0, 0, (0,))
        with pytest.raises(ValueError):
            periodize_sznitman(cloud, radial_indicator(1.0, 10.0), 1, 1)


class TestObstacles:
    def test_masks_shapes(self):
        win = build_mesh(2, 2)
        cloud = sample_cloud(0.5, win, 21)
        masks = obstacle_masks(cloud, 0.5, 1, 2)
        sub = build_mesh(1, 2)
        assert masks["usual"].shape == (len(sub),)
        assert masks["sznitman"].shape == (len(sub),)
        assert masks["usual"].dtype == bool

    def test_no_points_no_mask(self):
        win = build_mesh(1, 2)
        cloud = sample_cloud(0.0, win, 1)
        masks = obstacle_masks(cloud, 0.5, 1, 1)
        assert not masks["usual"].any()
        assert not masks["sznitman"].any()

    def test_point_blocks_its_ball(self):
        win = build_mesh(1, 2)
        cloud = PoissonCloud(win, 1.0, 0, (0,))   # cell (0,0), rep vertex origin
        masks = obstacle_masks(cloud, 0.25, 1, 1)
        sub = build_mesh(1, 2)
        origin = sub.vertex_id(LatticePoint(0, 0, 2))
        assert masks["usual"][origin]


class TestW3:
    MESH = None

    @classmethod
    def mesh(cls):
        if cls.MESH is None:
            cls.MESH = build_mesh(4, 2)
        return cls.MESH

    def test_radial_passes(self):
        res = check_W3(radial_indicator(1.0, 1.0), [1, 2], self.mesh(),
                       n_pairs=60)
        assert res["holds"]

    def test_cellwise_passes(self):
        spec = ProfileSpec("cellwise", M0=0, psi_depth=1,
                           psi_values=(0.5, 1.0, 2.0))
        res = check_W3(spec, [1, 2], self.mesh(), n_pairs=60)
        assert res["holds"]

    def test_shellwise_passes(self):
        spec = ProfileSpec("shellwise", coeffs=(1.0, 0.25), tail_ratio=0.25)
        res = check_W3(spec, [1, 2], self.mesh(), n_pairs=60)
        assert res["holds"]

    def test_counterexample_fails_with_witness(self):
        mesh = self.mesh()
        res = check_W3(w3_counterexample(mesh), [1, 2], mesh, n_pairs=200)
        assert not res["holds"]
        assert res["witnesses"]
        w = res["witnesses"][0]
        assert w["lhs"] > w["rhs"]

    def test_window_margin_enforced(self):
        with pytest.raises(ValueError):
            check_W3(radial_indicator(1.0, 1.0), [2], build_mesh(3, 2))

    def test_generic_vertices_are_generic(self):
        mesh = build_mesh(1, 2)
        ids = generic_vertex_ids(mesh)
        assert len(ids) > 0
        for k in ids:
            i, j = mesh.coords[k]
            assert (i % 4, j % 4) != (0, 0)


class TestW2AndExponentialFormula:
    def test_w2_compact_profile_vanishes(self):
        mesh = build_mesh(3, 1)
        res = check_W2(radial_indicator(1.0, 1.0), 3, mesh)
        assert res["convergent_trend"]
        assert res["partial_sums"][-1] == pytest.approx(0.0, abs=1e-12)

    def test_rhs_closed_form(self):
        win = build_mesh(1, 1)
        f = np.zeros(len(win.cells))
        f[:3] = 2.0
        nu = 0.5
        expect = math.exp(-nu * 3.0 ** (-1) * 3 * (1 - math.exp(-2.0)))
        assert exponential_formula_rhs(nu, win, f) == pytest.approx(expect)

    def test_rhs_zero_field_is_one(self):
        win = build_mesh(1, 1)
        assert exponential_formula_rhs(2.0, win,
                                       np.zeros(len(win.cells))) == 1.0
