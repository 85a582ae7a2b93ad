import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gasket_ids import geometry as geo
from gasket_ids.geometry import (LatticePoint, build_mesh, collar_measure,
                                 fiber, fiber_distinct, geodesic_distance,
                                 label_index, point_is_on_gasket, project,
                                 vertex_label)


class TestCellMembership:
    def test_known_cells(self):
        assert geo.cell_is_in_gasket(0, 0)
        assert geo.cell_is_in_gasket(1, 0)
        assert geo.cell_is_in_gasket(0, 1)
        assert not geo.cell_is_in_gasket(1, 1)
        assert geo.cell_is_in_gasket(2, 1)  # bottom-right copy of the unit cell

    def test_matches_ifs_oracle_depth6(self):
        depth = 6
        side = 1 << depth
        for I in range(side):
            for J in range(side - I):
                assert geo.cell_is_in_gasket(I, J) == \
                    geo.cell_is_in_gasket_ifs(I, J, depth), (I, J)

    @given(st.integers(0, 2 ** 12 - 1), st.integers(0, 2 ** 12 - 1))
    def test_bit_rule_is_and_free(self, I, J):
        assert geo.cell_is_in_gasket(I, J) == ((I & J) == 0)

    def test_point_membership(self):
        assert point_is_on_gasket(0, 0)
        assert point_is_on_gasket(1, 1)
        assert point_is_on_gasket(2, 1)
        assert not point_is_on_gasket(3, 3)


class TestLatticePoint:
    def test_canonical_reduces(self):
        assert LatticePoint(2, 4, 1).canonical() == (1, 2, 0)

    def test_eq_across_levels(self):
        assert LatticePoint(1, 0, 0) == LatticePoint(2, 0, 1)
        assert hash(LatticePoint(1, 0, 0)) == hash(LatticePoint(2, 0, 1))

    def test_xy(self):
        x, y = LatticePoint(0, 1, 0).xy()
        assert x == pytest.approx(0.5)
        assert y == pytest.approx(math.sqrt(3) / 2)

    @given(st.integers(0, 63), st.integers(0, 63), st.integers(0, 4))
    def test_at_level_roundtrip(self, i, j, n):
        from hypothesis import assume
        assume(point_is_on_gasket(i, j))
        p = LatticePoint(i, j, n)
        assert p.at_level(n + 3) == p


class TestMeshCounts:
    @pytest.mark.parametrize("M,n", [(0, 0), (0, 2), (1, 0), (1, 2), (2, 1)])
    def test_counts(self, M, n):
        mesh = build_mesh(M, n)
        assert len(mesh) == (3 ** (M + n + 1) + 3) // 2
        assert len(mesh.cells) == 3 ** (M + n)

    @pytest.mark.parametrize("M,n", [(0, 1), (1, 1), (2, 2)])
    def test_total_mass_exact(self, M, n):
        mesh = build_mesh(M, n)
        assert mesh.total_mass_exact() == Fraction(3) ** M

    def test_degrees(self):
        mesh = build_mesh(1, 1)
        corners = set(mesh.corner_indices())
        for k in range(len(mesh)):
            assert mesh.degree[k] == (2 if k in corners else 4)

    def test_weights_sum_and_match_exact(self):
        mesh = build_mesh(1, 2)
        assert mesh.vertex_weight.sum() == pytest.approx(3.0, abs=1e-12)
        exact = mesh.vertex_weight_exact()
        for k in range(len(mesh)):
            assert mesh.vertex_weight[k] == pytest.approx(
                float(exact[k]), abs=1e-15)

    def test_cap_enforced(self):
        with pytest.raises(ValueError):
            build_mesh(8, 8)


class TestLabels:
    def test_unit_corners(self):
        assert vertex_label(LatticePoint(0, 0, 0), 0) == "A"
        assert vertex_label(LatticePoint(1, 0, 0), 0) == "B"
        assert vertex_label(LatticePoint(0, 1, 0), 0) == "C"

    @pytest.mark.parametrize("M,n", [(1, 2), (2, 1), (3, 1)])
    def test_triangles_have_distinct_labels(self, M, n):
        # each size-2^M triangle (scaled cell) carries three distinct labels
        mesh = build_mesh(M + 1, n)
        for (cI, cJ) in geo.scaled_cells(M, 1):
            s = 1 << (M + n)
            corners = [LatticePoint(cI * s, cJ * s, n),
                       LatticePoint((cI + 1) * s, cJ * s, n),
                       LatticePoint(cI * s, (cJ + 1) * s, n)]
            labels = {vertex_label(c, M) for c in corners}
            assert labels == {"A", "B", "C"}

    def test_label_index_requires_divisibility(self):
        with pytest.raises(ValueError):
            label_index(1, 0, 1)


class TestProjection:
    def test_midpoint_example(self):
        q = project(LatticePoint(3, 0, 1), 0)
        assert q == LatticePoint(1, 1, 1)

    @pytest.mark.parametrize("M", [0, 1, 2])
    def test_idempotent_and_label_preserving(self, M):
        mesh = build_mesh(M + 2, 1)
        for p in mesh.points[::7]:
            q = project(p, M)
            assert project(q, M) == q
            sub = build_mesh(M, 1)
            assert sub.contains(q)

    def test_fixes_points_of_GM(self):
        sub = build_mesh(1, 2)
        for p in sub.points:
            assert project(p, 1) == p

    @pytest.mark.parametrize("M,K", [(0, 1), (0, 2), (1, 1), (1, 2)])
    def test_fiber_size_and_section(self, M, K):
        mesh = build_mesh(M, 2)
        for p in mesh.points[::5]:
            pre = fiber(p, M, K)
            assert len(pre) == 3 ** K
            for q in pre:
                assert project(q, M) == p

    def test_fiber_distinct_k1_at_most_3(self):
        mesh = build_mesh(1, 2)
        for p in mesh.points:
            reps, mult = fiber_distinct(p, 1, 1)
            assert len(reps) <= 3
            assert sum(mult) == 3

    def test_projection_is_onto(self):
        amb = build_mesh(2, 1)
        sub = build_mesh(1, 1)
        image = {project(p, 1) for p in amb.points}
        assert image == set(sub.points)


class TestDistancesAndCollar:
    def test_unit_edge(self):
        mesh = build_mesh(0, 2)
        d = geodesic_distance(LatticePoint(0, 0, 2), LatticePoint(1, 0, 2), mesh)
        assert d == Fraction(1, 4)

    def test_opposite_corner(self):
        mesh = build_mesh(1, 1)
        d = geodesic_distance(LatticePoint(0, 0, 1), LatticePoint(4, 0, 1), mesh)
        assert d == 2

    def test_distance_matrix_consistency(self):
        mesh = build_mesh(1, 1)
        D = mesh.distance_matrix()
        a = mesh.index[(0, 0)]
        b = mesh.index[(4, 0)]
        assert D[a, b] == pytest.approx(2.0)
        assert np.allclose(D, D.T)

    def test_collar_values(self):
        assert collar_measure(1, 1) == 2
        assert collar_measure(2, 1) == 4
        assert collar_measure(1, Fraction(1, 2)) == Fraction(4, 3)

    def test_collar_monotone_in_r(self):
        vals = [collar_measure(2, Fraction(k, 4)) for k in range(1, 8)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_collar_bad_r(self):
        with pytest.raises(ValueError):
            collar_measure(1, 2)
        with pytest.raises(ValueError):
            collar_measure(1, Fraction(1, 3))


class TestMeshJson:
    def test_schema(self):
        d = build_mesh(0, 1).to_json_dict()
        assert set(d) == {"M", "n", "vertices", "edges", "weights"}
        assert len(d["vertices"]) == 6
        assert len(d["edges"]) == 9
        assert sum(d["weights"]) == pytest.approx(1.0)
