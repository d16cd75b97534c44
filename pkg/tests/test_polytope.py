import math

import numpy as np
import pytest
from scipy import stats

from avsafety.models import LinearCfParams, as_generalized
from avsafety.polytope import (
    DimensionGuardError,
    HPolytope,
    InfeasiblePolytope,
    PolytopeError,
    build_omega_polytope,
    build_safe_polytope,
    cg_volume,
    chebyshev_center,
    dangerous_proportion_polytope,
    enumerate_vertices,
    equality_basis,
    hit_and_run_step,
    mc_box_volume,
    project_equalities,
    read_hrep,
    sob_volume,
    ve_volume,
    write_hrep,
)
from avsafety.scenario import ScenarioBounds


def cube(p, side=1.0):
    A = np.vstack([np.eye(p), -np.eye(p)])
    b = np.concatenate([side * np.ones(p), np.zeros(p)])
    return HPolytope(A=A, b=b)


GEN = as_generalized(LinearCfParams(form="milanes", k1=0.23, k2=0.07, t_hw=1.5))


class TestHPolytope:
    def test_row_mismatch(self):
        with pytest.raises(PolytopeError):
            HPolytope(A=np.eye(2), b=np.ones(3))

    def test_contains(self):
        c = cube(3)
        assert c.contains(np.array([0.5, 0.5, 0.5]))
        assert not c.contains(np.array([1.5, 0.5, 0.5]))

    def test_translation(self):
        c = cube(2).translated(np.array([0.5, 0.5]))
        assert c.contains(np.array([0.0, 0.0]))
        assert c.contains(np.array([-0.5, -0.5]))
        assert not c.contains(np.array([0.6, 0.0]))


class TestConstruction:
    def test_dimensions_and_counts(self):
        b = ScenarioBounds(horizon_T=1)
        s = build_safe_polytope(GEN, b, 1.0)
        assert s.dim == 8  # 5T + 3
        assert s.A_eq.shape[0] == 4  # dynamics + control law
        o = build_omega_polytope(GEN, b)
        # omega drops exactly the safety rows (two per observed step)
        assert s.A.shape[0] - o.A.shape[0] == 2 * (b.horizon_T + 1)

    def test_requires_generalized_form(self):
        with pytest.raises(PolytopeError):
            build_safe_polytope(
                LinearCfParams(form="milanes", k1=0.1, t_hw=1.0),
                ScenarioBounds(horizon_T=1), 1.0,
            )

    def test_omega_is_superset(self):
        b = ScenarioBounds(horizon_T=2)
        s = build_safe_polytope(GEN, b, 1.0)
        o = build_omega_polytope(GEN, b)
        rows_o = {tuple(np.round(r, 12)) for r in np.hstack([o.A, o.b[:, None]])}
        rows_s = {tuple(np.round(r, 12)) for r in np.hstack([s.A, s.b[:, None]])}
        assert rows_o <= rows_s

    def test_empty_polytope_infeasible(self):
        # x <= -1 and -x <= 0 have no common point
        p = HPolytope(A=np.array([[1.0], [-1.0]]), b=np.array([-1.0, 0.0]))
        with pytest.raises(InfeasiblePolytope):
            chebyshev_center(p)


class TestProjection:
    def test_axis_aligned_slice(self):
        # [0,1]^3 x {1/2} in 4 dimensions projects to a unit 3-cube
        A = np.vstack([np.eye(4), -np.eye(4)])[np.array([0, 1, 2, 4, 5, 6])]
        b = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        eq = np.zeros((1, 4))
        eq[0, 3] = 1.0
        p = HPolytope(A=A, b=b, A_eq=eq, b_eq=np.array([0.5]))
        proj = project_equalities(p)
        assert proj.dim == 3
        assert ve_volume(proj).value == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("T", [1, 2, 3, 4, 5])
    def test_projected_dimension(self, T):
        b = ScenarioBounds(horizon_T=T)
        s = build_safe_polytope(GEN, b, 1.0)
        assert project_equalities(s, equality_basis(s)).dim == T + 3

    def test_no_equalities_identity(self):
        c = cube(3)
        proj = project_equalities(c)
        assert proj.dim == 3
        assert np.allclose(proj.A, c.A)

    def test_inconsistent_equalities(self):
        eq = np.array([[1.0, 0.0], [1.0, 0.0]])
        p = HPolytope(A=np.eye(2), b=np.ones(2), A_eq=eq, b_eq=np.array([0.0, 1.0]))
        with pytest.raises(PolytopeError):
            equality_basis(p)


class TestChebyshev:
    def test_unit_cube(self):
        c, r = chebyshev_center(cube(3))
        assert c == pytest.approx([0.5, 0.5, 0.5])
        assert r == pytest.approx(0.5)

    def test_slab(self):
        p = HPolytope(A=np.array([[1.0], [-1.0]]), b=np.array([1.0, 1.0]))
        c, r = chebyshev_center(p)
        assert c[0] == pytest.approx(0.0)
        assert r == pytest.approx(1.0)

    def test_triangle_incircle(self):
        A = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
        b = np.array([0.0, 0.0, 1.0])
        _, r = chebyshev_center(HPolytope(A=A, b=b))
        assert r == pytest.approx(1.0 / (2.0 + math.sqrt(2.0)))


class TestVeVolume:
    def test_unit_cube(self):
        assert ve_volume(cube(3)).value == pytest.approx(1.0, abs=1e-9)

    def test_simplex(self):
        A = np.vstack([-np.eye(3), np.ones((1, 3))])
        b = np.concatenate([np.zeros(3), [1.0]])
        assert ve_volume(HPolytope(A=A, b=b)).value == pytest.approx(1 / 6, abs=1e-9)

    def test_scaling_covariance(self):
        v1 = ve_volume(cube(4)).value
        v2 = ve_volume(cube(4, side=2.0)).value
        assert v2 == pytest.approx(v1 * 2.0**4, rel=1e-9)

    def test_vertex_count_square(self):
        verts = enumerate_vertices(cube(2))
        assert len(verts) == 4

    def test_dimension_guard(self):
        with pytest.raises(DimensionGuardError):
            ve_volume(cube(11))

    def test_lower_dimensional_rejected(self):
        # a slab pinched to zero width has no interior
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        b = np.array([0.0, 0.0, 1.0, 0.0])
        with pytest.raises(PolytopeError):
            ve_volume(HPolytope(A=A, b=b))


class TestHitAndRun:
    def test_stays_inside_interval(self):
        p = HPolytope(A=np.array([[1.0], [-1.0]]), b=np.array([1.0, 0.0]))
        rng = np.random.default_rng(0)
        x = np.array([0.5])
        for _ in range(100):
            x = hit_and_run_step(p, x, rng)
            assert 0.0 <= x[0] <= 1.0

    def test_unbounded_chord_rejected(self):
        # a single half-space leaves almost every chord infinite
        p = HPolytope(A=np.array([[1.0, 0.0]]), b=np.array([1.0]))
        rng = np.random.default_rng(1)
        with pytest.raises(PolytopeError):
            hit_and_run_step(p, np.array([0.0, 0.0]), rng)

    def test_uniformity_chi_square(self):
        sq = cube(2)
        rng = np.random.default_rng(41)
        x = np.array([0.5, 0.5])
        pts = np.empty((20_000, 2))
        for i in range(20_000):
            x = hit_and_run_step(sq, x, rng)
            pts[i] = x
        k = 10
        idx = np.minimum((pts * k).astype(int), k - 1)
        counts = np.bincount(idx[:, 0] * k + idx[:, 1], minlength=k * k)
        chi2 = ((counts - counts.mean()) ** 2 / counts.mean()).sum()
        assert stats.chi2.sf(chi2, k * k - 1) > 0.01


class TestRandomizedVolumes:
    @pytest.mark.parametrize("dim,tol", [(5, 0.05), (10, 0.05)])
    def test_sob_on_cube(self, dim, tol):
        est = sob_volume(cube(dim), seed=3)
        assert est.value == pytest.approx(1.0, rel=tol)

    @pytest.mark.parametrize("dim,tol", [(5, 0.10), (10, 0.10)])
    def test_cg_on_cube(self, dim, tol):
        est = cg_volume(cube(dim), seed=3)
        assert est.value == pytest.approx(1.0, rel=tol)

    def test_cg_gamma_validation(self):
        with pytest.raises(PolytopeError):
            cg_volume(cube(3), cooling_gamma=1.5)

    def test_mc_box_on_cube(self):
        est = mc_box_volume(cube(4), n_samples=50_000, seed=2)
        assert est.value == pytest.approx(1.0, rel=0.05)

    def test_sob_on_ball_like_simplex(self):
        A = np.vstack([-np.eye(3), np.ones((1, 3))])
        b = np.concatenate([np.zeros(3), [1.0]])
        est = sob_volume(HPolytope(A=A, b=b), seed=5)
        assert est.value == pytest.approx(1 / 6, rel=0.05)


class TestDangerousProportion:
    def test_vacuous_safety_rows(self):
        # eta = 0 with zero vehicle length: every admissible state is safe
        b = ScenarioBounds(horizon_T=1, vehicle_length_l=0.0)
        r = dangerous_proportion_polytope(GEN, b, 0.0, method="ve")
        assert r.dangerous_proportion == pytest.approx(0.0, abs=1e-9)

    def test_proportion_in_unit_interval(self):
        b = ScenarioBounds(horizon_T=2)
        r = dangerous_proportion_polytope(GEN, b, 1.0, method="ve")
        assert 0.0 <= r.dangerous_proportion <= 1.0
        assert r.projected_dim == 5

    def test_engines_cross_validate(self):
        b = ScenarioBounds(horizon_T=2)
        ve = dangerous_proportion_polytope(GEN, b, 1.0, method="ve")
        sob = dangerous_proportion_polytope(GEN, b, 1.0, method="sob", seed=1)
        cg = dangerous_proportion_polytope(GEN, b, 1.0, method="cg", seed=1)
        box = dangerous_proportion_polytope(GEN, b, 1.0, method="mc_box", seed=1)
        # the proportion is a difference of two near-equal volume estimates,
        # so the sensible tolerance is absolute, not relative
        assert sob.dangerous_proportion == pytest.approx(ve.dangerous_proportion, abs=0.05)
        assert cg.dangerous_proportion == pytest.approx(ve.dangerous_proportion, abs=0.08)
        assert box.dangerous_proportion == pytest.approx(ve.dangerous_proportion, abs=0.05)

    def test_unknown_method(self):
        with pytest.raises(PolytopeError):
            dangerous_proportion_polytope(GEN, ScenarioBounds(horizon_T=1), 1.0,
                                          method="magic")


class TestHrepRoundTrip:
    def test_round_trip(self, tmp_path):
        b = ScenarioBounds(horizon_T=1)
        p = build_safe_polytope(GEN, b, 1.0)
        path = tmp_path / "safe.hrep"
        write_hrep(p, path)
        q = read_hrep(path)
        assert np.array_equal(p.A, q.A)
        assert np.array_equal(p.b, q.b)
        assert np.array_equal(p.A_eq, q.A_eq)
        assert np.array_equal(p.b_eq, q.b_eq)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.hrep"
        path.write_text("3 2\n")
        with pytest.raises(PolytopeError):
            read_hrep(path)
