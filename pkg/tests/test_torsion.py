import math

import numpy as np
import pytest

from minkflow.errors import DegenerateGradient
from minkflow.geometry import disk, make_body
from minkflow.mesh import generate_mesh
from minkflow.oracles import ball_torsion
from minkflow.pcg import pcg
from minkflow.torsion import (
    P1Operator,
    SolverConfig,
    boundary_gradient,
    boundary_identity_check,
    rigidity,
    solve_qlaplace,
    solve_torsion,
)


def centre_value(sol):
    i = int(np.argmin(np.hypot(*sol.mesh.vertices.T)))
    return sol.u[i]


class TestDiskOracle:
    def test_q2(self, disk_q2):
        o = ball_torsion(1.0, 2, 2.0)
        assert centre_value(disk_q2) == pytest.approx(0.25, rel=2e-3)
        np.testing.assert_allclose(disk_q2.boundary_grad, o.grad_boundary, rtol=2e-3)
        assert disk_q2.T_tilde == pytest.approx(math.pi / 8, rel=1e-3)
        assert disk_q2.T_tilde_boundary == pytest.approx(math.pi / 8, rel=1e-3)

    def test_q3(self, disk_q3):
        assert centre_value(disk_q3) == pytest.approx((2 / 3) * 2**-0.5, rel=5e-3)
        np.testing.assert_allclose(disk_q3.boundary_grad, 2**-0.5, rtol=5e-3)
        assert disk_q3.T_tilde == pytest.approx(math.pi * math.sqrt(2) / 7, rel=5e-3)

    def test_radius_two(self):
        sol = solve_torsion(make_body(disk(2.0, 256)), 2.0, 0.08)
        np.testing.assert_allclose(sol.boundary_grad, 1.0, rtol=5e-3)
        assert sol.T_tilde == pytest.approx(2 * math.pi, rel=5e-3)
        assert sol.T_tilde_boundary == pytest.approx(2 * math.pi, rel=5e-3)

    @pytest.mark.parametrize("q", [1.5, 5.0])
    def test_other_exponents(self, unit_disk, q):
        sol = solve_torsion(unit_disk, q, 0.04)
        o = ball_torsion(1.0, 2, q)
        assert sol.T_tilde == pytest.approx(o.T_tilde, rel=1e-2)
        np.testing.assert_allclose(sol.boundary_grad, o.grad_boundary, rtol=2e-2)


class TestSolverContract:
    def test_dirichlet_and_sign(self, ellipse_q3):
        sol = ellipse_q3
        assert np.all(sol.u[sol.mesh.boundary_loop] == 0.0)
        assert sol.u.min() >= -1e-10
        assert sol.boundary_grad.min() > 0

    def test_energy_non_increasing(self, ellipse_q3):
        hist = np.array(ellipse_q3.energy_history)
        assert np.all(np.diff(hist) <= 0.0)
        assert ellipse_q3.iterations > 1

    def test_q2_single_linear_solve_bitwise(self, ellipse21):
        mesh = generate_mesh(ellipse21, 0.08)
        sol = solve_qlaplace(mesh, 2.0)
        assert sol.iterations == 1
        op = P1Operator(mesh)
        idx = op.interior
        A = op.stiffness(np.ones(mesh.triangles.shape[0]))[idx][:, idx]
        x, _ = pcg(A, op.load[idx], rtol=1e-12)
        assert np.array_equal(sol.u[idx], x)

    @pytest.mark.parametrize("q", [2.0, 3.0])
    def test_pohozaev_ellipse(self, q, ellipse_q2, ellipse_q3):
        sol = ellipse_q2 if q == 2.0 else ellipse_q3
        assert sol.consistency_gap <= 0.02

    def test_ellipse_q2_closed_form(self, ellipse_q2):
        # u = c (1 - x^2/4 - y^2) with c = 1 / (2 (1/4 + 1)), int u = c pi a b / 2
        c = 1.0 / (2 * (1 / 4 + 1))
        assert ellipse_q2.T_tilde == pytest.approx(c * math.pi * 2 / 2, rel=2e-3)

    def test_gradient_methods(self, unit_disk, disk_q2):
        avg = boundary_gradient(disk_q2, unit_disk, "average")
        assert np.all(avg > 0.45)
        with pytest.raises(ValueError):
            boundary_gradient(disk_q2, unit_disk, "nope")

    def test_degenerate_gradient(self, unit_disk, disk_q2):
        from dataclasses import replace

        flat = replace(disk_q2, u=np.zeros_like(disk_q2.u), grad=np.zeros_like(disk_q2.grad))
        with pytest.raises(DegenerateGradient):
            boundary_gradient(flat, unit_disk, "average")

    def test_rigidity_recomputes(self, unit_disk, disk_q2):
        assert rigidity(disk_q2, unit_disk) == (disk_q2.T_tilde, disk_q2.T_tilde_boundary)

    def test_deterministic(self, ellipse21):
        a = solve_torsion(ellipse21, 3.0, 0.08)
        b = solve_torsion(ellipse21, 3.0, 0.08)
        assert np.array_equal(a.u, b.u)

    def test_invalid_q(self, ellipse21):
        with pytest.raises(ValueError):
            solve_qlaplace(generate_mesh(ellipse21, 0.2), 1.0)


class TestScaling:
    def test_exact_scaled_solution(self, disk_q3):
        s = disk_q3.scaled(2.0)
        assert s.T_tilde == pytest.approx(disk_q3.T_tilde * 2 ** (2 + 1.5), rel=1e-14)
        np.testing.assert_allclose(s.boundary_grad, disk_q3.boundary_grad * 2**0.5, rtol=1e-14)

    def test_fresh_solve_on_dilated_disk(self, unit_disk, disk_q3):
        big = solve_torsion(unit_disk.scaled(2.0), 3.0, 0.08)
        assert big.T_tilde / disk_q3.T_tilde == pytest.approx(2**3.5, rel=1e-2)
        np.testing.assert_allclose(big.boundary_grad / disk_q3.boundary_grad, 2**0.5, rtol=1e-2)


class TestBoundaryIdentities:
    def test_disk_q2(self, unit_disk, disk_q2):
        s = boundary_identity_check(disk_q2, unit_disk).summary()
        assert s["tangential_measured_mean"] == pytest.approx(-0.5, rel=0.05)
        assert s["normal_measured_mean"] == pytest.approx(-0.5, rel=0.05)
        assert s["normal_predicted_mean"] == pytest.approx(-0.5, rel=1e-2)

    def test_disk_q3_prediction(self, unit_disk, disk_q3):
        r = boundary_identity_check(disk_q3, unit_disk)
        expected = 0.5 * (2**-0.5 - 2**0.5)
        assert r.normal_predicted.mean() == pytest.approx(expected, rel=1e-2)

    def test_ellipse_reports_both_normal_forms(self, ellipse21, ellipse_q2):
        s = boundary_identity_check(ellipse_q2, ellipse21).summary()
        assert s["normal_curvature_residual_max"] < s["normal_residual_max"]


def test_config_defaults():
    c = SolverConfig()
    assert (c.tol, c.max_iter, c.gradient_method) == (1e-10, 200, "flux")
