import math

import numpy as np
import pytest

from rcsmatch.geometry import Pose, quat_from_rotvec
from rcsmatch.shbasis import (
    DegenerateDirectionError,
    eval_sh_basis,
    eval_sh_basis_many,
    incidence_direction,
    predict_rcs,
    sh_basis_gradient,
    sh_index,
)


def sh_recurrence_oracle(direction):
    """Independent real-SH evaluation via the associated-Legendre recurrence.

    Condon-Shortley-free P_l^m with full (2l+1)(l-m)!/(4 pi (l+m)!)
    normalization; m > 0 rows carry cos(m phi), m < 0 rows sin(|m| phi).
    """
    x, y, z = direction
    ct = z
    st = math.sqrt(max(0.0, 1.0 - z * z))
    phi = math.atan2(y, x)
    p = {(0, 0): 1.0}
    for m in range(1, 4):
        p[(m, m)] = (2 * m - 1) * st * p[(m - 1, m - 1)]
    for m in range(0, 3):
        p[(m + 1, m)] = (2 * m + 1) * ct * p[(m, m)]
    for m in range(0, 2):
        for l in range(m + 2, 4):
            p[(l, m)] = ((2 * l - 1) * ct * p[(l - 1, m)]
                         - (l + m - 1) * p[(l - 2, m)]) / (l - m)
    out = np.zeros(16)
    for l in range(4):
        for m in range(-l, l + 1):
            am = abs(m)
            norm = math.sqrt((2 * l + 1) / (4 * math.pi)
                             * math.factorial(l - am) / math.factorial(l + am))
            if m == 0:
                v = norm * p[(l, 0)]
            elif m > 0:
                v = math.sqrt(2.0) * norm * p[(l, am)] * math.cos(am * phi)
            else:
                v = math.sqrt(2.0) * norm * p[(l, am)] * math.sin(am * phi)
            out[sh_index(l, m)] = v
    return out


def random_units(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestBasisValues:
    def test_constant_row(self):
        rng = np.random.default_rng(0)
        for d in random_units(rng, 20):
            assert eval_sh_basis(d)[0] == pytest.approx(0.28209479177, abs=1e-11)

    def test_degree_one_at_pole(self):
        b = eval_sh_basis([0.0, 0.0, 1.0])
        assert b[sh_index(1, -1)] == 0.0
        assert b[sh_index(1, 0)] == pytest.approx(0.48860251190, abs=1e-11)
        assert b[sh_index(1, 1)] == 0.0

    def test_matches_recurrence_oracle_minus_x(self):
        d = np.array([-1.0, 0.0, 0.0])
        assert np.max(np.abs(eval_sh_basis(d) - sh_recurrence_oracle(d))) < 1e-12

    def test_matches_recurrence_oracle_random(self):
        rng = np.random.default_rng(1)
        for d in random_units(rng, 500):
            assert np.max(np.abs(eval_sh_basis(d) - sh_recurrence_oracle(d))) < 1e-12

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        dirs = random_units(rng, 64)
        batch = eval_sh_basis_many(dirs)
        for i, d in enumerate(dirs):
            assert np.array_equal(batch[i], eval_sh_basis(d))

    def test_near_unit_input_normalized(self):
        d = np.array([0.0, 0.0, 1.0 + 5e-4])
        assert eval_sh_basis(d)[sh_index(1, 0)] == pytest.approx(0.48860251190, abs=1e-9)

    def test_far_from_unit_rejected(self):
        with pytest.raises(ValueError):
            eval_sh_basis([0.0, 0.0, 1.5])

    def test_orthonormality_monte_carlo(self):
        rng = np.random.default_rng(3)
        dirs = random_units(rng, 100_000)
        b = eval_sh_basis_many(dirs)
        gram = 4.0 * math.pi * (b.T @ b) / len(dirs)
        assert np.max(np.abs(gram - np.eye(16))) < 0.01


class TestBasisGradient:
    def test_constant_row_zero(self):
        rng = np.random.default_rng(4)
        for d in random_units(rng, 10):
            assert np.array_equal(sh_basis_gradient(d)[0], np.zeros(3))

    def test_pole_z_row_tangent(self):
        g = sh_basis_gradient([0.0, 0.0, 1.0])
        assert np.array_equal(g[sh_index(1, 0)], np.zeros(3))

    def _fd_gradient(self, d, h=1e-6):
        g = np.zeros((16, 3))
        for k in range(3):
            dp = np.array(d, dtype=float)
            dm = np.array(d, dtype=float)
            dp[k] += h
            dm[k] -= h
            bp = eval_sh_basis(dp / np.linalg.norm(dp)) * 1.0
            bm = eval_sh_basis(dm / np.linalg.norm(dm)) * 1.0
            g[:, k] = (bp - bm) / (2 * h)
        return g

    def test_finite_difference_specific(self):
        d = np.array([-1.0, 1.0, 1.0]) / math.sqrt(3.0)
        g = sh_basis_gradient(d)
        fd = self._fd_gradient(d)
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(g - fd) / scale) < 1e-5

    def test_finite_difference_random(self):
        rng = np.random.default_rng(5)
        for d in random_units(rng, 1000):
            g = sh_basis_gradient(d)
            fd = self._fd_gradient(d)
            scale = np.maximum(np.abs(fd), 1e-3)
            assert np.max(np.abs(g - fd) / scale) < 1e-5


class TestIncidenceDirection:
    def test_plain_offset_no_flip(self):
        inc = incidence_direction([0.0, 2.0, 0.0], [0.0, 0.0, 0.0], Pose.identity())
        assert np.allclose(inc.dir, [0.0, 1.0, 0.0], atol=1e-15)
        assert not inc.flipped

    def test_positive_x_flips(self):
        inc = incidence_direction([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], Pose.identity())
        assert np.allclose(inc.dir, [-1.0, 0.0, 0.0], atol=1e-15)
        assert inc.flipped

    def test_rotated_sensor_then_flip(self):
        # sensor yawed +90 deg: world (0,1,0) difference lands on sensor +x
        pose = Pose(quat_from_rotvec([0.0, 0.0, math.pi / 2]), np.zeros(3))
        inc = incidence_direction([0.0, 1.0, 0.0], [0.0, 0.0, 0.0], pose)
        assert np.allclose(inc.dir, [-1.0, 0.0, 0.0], atol=1e-12)
        assert inc.flipped

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateDirectionError):
            incidence_direction([1.0, 1.0, 1.0], [1.0, 1.0, 1.0 + 1e-12], Pose.identity())

    def test_hemisphere_constraint_random(self):
        rng = np.random.default_rng(6)
        for _ in range(500):
            pose = Pose(quat_from_rotvec(rng.normal(size=3)), rng.normal(size=3))
            inc = incidence_direction(rng.normal(size=3) * 5, rng.normal(size=3) * 5, pose)
            assert inc.dir[0] <= 0.0
            assert abs(np.linalg.norm(inc.dir) - 1.0) < 1e-9


class TestPredictRcs:
    def test_zero_coeffs(self):
        rng = np.random.default_rng(7)
        for d in random_units(rng, 10):
            assert predict_rcs(np.zeros(16), d) == 0.0

    def test_constant_function(self):
        coeffs = np.zeros(16)
        coeffs[0] = 1.0 / 0.28209479177
        rng = np.random.default_rng(8)
        for d in random_units(rng, 10):
            assert predict_rcs(coeffs, d) == pytest.approx(1.0, abs=1e-9)

    def test_direct_summation_oracle(self):
        rng = np.random.default_rng(9)
        coeffs = rng.normal(size=16)
        for d in random_units(rng, 100):
            expected = math.fsum(c * b for c, b in zip(coeffs, sh_recurrence_oracle(d)))
            assert predict_rcs(coeffs, d) == pytest.approx(expected, abs=1e-12)

    def test_linear_in_coeffs(self):
        rng = np.random.default_rng(10)
        c1, c2 = rng.normal(size=16), rng.normal(size=16)
        for d in random_units(rng, 50):
            a, b = rng.normal(), rng.normal()
            lhs = predict_rcs(a * c1 + b * c2, d)
            rhs = a * predict_rcs(c1, d) + b * predict_rcs(c2, d)
            assert lhs == pytest.approx(rhs, abs=1e-12)
