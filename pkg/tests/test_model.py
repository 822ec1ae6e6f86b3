import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plumbline.model import (
    DistortionParams,
    DomainError,
    Edgel,
    anisotropy_g,
    correct_point,
    harris_f,
    invert_point,
    jacobian,
    transform_edgel,
    transform_edgels,
    transform_normals,
)

# 100 / sqrt(1.1), evaluated with mpmath at 40 digits
HARRIS_100 = 95.34625892455923154


def random_params(rng, rho_max=1000.0, aniso=3e-3):
    return DistortionParams(
        c=tuple(rng.uniform(-50, 50, 2)),
        gamma=rng.uniform(-0.5, 0.5) / rho_max**2,
        b=tuple(rng.uniform(-aniso, aniso, 6)),
    )


def random_point(rng, p, lo=10.0, hi=1000.0):
    ang = rng.uniform(0, 2 * np.pi)
    rho = rng.uniform(lo, hi)
    return np.asarray(p.c) + rho * np.array([np.cos(ang), np.sin(ang)])


def fd_jacobian(p, x, h=1e-4):
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (correct_point(p, x + e) - correct_point(p, x - e)) / (2 * h)
    return J


class TestHarris:
    def test_identity_at_zero_gamma(self):
        assert harris_f(0.0, 5.0) == 5.0

    def test_reference_value(self):
        assert harris_f(1e-5, 100.0) == pytest.approx(HARRIS_100, rel=1e-14)

    def test_negated_gamma_inverts(self):
        assert abs(harris_f(-1e-5, harris_f(1e-5, 100.0)) - 100.0) < 1e-9

    def test_domain_error(self):
        with pytest.raises(DomainError):
            harris_f(-1e-4, 100.0)

    @given(st.floats(-0.9, 0.9), st.floats(0.0, 0.99))
    def test_monotone(self, beta, t):
        gamma = beta / 1000.0**2
        r = np.array([t * 1000.0, t * 1000.0 + 1.0])
        f = harris_f(gamma, r)
        assert f[1] > f[0]


class TestAnisotropy:
    def test_zero(self):
        assert anisotropy_g(np.zeros(6), np.array([0.6, 0.8])) == 0.0

    def test_first_term_picks_sine(self):
        assert anisotropy_g([1, 0, 0, 0, 0, 0], np.array([0.0, 1.0])) == 1.0

    def test_squared_term(self):
        s = np.sqrt(2) / 2
        assert anisotropy_g([0, 0, 1, 1, 0, 0], np.array([s, s])) == pytest.approx(2.0)

    def test_cubic_term(self):
        assert anisotropy_g([0, 0, 0, 0, 2, 0], np.array([0.0, 1.0])) == pytest.approx(8.0)
        assert anisotropy_g([0, 0, 0, 0, 0, 2], np.array([-1.0, 0.0])) == pytest.approx(-8.0)


class TestCorrectAndInvert:
    def test_identity(self):
        p = DistortionParams.identity((3.0, 4.0))
        assert np.array_equal(correct_point(p, np.array([10.0, 20.0])), [10.0, 20.0])
        assert np.array_equal(invert_point(p, np.array([10.0, 20.0])), [10.0, 20.0])

    def test_axis_example(self):
        p = DistortionParams(c=(0, 0), gamma=1e-5)
        out = correct_point(p, np.array([100.0, 0.0]))
        assert out[0] == pytest.approx(HARRIS_100, rel=1e-14)
        assert out[1] == 0.0
        back = invert_point(p, np.array([HARRIS_100, 0.0]))
        assert np.allclose(back, [100.0, 0.0], atol=1e-9)

    def test_center_maps_to_itself(self):
        p = DistortionParams(c=(5.0, 7.0), gamma=1e-5, b=(1e-3,) * 6)
        assert np.array_equal(correct_point(p, np.array([5.0, 7.0])), [5.0, 7.0])
        assert np.array_equal(invert_point(p, np.array([5.0, 7.0])), [5.0, 7.0])

    def test_vectorised_matches_scalar(self, rng):
        p = random_params(rng)
        pts = np.array([random_point(rng, p) for _ in range(20)])
        batch = correct_point(p, pts)
        for x, y in zip(pts, batch):
            assert np.array_equal(correct_point(p, x), y)

    def test_domain_error_and_mask(self):
        p = DistortionParams(c=(0, 0), gamma=-1e-4)
        pts = np.array([[50.0, 0.0], [200.0, 0.0]])
        with pytest.raises(DomainError):
            correct_point(p, pts)
        _, valid = correct_point(p, pts, strict=False)
        assert valid.tolist() == [True, False]

    def test_inverse_out_of_range(self):
        p = DistortionParams(c=(0, 0), gamma=1e-4)
        # f saturates at 1/sqrt(gamma) = 100, so 150 has no preimage
        with pytest.raises(DomainError):
            invert_point(p, np.array([150.0, 0.0]))

    def test_round_trip_random(self, rng):
        for _ in range(1000):
            p = random_params(rng)
            x = random_point(rng, p)
            assert np.linalg.norm(invert_point(p, correct_point(p, x)) - x) < 1e-9

    def test_ray_preserved(self, rng):
        for _ in range(200):
            p = random_params(rng)
            x = random_point(rng, p)
            c = np.asarray(p.c)
            u = (x - c) / np.linalg.norm(x - c)
            y = correct_point(p, x)
            v = (y - c) / np.linalg.norm(y - c)
            assert np.allclose(u, v, atol=1e-12)

    @given(st.floats(-0.5, 0.5), st.lists(st.floats(-3e-3, 3e-3), min_size=6, max_size=6),
           st.floats(0, 2 * np.pi), st.floats(10.0, 1000.0))
    def test_round_trip_property(self, beta, b, ang, rho):
        p = DistortionParams(c=(1.0, -2.0), gamma=beta / 1000.0**2, b=tuple(b))
        x = np.asarray(p.c) + rho * np.array([np.cos(ang), np.sin(ang)])
        assert np.linalg.norm(invert_point(p, correct_point(p, x)) - x) < 1e-9


class TestJacobian:
    def test_identity(self):
        p = DistortionParams.identity((0, 0))
        assert np.array_equal(jacobian(p, np.array([3.0, 4.0])), np.eye(2))

    def test_singular_at_center(self):
        p = DistortionParams(c=(1.0, 1.0), gamma=1e-5)
        with pytest.raises(DomainError):
            jacobian(p, np.array([1.0, 1.0]))

    def test_radial_on_axis_is_diagonal(self):
        g, rho = 2e-6, 300.0
        p = DistortionParams(c=(0, 0), gamma=g)
        J = jacobian(p, np.array([rho, 0.0]))
        q = 1 + g * rho**2
        assert J[0, 0] == pytest.approx(q**-1.5, rel=1e-13)
        assert J[1, 1] == pytest.approx(harris_f(g, rho) / rho, rel=1e-13)
        assert J[0, 1] == 0.0 and J[1, 0] == 0.0

    def test_matches_finite_differences(self, rng):
        worst = 0.0
        for _ in range(300):
            p = random_params(rng)
            x = random_point(rng, p)
            J = jacobian(p, x)
            F = fd_jacobian(p, x)
            scale = np.abs(F).max()
            worst = max(worst, np.abs(J - F).max() / scale)
        assert worst < 1e-5

    def test_batch_shape(self, rng):
        p = random_params(rng)
        pts = np.array([random_point(rng, p) for _ in range(5)])
        assert jacobian(p, pts).shape == (5, 2, 2)


class TestEdgels:
    def test_identity_unchanged(self):
        e = Edgel(np.array([1.0, 2.0]), np.array([0.6, 0.8]), 3.0)
        assert transform_edgel(DistortionParams.identity((0, 0)), e) is e

    def test_unit_normals(self, rng):
        for _ in range(1000 // 50):
            p = random_params(rng)
            pts = np.array([random_point(rng, p) for _ in range(50)])
            ang = rng.uniform(0, np.pi, 50)
            n = np.column_stack([np.cos(ang), np.sin(ang)])
            h = transform_normals(p, pts, n)
            assert np.allclose(np.linalg.norm(h, axis=1), 1.0, atol=1e-12)

    def test_weight_preserved(self):
        p = DistortionParams(c=(0, 0), gamma=1e-6)
        e = transform_edgel(p, Edgel(np.array([100.0, 50.0]), np.array([1.0, 0.0]), 2.5))
        assert e.weight == 2.5

    def test_straightened_normals_collinear(self):
        # barrel-distort samples of a straight line, then correct them back
        truth = DistortionParams(c=(0, 0), gamma=-2e-6)
        lens = DistortionParams(c=(0, 0), gamma=2e-6)
        n0 = np.array([np.cos(0.3), np.sin(0.3)])
        t0 = np.array([-n0[1], n0[0]])
        pts = 150.0 * n0 + np.linspace(-200, 200, 41)[:, None] * t0
        dpos = correct_point(lens, pts)
        dnrm = transform_normals(lens, pts, np.tile(n0, (41, 1)))
        pos, nrm, valid = transform_edgels(truth, dpos, dnrm)
        assert valid.all()
        assert np.allclose(pos, pts, atol=1e-9)
        assert np.abs(nrm[:, 0] * n0[1] - nrm[:, 1] * n0[0]).max() < 1e-6

    def test_normal_orthogonal_to_chord(self, rng):
        p = random_params(rng, aniso=2e-3)
        s = np.linspace(0, 1, 401)
        curve = np.column_stack([300 * np.cos(2 * s) + 40, 200 * np.sin(3 * s) + 60])
        tang = np.column_stack([-600 * np.sin(2 * s), 600 * np.cos(3 * s)])
        nrm = np.column_stack([tang[:, 1], -tang[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        pos, h, valid = transform_edgels(p, curve, nrm)
        assert valid.all()
        chord = pos[2:] - pos[:-2]
        chord /= np.linalg.norm(chord, axis=1, keepdims=True)
        assert np.abs(np.sum(chord * h[1:-1], axis=1)).max() < 1e-4

    def test_invalid_rows_flagged(self):
        p = DistortionParams(c=(0, 0), gamma=-1e-4)
        pos, nrm, valid = transform_edgels(p, np.array([[10.0, 0], [0, 0], [500.0, 0]]),
                                           np.array([[1.0, 0], [1.0, 0], [1.0, 0]]))
        assert valid.tolist() == [True, False, False]
        assert np.isnan(pos[1:]).all() and np.isnan(nrm[1:]).all()


class TestParams:
    def test_json_round_trip(self):
        p = DistortionParams(c=(1.5, 2.5), gamma=-3e-7, b=(1e-4, 0, 0, 0, 0, -2e-4))
        d = json.loads(p.to_json())
        assert set(d) == {"c", "gamma", "b"}
        assert DistortionParams.from_json(p.to_json()) == p

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            DistortionParams(c=(1.0,))
        with pytest.raises(ValueError):
            DistortionParams(c=(0, 0), b=(0.0,) * 5)
        with pytest.raises(ValueError):
            DistortionParams(c=(0, 0), gamma=float("nan"))

    def test_check_domain(self):
        DistortionParams(c=(0, 0), gamma=-0.5 / 100**2).check_domain(100.0)
        with pytest.raises(DomainError):
            DistortionParams(c=(0, 0), gamma=-1.0 / 100**2).check_domain(100.0)
