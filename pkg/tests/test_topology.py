import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from meanfield.domain import Field
from meanfield.energy import BarycenterConfig
from meanfield.topology import (
    boundary_min_modulus,
    brouwer_degree,
    continuity_curve,
    cutoff,
    family_h,
    family_h_profile,
    minmax_upper_bound,
    moment_map,
    moment_vector,
    power_sums,
    preimages,
    sample_ball,
    vandermonde_map,
    vandermonde_solve,
    winding_number,
)

PI = math.pi


class TestMoments:
    def test_radial_field_vanishes(self, annulus64, annulus_curve, mixed):
        u = Field.from_function(annulus64, lambda x, y: 3 * np.sin(PI * (np.hypot(x, y) - 0.5) / 0.5))
        for j in (1, 2, 3):
            assert abs(moment_map(u, annulus_curve, j, mixed, annulus64)) < 1e-12

    def test_zero_field(self, annulus64, annulus_curve, dirac):
        m = moment_vector(Field.zeros(annulus64), annulus_curve, 3, dirac, annulus64)
        assert np.abs(m).max() < 1e-12

    def test_bound(self, annulus64, annulus_curve, uniform, rng):
        u = Field(annulus64, rng.random(annulus64.n) * 8)
        for j in (1, 2, 4):
            assert abs(moment_map(u, annulus_curve, j, uniform, annulus64)) <= annulus_curve.d**j

    @pytest.mark.parametrize("theta", [0.0, 1.0, 4.0])
    def test_single_bubble_limit(self, annulus64, annulus_curve, dirac, theta):
        errs = []
        for r in (0.9, 0.99, 0.999):
            p = BarycenterConfig((theta,), (1.0,), r).profile(annulus_curve, annulus64.area)
            errs.append(abs(moment_map(p, annulus_curve, 1, dirac, annulus64) - np.exp(1j * theta)))
        assert errs[-1] < 0.01 and errs[0] > errs[1] > errs[2]

    def test_atomic_formula(self, annulus64, annulus_curve, dirac):
        th = (0.3, 2.0, 4.4)
        t = (0.2, 0.5, 0.3)
        p = BarycenterConfig(th, t, 0.9999).profile(annulus_curve, annulus64.area)
        for j in (1, 2, 3):
            atomic = sum(ti * np.exp(1j * j * a) for ti, a in zip(t, th))
            got = moment_map(p, annulus_curve, j, dirac, annulus64)
            assert abs(got - atomic) < 0.05

    def test_grid_matches_profile(self, annulus64, annulus_curve, dirac):
        p = BarycenterConfig((0.5,), (1.0,), 0.3).profile(annulus_curve, annulus64.area)
        a = moment_map(p, annulus_curve, 1, dirac, annulus64)
        b = moment_map(p.sample(annulus64), annulus_curve, 1, dirac, annulus64)
        assert abs(a - b) < 5e-3


class TestVandermondeMap:
    def test_circle(self):
        th = np.linspace(0, 2 * PI, 17)
        for z in np.exp(1j * th):
            assert vandermonde_map([z])[0] == pytest.approx(z, abs=1e-15)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_origin(self, k):
        assert not vandermonde_map(np.zeros(k)).any()

    def test_antipodal_pair(self):
        a = np.exp(0.7j) / math.sqrt(2)
        phi = vandermonde_map([a, -a])
        assert abs(phi[0]) < 1e-15
        assert phi[1] == pytest.approx(2 * a * a, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False), min_size=1, max_size=4),
        st.floats(0.01, 10.0),
    )
    def test_homogeneous(self, z, t):
        z = np.array(z)
        np.testing.assert_allclose(vandermonde_map(t * z), t * t * vandermonde_map(z), rtol=1e-12, atol=1e-14)

    def test_zero_entries_contribute_nothing(self):
        z = np.array([0.3 + 0.2j, 0.0, -0.1j])
        np.testing.assert_allclose(vandermonde_map(z)[:2], vandermonde_map(z[[0, 2]]), rtol=1e-15)
        assert vandermonde_map([0.0, 0.5])[1] == pytest.approx(0.25)

    def test_boundary_nonvanishing(self):
        assert boundary_min_modulus(1) == pytest.approx(1.0, abs=1e-12)
        assert boundary_min_modulus(2, rng=np.random.default_rng(0)) > 0.1


class TestDegree:
    def test_k1(self):
        res = brouwer_degree(1, rng=np.random.default_rng(0))
        assert res.stable and res.degree == 1 == winding_number()

    def test_conjugate_control(self):
        res = brouwer_degree(1, conjugate=True, rng=np.random.default_rng(0))
        assert res.degree == -1 == winding_number(conjugate=True)

    @pytest.mark.slow
    def test_k2_nonzero_and_stable(self):
        res = brouwer_degree(2, n_values=5, rng=np.random.default_rng(0))
        assert res.stable and res.degree != 0
        assert len(set(res.degrees)) == 1 and len(res.degrees) == 5

    def test_preimages_solve(self):
        y0 = 1e-3 * np.exp(0.4j)
        roots = preimages([y0], rng=np.random.default_rng(1), n_starts=20)
        assert len(roots) == 1
        z = np.array([complex(*c) for c in roots[0]["z"]])
        assert roots[0]["sign"] == 1 and roots[0]["inside"]
        assert abs(vandermonde_map(z)[0] - y0) < 1e-12


class TestPowerSums:
    def test_zero(self):
        sol = vandermonde_solve([1.0, 2.0], [0, 0])
        assert not sol.z.any() and sol.converged

    def test_linear(self):
        sol = vandermonde_solve([2.5], [1 + 2j])
        assert sol.z[0] == (1 + 2j) / 2.5

    def test_symmetric_pair(self):
        a = np.exp(0.3j) / math.sqrt(2)
        sol = vandermonde_solve([1.0, 1.0], [0.0, 2 * a * a], rng=np.random.default_rng(0))
        assert sol.converged and sol.residual <= 1e-10
        assert sorted(np.round(sol.z, 9), key=lambda c: c.real) == sorted(np.round([a, -a], 9), key=lambda c: c.real)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**31 - 1))
    def test_round_trip(self, ell, seed):
        rng = np.random.default_rng(seed)
        betas = rng.uniform(0.5, 2.0, ell)
        z = 0.05 * (rng.standard_normal(ell) + 1j * rng.standard_normal(ell))
        sol = vandermonde_solve(betas, power_sums(betas, z), rng=np.random.default_rng(seed))
        assert sol.residual <= 1e-10
        np.testing.assert_allclose(power_sums(betas, sol.z), power_sums(betas, z), atol=1e-10)

    def test_continuity_curve(self):
        norms = [10.0**-m for m in range(1, 7)]
        curve = continuity_curve([1.0, 0.5, 2.0], [1.0, 0.5j, -0.3], norms, rng=np.random.default_rng(0))
        zs = [zn for _, zn in curve]
        assert all(a > b for a, b in zip(zs, zs[1:]))
        assert zs[-1] < 1e-2


class TestFamily:
    def test_cutoff(self):
        assert cutoff(0.2) == 0 and cutoff(1 / 3) == 0 and cutoff(2 / 3) == 1 and cutoff(0.9) == 1
        ts = np.linspace(0, 1, 101)
        assert np.all(np.diff([cutoff(t) for t in ts]) >= 0)

    @pytest.mark.parametrize("z", [[0.0], [0.2, 0.1j], [0.3 + 0.1j, 0.0]])
    def test_small_z_gives_zero(self, annulus64, annulus_curve, z):
        assert not family_h(np.array(z), 10 * PI, annulus_curve, annulus64).values.any()

    def test_single_entry_is_bubble(self, annulus64, annulus_curve):
        z = np.array([0.75 * np.exp(1.2j), 0.0])
        h = family_h_profile(z, annulus_curve, annulus64.area)
        ref = BarycenterConfig((1.2,), (1.0,), 0.75**2).profile(annulus_curve, annulus64.area)
        pts = annulus64.points
        np.testing.assert_allclose(h.values(pts), ref.values(pts), atol=1e-12)

    def test_zero_entry_angle_immaterial(self, annulus64, annulus_curve):
        a = family_h_profile(np.array([0.8, 0.0]), annulus_curve, annulus64.area).values(annulus64.points)
        b = family_h_profile(np.array([0.8, -0.0j]), annulus_curve, annulus64.area).values(annulus64.points)
        c = family_h_profile(np.array([0.8]), annulus_curve, annulus64.area).values(annulus64.points)
        assert np.array_equal(a, b) and np.array_equal(a, c)

    def test_continuity(self, annulus64, annulus_curve, rng):
        for _ in range(6):
            z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            z *= rng.uniform(0.4, 0.75) / np.linalg.norm(z)
            dz = 1e-6 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            a = family_h(z, 10 * PI, annulus_curve, annulus64, min_core_cells=1).values
            b = family_h(z + dz, 10 * PI, annulus_curve, annulus64, min_core_cells=1).values
            assert np.abs(a - b).max() <= 1e4 * np.linalg.norm(dz)

    def test_moments_approach_phi(self, annulus64, annulus_curve, dirac):
        errs = []
        for r in (0.9, 0.99, 0.999):
            err = 0.0
            for th in np.linspace(0, 2 * PI, 8, endpoint=False):
                z = np.array([r * np.exp(1j * th)])
                p = family_h_profile(z, annulus_curve, annulus64.area)
                err = max(err, abs(moment_map(p, annulus_curve, 1, dirac, annulus64) - vandermonde_map(z)[0]))
            errs.append(err)
        assert errs[0] > errs[1] > errs[2]
        assert errs[-1] < 0.1

    def test_rejects_outside_ball(self, annulus64, annulus_curve):
        with pytest.raises(ValueError):
            family_h_profile(np.array([1.0, 0.1]), annulus_curve, annulus64.area)


class TestMinmax:
    @pytest.fixture(scope="class")
    @classmethod
    def report(cls, annulus64, annulus_curve, dirac):
        return minmax_upper_bound(1, 10 * PI, annulus_curve, annulus64, dirac)

    def test_finite_and_boundary_below(self, report):
        assert math.isfinite(report.sup)
        assert report.boundary_max < report.interior_sup
        assert report.margin > 0

    def test_argmax_interior(self, report):
        assert report.argmax_norm <= 0.95 + 1e-12
        assert report.argmax_log_integral >= 0

    def test_monotone_in_lambda(self, annulus64, annulus_curve, dirac, report):
        higher = minmax_upper_bound(1, 12 * PI, annulus_curve, annulus64, dirac)
        assert higher.sup <= report.sup

    def test_matches_closed_form(self, annulus64, annulus_curve, dirac, report):
        # along |z| >= 2/3 the family is a single flat-core bubble with known J
        for s in report.samples:
            nz = abs(complex(*s["z"][0]))
            if 2 / 3 <= nz < 1:
                exact = oracles.k1_family_j(10 * PI, annulus64.area, annulus_curve.eps0, nz)
                assert s["J"] == pytest.approx(exact, rel=1e-6, abs=1e-6)

    def test_lambda_range(self, annulus64, annulus_curve, dirac):
        with pytest.raises(ValueError):
            minmax_upper_bound(1, 7 * PI, annulus_curve, annulus64, dirac)
        with pytest.raises(ValueError):
            minmax_upper_bound(1, 8.5 * PI, annulus_curve, annulus64, dirac, alpha_tilde=0.76)

    def test_sample_ball(self):
        pts = sample_ball(2, 4, 3, 0.999)
        norms = sorted({round(float(np.linalg.norm(p)), 12) for p in pts})
        assert norms[0] == 0 and norms[-1] == 0.999
        assert all(p.shape == (2,) for p in pts)
