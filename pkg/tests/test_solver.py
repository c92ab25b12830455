import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from meanfield.domain import DiscreteDomain, Field
from meanfield.measure import IntensityMeasure
from meanfield.solver import (
    SolveConfig,
    continue_amplitude,
    continue_lambda,
    evaluate_terms,
    jacobian_apply,
    newton_solve,
    nonlinearity,
    residual,
    result_from_field,
    standard_nonlinearity,
)

PI = math.pi


@pytest.fixture(scope="module")
def dirac_branch(disk64, dirac):
    # the h = 1/32 discrete branch folds near 7.85 pi; 1/64 reaches 7.9 pi
    return continue_lambda(0.0, 7.9 * PI, dirac, disk64)


class TestNonlinearity:
    def test_zero_field_dirac(self, disk32, dirac):
        f = nonlinearity(Field.zeros(disk32), 3.0, dirac).values
        assert np.allclose(f, 3.0 / disk32.area, rtol=1e-14)

    def test_zero_field_mean(self, disk32, uniform, mixed):
        for m in (uniform, mixed):
            f = nonlinearity(Field.zeros(disk32), 3.0, m).values
            assert np.allclose(f, 3.0 * m.mean() / disk32.area, rtol=1e-12)

    def test_total_equals_lambda_for_dirac(self, disk32, dirac, rng):
        u = Field(disk32, rng.random(disk32.n) * 3)
        t = evaluate_terms(u, 5.0, dirac, jacobian=False)
        assert t.nu_total == pytest.approx(5.0, abs=1e-8)
        assert np.all(t.f > 0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 40.0))
    def test_total_at_most_lambda(self, seed, lam):
        d = DiscreteDomain("disk", {}, 1 / 16)
        u = Field(d, np.random.default_rng(seed).random(d.n) * 5)
        m = IntensityMeasure.from_parts([(0.3, 0.4)], [0.5, 1.0], [1.0, 1.0], normalize=True)
        assert evaluate_terms(u, lam, m, jacobian=False).nu_total <= lam + 1e-8

    def test_dirac_bitwise_matches_standard(self, disk32, dirac, rng):
        u = Field(disk32, rng.random(disk32.n) * 4)
        a = nonlinearity(u, 7.0, dirac).values
        b = standard_nonlinearity(u, 7.0).values
        assert np.array_equal(a, b)

    def test_overflow_safe(self, disk32, uniform):
        u = Field(disk32, np.full(disk32.n, 800.0))
        assert np.all(np.isfinite(nonlinearity(u, 1.0, uniform).values))


class TestJacobian:
    @pytest.mark.parametrize("meas", ["dirac", "uniform", "mixed"])
    def test_finite_difference(self, disk32, rng, meas, request):
        m = request.getfixturevalue(meas)
        u = Field(disk32, rng.random(disk32.n) * 2)
        v = rng.standard_normal(disk32.n)
        eps = 1e-5
        fd = (residual(Field(disk32, u.values + eps * v), 6.0, m).values
              - residual(Field(disk32, u.values - eps * v), 6.0, m).values) / (2 * eps)
        an = jacobian_apply(u, 6.0, m, v)
        assert np.linalg.norm(fd - an) <= 1e-5 * np.linalg.norm(an)


class TestNewton:
    def test_lambda_zero(self, disk32, mixed):
        r = newton_solve(Field.zeros(disk32), 0.0, mixed)
        assert r.converged and r.iterations <= 1
        assert not r.u.values.any()

    @pytest.mark.parametrize("h,tol", [(1 / 32, 2e-3), (1 / 64, 5e-4)])
    def test_radial_oracle(self, dirac, h, tol):
        d = DiscreteDomain("disk", {}, h)
        r = newton_solve(Field.zeros(d), 4 * PI, dirac)
        exact, _ = oracles.liouville_disk(4 * PI)
        assert r.converged and r.residual <= 1e-10
        assert np.abs(r.u.values - exact(np.hypot(*d.points.T))).max() < tol
        assert r.invariant_violations() == []

    def test_shooting_oracle_uniform(self, disk32, uniform):
        u_ref, a, log_I, _ = oracles.radial_solution(uniform, 4 * PI)
        r = newton_solve(Field.zeros(disk32), 4 * PI, uniform)
        assert r.converged
        assert np.abs(r.u.values - u_ref(np.hypot(*disk32.points.T))).max() < 2e-3
        assert r.log_I == pytest.approx(log_I, abs=2e-3)

    def test_linear_regime(self, disk32, mixed):
        norms = [(lam, newton_solve(Field.zeros(disk32), lam, mixed).u.sup_norm()) for lam in (1e-3, 1e-2, 1e-1)]
        ratios = [n / lam for lam, n in norms]
        assert max(ratios) / min(ratios) < 1.05

    def test_radial_symmetry(self, disk32, uniform):
        r = newton_solve(Field.zeros(disk32), 5.0, uniform)
        pts = np.round(disk32.points / disk32.h).astype(int)
        key = pts[:, 0] ** 2 + pts[:, 1] ** 2
        spread = max(np.ptp(r.u.values[key == k]) for k in np.unique(key))
        assert spread <= 10 * disk32.h

    def test_gmres_agrees(self, disk32, mixed):
        a = newton_solve(Field.zeros(disk32), 10.0, mixed)
        b = newton_solve(Field.zeros(disk32), 10.0, mixed, SolveConfig(linear_solver="gmres"))
        assert np.abs(a.u.values - b.u.values).max() < 1e-8

    def test_nonconvergence_reported(self, disk32, dirac):
        r = newton_solve(Field.zeros(disk32), 4 * PI, dirac, SolveConfig(max_iter=1))
        assert not r.converged and r.message

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolveConfig(shrink=1.5)
        with pytest.raises(ValueError):
            SolveConfig(tol=0)

    def test_result_from_field(self, disk32, mixed):
        r = newton_solve(Field.zeros(disk32), 10.0, mixed)
        q = result_from_field(r.u, 10.0, mixed)
        assert q.residual <= 1e-10 and q.log_I == pytest.approx(r.log_I, abs=1e-13)


class TestContinuation:
    @pytest.mark.parametrize("meas", ["dirac", "uniform", "mixed"])
    def test_short_sweep(self, disk32, meas, request):
        m = request.getfixturevalue(meas)
        br = continue_lambda(0.0, 1.0, m, disk32)
        assert len(br.entries) >= 2 and br.flag is None
        assert all(e.residual <= e.tol_effective for e in br.entries)
        assert np.all(np.diff(br.lambdas) > 0)

    @pytest.mark.slow
    def test_dirac_branch_increasing(self, dirac_branch):
        br = dirac_branch
        assert br.flag is None and br.lambdas[-1] == pytest.approx(7.9 * PI)
        assert np.all(np.diff(br.lambdas) > 0) and np.all(np.diff(br.u_max) > 0)
        for e in br.entries:
            assert e.invariant_violations() == []
            assert e.nu_total <= e.lam + 1e-8

    @pytest.mark.slow
    def test_dirac_branch_matches_closed_form(self, dirac_branch):
        # peak of 2 log((1+b)/(1+b r^2)) is 2 log(1+b); the grid error grows with the
        # peak curvature, so the tight comparison stops at 7.5 pi
        peaks = []
        for e in dirac_branch.entries:
            _, b = oracles.liouville_disk(e.lam)
            peaks.append(2 * math.log(1 + b))
            assert e.u_max == pytest.approx(peaks[-1], rel=0.01 if e.lam <= 7.5 * PI else 0.05)
        assert np.all(np.diff(peaks) > 0)

    @pytest.mark.slow
    def test_flag_before_threshold(self, disk32, dirac):
        br = continue_lambda(7.0 * PI, 9 * PI, dirac, disk32)
        assert br.flag is not None
        assert br.entries[-1].lam < 8.1 * PI
        e = br.entries[-1]
        assert e.u_max > 6
        assert abs(e.nu_total - e.lam) <= 0.05 * e.lam

    def test_rejects_reversed_range(self, disk32, dirac):
        with pytest.raises(ValueError):
            continue_lambda(2.0, 1.0, dirac, disk32)

    def test_amplitude_passes_fold(self, disk32, mixed):
        # lambda is not monotone along the mixed branch; amplitude stepping follows it anyway
        start = newton_solve(Field.zeros(disk32), 7.0 * PI, mixed)
        br = continue_amplitude(start, start.u_max + 4.0, mixed)
        assert len(br.entries) > 3
        assert np.all(np.diff(br.u_max) > 0)
        assert all(e.residual <= e.tol_effective for e in br.entries)
