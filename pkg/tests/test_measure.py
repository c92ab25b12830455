import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield.measure import IntensityMeasure, MeasureError, normalize_support

E = math.e


def random_measure(draw_atoms, draw_density):
    atoms = draw_atoms
    if draw_density:
        return IntensityMeasure.from_parts(atoms, [0.0, 0.5, 1.0], [1.0, 0.3, 2.0], normalize=True)
    return IntensityMeasure.from_parts(atoms, normalize=True)


measures = st.builds(
    random_measure,
    st.lists(
        st.tuples(st.floats(0.0, 1.0), st.floats(0.05, 1.0)),
        min_size=1,
        max_size=4,
        unique_by=lambda a: round(a[0], 6),
    ),
    st.booleans(),
)


class TestWeightedExp:
    def test_dirac_at_zero(self, dirac):
        assert dirac.weighted_exp(0.0, 0) == 1.0

    def test_uniform_closed_form(self, uniform):
        assert abs(uniform.weighted_exp(1.0, 0) - (E - 1)) < 1e-12

    @pytest.mark.parametrize("t", [-3.0, 0.0, 0.7, 12.0, 300.0])
    def test_dirac_moment_one(self, dirac, t):
        assert dirac.weighted_exp(t, 1) == pytest.approx(math.exp(t), rel=1e-14)

    def test_uniform_first_moment_closed_form(self, uniform):
        t = 2.5
        exact = (t * math.exp(t) - math.exp(t) + 1) / t**2
        assert uniform.weighted_exp(t, 1) == pytest.approx(exact, rel=1e-13)

    def test_log_space_above_threshold(self, uniform):
        t = 900.0
        lw = uniform.weighted_exp(t, 0, log=True)
        # int_0^1 e^{a t} da = (e^t - 1)/t
        assert lw == pytest.approx(t - math.log(t), rel=1e-12)
        with pytest.raises(OverflowError):
            uniform.weighted_exp(t, 0)

    @settings(max_examples=60, deadline=None)
    @given(measures, st.floats(-50, 50))
    def test_ordering(self, meas, t):
        w0 = meas.weighted_exp(t, 0)
        w1 = meas.weighted_exp(t, 1)
        assert 0 < w0
        assert w1 <= w0 * (1 + 1e-12)
        assert w0 <= math.exp(max(t, 0.0)) * (1 + 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(measures, st.floats(-20, 20), st.floats(1e-3, 0.5))
    def test_monotone_and_convex(self, meas, t, dt):
        a, b, c = (meas.weighted_exp(s, 0) for s in (t - dt, t, t + dt))
        assert a <= b * (1 + 1e-12) <= c * (1 + 1e-12) + 1e-300
        assert (a - 2 * b + c) / dt**2 >= -1e-9 * max(1.0, b / dt**2)

    def test_quadrature_refinement_order(self):
        # piecewise-linear density; the trapezoid path converges at second order
        exact = IntensityMeasure.from_parts([], [0.0, 1.0], [0.0, 2.0])
        fn = lambda a: np.exp(3.0 * a)
        ref = 2 * (math.exp(3) * (3 - 1) + 1) / 9
        errs = [abs(exact.trapezoid_integral(fn, n) - ref) for n in (9, 17, 33, 65)]
        ratios = [e0 / e1 for e0, e1 in zip(errs, errs[1:])]
        assert all(3.6 < r < 4.4 for r in ratios)


class TestMasses:
    def test_tail_mass_examples(self, dirac, uniform):
        assert dirac.tail_mass(0.1) == 1.0
        assert uniform.tail_mass(0.25) == pytest.approx(0.25, abs=1e-14)
        half = IntensityMeasure.from_parts([(0.5, 0.5), (1.0, 0.5)])
        assert half.tail_mass(0.1) == 0.5

    def test_mass_at_one(self, dirac, uniform):
        assert dirac.mass_at_one() == 1.0
        assert uniform.mass_at_one() == 0.0
        assert IntensityMeasure.from_parts([(0.5, 0.5), (1.0, 0.5)]).mass_at_one() == 0.5

    @settings(max_examples=40, deadline=None)
    @given(measures, st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
    def test_tail_monotone(self, meas, e1, e2):
        lo, hi = sorted((e1, e2))
        assert 0 <= meas.tail_mass(lo) <= meas.tail_mass(hi) + 1e-14
        assert meas.tail_mass(1.0) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(measures)
    def test_total_mass(self, meas):
        assert abs(meas.total_mass() - 1) <= 1e-12


class TestConstruction:
    def test_merges_duplicate_atoms(self):
        m = IntensityMeasure.from_parts([(1.0, 0.25), (0.5, 0.5), (1.0, 0.25)])
        assert m.atom_locations == (0.5, 1.0)
        assert m.atom_weights == (0.5, 0.5)

    @pytest.mark.parametrize(
        "atoms",
        [[(1.2, 1.0)], [(-0.1, 1.0)], [(0.5, -0.5), (1.0, 1.5)], [(1.0, 0.7)]],
    )
    def test_rejects_invalid(self, atoms):
        with pytest.raises(MeasureError):
            IntensityMeasure.from_parts(atoms)

    def test_rejects_negative_density(self):
        with pytest.raises(MeasureError):
            IntensityMeasure.from_parts([], [0.0, 1.0], [-1.0, 3.0])


class TestNormalizeSupport:
    def test_half_dirac(self):
        m, lam = normalize_support(IntensityMeasure.dirac(0.5), 32 * math.pi)
        assert m == IntensityMeasure.dirac()
        assert lam == pytest.approx(8 * math.pi, rel=1e-15)

    def test_identity(self, dirac):
        m, lam = normalize_support(dirac, 3.0)
        assert m == dirac and lam == 3.0

    def test_uniform_pushforward(self):
        m, lam = normalize_support(IntensityMeasure.uniform(0.0, 0.5), 4.0)
        assert lam == pytest.approx(1.0)
        assert m.sup_support() == 1.0
        assert m.total_mass() == pytest.approx(1.0, abs=1e-12)
        assert m.weighted_exp(1.0, 0) == pytest.approx(E - 1, rel=1e-12)

    def test_rejects_mass_at_zero(self):
        with pytest.raises(MeasureError):
            normalize_support(IntensityMeasure.dirac(0.0), 1.0)

    @settings(max_examples=40, deadline=None)
    @given(measures, st.floats(0.1, 50))
    def test_idempotent(self, meas, lam):
        if meas.sup_support() == 0:
            return
        m1, l1 = normalize_support(meas, lam)
        m2, l2 = normalize_support(m1, l1)
        assert m2 == m1 and l2 == l1
        assert m1.sup_support() == pytest.approx(1.0)
