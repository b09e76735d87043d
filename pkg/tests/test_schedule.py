import numpy as np
import pytest

from gnflow.schedule import CustomSchedule, PowerSchedule, default_schedule, frozen


class TestEps:
    def test_reference_start_value(self):
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        assert s.eps(0.0) == pytest.approx(0.1)

    def test_decade_decay(self):
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        assert s.eps(9.0) == pytest.approx(0.01)

    def test_square_root_family(self):
        s = PowerSchedule(c0=1.0, c1=4.0, a=0.5)
        assert s.eps(0.0) == pytest.approx(0.5)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            PowerSchedule(c0=0.1, c1=1.0, a=1.0).eps(-1.0)


class TestEpsDot:
    def test_start_slope(self):
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        assert s.eps_dot(0.0) == pytest.approx(-0.1)

    def test_quarter_slope(self):
        s = PowerSchedule(c0=1.0, c1=1.0, a=1.0)
        assert s.eps_dot(1.0) == pytest.approx(-0.25)

    def test_finite_difference_oracle(self):
        # central differences with a step scaled to c1 + t
        for c0, c1, a in ((0.1, 1.0, 1.0), (1.0, 4.0, 0.5), (2.0, 3.0, 0.8)):
            s = PowerSchedule(c0=c0, c1=c1, a=a)
            for t in np.linspace(0.0, 100.0, 41):
                h = 1e-5 * (c1 + t)
                fd = (s.eps(t + h) - s.eps(max(t - h, 0.0) if t >= h else 0.0)) / (2 * h) \
                    if t >= h else (s.eps(t + h) - s.eps(t)) / h
                if t >= h:
                    assert s.eps_dot(t) == pytest.approx(fd, rel=1e-8)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            PowerSchedule(c0=0.1, c1=1.0, a=1.0).eps_dot(-0.5)


class TestBConstant:
    def test_hyperbolic_family_value(self):
        # |eps'|/eps^2 is constant in t for a = 1; confirm sup by grid
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        b = s.b_constant()
        assert b == pytest.approx(10.0)
        ts = np.linspace(0.0, 1e4, 1000)
        ratios = np.array([abs(s.eps_dot(t)) / s.eps(t) ** 2 for t in ts])
        assert np.max(ratios) <= b + 1e-12

    def test_unit_family(self):
        assert PowerSchedule(c0=1.0, c1=1.0, a=1.0).b_constant() == pytest.approx(1.0)

    def test_sqrt_family_grid_sup(self):
        s = PowerSchedule(c0=1.0, c1=4.0, a=0.5)
        b = s.b_constant()
        assert b == pytest.approx(0.25)
        ts = np.linspace(0.0, 1e4, 2000)
        sup = max(abs(s.eps_dot(t)) / s.eps(t) ** 2 for t in ts)
        assert sup <= b + 1e-14


class TestScheduleInvariants:
    def test_monotonicity_grid(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            s = PowerSchedule(c0=float(rng.uniform(0.01, 5)),
                              c1=float(rng.uniform(0.1, 10)),
                              a=float(rng.uniform(0.05, 1.0)))
            vals = [s.eps(t) for t in np.linspace(0.0, 100.0, 1000)]
            assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_decay_certificate_on_grid(self):
        rng = np.random.default_rng(1)
        ts = np.linspace(0.0, 1e4, 1000)
        for _ in range(50):
            s = PowerSchedule(c0=float(rng.uniform(0.01, 5)),
                              c1=float(rng.uniform(0.1, 10)),
                              a=float(rng.uniform(1e-3, 1.0)))
            b = s.b_constant()
            for t in ts[::50]:
                assert abs(s.eps_dot(t)) <= b * s.eps(t) ** 2 + 1e-14

    def test_ratio_exact_for_a_equal_one(self):
        s = PowerSchedule(c0=0.3, c1=2.0, a=1.0)
        b = s.b_constant()
        for t in np.linspace(0.0, 50.0, 100):
            assert abs(s.eps_dot(t)) / s.eps(t) ** 2 == pytest.approx(b, abs=1e-12)


class TestValidation:
    @pytest.mark.parametrize("c0,c1,a", [(0.0, 1.0, 1.0), (1.0, 0.0, 1.0),
                                         (1.0, 1.0, 0.0), (1.0, 1.0, 1.5),
                                         (-1.0, 1.0, 0.5)])
    def test_bad_parameters(self, c0, c1, a):
        with pytest.raises(ValueError):
            PowerSchedule(c0=c0, c1=c1, a=a)

    def test_default_schedule(self):
        s = default_schedule()
        assert s.eps(0.0) == pytest.approx(0.1)
        assert s.eps(1.0) == pytest.approx(0.05)


class TestCustomSchedule:
    def test_frozen_constant(self):
        s = frozen(0.25)
        assert s.eps(0.0) == 0.25
        assert s.eps(100.0) == 0.25
        assert s.eps_dot(3.0) == 0.0
        assert s.b_constant() == 0.0

    def test_exponential_claim_rejected(self):
        # eps = e^{-t/10} has |eps'|/eps^2 = e^{t/10}/10, unbounded, so a
        # constant b claim must fail grid validation
        with pytest.raises(ValueError, match="decay constant"):
            CustomSchedule(lambda t: np.exp(-t / 10), lambda t: -np.exp(-t / 10) / 10,
                           b=1.0, grid_max=100.0)

    def test_increasing_rejected(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            CustomSchedule(lambda t: 1.0 + t, lambda t: 1.0, b=10.0, grid_max=10.0)

    def test_matching_power_law(self):
        ref = PowerSchedule(c0=0.5, c1=2.0, a=1.0)
        s = CustomSchedule(ref.eps, ref.eps_dot, b=ref.b_constant())
        assert s.eps(3.0) == ref.eps(3.0)
