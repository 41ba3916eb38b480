import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ldpkit
from ldpkit.extreal import NEG_INF
from ldpkit.measures import (
    FiniteSupportMeasure,
    MeasureFormatError,
    RegionSet,
    ScaledMeasureNet,
    exp_power_integral,
    load_measure,
    region_power_mass,
    save_measure,
    tail_condition_check,
)
from ldpkit.tilts import TiltFunction, explicit_family

COIN = FiniteSupportMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
H1 = TiltFunction.linear(1.0)
H0 = TiltFunction.linear(0.0)


class TestFiniteSupportMeasure:
    def test_atoms_sorted_and_merged(self):
        m = FiniteSupportMeasure.from_atoms([(1.0, 0.25), (-1.0, 0.25), (1.0 + 1e-13, 0.25)])
        assert np.allclose(m.locations, [-1.0, 1.0])
        assert np.allclose(m.masses, [0.25, 0.5])

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValueError):
            FiniteSupportMeasure.from_atoms([(0.0, 0.0)])

    def test_rejects_super_probability(self):
        with pytest.raises(ValueError, match="total mass"):
            FiniteSupportMeasure.from_atoms([(0.0, 0.7), (1.0, 0.7)])

    def test_sub_probability_allowed(self):
        m = FiniteSupportMeasure.from_atoms([(0.0, 0.5)])
        assert m.total_mass == pytest.approx(0.5)
        assert not m.is_probability()

    def test_log_atoms_below_linear_underflow(self):
        m = FiniteSupportMeasure.from_log_atoms([(-5.0, -1e4), (0.0, 0.0)])
        assert m.log_masses[0] == -1e4
        assert m.masses[0] == 0.0  # linear view underflows, log view is exact

    def test_normalized(self):
        m = FiniteSupportMeasure.from_atoms([(0.0, 0.25), (1.0, 0.25)])
        assert m.normalized().log_total_mass == 0.0


class TestExpPowerIntegral:
    def test_coin_slope_one_small_t(self):
        # hand log-sum-exp: 1 + 0.01*log((1+exp(-200))/2)
        assert exp_power_integral(COIN, H1, 0.01) == pytest.approx(
            0.9930685281944005, abs=1e-12
        )

    def test_zero_tilt_probability_measure_is_exact_zero(self):
        assert exp_power_integral(COIN, H0, 0.37) == 0.0

    def test_dirac_half_mass(self):
        m = FiniteSupportMeasure.from_atoms([(0.0, 0.5)])
        assert exp_power_integral(m, H0, 0.5) == pytest.approx(
            -0.34657359027997264, abs=1e-12
        )

    def test_zero_measure_gives_minus_inf(self):
        m = FiniteSupportMeasure.from_atoms([])
        assert exp_power_integral(m, H1, 0.1) == NEG_INF

    def test_tilt_minus_inf_on_support(self):
        dead = TiltFunction.custom("dead", lambda xs: np.full_like(xs, NEG_INF))
        assert exp_power_integral(COIN, dead, 0.1) == NEG_INF

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            exp_power_integral(COIN, H1, 0.0)

    @given(
        st.lists(
            st.tuples(
                st.floats(-50, 50),
                st.floats(1e-6, 0.2),
            ),
            min_size=1,
            max_size=6,
            unique_by=lambda p: round(p[0], 6),
        ),
        st.floats(0.01, 2.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariance(self, atoms, t):
        m1 = FiniteSupportMeasure.from_atoms(atoms)
        m2 = FiniteSupportMeasure.from_atoms(list(reversed(atoms)))
        v1 = exp_power_integral(m1, H1, t)
        v2 = exp_power_integral(m2, H1, t)
        assert v1 == pytest.approx(v2, abs=1e-12)

    @given(st.floats(-5, 5), st.floats(0.01, 2.0))
    @settings(max_examples=60, deadline=None)
    def test_constant_tilt_gives_c_plus_t_log_mass(self, c, t):
        m = FiniteSupportMeasure.from_atoms([(-2.0, 0.3), (0.5, 0.4), (3.0, 0.2)])
        const = TiltFunction.custom("const", lambda xs, c=c: np.full_like(xs, c))
        expected = c + t * math.log(m.total_mass)
        assert exp_power_integral(m, const, t) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("k", range(1, 7))
    def test_coin_linear_tilt_approaches_abs_slope(self, k):
        t = 10.0 ** (-k)
        for lam in (-2.0, -0.5, 1.0, 3.0):
            v = exp_power_integral(COIN, TiltFunction.linear(lam), t)
            assert abs(v - abs(lam)) <= t * math.log(2.0) + 1e-15

    def test_no_overflow_for_huge_exponents(self):
        # |h(x)/t| up to 1e8: max-shift keeps everything finite
        big = TiltFunction.linear(1e6)
        with np.errstate(over="raise"):
            v = exp_power_integral(COIN, big, 0.01)
        assert np.isfinite(v)


class TestRegionPowerMass:
    def test_coin_closed_interval(self):
        r = RegionSet.closed(0.5, 2.0)
        assert region_power_mass(COIN, r, 0.1) == pytest.approx(
            0.9330329915368074, abs=1e-12
        )

    def test_empty_region(self):
        assert region_power_mass(COIN, RegionSet.empty(), 0.3) == 0.0

    def test_full_line_probability(self):
        r = RegionSet.closed(-math.inf, math.inf)
        assert region_power_mass(COIN, r, 0.123) == pytest.approx(1.0)

    @given(st.floats(0.01, 3.0), st.floats(-2, 0), st.floats(0, 2))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_region(self, t, lo, hi):
        small = RegionSet.closed(lo, hi)
        large = RegionSet.closed(lo - 1.0, hi + 1.0)
        assert region_power_mass(COIN, small, t) <= region_power_mass(COIN, large, t) + 1e-15


class TestRegionSet:
    def test_open_excludes_endpoint(self):
        r = RegionSet.open(-1.0, 1.0)
        assert not r.contains(1.0) and r.contains(0.999)

    def test_rejects_overlapping(self):
        from ldpkit.measures import Interval

        with pytest.raises(ValueError):
            RegionSet((Interval(0, 2), Interval(1, 3)))

    def test_intersect(self):
        a = RegionSet.closed(-1.0, 1.0)
        b = RegionSet.open(0.0, 3.0)
        c = a.intersect(b)
        assert len(c.intervals) == 1
        iv = c.intervals[0]
        assert (iv.lo, iv.hi, iv.lo_open, iv.hi_open) == (0.0, 1.0, True, False)

    def test_complement_rays(self):
        r = RegionSet.complement_of_closed(-1.0, 1.0)
        assert r.contains(5.0) and r.contains(-2.0) and not r.contains(1.0)


class TestExampleNets:
    def test_coin_at_4(self, coin_net):
        m, t = coin_net.at(4)
        assert t == 0.25
        assert m.atoms == [(-1.0, 0.5), (1.0, 0.5)]

    def test_coin_is_probability(self, coin_net):
        assert coin_net.measure(1).total_mass == pytest.approx(1.0)

    def test_coin_schedule_monotone(self, coin_net):
        ts = [coin_net.t(k) for k in range(1, 102)]
        assert all(b < a for a, b in zip(ts, ts[1:]))

    def test_demzei_at_2(self, demzei_net):
        m, t = demzei_net.at(2)
        assert t == 0.5
        p = math.exp(-4.0)
        assert np.allclose(m.locations, [-2.0, 0.0, 2.0])
        assert m.masses[0] == pytest.approx(p, rel=1e-12)
        assert m.masses[1] == pytest.approx(1.0 - 2.0 * p, rel=1e-12)

    def test_demzei_total_mass_one(self, demzei_net):
        for k in (1, 2, 10, 100):
            assert abs(demzei_net.measure(k).log_total_mass) < 1e-12

    def test_demzei_default_schedule_diverges(self):
        # eps_k * log p(eps_k) = -k -> -inf under the default schedule
        for k in (1, 5, 50):
            eps = 1.0 / k
            assert eps * (-1.0 / eps**2) == -k

    def test_demzei_rejects_heavy_schedule(self):
        net = ldpkit.demzei_example_net(log_p_of=lambda eps: math.log(0.6))
        with pytest.raises(ValueError, match="2\\*p"):
            net.measure(3)

    def test_iid_two_fold_convolution(self, iid_small_net):
        m, t = iid_small_net.at(2)
        assert t == 0.5
        assert np.allclose(m.locations, [0.0, 0.5, 1.0])
        assert np.allclose(m.masses, [0.25, 0.5, 0.25])

    def test_iid_n_one_is_base(self, iid_small_net):
        m, _ = iid_small_net.at(1)
        base = ldpkit.bernoulli_half_base()
        assert np.allclose(m.locations, base.locations)
        assert np.allclose(m.masses, base.masses)

    @pytest.mark.parametrize("n", [1, 2, 7, 40])
    def test_iid_support_size(self, iid_small_net, n):
        assert iid_small_net.measure(n).locations.size == n + 1

    def test_iid_rejects_sub_probability_base(self):
        base = FiniteSupportMeasure.from_atoms([(0.0, 0.4), (1.0, 0.4)])
        with pytest.raises(ValueError, match="probability"):
            ldpkit.iid_mean_example_net(base, 10)

    def test_net_index_range_errors(self, coin_net):
        with pytest.raises(IndexError):
            coin_net.at(0)
        with pytest.raises(IndexError):
            coin_net.at(coin_net.max_index + 1)

    def test_net_requires_decreasing_t(self):
        with pytest.raises(ValueError, match="decreasing"):
            ScaledMeasureNet(lambda k: 1.0, lambda k: COIN, max_index=10)


class TestTailCondition:
    def test_coin_above_support_holds(self, coin_net, main_window):
        fam = explicit_family([H1])
        holds, witnesses = tail_condition_check(coin_net, fam, M=2.0, eps=0.1, window=main_window)
        assert holds and witnesses == []

    def test_coin_m_zero_fails(self, coin_net, main_window):
        # limsup (e/2^t) -> e > 1; the window estimate is already above 1
        fam = explicit_family([H1])
        holds, witnesses = tail_condition_check(coin_net, fam, M=0.0, eps=1.0, window=main_window)
        assert not holds
        assert witnesses[0][1] > 2.69

    def test_empty_family_vacuous(self, coin_net, main_window):
        holds, witnesses = tail_condition_check(
            coin_net, explicit_family([]), M=0.0, eps=1e-9, window=main_window
        )
        assert holds


class TestMeasureFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.txt"
        save_measure(COIN, path)
        again = load_measure(path)
        assert np.array_equal(again.locations, COIN.locations)
        assert np.array_equal(again.log_masses, COIN.log_masses)

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# a comment\n\n-1.0,0.5  # trailing\n1.0,0.5\n")
        m = load_measure(path)
        assert m.total_mass == pytest.approx(1.0)

    def test_error_names_line(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("-1.0,0.5\noops\n")
        with pytest.raises(MeasureFormatError, match=":2"):
            load_measure(path)

    def test_decreasing_locations_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("1.0,0.25\n-1.0,0.25\n")
        with pytest.raises(MeasureFormatError, match="increasing"):
            load_measure(path)
