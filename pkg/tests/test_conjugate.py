import numpy as np
import pytest

import ldpkit
from ldpkit.conjugate import (
    FamilyEvaluation,
    abstract_lf,
    evaluate_family,
    linear_restriction_conjugate,
    stable_abstract_lf,
)
from ldpkit.extreal import INF, NEG_INF
from ldpkit.free_energy import LimitEstimate
from ldpkit.tilts import (
    TiltFunction,
    explicit_family,
    family_union,
    linear_family,
    qn_family,
    two_slope_family,
)

TOL = 2e-2


def fake_estimate(value):
    lo = min(value, value)
    return LimitEstimate(value, value, value, True, 0.0, ((1.0, value),))


class TestFamilyEvaluation:
    def test_all_exist(self, coin_net, main_window):
        fe = evaluate_family(coin_net, linear_family(-2, 2, 9), main_window, TOL)
        assert fe.all_exist

    def test_mismatched_lengths_rejected(self):
        fam = linear_family(-1, 1, 3)
        with pytest.raises(ValueError):
            FamilyEvaluation(fam, (fake_estimate(0.0),))

    def test_non_converged_blocks_abstract_lf(self):
        fam = explicit_family([TiltFunction.linear(1.0)])
        bad = LimitEstimate(0.0, 1.0, 1.0, False, 1.0, ((1.0, 0.0), (0.5, 1.0)))
        fe = FamilyEvaluation(fam, (bad,))
        with pytest.raises(ValueError, match="converged"):
            abstract_lf(fe, np.linspace(-1, 1, 5))


class TestAbstractLf:
    def test_zero_tilt_family_gives_zero(self):
        fam = explicit_family([TiltFunction.linear(0.0)])
        fe = FamilyEvaluation(fam, (fake_estimate(0.0),))
        out = abstract_lf(fe, np.linspace(-2, 2, 9))
        assert np.array_equal(out.values, np.zeros(9))

    def test_plus_inf_members_drop_out(self):
        fam = explicit_family([TiltFunction.linear(0.0), TiltFunction.linear(5.0)])
        fe = FamilyEvaluation(fam, (fake_estimate(0.0), fake_estimate(INF)))
        out = abstract_lf(fe, np.linspace(-1, 1, 5))
        assert np.array_equal(out.values, np.zeros(5))

    def test_all_members_infinite_gives_minus_inf(self):
        fam = explicit_family([TiltFunction.linear(1.0)])
        fe = FamilyEvaluation(fam, (fake_estimate(INF),))
        out = abstract_lf(fe, np.linspace(-1, 1, 5))
        assert np.all(np.isneginf(out.values))

    def test_minus_inf_member_forces_plus_inf(self):
        fam = explicit_family([TiltFunction.linear(1.0)])
        fe = FamilyEvaluation(fam, (fake_estimate(NEG_INF),))
        out = abstract_lf(fe, np.linspace(-1, 1, 5))
        assert np.all(np.isposinf(out.values))

    def test_family_monotonicity(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 41)
        small = two_slope_family((-2, 2), (-2, 2), 11)
        big = two_slope_family((-4, 4), (-4, 4), 21)  # superset of slopes
        a = abstract_lf(evaluate_family(coin_net, small, main_window, TOL), xs)
        b = abstract_lf(
            evaluate_family(coin_net, family_union(small, big), main_window, TOL), xs
        )
        assert np.all(a.values <= b.values + 1e-12)

    def test_coin_two_slope_surface(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 81)
        fe = evaluate_family(
            coin_net, two_slope_family((-4, 4), (-4, 4), 41), main_window, TOL
        )
        out = abstract_lf(fe, xs)
        at = lambda x: out.values[np.argmin(np.abs(xs - x))]
        assert abs(at(1.0)) <= 1e-3 and abs(at(-1.0)) <= 1e-3
        # raw truncated sup grows off |x| = 1 but stays finite
        assert 0.1 <= at(0.5) <= 4.1

    def test_no_dips_beyond_family_modulus(self, coin_net, main_window):
        # sup of finitely many continuous tilts is continuous: a grid point
        # may sit below its neighbors by at most (max slope) * step
        xs = np.linspace(-2, 2, 81)
        fe = evaluate_family(
            coin_net, two_slope_family((-4, 4), (-4, 4), 21), main_window, TOL
        )
        v = abstract_lf(fe, xs).values
        step = xs[1] - xs[0]
        modulus = 4.0 * step
        assert np.all(np.minimum(v[:-2], v[2:]) <= v[1:-1] + modulus + 1e-9)


class TestLinearRestriction:
    def test_coin_zero_on_unit_interval(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 81)
        fe = evaluate_family(coin_net, linear_family(-3, 3, 61), main_window, TOL)
        out = linear_restriction_conjugate(fe, xs)
        inside = np.abs(xs) <= 1.0
        assert np.max(np.abs(out.values[inside])) <= 1e-3

    def test_demzei_gives_abs(self, demzei_net, main_window):
        xs = np.linspace(-3, 3, 121)
        fe = evaluate_family(
            demzei_net, linear_family(-1, 1, 21), main_window, TOL,
            divergence_threshold=1e3,
        )
        out = linear_restriction_conjugate(fe, xs)
        # conjugate of 0 on the sampled open (-1,1): |x| scaled by the grid edge
        edge = max(m.lam for m in fe.family.members)
        assert np.max(np.abs(out.values - edge * np.abs(xs))) <= 1e-3

    def test_single_member_gives_line(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 11)
        lam0 = 1.5
        fe = evaluate_family(
            coin_net, explicit_family([TiltFunction.linear(lam0)]), main_window, TOL
        )
        # a one-member linear family is handled by abstract_lf directly
        out = abstract_lf(fe, xs)
        expected = lam0 * xs - fe.lambdas[0].value
        assert np.allclose(out.values, expected)

    def test_requires_linear_family(self, coin_net, main_window):
        fe = evaluate_family(
            coin_net, two_slope_family((-1, 1), (-1, 1), 3), main_window, TOL
        )
        with pytest.raises(ValueError, match="linear"):
            linear_restriction_conjugate(fe, np.linspace(-1, 1, 5))

    def test_two_paths_agree(self, coin_net, demzei_net, main_window):
        # abstract sup over a linear family == conjugate of the sampled L
        xs = np.linspace(-2.5, 2.5, 101)
        for net, G, res, div in (
            (coin_net, (-3, 3), 61, 1e12),
            (demzei_net, (-1, 1), 21, 1e3),
        ):
            fe = evaluate_family(
                net, linear_family(*G, res), main_window, TOL, divergence_threshold=div
            )
            direct = abstract_lf(fe, xs)
            via_hull = linear_restriction_conjugate(fe, xs)
            assert np.max(np.abs(direct.values - via_hull.values)) <= 1e-6


class TestStability:
    def test_coin_flags_unstable_points(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 81)
        fam = two_slope_family((-4, 4), (-4, 4), 41)
        sc = stable_abstract_lf(coin_net, fam, xs, main_window, TOL)
        finite = np.isfinite(sc.values)
        assert np.allclose(xs[finite], [-1.0, 1.0])
        assert abs(sc.values[finite]).max() <= 1e-3
        # growth under doubling recorded for a flagged point
        i = np.argmin(np.abs(xs - 0.5))
        assert sc.doubled[i] > sc.raw[i] + 1e-3

    def test_demzei_pins_zero(self, demzei_net, main_window):
        xs = np.linspace(-3, 3, 121)
        fam = family_union(qn_family(10), linear_family(-1, 1, 21))
        sc = stable_abstract_lf(
            demzei_net, fam, xs, main_window, TOL, divergence_threshold=1e3
        )
        finite = np.isfinite(sc.values)
        assert np.array_equal(xs[finite], np.array([0.0]))
        assert abs(sc.values[finite][0]) <= 1e-3

    def test_stable_values_keep_requested_family(self, coin_net, main_window):
        xs = np.linspace(-2, 2, 21)
        fam = two_slope_family((-4, 4), (-4, 4), 21)
        sc = stable_abstract_lf(coin_net, fam, xs, main_window, TOL)
        unflagged = ~sc.flagged
        assert np.array_equal(sc.values[unflagged], sc.raw[unflagged])
