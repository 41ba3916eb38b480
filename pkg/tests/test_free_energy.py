import numpy as np
import pytest

import ldpkit
from ldpkit.extreal import INF, NEG_INF
from ldpkit.free_energy import (
    L_grid,
    WindowSpec,
    estimate_limit,
    lambda_family_table,
    lambda_of,
    window_for_t_range,
)
from ldpkit.measures import FiniteSupportMeasure, ScaledMeasureNet
from ldpkit.tilts import (
    TiltFunction,
    explicit_family,
    qn_family,
    two_slope_family,
)

TOL = 2e-2  # window bracket tolerance for the 1/k nets (spread ~ t_max*log 2)


def oscillating_net(max_index=10_000):
    """Alternating Dirac at 0 / Dirac at 1: no free-energy limit for slope 1."""
    d0 = FiniteSupportMeasure.dirac(0.0)
    d1 = FiniteSupportMeasure.dirac(1.0)
    return ScaledMeasureNet(
        t_of=lambda k: 1.0 / k,
        measure_of=lambda k: d0 if k % 2 == 0 else d1,
        max_index=max_index,
        label="oscillating",
    )


class TestWindowSpec:
    def test_requires_start_before_end(self):
        with pytest.raises(ValueError):
            WindowSpec(10, 10)

    def test_indices_geometric_and_unique(self, coin_net):
        w = WindowSpec(100, 1_000_000, 48)
        ks = w.indices(coin_net)
        assert ks[0] == 100 and ks[-1] == 1_000_000
        assert np.all(np.diff(ks) > 0)
        assert ks.size <= 48

    def test_window_outside_net_range(self, coin_net):
        w = WindowSpec(10, coin_net.max_index + 5)
        with pytest.raises(ValueError, match="outside"):
            w.indices(coin_net)

    def test_window_for_t_range(self, coin_net):
        w = window_for_t_range(coin_net, 1e-2, 1e-6)
        assert w.start_index == 100 and w.end_index == 1_000_000


class TestEstimateLimit:
    def test_plain_bracket(self):
        est = estimate_limit([0.1, 0.01, 0.001], [1.0, 1.5, 1.2], tol=1.0)
        assert (est.liminf_est, est.limsup_est, est.value) == (1.0, 1.5, 1.2)
        assert est.converged and est.spread == 0.5

    def test_not_converged_when_spread_large(self):
        est = estimate_limit([0.1, 0.01], [0.0, 1.0], tol=1e-3)
        assert not est.converged

    def test_divergence_classification(self):
        ts = [1 / k for k in (10, 20, 40, 80, 160, 320)]
        vals = [1e3, 1e4, 1e5, 1e6, 1e12, 1e13]
        est = estimate_limit(ts, vals, tol=1e-6)
        assert est.limsup_est == INF and est.liminf_est == INF and est.converged

    def test_large_but_not_monotone_is_not_divergent(self):
        ts = [0.1, 0.05, 0.02, 0.01, 0.005]
        vals = [1e13, 1e14, 9e13, 1e14, 2e14]
        est = estimate_limit(ts, vals, tol=1e-6)
        assert est.limsup_est != INF and not est.converged

    def test_all_minus_inf(self):
        est = estimate_limit([0.1, 0.01], [NEG_INF, NEG_INF], tol=1e-6)
        assert est.value == NEG_INF and est.converged


class TestLambdaOf:
    def test_coin_slope_one(self, coin_net, main_window):
        est = lambda_of(coin_net, TiltFunction.linear(1.0), main_window, TOL)
        assert est.converged
        assert est.value == pytest.approx(1.0, abs=1e-3)

    def test_probability_net_zero_tilt_exact(self, coin_net, main_window):
        est = lambda_of(coin_net, TiltFunction.linear(0.0), main_window, TOL)
        assert est.value == 0.0 and est.spread == 0.0

    def test_demzei_slope_two_diverges(self, demzei_net, main_window):
        est = lambda_of(
            demzei_net, TiltFunction.linear(2.0), main_window, TOL,
            divergence_threshold=1e3,
        )
        assert est.limsup_est == INF and est.converged

    def test_oscillating_net_not_converged(self):
        net = oscillating_net()
        w = window_for_t_range(net, 1e-2, 1e-4, 32)
        est = lambda_of(net, TiltFunction.linear(1.0), w, tol=1e-3)
        assert not est.converged
        assert est.liminf_est == pytest.approx(0.0, abs=1e-12)
        assert est.limsup_est == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_tilt(self, coin_net, main_window):
        base = TiltFunction.two_slope(0.5, 1.0)
        lifted = TiltFunction.custom(
            "lifted", lambda xs: np.where(xs <= 0, 0.5 * xs, 1.0 * xs) + 0.25
        )
        lo = lambda_of(coin_net, base, main_window, TOL)
        hi = lambda_of(coin_net, lifted, main_window, TOL)
        assert lo.limsup_est <= hi.limsup_est + 1e-12


class TestLGrid:
    def test_coin_matches_abs(self, coin_net, main_window):
        L = L_grid(coin_net, (-3, 3), 61, main_window, TOL)
        assert np.max(np.abs(L.values - np.abs(L.xs))) <= 1e-3
        assert all(L.meta["converged"])

    def test_coin_L_is_convex_sequence(self, coin_net, main_window):
        L = L_grid(coin_net, (-3, 3), 61, main_window, TOL)
        slopes = np.diff(L.values) / np.diff(L.xs)
        assert np.all(np.diff(slopes) >= -1e-9)

    def test_demzei_zero_inside(self, demzei_net, main_window):
        L = L_grid(demzei_net, (-1, 1), 21, main_window, TOL, divergence_threshold=1e3)
        assert np.max(np.abs(L.values)) <= 1e-3

    def test_demzei_wide_grid_flags_divergence(self, demzei_net, main_window):
        L = L_grid(demzei_net, (-2, 2), 39, main_window, TOL, divergence_threshold=1e3)
        outside = np.abs(L.xs) >= 1.1 - 1e-9
        inside = np.abs(L.xs) <= 1.0 + 1e-9
        assert np.all(np.isposinf(L.values[outside]))
        assert np.max(np.abs(L.values[inside])) <= 1e-3

    def test_iid_zero_slope(self, iid_small_net):
        w = WindowSpec(100, 500, 8)
        L = L_grid(iid_small_net, (-1, 1), 5, w, 1e-6)
        assert L.values[2] == pytest.approx(0.0, abs=1e-12)


class TestFamilyTable:
    def test_coin_two_slope_surface(self, coin_net, main_window):
        fam = two_slope_family((-4, 4), (-4, 4), 21)
        estimates = lambda_family_table(coin_net, fam, main_window, TOL)
        worst = max(
            abs(e.value - max(-m.lam, m.nu))
            for m, e in zip(fam.members, estimates)
        )
        assert worst <= 1e-3

    def test_demzei_q_tilts_vanish(self, demzei_net, main_window):
        estimates = lambda_family_table(demzei_net, qn_family(10), main_window, TOL)
        assert all(e.converged for e in estimates)
        assert max(abs(e.value) for e in estimates) <= 1e-3

    def test_zero_tilt_family(self, coin_net, main_window):
        estimates = lambda_family_table(
            coin_net, explicit_family([TiltFunction.linear(0.0)]), main_window, TOL
        )
        assert estimates[0].value == 0.0

    def test_diagonal_matches_L_grid_bitwise(self, coin_net, main_window):
        # same computation through the linear-family and two-slope paths
        L = L_grid(coin_net, (-3, 3), 31, main_window, TOL)
        diag = explicit_family(
            [TiltFunction.two_slope(lam, lam) for lam in L.xs]
        )
        estimates = lambda_family_table(coin_net, diag, main_window, TOL)
        worst = max(abs(e.value - v) for e, v in zip(estimates, L.values))
        assert worst <= 1e-9
