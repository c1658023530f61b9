import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gymlab.approx import (
    DensitySchedule,
    PeriodicStep,
    StepFunction,
    concentration_profile,
    concentration_sequence,
    density_approximate,
    density_report,
    helly_extract,
    lift_step,
    lift_steps,
    oscillation_path,
    scaled_profile,
    semicontinuity_margin,
)
from gymlab.generators import random_gym, random_system
from gymlab.gym import (
    DiscreteGYM,
    DiscreteMeasure,
    VarifoldPart,
    YoungPart,
    decompose,
    lift_function,
    lift_young,
    pair,
    recompose,
    standard_battery,
    validate,
    wstar_gap,
)
from gymlab.homfn import XiNorm
from gymlab.space import Interval, point_cloud
from gymlab.systems import SystemGYM, TimeGrid, from_path, marginal, marginal_norms, variation

from .test_gym import same_atoms


def young_pm(X):
    return lift_young(YoungPart.uniform(X, [1.0, -1.0], [0.5, 0.5]))


def spike(X, x0=0.0, direction=(1.0,), mass=1.0):
    """Zero Young part plus one varifold atom at ``x0``."""
    d = len(direction)
    return recompose(YoungPart.uniform(X, np.zeros((1, d)), [1.0]),
                     VarifoldPart.make(X, d, [X.cell_of(x0)], [direction], [mass]))


class TestStepFunction:
    def test_make_merges_base_edges(self):
        X = Interval(0.0, 1.0, 4)
        u = StepFunction.make(X, [0.1, 0.6, 2.0], lambda x: x)
        assert set(X.edges) <= set(u.edges)
        assert 0.1 in u.edges and 0.6 in u.edges and u.edges[-1] == 1.0
        np.testing.assert_array_equal(u.parents, X.cell_of(0.5 * (u.edges[:-1] + u.edges[1:])))

    def test_rejects_bad_edges(self):
        X = Interval(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            StepFunction(X, np.array([0.0, 0.7, 1.0]), np.zeros(2), np.array([0, 1]))
        with pytest.raises(ValueError):
            StepFunction(X, np.array([0.0, 0.5, 0.9]), np.zeros(2), np.array([0, 1]))
        with pytest.raises(ValueError):
            StepFunction(X, np.array([0.0, 0.5, 1.0]), np.array([0.0, np.nan]), np.array([0, 1]))

    def test_call_and_refine(self):
        X = Interval(0.0, 2.0, 2)
        u = StepFunction.from_cells(X, [3.0, -1.0])
        assert u(0.5)[0] == 3.0 and u(1.5)[0] == -1.0
        r = u.refine([0.0, 0.25, 1.0, 1.5, 2.0])
        np.testing.assert_array_equal(r.values[:, 0], [3.0, 3.0, -1.0, -1.0])

    def test_add_and_norms(self):
        X = Interval(0.0, 1.0, 1)
        a = StepFunction.make(X, [0.5], lambda x: np.where(x < 0.5, 1.0, 0.0))
        b = StepFunction.make(X, [0.25], lambda x: np.where(x < 0.25, 0.0, 2.0))
        s = a + b
        np.testing.assert_array_equal(s.values[:, 0], [1.0, 3.0, 2.0])
        assert s.l1() == pytest.approx(0.25 + 0.75 + 1.0, abs=1e-15)
        assert s.norm_integral() == pytest.approx(0.25 * math.sqrt(2) + 0.25 * math.sqrt(10) + 0.5 * math.sqrt(5), abs=1e-15)

    def test_add_rejects_other_space(self):
        with pytest.raises(ValueError):
            StepFunction.zero(Interval(0, 1, 2)) + StepFunction.zero(Interval(0, 1, 3))


class TestLift:
    def test_cellwise_matches_lift_function(self):
        X = Interval(-1.0, 1.0, 5)
        vals = np.linspace(-2, 2, 5)
        assert same_atoms(lift_step(StepFunction.from_cells(X, vals)), lift_function(X, vals[:, None]), 1e-14)

    def test_joint_lift_marginals(self):
        X = Interval(0.0, 1.0, 3)
        a = StepFunction.make(X, [0.1, 0.5], lambda x: np.sin(7 * x))
        b = StepFunction.make(X, [0.8], lambda x: x**2)
        joint = lift_steps([a, b])
        sysm = SystemGYM(TimeGrid([0.0, 1.0], 1.0), 1, joint)
        assert same_atoms(marginal(sysm, (0.0,)), lift_step(a), 1e-12)
        assert same_atoms(marginal(sysm, (1.0,)), lift_step(b), 1e-12)

    def test_xinorm_is_l1(self):
        X = Interval(0.0, 1.0, 3)
        u = StepFunction.make(X, [0.2, 0.45], lambda x: np.cos(5 * x))
        assert pair(XiNorm(1), lift_step(u)) == pytest.approx(u.l1(), abs=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            lift_steps([])

    @settings(max_examples=40)
    @given(st.integers(1, 6), st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.integers(0, 10_000))
    def test_random_step_lift_valid(self, n, vals, seed):
        rng = np.random.default_rng(seed)
        X = Interval(0.0, 1.0, n)
        bp = np.sort(rng.uniform(0, 1, len(vals) - 1))
        u = StepFunction.make(X, bp, lambda x: np.asarray(vals)[np.searchsorted(bp, x)])
        mu = lift_step(u)
        assert validate(mu).passed
        assert pair(XiNorm(1), mu) == pytest.approx(u.l1(), abs=1e-12)


class TestDensity:
    def test_step_lift_reproduced(self):
        # a lift of a cellwise function is recovered exactly at every level
        X = Interval(0.0, 1.0, 4)
        vals = np.array([1.0, -2.0, 0.5, 3.0])
        mu = lift_function(X, vals[:, None])
        sched = DensitySchedule.dyadic(range(2, 6))
        for n in range(len(sched)):
            for mode in ("singular", "diffuse"):
                u = density_approximate(mu, n, sched, mode)
                np.testing.assert_array_equal(u.values[:, 0], vals[u.parents])
                assert same_atoms(lift_step(u), mu, 1e-12)

    def test_young_pm(self):
        X = Interval(0.0, 1.0, 4)
        mu = young_pm(X)
        sched = DensitySchedule.dyadic(range(2, 8))
        bat = standard_battery(X, 1)
        for n, sigma in enumerate(sched.sigmas):
            u = density_approximate(mu, n, sched)
            assert set(u.values[:, 0]) == {1.0, -1.0}
            # the +1 level set fills half of every cell
            plus = np.bincount(u.parents, weights=u.lengths * (u.values[:, 0] > 0), minlength=4)
            np.testing.assert_allclose(plus, X.weights / 2, rtol=0, atol=1e-15)
            # battery members depend on x only through the cell, so the exact fractions leave rounding only
            assert wstar_gap(lift_step(u), mu, bat) <= 1e-13
            # each block of length <= sigma carries both values
            assert u.lengths.max() <= sigma / 2 * (1 + 1e-12)

    @pytest.mark.parametrize("mode", ["singular", "diffuse"])
    def test_spike(self, mode):
        X = Interval(-1.0, 1.0, 8)
        mu = spike(X)
        sched = DensitySchedule.dyadic(range(3, 10))
        bat = standard_battery(X, 1)
        for n, sigma in enumerate(sched.sigmas):
            u = density_approximate(mu, n, sched, mode)
            rep = density_report(mu, u, sigma)
            assert rep.bound_holds and rep.concentration_holds
            assert rep.carrier_length == pytest.approx(sigma, rel=1e-12)
            assert rep.min_concentration >= 1 / sigma * (1 - 1e-12)
            # 1-Lipschitz members: replacing the atom by a carrier of length l moves each pairing by <= 2 l
            assert wstar_gap(lift_step(u), mu, bat) <= 4 * sigma
            # the carrier costs sqrt(l^2 + 1) - 1 and removes l from the zero Young part of density 1
            assert -sigma * (1 + 1e-12) <= rep.norm_integral - rep.target_norm <= 1e-12

    @settings(max_examples=25)
    @given(st.integers(0, 10_000), st.sampled_from(["singular", "diffuse"]))
    def test_random_bounds(self, seed, mode):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, Interval(0.0, 1.0, int(rng.integers(1, 6))), int(rng.integers(1, 3)), 24)
        sched = DensitySchedule.dyadic(range(2, 8))
        young, var = decompose(mu)
        ycell = np.bincount(young.cells, weights=young.mass * np.sqrt(1 + np.sum(young.values**2, axis=1)),
                            minlength=mu.space.ncells) / mu.space.weights
        diffs = []
        for n, sigma in enumerate(sched.sigmas):
            u = density_approximate(mu, n, sched, mode)
            rep = density_report(mu, u, sigma)
            assert rep.bound_holds and rep.concentration_holds
            assert validate(lift_step(u)).passed
            # each carrier l_j <= sigma m_j costs at most l_j in its own norm and takes l_j
            # out of the Young remainder of density ycell
            allowed = sigma * math.fsum(var.mass * (1 + ycell[var.cells]))
            diffs.append(abs(rep.norm_integral - rep.target_norm))
            assert diffs[-1] <= allowed * (1 + 1e-9) + 1e-12
        assert diffs[-1] <= diffs[0] + 1e-12

    def test_rejects_point_cloud(self):
        P = point_cloud(["a", "b"], [1.0, 1.0], [[0, 1], [1, 0]])
        mu = recompose(YoungPart.uniform(P, [[0.0]], [1.0]), VarifoldPart.make(P, 1, [0], [[1.0]], [1.0]))
        with pytest.raises(ValueError, match="subdividable"):
            density_approximate(mu, 0, DensitySchedule.dyadic([2]))

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            DensitySchedule((0.5, 0.5))
        with pytest.raises(ValueError):
            DensitySchedule(())
        with pytest.raises(ValueError):
            density_approximate(young_pm(Interval(0.0, 0.5, 2)), 0, DensitySchedule.dyadic([1]))

    def test_rejects_bad_mode(self):
        X = Interval(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            density_approximate(young_pm(X), 0, DensitySchedule.dyadic([2]), "smeared")


class TestOscillation:
    def test_square_wave(self):
        w = PeriodicStep.square_wave()
        np.testing.assert_array_equal(w([0.0, 0.5, 1.0, 1.5, 2.0, -0.5]), [1, 1, -1, -1, 1, -1])
        assert w.mean_abs() == 1.0
        np.testing.assert_array_equal(w.breakpoints(-0.5, 3.5), [0.0, 1.0, 2.0, 3.0])

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            PeriodicStep(1.0, (0.5,), (1.0,))
        with pytest.raises(ValueError):
            PeriodicStep(1.0, (0.0, 1.0), (1.0, 2.0))

    def test_scaled_profile_exact(self):
        X = Interval(-1.0, 1.0, 4)
        u = scaled_profile(PeriodicStep.square_wave(), X, 1 / 8)
        assert set(u.values[:, 0]) == {1.0, -1.0}
        assert same_atoms(lift_step(u), young_pm(X), 1e-12)

    def test_path_values(self):
        X = Interval(-1.0, 1.0, 16)
        orc = oscillation_path(PeriodicStep.square_wave(), lambda t: t - 1, X, 2**12)
        times = [0.0, 0.5, 1.0, 1.25, 2.0]
        joint = orc.joint(times)
        sysm = SystemGYM(TimeGrid(times, 2.0), 1, joint)
        for t in times:
            # |u(t)| = |t - 1| everywhere on X
            assert pair(XiNorm(1), marginal(sysm, (t,))) == pytest.approx(abs(t - 1) * X.total_mass, abs=1e-13)
        assert np.all(orc.path(1.0).values == 0)

    def test_guard(self):
        X = Interval(-1.0, 1.0, 16)
        orc = oscillation_path(PeriodicStep.square_wave(), lambda t: t - 1, X, 256)
        orc.path(1.0 + 2.0**-6)
        with pytest.raises(ValueError, match="guard"):
            orc.path(1.0 + 2.0**-8)
        with pytest.raises(ValueError):
            oscillation_path(PeriodicStep.square_wave(), lambda t: t, X, 0)

    def test_quotient_at_zero_of_scale(self):
        # (u(1 + e) - u(1)) / e = w(x / e): its lift matches the +-1 Young measure on every cell
        X = Interval(-1.0, 1.0, 8)
        orc = oscillation_path(PeriodicStep.square_wave(), lambda t: t - 1, X, 2**14)
        bat = standard_battery(X, 1)
        for e in (2.0**-3, 2.0**-5, 2.0**-7):
            q = (orc.path(1 + e) + orc.path(1.0).scaled(-1.0)).scaled(1 / e)
            assert wstar_gap(lift_step(q), young_pm(X), bat) <= 1e-12


class TestConcentration:
    def test_profile(self):
        X = Interval(-1.0, 1.0, 8)
        u = concentration_profile([0.6, 0.8], 2.0, (0.0, 0.1), X)
        assert u.dim == 2
        assert u.l1() == pytest.approx(2.0, abs=1e-14)
        np.testing.assert_allclose(u(0.05), [12.0, 16.0])
        assert np.all(u(0.5) == 0)

    def test_rejections(self):
        X = Interval(-1.0, 1.0, 8)
        with pytest.raises(ValueError, match="unit"):
            concentration_profile([2.0], 1.0, (0.0, 0.1), X)
        with pytest.raises(ValueError):
            concentration_profile([1.0], 1.0, (0.5, 0.5), X)
        with pytest.raises(ValueError):
            concentration_profile([1.0], 1.0, (0.5, 1.5), X)

    def test_sequence_converges_to_spike(self):
        X = Interval(-1.0, 1.0, 8)
        target = spike(X)
        bat = standard_battery(X, 1)
        for k in (4, 16, 64, 256):
            mu = concentration_sequence([1.0], 1.0, lambda k: (0.0, 1.0 / k), k, X)
            assert pair(XiNorm(1), mu) == pytest.approx(1.0, abs=1e-13)
            assert wstar_gap(mu, target, bat) <= 4.0 / k

    def test_superposition_on_disjoint_carriers(self):
        X = Interval(-1.0, 1.0, 8)
        bat = standard_battery(X, 1)
        left = StepFunction.make(X, [0.0], lambda x: (x < 0).astype(float))
        young = YoungPart.make(
            X, 1, np.r_[np.repeat(np.arange(4), 2), np.arange(4, 8)],
            np.r_[np.tile([1.0, -1.0], 4), np.zeros(4)], np.r_[np.full(8, 0.125), np.full(4, 0.25)],
        )
        target = recompose(young, VarifoldPart.make(X, 1, [X.cell_of(0.0)], [[1.0]], [1.0]))
        for k in (8, 32, 128):
            osc = scaled_profile(PeriodicStep.square_wave(), X, 1.0 / k)
            osc = StepFunction(X, osc.edges, osc.values * left.refine(osc.edges).values, osc.parents)
            u = osc + concentration_profile([1.0], 1.0, (0.0, 1.0 / k), X)
            mu = lift_step(u)
            assert pair(XiNorm(1), mu) == pytest.approx(2.0, abs=1e-12)
            # the oscillating half is exact, the carrier of length 1/k costs at most 4/k
            assert wstar_gap(mu, target, bat) <= 4.0 / k


def osc_system(X, grid, k):
    base = scaled_profile(PeriodicStep.square_wave(), X, 1.0 / k)
    return SystemGYM(TimeGrid(grid, 1.0), 1, lift_steps([base.scaled(t) for t in grid]))


def joint_young(X, grid):
    """Cellwise 1/2 (delta_(t)_t + delta_(-t)_t): the limit of correlated oscillations."""
    n, g = X.ncells, np.asarray(grid)
    cells = np.repeat(np.arange(n), 2)
    xi = np.tile(np.vstack([g, -g]), (n, 1))
    mu = DiscreteGYM.from_weighted(X, len(g), cells, xi, np.ones(2 * n), np.repeat(X.weights / 2, 2))
    return SystemGYM(TimeGrid(g, 1.0), 1, mu)


def bounds_of(seq):
    return (max(variation(s, check=False).value for s in seq), max(marginal_norms(s)[0] for s in seq))


class TestHelly:
    def test_repeated_element(self):
        rng = np.random.default_rng(5)
        A = random_system(rng, Interval(0.0, 1.0, 3), 1, 3)
        bat = standard_battery(A.space, 1)
        rep = helly_extract([A] * 5, bat, tuple(A.times), 1e-9, bounds_of([A]))
        assert rep.indices == (0, 1, 2, 3, 4)
        assert rep.converged and rep.bounds_hold
        assert float(np.max(rep.residuals)) == 0.0
        assert same_atoms(rep.limit.master, A.master, 1e-12)
        assert rep.limit_variation == pytest.approx(variation(A, check=False).value, abs=1e-12)

    def test_alternating(self):
        rng = np.random.default_rng(9)
        X = Interval(0.0, 1.0, 3)
        A = random_system(rng, X, 1, 3)
        B = SystemGYM(A.grid, 1, random_system(rng, X, 1, 3).master)
        seq = [A, B] * 3
        rep = helly_extract(seq, standard_battery(X, 1), tuple(A.times), 1e-9, bounds_of(seq))
        assert len({i % 2 for i in rep.indices}) == 1 and len(rep.indices) == 3
        assert float(np.max(rep.residuals)) == 0.0

    def test_factorial_oscillation(self):
        X = Interval(-1.0, 1.0, 4)
        grid = np.array([0.0, 0.5, 1.0])
        seq = [osc_system(X, grid, math.factorial(k)) for k in range(2, 6)]
        bat = standard_battery(X, 1)
        rep = helly_extract(seq, bat, tuple(grid), 1e-6, (2.5, 2.5))
        assert rep.converged and rep.limit is not None and rep.bounds_hold
        lim = joint_young(X, grid)
        for t in grid:
            assert wstar_gap(marginal(rep.limit, (t,)), marginal(lim, (t,)), bat) <= 1e-12
        csv = rep.to_csv().splitlines()
        assert csv[0].startswith("functional")
        assert len(csv) == len(rep.functionals) + 1

    def test_bounds_violation(self):
        X = Interval(-1.0, 1.0, 4)
        seq = [osc_system(X, [0.0, 1.0], 4)] * 2
        with pytest.raises(ValueError):
            helly_extract(seq, standard_battery(X, 1), (0.0, 1.0), 1e-6, (0.5, 0.5))

    def test_empty_inputs(self):
        X = Interval(-1.0, 1.0, 4)
        seq = [osc_system(X, [0.0, 1.0], 4)]
        with pytest.raises(ValueError):
            helly_extract(seq, standard_battery(X, 1), (), 1e-6, (5, 5))
        with pytest.raises(ValueError):
            helly_extract([], standard_battery(X, 1), (0.0,), 1e-6, (5, 5))

    def test_mismatched_grids(self):
        X = Interval(-1.0, 1.0, 4)
        seq = [osc_system(X, [0.0, 1.0], 4), osc_system(X, [0.0, 0.5, 1.0], 4)]
        with pytest.raises(ValueError):
            helly_extract(seq, standard_battery(X, 1), (0.0, 1.0), 1e-6, (5, 5))


class TestSemicontinuity:
    def test_constant_sequence(self):
        rng = np.random.default_rng(2)
        A = random_system(rng, Interval(0.0, 1.0, 3), 1, 4)
        bat = standard_battery(A.space, 1)
        assert abs(semicontinuity_margin([A] * 3, A, None, tuple(A.times), bat)) <= 1e-12

    def test_correlated_oscillation(self):
        X = Interval(-1.0, 1.0, 4)
        grid = np.array([0.0, 0.5, 1.0])
        seq = [osc_system(X, grid, k) for k in (4, 8, 16)]
        m = semicontinuity_margin(seq, joint_young(X, grid), None, (0.0, 0.5, 1.0), standard_battery(X, 1))
        # every element and the limit move |xi| by exactly 1 per unit time over lambda(X) = 2
        assert abs(m) <= 1e-12

    def test_wiggle(self):
        X = Interval(0.0, 1.0, 2)
        grid = [0.0, 0.25, 0.5]
        v = DiscreteMeasure.make(X, 1, np.ones(2))
        limit = from_path([(t, v.scaled(t)) for t in grid])
        wig = from_path([(t, v.scaled(t + (1.0 if t == 0.25 else 0.0))) for t in grid])
        m = semicontinuity_margin([wig] * 2, limit, None, (0.0, 0.5), standard_battery(X, 1))
        # 0 -> 1.25 -> 0.5 against 0 -> 0.25 -> 0.5 on a space of mass 1
        assert m == pytest.approx((1.25 + 0.75) - 0.5, abs=1e-12)

    def test_mismatch_raises(self):
        X = Interval(-1.0, 1.0, 4)
        seq = [osc_system(X, [0.0, 1.0], 4)]
        other = osc_system(X, [0.0, 1.0], 4)
        shifted = SystemGYM(other.grid, 1, lift_steps([StepFunction.zero(X), StepFunction.from_cells(X, np.full(4, 3.0))]))
        with pytest.raises(ValueError, match="converge"):
            semicontinuity_margin(seq, shifted, None, (1.0,), standard_battery(X, 1))
        with pytest.raises(ValueError):
            semicontinuity_margin([], shifted, None, (1.0,), standard_battery(X, 1))
