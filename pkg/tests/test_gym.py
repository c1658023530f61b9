import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gymlab.approx import PeriodicStep, lift_step, scaled_profile
from gymlab.generators import random_convex, random_gym, random_measure
from gymlab.gym import (
    Battery,
    DiscreteGYM,
    DiscreteMeasure,
    YoungPart,
    barycentre,
    contact_support_check,
    decompose,
    disintegrate,
    image,
    jensen_gap,
    lift_function,
    lift_measure,
    lift_young,
    linear_image,
    norm_star,
    pair,
    pair_battery,
    project_X,
    recompose,
    standard_battery,
    validate,
    wstar_gap,
)
from gymlab.homfn import (
    INF,
    ComposeHomMap,
    EtaPart,
    EuclidNorm,
    HomMap,
    Linear,
    Max,
    Min,
    PositivePart,
    PrMoment,
    XiNorm,
    psi0,
)
from gymlab.space import Interval, point_cloud

seeds = st.integers(0, 2**32 - 1)


def pm_one(X):
    """Half +1, half -1 in every cell."""
    return lift_young(YoungPart.uniform(X, [1.0, -1.0], [0.5, 0.5]))


def square_wave(X, n=1.0):
    return lift_step(scaled_profile(PeriodicStep.square_wave(), X, 1.0 / n))


def same_atoms(a, b, tol=1e-12):
    a, b = a.sorted(), b.sorted()
    return (
        a.n_atoms == b.n_atoms
        and np.array_equal(a.cells, b.cells)
        and np.allclose(a.xi, b.xi, atol=tol, rtol=0)
        and np.allclose(a.eta, b.eta, atol=tol, rtol=0)
        and np.allclose(a.w, b.w, atol=tol, rtol=0)
    )


class TestLifts:
    def test_zero_measure(self):
        X = Interval(0.0, 1.0, 4)
        mu = lift_measure(DiscreteMeasure.zero(X, 1))
        assert mu.n_atoms == 4
        np.testing.assert_array_equal(mu.xi, 0.0)
        np.testing.assert_array_equal(mu.eta, 1.0)
        np.testing.assert_allclose(mu.w, 0.25)
        assert norm_star(mu) == 1.0

    @pytest.mark.parametrize("n", [1, 3, 7, 100, 1000])
    def test_constant_density(self, n):
        X = Interval(0.0, 1.0, n)
        assert norm_star(lift_function(X, np.full(n, 3.0))) == pytest.approx(math.sqrt(10), abs=1e-12)

    def test_singular_mass(self):
        X = Interval(0.0, 1.0, 8)
        p = DiscreteMeasure.make(X, 2, None, [(X.cell_of(0.5), np.array([2.0, 0.0]))])
        mu = lift_measure(p)
        assert norm_star(mu) == pytest.approx(3.0, abs=1e-12)
        conc = mu.eta == 0
        assert conc.sum() == 1 and mu.w[conc][0] == pytest.approx(2.0, abs=1e-15)

    def test_young_dirac_at_zero_is_zero_lift(self):
        X = Interval(0.0, 1.0, 5)
        nu = YoungPart.make(X, 2, np.arange(5), np.zeros((5, 2)), X.weights)
        assert same_atoms(lift_young(nu), lift_measure(DiscreteMeasure.zero(X, 2)))

    def test_young_mass_mismatch_rejected(self):
        X = Interval(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            lift_young(YoungPart.make(X, 1, [0, 1], [[1.0], [1.0]], [0.5, 0.4]))

    @given(seeds)
    def test_mass_formula(self, seed):
        rng = np.random.default_rng(seed)
        p = random_measure(rng)
        lam = p.space.weights
        expect = math.fsum(
            [lam[c] * math.sqrt(1.0 + float(np.dot(p.ac[c], p.ac[c]))) for c in range(p.space.ncells)]
            + [float(np.linalg.norm(m)) for m in p.singular_mass]
        )
        assert abs(norm_star(lift_measure(p)) - expect) <= 1e-12 * max(1.0, expect)
        assert validate(lift_measure(p)).passed

    def test_merge_coincident_atoms(self):
        X = Interval(0.0, 1.0, 1)
        mu = DiscreteGYM.from_weighted(X, 1, [0, 0, 0], [[1.0], [2.0], [1.0 + 1e-13]], [1.0, 2.0, 1.0], [0.25, 0.125, 0.25])
        assert mu.n_atoms == 1
        assert mu.w[0] == pytest.approx(3 * math.sqrt(2) * 0.25, rel=1e-12)


class TestPairing:
    @given(seeds)
    def test_eta_pairs_to_reference_mass(self, seed):
        mu = random_gym(np.random.default_rng(seed))
        assert pair(EtaPart(mu.dim), mu) == pytest.approx(mu.space.total_mass, abs=1e-12 * mu.space.total_mass)

    def test_positive_part_of_square_wave(self):
        X = Interval(-1.0, 1.0, 2000)
        assert pair(PositivePart(Linear([1.0])), square_wave(X)) == pytest.approx(1.0, abs=1e-12)

    def test_moment_infinite_on_concentration(self):
        X = Interval(0.0, 1.0, 4)
        mu = lift_measure(DiscreteMeasure.make(X, 1, None, [(1, np.array([1.0]))]))
        assert pair(PrMoment(2.0, 1), mu) == INF

    def test_moment_finite_on_function(self):
        X = Interval(0.0, 1.0, 4)
        u = np.array([1.0, -2.0, 0.5, 3.0])
        assert pair(PrMoment(2.0, 1), lift_function(X, u)) == pytest.approx(math.fsum(0.25 * u**2), rel=1e-12)

    @given(seeds)
    def test_norm_star_matches_euclid(self, seed):
        mu = random_gym(np.random.default_rng(seed))
        oracle = math.fsum(mu.w * np.hypot(np.linalg.norm(mu.xi, axis=1), mu.eta))
        assert abs(norm_star(mu) - oracle) <= 1e-12 * max(1.0, oracle)
        assert abs(pair(EuclidNorm(mu.dim), mu) - oracle) <= 1e-12 * max(1.0, oracle)

    def test_dimension_mismatch(self):
        X = Interval(0.0, 1.0, 2)
        with pytest.raises(ValueError):
            pair(XiNorm(2), lift_function(X, [1.0, 2.0]))


class TestValidate:
    def test_lift_passes(self):
        assert validate(lift_function(Interval(0, 1, 6), np.arange(6.0))).passed

    def test_pure_concentration_fails(self):
        X = Interval(0.0, 1.0, 2)
        mu = DiscreteGYM.from_weighted(X, 1, [0, 1], [[1.0], [-1.0]], [0.0, 0.0], [1.0, 1.0])
        rep = validate(mu)
        assert not rep.passed and rep.projection_defect == pytest.approx(0.5)

    def test_small_defect_reported(self):
        X = Interval(0.0, 1.0, 4)
        w = X.weights.copy()
        w[2] *= 1 + 1e-6
        mu = DiscreteGYM(X, 1, np.arange(4), np.zeros((4, 1)), np.ones(4), w)
        rep = validate(mu)
        assert not rep.passed
        assert rep.cell_defects[2] == pytest.approx(1e-6 * X.weights[2], rel=1e-6)

    def test_negative_eta_fails(self):
        X = Interval(0.0, 1.0, 1)
        mu = DiscreteGYM(X, 1, np.array([0, 0]), np.array([[0.0], [0.6]]), np.array([1.0, -0.8]), np.array([1.0, 1.0]))
        assert validate(mu).negative_eta == 1


class TestImage:
    def test_identity(self):
        mu = random_gym(np.random.default_rng(1), dim=2)
        assert same_atoms(image(mu, HomMap.identity(2)), mu)

    def test_psi0_is_young_part(self):
        mu = random_gym(np.random.default_rng(2), dim=2)
        young, _ = decompose(mu)
        assert same_atoms(image(mu, psi0(2)), lift_young(young))

    def test_doubling(self):
        mu = random_gym(np.random.default_rng(3), dim=2)
        assert pair(XiNorm(2), linear_image(mu, 2 * np.eye(2))) == pytest.approx(2 * pair(XiNorm(2), mu), rel=1e-12)

    @given(seeds)
    def test_pairing_identity(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, dim=2)
        psi = HomMap(dim_in=2, components=(Linear(rng.standard_normal(2)), PositivePart(Linear(rng.standard_normal(2))), XiNorm(2)))
        img = image(mu, psi)
        assert validate(img).passed
        bat = standard_battery(mu.space, 3, 12)
        for f in bat:
            lhs, rhs = pair(f, img), pair(ComposeHomMap(f, psi), mu)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, norm_star(mu)) * 10

    @given(seeds)
    def test_functoriality_of_decomposition(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, dim=2)
        M = rng.standard_normal((2, 2))
        young, var = decompose(mu)
        y2 = YoungPart(mu.space, 2, young.cells, young.values @ M.T, young.mass)
        d = var.directions @ M.T
        nd = np.linalg.norm(d, axis=1)
        keep = nd > 1e-12
        from gymlab.gym import VarifoldPart

        v2 = VarifoldPart(mu.space, 2, var.cells[keep], d[keep] / nd[keep, None], var.mass[keep] * nd[keep])
        bat = standard_battery(mu.space, 2)
        a = pair_battery(bat, recompose(y2, v2))
        b = pair_battery(bat, linear_image(mu, M))
        assert np.max(np.abs(a - b)) <= 1e-11 * max(1.0, norm_star(mu) * np.abs(M).max())

    def test_dimension_mismatch(self):
        mu = random_gym(np.random.default_rng(0), dim=2)
        with pytest.raises(ValueError):
            image(mu, HomMap.identity(3))


class TestDecompose:
    def test_function_lift_has_no_varifold(self):
        _, var = decompose(lift_function(Interval(0, 1, 5), np.arange(5.0)))
        assert var.cells.size == 0

    def test_rescaling(self):
        X = Interval(0.0, 1.0, 2)
        lam = X.weights[0]
        mu = DiscreteGYM(X, 2, np.array([0, 1]), np.array([[0.8, 0.0], [0.0, 0.0]]), np.array([0.6, 1.0]), np.array([lam / 0.6, lam]))
        young, var = decompose(mu)
        np.testing.assert_allclose(young.values[0], [4 / 3, 0.0], rtol=1e-15)
        assert young.mass[0] == pytest.approx(lam, rel=1e-15)
        assert var.cells.size == 0

    @given(seeds)
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, dim=2, max_atoms=50)
        young, var = decompose(mu)
        bat = standard_battery(mu.space, 2)
        # independent sum over parts: sum m f(c, xi, 1) + sum m f(c, dir, 0)
        for f in bat:
            expect = math.fsum(np.r_[
                young.mass * f.evaluate(young.cells, young.values, np.ones(young.cells.size)),
                var.mass * f.evaluate(var.cells, var.directions, np.zeros(var.cells.size)),
            ])
            assert abs(pair(f, mu) - expect) <= 1e-12 * max(1.0, norm_star(mu))
        back = recompose(young, var)
        assert np.max(np.abs(pair_battery(bat, back) - pair_battery(bat, mu))) <= 1e-12 * max(1.0, norm_star(mu))
        norm = math.fsum(np.r_[young.mass * np.sqrt(1 + np.sum(young.values**2, axis=1)), var.mass])
        assert norm_star(mu) == pytest.approx(norm, rel=1e-12)
        y2, v2 = decompose(mu)
        assert np.array_equal(y2.values, young.values) and np.array_equal(v2.mass, var.mass)

    def test_zero_direction_rejected(self):
        X = Interval(0.0, 1.0, 1)
        mu = DiscreteGYM(X, 1, np.array([0, 0]), np.array([[0.0], [0.0]]), np.array([1.0, 0.0]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            decompose(mu)


class TestBarycentre:
    @given(seeds)
    def test_lift_roundtrip(self, seed):
        p = random_measure(np.random.default_rng(seed))
        assert barycentre(lift_measure(p)).allclose(p, 1e-12 * max(1.0, p.total_variation()))

    def test_symmetric_oscillation(self):
        b = barycentre(pm_one(Interval(0, 1, 4)))
        assert np.all(b.ac == 0) and b.singular_cells.size == 0

    @given(seeds)
    def test_norm_bound(self, seed):
        mu = random_gym(np.random.default_rng(seed))
        assert barycentre(mu).total_variation() <= norm_star(mu) + 1e-12

    def test_project_eta_is_reference(self):
        mu = random_gym(np.random.default_rng(5), dim=2)
        p = project_X(EtaPart(2), mu)
        np.testing.assert_allclose(p.ac[:, 0], 1.0, atol=1e-12)
        assert p.singular_cells.size == 0

    def test_project_xi_is_barycentre(self):
        mu = random_gym(np.random.default_rng(6), dim=2)
        assert project_X(HomMap.identity(2), mu).allclose(barycentre(mu), 0.0)

    @given(seeds)
    def test_project_norm_bound(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, dim=2)
        a, b = rng.standard_normal(2), float(rng.standard_normal())
        h = Linear(a, b)
        bound = math.sqrt(float(a @ a) + b * b) * norm_star(mu)
        assert project_X(h, mu).total_variation() <= bound + 1e-12


class TestJensen:
    def test_xinorm_on_oscillation(self):
        X = Interval(-1.0, 1.0, 7)
        assert jensen_gap(XiNorm(1), pm_one(X)) == pytest.approx(2.0, abs=1e-12)

    @given(seeds)
    def test_linear_zero_gap(self, seed):
        rng = np.random.default_rng(seed)
        mu = random_gym(rng, dim=2)
        assert abs(jensen_gap(Linear(rng.standard_normal(2), float(rng.standard_normal())), mu)) <= 1e-12 * max(1.0, norm_star(mu)) * 10

    def test_random_convex(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            mu = random_gym(rng, dim=2)
            f = random_convex(rng, 2, depth=2, ncells=mu.space.ncells)
            assert jensen_gap(f, mu, samples=300) >= -1e-12 * max(1.0, norm_star(mu))

    def test_nonconvex_rejected(self):
        with pytest.raises(ValueError):
            jensen_gap(Min(Linear([1.0]), Linear([-1.0])), pm_one(Interval(0, 1, 2)))


class TestContact:
    X = Interval(0.0, 1.0, 4)
    # homogeneous double well: distance of xi to {+eta, -eta}; its convex envelope is (|xi| - eta)+
    well = Min(Max(Linear([1.0], -1.0), Linear([-1.0], 1.0)), Max(Linear([1.0], 1.0), Linear([-1.0], -1.0)))
    envelope = PositivePart(XiNorm(1) - EtaPart(1))

    def test_convex_always_true(self):
        mu = random_gym(np.random.default_rng(0), self.X, 1)
        assert contact_support_check(XiNorm(1), XiNorm(1), mu, 1e-12)

    def test_supported_on_wells(self):
        mu = pm_one(self.X)
        assert pair(self.well, mu) == pytest.approx(0.0, abs=1e-15)
        assert contact_support_check(self.well, self.envelope, mu, 1e-12, strict=True)

    def test_atom_in_gap(self):
        mu = lift_function(self.X, np.zeros(4))
        assert not contact_support_check(self.well, self.envelope, mu, 1e-12)
        with pytest.raises(ValueError):
            contact_support_check(self.well, self.envelope, mu, 1e-12, strict=True)

    def test_envelope_above_function_rejected(self):
        with pytest.raises(ValueError):
            contact_support_check(self.envelope, XiNorm(1), pm_one(self.X), 1e-12)

    @given(seeds)
    def test_jensen_with_envelope(self, seed):
        mu = random_gym(np.random.default_rng(seed), self.X, 1)
        assert pair(self.envelope, lift_measure(barycentre(mu))) <= pair(self.well, mu) + 1e-12


class TestWeakStar:
    def test_self_gap_zero(self):
        mu = random_gym(np.random.default_rng(9))
        assert wstar_gap(mu, mu, standard_battery(mu.space, mu.dim)) == 0.0

    def test_square_wave_first_order(self):
        X = Interval(-1.0, 1.0, 5)
        bat = standard_battery(X, 1)
        target = pm_one(X)
        ns = [3.0 * 2**j for j in range(8)]
        cells = np.arange(X.ncells)
        plus = np.array([f.evaluate(cells, np.ones((X.ncells, 1)), np.ones(X.ncells)) for f in bat])
        minus = np.array([f.evaluate(cells, -np.ones((X.ncells, 1)), np.ones(X.ncells)) for f in bat])

        def oracle(n):
            # measure of {w(n x) = 1} in each cell from the antiderivative of the indicator
            P = 2.0 / n
            F = lambda x: math.floor(x / P) * P / 2 + min(x - math.floor(x / P) * P, P / 2)
            up = np.array([F(b) - F(a) for a, b in zip(X.edges[:-1], X.edges[1:])])
            diff = (plus - minus) @ (up - X.weights / 2)
            return math.fsum(bat.weights * np.abs(diff))

        gaps = np.array([wstar_gap(square_wave(X, n), target, bat) for n in ns])
        expect = np.array([oracle(n) for n in ns])
        np.testing.assert_allclose(gaps, expect, rtol=1e-9, atol=1e-14)
        # per cell the imbalance is at most a quarter period, 1/(2n)
        bound = bat.weights @ np.abs(plus - minus).sum(axis=1) / 2
        assert np.all(gaps * np.array(ns) <= bound + 1e-12)
        norms = np.array([abs(norm_star(square_wave(X, n)) - norm_star(target)) for n in ns])
        assert np.all(norms <= 1e-12)

    def test_battery_members_bounded(self):
        X = Interval(0.0, 1.0, 6)
        standard_battery(X, 2).check(ncells=6)

    def test_battery_dimension_mix_rejected(self):
        with pytest.raises(ValueError):
            Battery((XiNorm(1), XiNorm(2)))


class TestDisintegrate:
    def test_constant(self):
        X = Interval(0, 1, 3)
        young, _ = decompose(lift_function(X, [1.0, 2.0, 3.0]))
        for vals, probs in disintegrate(young):
            assert len(probs) == 1 and probs[0] == pytest.approx(1.0, abs=1e-15)

    def test_half_half(self):
        young, _ = decompose(pm_one(Interval(0, 1, 3)))
        for vals, probs in disintegrate(young):
            assert sorted(vals[:, 0]) == [-1.0, 1.0]
            np.testing.assert_allclose(probs, 0.5, atol=1e-15)

    @given(seeds)
    def test_probabilities_sum_to_one(self, seed):
        young, _ = decompose(random_gym(np.random.default_rng(seed)))
        for _, probs in disintegrate(young):
            assert math.fsum(probs) == pytest.approx(1.0, abs=1e-12)


def test_point_cloud_space_supported():
    pc = point_cloud(["a", "b", "c"], [1.0, 2.0, 0.5], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    mu = lift_function(pc, [1.0, -1.0, 0.0])
    assert validate(mu).passed
    assert norm_star(mu) == pytest.approx(math.sqrt(2) * 3 + 0.5)


def test_moment_semicontinuity_along_oscillations():
    X = Interval(-1.0, 1.0, 5)
    f = PrMoment(2.0, 1)
    vals = [pair(f, square_wave(X, 3.0 * 2**j)) for j in range(5)]
    assert pair(f, pm_one(X)) <= min(vals) + 1e-12
