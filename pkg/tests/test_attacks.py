import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dapmean.attacks import (
    AttackTrace,
    NotBiasedError,
    PoisonSpec,
    evasion_bounds,
    evasive_strategy,
    gen_bba,
    gen_evasive,
    gen_gba,
    gen_input_manipulation,
    input_manipulation_strategy,
    poison_strategy,
    reduce_gba_to_bba,
    resolve_endpoint,
)
from dapmean.mechanism import Budget, DomainError


BUDGET = Budget(1.0)
C = BUDGET.c_bound


class TestPoisonSpec:
    def test_defaults_valid(self):
        PoisonSpec()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"gamma": 0.5},
            {"gamma": -0.1},
            {"range_lo": 1.0, "range_hi": 0.5},
            {"dist": "cauchy"},
            {"evasion_fraction": 1.5},
            {"side": "up"},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValueError):
            PoisonSpec(**kwargs)


class TestGenBBA:
    def test_uniform_values_in_range(self):
        spec = PoisonSpec(range_lo=0.5 * C, range_hi=C)
        trace = gen_bba(spec, 500, BUDGET, np.random.default_rng(0))
        assert trace.values.size == 500
        assert np.all((trace.values >= 0.5 * C) & (trace.values <= C))
        assert trace.is_one_sided()

    def test_point_mass(self):
        spec = PoisonSpec(range_lo=0.0, range_hi=C, dist="point", value=1.5)
        trace = gen_bba(spec, 10, BUDGET, np.random.default_rng(0))
        np.testing.assert_array_equal(trace.values, np.full(10, 1.5))

    def test_gaussian_truncated_to_range(self):
        spec = PoisonSpec(range_lo=1.0, range_hi=2.0, dist="gaussian", mu=1.9, sigma=1.0)
        trace = gen_bba(spec, 1000, BUDGET, np.random.default_rng(0))
        assert np.all((trace.values >= 1.0) & (trace.values <= 2.0))

    def test_crossing_reference_rejected(self):
        spec = PoisonSpec(range_lo=-0.5, range_hi=C, side="right")
        with pytest.raises(NotBiasedError):
            gen_bba(spec, 10, BUDGET, np.random.default_rng(0))

    def test_outside_perturbed_domain_rejected(self):
        spec = PoisonSpec(range_lo=0.0, range_hi=C + 1.0)
        with pytest.raises(DomainError):
            gen_bba(spec, 10, BUDGET, np.random.default_rng(0))

    def test_left_side_relative_to_reference(self):
        spec = PoisonSpec(range_lo=-C, range_hi=-0.7, side="left")
        trace = gen_bba(spec, 50, BUDGET, np.random.default_rng(1), reference_mean=-0.6)
        assert np.all(trace.values <= -0.6)
        assert trace.deviation_sum < 0


class TestGenGBA:
    def test_two_sided_union(self):
        left = PoisonSpec(range_lo=-C, range_hi=-0.2, side="left")
        right = PoisonSpec(range_lo=0.3, range_hi=C, side="right")
        trace = gen_gba(left, right, 40, 60, BUDGET, np.random.default_rng(0))
        assert trace.values.size == 100
        assert not trace.is_one_sided()

    def test_requires_opposite_sides(self):
        spec = PoisonSpec(range_lo=0.3, range_hi=C, side="right")
        with pytest.raises(ValueError):
            gen_gba(spec, spec, 10, 10, BUDGET, np.random.default_rng(0))


class TestReduction:
    def test_hand_example(self):
        # {-0.8, +0.3} about 0: deviation sum -0.5, so the one-sided
        # equivalent is the single value -0.5.
        trace = AttackTrace(values=np.array([-0.8, 0.3]), reference_mean=0.0)
        out = reduce_gba_to_bba(trace, o=0.0, bound=C)
        np.testing.assert_allclose(np.sort(out.values), [-0.5])
        assert out.deviation_sum == pytest.approx(trace.deviation_sum)

    def test_one_sided_input_unchanged(self):
        vals = np.array([0.1, 0.7, 1.9])
        trace = AttackTrace(values=vals, reference_mean=0.0)
        out = reduce_gba_to_bba(trace, o=0.0, bound=C)
        np.testing.assert_array_equal(out.values, vals)

    def test_zero_deviation_reduces_to_empty(self):
        trace = AttackTrace(values=np.array([-0.4, 0.4]), reference_mean=0.0)
        out = reduce_gba_to_bba(trace, o=0.0, bound=C)
        assert out.values.size == 0
        assert out.deviation_sum == 0.0

    @settings(max_examples=200, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        n_left=st.integers(min_value=1, max_value=30),
        n_right=st.integers(min_value=1, max_value=30),
        o=st.floats(min_value=-0.5, max_value=0.5),
    )
    def test_reduction_properties(self, seed, n_left, n_right, o):
        rng = np.random.default_rng(seed)
        vals = np.concatenate(
            [rng.uniform(-C, o, n_left), rng.uniform(o, C, n_right)]
        )
        trace = AttackTrace(values=vals, reference_mean=o)
        out = reduce_gba_to_bba(trace, o=o, bound=C)
        dev = np.sum(out.values - o)
        assert dev == pytest.approx(np.sum(vals - o), abs=1e-9)
        assert np.all(out.values <= o + 1e-12) or np.all(out.values >= o - 1e-12)
        assert np.all(np.abs(out.values) <= C + 1e-12)


class TestInputManipulation:
    def test_reports_live_in_perturbed_domain(self):
        trace = gen_input_manipulation(1.0, 1000, BUDGET, np.random.default_rng(0))
        assert trace.values.size == 1000
        assert np.all(np.abs(trace.values) <= C)

    def test_rejects_out_of_domain_input(self):
        with pytest.raises(DomainError):
            gen_input_manipulation(1.5, 10, BUDGET, np.random.default_rng(0))

    def test_biases_toward_input(self):
        trace = gen_input_manipulation(1.0, 50_000, BUDGET, np.random.default_rng(0))
        assert trace.values.mean() == pytest.approx(1.0, abs=0.05)


class TestEvasive:
    def test_counts(self):
        spec = PoisonSpec(range_lo=0.5 * C, range_hi=C, evasion_fraction=0.2)
        trace = gen_evasive(spec, 100, -0.5 * C, np.random.default_rng(0))
        assert np.sum(trace.values == -0.5 * C) == 20
        assert np.sum(trace.values >= 0.5 * C) == 80

    def test_all_evasive_at_fraction_one(self):
        spec = PoisonSpec(range_lo=0.5 * C, range_hi=C, evasion_fraction=1.0)
        trace = gen_evasive(spec, 37, -1.0, np.random.default_rng(0))
        np.testing.assert_array_equal(trace.values, np.full(37, -1.0))

    def test_evasive_value_must_oppose_side(self):
        spec = PoisonSpec(range_lo=0.5 * C, range_hi=C, evasion_fraction=0.2)
        with pytest.raises(ValueError):
            gen_evasive(spec, 10, 0.4, np.random.default_rng(0))


class TestEvasionBounds:
    def test_formulas_direct(self):
        m, n, a, c, o, op = 30, 70, 0.25, 3.0, 0.1, -0.2
        u_max, u_eva, delta = evasion_bounds(m, n, a, c, o, op)
        assert u_max == pytest.approx((m * c + n * o) / (m + n) - o)
        assert u_eva == pytest.approx(
            (m * (a * op + (1 - a) * c) + n * o) / (m + n) - o
        )
        assert delta == pytest.approx(m * a * (c - op) / (m + n))

    def test_identity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = int(rng.integers(1, 1000))
            n = int(rng.integers(1, 10_000))
            a = rng.uniform(0, 1)
            c = rng.uniform(1.1, 50)
            o = rng.uniform(-1, 1)
            op = rng.uniform(-c, o)
            u_max, u_eva, delta = evasion_bounds(m, n, a, c, o, op)
            assert abs((u_max - u_eva) - delta) <= 1e-12


class TestStrategies:
    def test_resolve_endpoint(self):
        assert resolve_endpoint("0.75*C", c=4.0, o=0.0) == pytest.approx(3.0)
        assert resolve_endpoint("O", c=4.0, o=-0.3) == pytest.approx(-0.3)
        assert resolve_endpoint(1.25, c=4.0, o=0.0) == 1.25

    def test_poison_strategy_scales_with_budget(self):
        strat = poison_strategy(lo="0.75*C", hi="C")
        for eps in (0.25, 1.0, 2.0):
            b = Budget(eps)
            out = strat(200, b, np.random.default_rng(0))
            assert np.all((out >= 0.75 * b.c_bound) & (out <= b.c_bound))

    def test_input_manipulation_strategy(self):
        strat = input_manipulation_strategy(1.0)
        out = strat(100, BUDGET, np.random.default_rng(0))
        assert out.size == 100 and np.all(np.abs(out) <= C)

    def test_evasive_strategy_split(self):
        strat = evasive_strategy(a=0.5)
        out = strat(100, BUDGET, np.random.default_rng(0))
        assert np.sum(out == -C / 2) == 50
        assert np.sum(out >= C / 2) == 50
