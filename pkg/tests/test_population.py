import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddpricing import (ConsumerType, Population, UtilitySpec, aggregate_actions,
                       aggregate_truthful, truthful_action, utility_value, validate_type)
from ddpricing.errors import ConfigError, DomainError, ShapeError
from ddpricing.population import population_from_dict


def tab(R, q, pts):
    return ConsumerType(1, R, q, UtilitySpec("tabulated-piecewise-linear", {"points": pts}))


class TestValidateType:
    def test_capped_linear_passes(self):
        assert validate_type(ConsumerType(1, 2.0, 1.0)).ok

    def test_step_passes(self):
        assert validate_type(ConsumerType(1, 1.5, 1.0, UtilitySpec("step"))).ok

    def test_tabulated_cap_violation(self):
        R, q = 2.0, 1.0
        t = tab(R, q, [[0, 0], [q / 2, 0.9 * R * q], [q, R * q]])
        res = validate_type(t)
        assert not res.ok
        assert any("cap" in v and "0.5" in v for v in res.violations)

    def test_tabulated_below_cap_passes(self):
        t = tab(2.0, 1.0, [[0, 0], [0.5, 0.4], [1.0, 2.0]])
        assert validate_type(t).ok

    def test_staircase(self):
        t = ConsumerType(2, 1.0, 3.0, UtilitySpec("staircase", {"steps": [[1, 1], [2, 2], [3, 3]]}))
        assert validate_type(t).ok
        assert utility_value(t, 0.99) == 0
        assert utility_value(t, 2.5) == 2
        assert utility_value(t, 7) == 3

    def test_non_monotone_breakpoints_rejected_not_crash(self):
        t = tab(2.0, 1.0, [[0, 0], [0.6, 0.5], [0.4, 0.6], [1.0, 2.0]])
        res = validate_type(t)
        assert not res.ok and any("strictly increasing" in v for v in res.violations)

    def test_decreasing_utility_rejected(self):
        t = tab(1.0, 2.0, [[0, 0], [1.0, 0.9], [1.5, 0.2], [2.0, 2.0]])
        assert any("decreasing" in v for v in validate_type(t).violations)

    def test_R_must_match(self):
        t = tab(3.0, 1.0, [[0, 0], [1.0, 2.0]])
        assert any("U(q)/q" in v for v in validate_type(t).violations)

    @pytest.mark.parametrize("k,R,q", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (4, 1, 1)])
    def test_bad_fields(self, k, R, q):
        assert not validate_type(ConsumerType(k, R, q), horizon=3).ok

    def test_unknown_family(self):
        assert not validate_type(ConsumerType(1, 1, 1, UtilitySpec("cubic"))).ok


class TestUtilityValue:
    @pytest.mark.parametrize("y,expected", [(0.5, 0.75), (2.0, 1.5), (1.0, 1.5), (0.0, 0.0)])
    def test_capped_linear(self, y, expected):
        assert utility_value(ConsumerType(1, 1.5, 1.0), y) == pytest.approx(expected, abs=0)

    def test_step(self):
        t = ConsumerType(1, 1.5, 1.0, UtilitySpec("step"))
        assert utility_value(t, 0.99) == 0
        assert utility_value(t, 1.0) == 1.5
        assert utility_value(t, 5.0) == 1.5

    def test_negative_raises(self):
        with pytest.raises(DomainError):
            utility_value(ConsumerType(1, 1.5, 1.0), -0.1)


@pytest.mark.parametrize("t,N,expected", [
    (ConsumerType(2, 1.5, 1.0), 3, [0, 1, 0]),
    (ConsumerType(1, 2.0, 0.5), 2, [0.5, 0]),
    (ConsumerType(4, 1.0, 3.0), 4, [0, 0, 0, 3]),
])
def test_truthful_action(t, N, expected):
    np.testing.assert_array_equal(truthful_action(t, N), expected)


class TestAggregation:
    def test_single_type(self):
        pop = Population([(ConsumerType(1, 1, 2), 1.0)])
        np.testing.assert_array_equal(aggregate_truthful(pop, 2), [2, 0])

    def test_two_types_and_probe(self):
        pop = Population([(ConsumerType(1, 1, 4), 0.5), (ConsumerType(2, 1, 2), 0.5)])
        x = aggregate_truthful(pop, 2)
        np.testing.assert_array_equal(x, [2, 1])
        pop.probes.append((ConsumerType(2, 1, 1), None))
        assert aggregate_truthful(pop, 2).tobytes() == x.tobytes()

    def test_actions(self):
        pop = Population([(ConsumerType(1, 1, 1), 1.0)])
        np.testing.assert_array_equal(aggregate_actions(pop, [[1, 1]], 2), [1, 1])
        pop = Population([(ConsumerType(1, 1, 2), 0.5), (ConsumerType(2, 1, 2), 0.5)])
        np.testing.assert_array_equal(aggregate_actions(pop, [[2, 0], [0, 2]], 2), [1, 1])

    def test_shape_error(self):
        pop = Population([(ConsumerType(1, 1, 1), 1.0)])
        with pytest.raises(ShapeError):
            aggregate_actions(pop, [[1, 1, 1]], 2)

    def test_truthful_actions_match_truthful_aggregate_bitwise(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 6))
            w = rng.dirichlet(np.ones(m))
            types = [ConsumerType(int(rng.integers(1, n + 1)), 1.0, float(rng.uniform(0.1, 5))) for _ in range(m)]
            pop = Population(list(zip(types, w)))
            acts = [truthful_action(t, n) for t in types]
            assert aggregate_actions(pop, acts, n).tobytes() == aggregate_truthful(pop, n).tobytes()


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.lists(st.floats(0, 20), min_size=1, max_size=20),
       st.sampled_from(["capped-linear", "step"]))
def test_utility_envelope(R, q, ys, family):
    t = ConsumerType(1, R, q, UtilitySpec(family))
    assert validate_type(t).ok
    y = np.array(ys)
    u = t.utility_at(y)
    assert np.all(u >= 0) and np.all(u <= R * q + 1e-12)
    assert np.all(u <= np.minimum(y, q) * R + 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 5)), min_size=1, max_size=4),
       st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 5)), min_size=1, max_size=4))
def test_aggregate_is_linear_under_concatenation(a, b):
    """Concatenating two populations with renormalized masses mixes aggregates."""
    n = 3

    def build(spec, k):
        tot = sum(m for m, _ in spec)
        return [(ConsumerType(k, 1.0, q + 0.1), m / tot) for m, q in spec]

    pa, pb = Population(build(a, 1)), Population(build(b, 3))
    xa, xb = aggregate_truthful(pa, n), aggregate_truthful(pb, n)
    both = Population([(t, 0.5 * m) for t, m in pa.entries + pb.entries])
    np.testing.assert_allclose(aggregate_truthful(both, n), 0.5 * xa + 0.5 * xb, rtol=0, atol=1e-12)


class TestFromDict:
    def test_masses_not_one(self):
        with pytest.raises(ConfigError) as ei:
            population_from_dict([{"deadline": 1, "R": 1, "q": 1, "mass": 0.9}], horizon=2)
        assert any("types[]" in v for v in ei.value.violations)

    def test_errors_name_entry(self):
        with pytest.raises(ConfigError) as ei:
            population_from_dict([{"deadline": 1, "R": 1, "q": 1, "mass": 0.5},
                                  {"deadline": 1, "R": -1, "q": 1, "mass": 0.5}], horizon=2)
        assert any(v.startswith("types[1]") for v in ei.value.violations)

    def test_probe_parsed(self):
        pop = population_from_dict([{"deadline": 1, "R": 1, "q": 1, "mass": 1}],
                                   [{"deadline": 2, "R": 1, "q": 1, "action": [0, 1]}], horizon=2)
        assert len(pop.probes) == 1 and pop.max_demand() == 1
