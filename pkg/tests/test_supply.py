import numpy as np
import pytest

from ddpricing import MarketConfig, SupplyModel, enumerate_scenarios, sample_path, validate_model
from ddpricing.errors import IngestionError, UnsupportedOperationError
from ddpricing.supply import load_trace, sample_paths, scenario_set

FOUR = [((0, 0), 0.25), ((0, 2), 0.25), ((4, 0), 0.25), ((4, 2), 0.25)]


def test_deterministic_ignores_seed():
    m = SupplyModel.deterministic([1.5, 0])
    for seed in (0, 1, 2**63 - 1):
        np.testing.assert_array_equal(sample_path(m, seed), [1.5, 0])


def test_finite_support_membership():
    m = SupplyModel.finite(FOUR)
    support = {p for p, _ in FOUR}
    for seed in range(20):
        assert tuple(sample_path(m, seed)) in support


def test_uniform_support_and_reproducible():
    m = SupplyModel.iid_uniform(0.0, 2.0)
    a, b = sample_path(m, 1, horizon=2), sample_path(m, 2, horizon=2)
    assert a.shape == (2,) and np.all((a >= 0) & (a <= 2)) and np.all((b >= 0) & (b <= 2))
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(sample_path(m, 1, horizon=2), a)


def test_batch_independent_of_workers():
    m = SupplyModel.iid_uniform([0, 1, 0], [2, 3, 1])
    a = sample_paths(m, 200_000, 7, workers=1)
    b = sample_paths(m, 200_000, 7, workers=4)
    assert a.tobytes() == b.tobytes()


def test_uniform_mean_within_three_stderr():
    m = SupplyModel.iid_uniform(0.0, 2.0)
    s = sample_paths(m, 10**5, 3, horizon=2)
    se = np.sqrt(4 / 12 / len(s))
    assert np.all(np.abs(s.mean(axis=0) - 1.0) <= 3 * se)


def test_enumerate():
    assert [(tuple(p), w) for p, w in enumerate_scenarios(SupplyModel.deterministic([1, 1]))] == [((1, 1), 1.0)]
    sc = enumerate_scenarios(SupplyModel.finite(FOUR))
    assert len(sc) == 4 and all(w == 0.25 for _, w in sc)
    with pytest.raises(UnsupportedOperationError):
        enumerate_scenarios(SupplyModel.iid_uniform(0, 2))


def test_validate():
    cfg = MarketConfig(2, 1.0)
    r = validate_model(SupplyModel.iid_uniform(0, 2), cfg)
    assert r.ok and r.flags["assumption2"] is True
    r = validate_model(SupplyModel.finite(FOUR), cfg)
    assert r.ok and r.flags["assumption2"] is False
    r = validate_model(SupplyModel.deterministic([1, 2, 3]), cfg)
    assert not r.ok and "length" in r.violations[0]
    r = validate_model(SupplyModel.finite([((0, 0), 0.5), ((1, 1), 0.4)]), cfg)
    assert not r.ok


def test_trace_file(tmp_path):
    f = tmp_path / "pv.csv"
    f.write_text("s0,s1\n1.0,2.0\n0.5,0\n", encoding="utf-8")
    m = SupplyModel.trace_file(f)
    sc = enumerate_scenarios(m)
    assert len(sc) == 2 and sc[0][1] == 0.5
    assert tuple(sample_path(m, 0)) in {(1.0, 2.0), (0.5, 0.0)}
    assert validate_model(m, MarketConfig(2, 1)).ok


def test_trace_file_malformed(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\n3,abc\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="row 2, column 2"):
        load_trace(f)
    g = tmp_path / "ragged.csv"
    g.write_text("1,2\n3\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="row 2"):
        load_trace(g)


def test_scenario_set_exact_on_continuous_raises():
    with pytest.raises(UnsupportedOperationError):
        scenario_set(SupplyModel.iid_uniform(0, 1), 2, method="exact")
