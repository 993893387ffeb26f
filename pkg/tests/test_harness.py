import csv
import json
import random

import pytest

from tanglerev.harness import (
    ConfigInvalid,
    DelayStats,
    EmptySamples,
    ScenarioConfig,
    _World,
    emit_cdf,
    metrics_text,
    miss_stats,
    percentile,
    run_check_benchmark,
    run_crl_baseline,
    run_window_benchmark,
    write_cdf,
    write_metrics,
    write_samples,
)
from tanglerev.tangle import LatencyModel


def small(**kw):
    base = dict(revoked_counts=[20, 60], frequencies_hz=[1, 5], duration_s=20,
                check_latency_model=LatencyModel.constant(10), seed=3)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture(scope="module")
def world():
    return _World(small())


# -- statistics ------------------------------------------------------------------

def test_percentile_examples():
    assert percentile(list(range(1, 101)), 0.95) == 95
    assert percentile([7.5], 0.95) == 7.5
    assert percentile([5, 1, 3], 1.0) == 5
    assert percentile([5, 1, 3], 0.01) == 1


def test_percentile_rejects_empty_and_bad_p():
    with pytest.raises(EmptySamples):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1], 0)


def test_percentile_matches_sorted_rank_oracle():
    rng = random.Random(1)
    for _ in range(200):
        xs = [rng.randint(0, 50) for _ in range(rng.randint(1, 40))]
        p = rng.choice([0.5, 0.9, 0.95, 0.99, 1.0])
        # smallest value with at least p of the sample at or below it
        oracle = min(x for x in xs if sum(y <= x for y in xs) >= p * len(xs) - 1e-9)
        assert percentile(xs, p) == oracle


def test_cdf_examples():
    assert emit_cdf([2, 2, 4]) == [(2, pytest.approx(2 / 3)), (4, 1.0)]
    assert emit_cdf([9]) == [(9, 1.0)]
    with pytest.raises(EmptySamples):
        emit_cdf([])


def test_cdf_of_uniform_sample_is_close_to_identity():
    rng = random.Random(42)
    pts = emit_cdf([rng.random() for _ in range(1000)])
    assert max(abs(p - x) for x, p in pts) < 0.05
    probs = [p for _, p in pts]
    assert probs == sorted(probs) and probs[-1] == 1.0


def test_delay_stats():
    s = DelayStats.from_samples([1.0, 2.0, 3.0, 10.0])
    assert (s.mean_ms, s.max_ms, s.p95_ms, s.n) == (4.0, 10.0, 10.0, 4)
    with pytest.raises(EmptySamples):
        DelayStats.from_samples([])


# -- config ----------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(revoked_fraction=0), dict(revoked_counts=[]), dict(revoked_counts=[0]),
    dict(frequencies_hz=[0]), dict(duration_s=0), dict(n_certificates=10, revoked_counts=[20]),
    dict(local_work_ms=-1), dict(n_revocations=0),
])
def test_config_validation(kw):
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(**kw).validate()


def test_config_json_round_trip(tmp_path):
    cfg = small(publish_latency_model=LatencyModel.uniform(1, 5))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.load(path) == cfg


def test_config_accepts_fit_targets_and_rejects_unknown(tmp_path):
    cfg = ScenarioConfig.from_dict(
        {"publish_latency_model": {"mean_ms": 8000, "p95_ms": 18570, "cap_ms": 82960}})
    assert cfg.publish_latency_model.kind == "lognormal"
    with pytest.raises(ConfigInvalid):
        ScenarioConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigInvalid):
        ScenarioConfig.from_dict({"check_latency_model": {"kind": "weibull"}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        ScenarioConfig.load(bad)


def test_pool_size():
    assert ScenarioConfig().pool_size(500) == 1000
    assert ScenarioConfig(n_certificates=20000).pool_size(500) == 20000


# -- check benchmark -------------------------------------------------------------

def test_zero_latency_gives_zero_delay(world):
    res = run_check_benchmark(small(check_latency_model=LatencyModel.zero()), world)
    assert all(s.mean_ms == 0 and s.max_ms == 0 for s in res.stats.values())


def test_constant_latency_benchmark(world):
    res = run_check_benchmark(small(), world)
    assert set(res.stats) == {(20, 1), (20, 5), (60, 1), (60, 5)}
    assert res.stats[(20, 1)].n == 20 and res.stats[(60, 5)].n == 100
    assert all(s.mean_ms == 10 and s.p95_ms == 10 for s in res.stats.values())
    assert res.events == 240
    assert (res.false_positives, res.false_negatives, res.other_outcomes) == (0, 0, 0)
    assert set(res.queries_per_check) == {1}


def test_local_work_adds_to_delay(world):
    res = run_check_benchmark(small(local_work_ms=2.5), world)
    assert all(s.mean_ms == 12.5 for s in res.stats.values())


def test_sender_pool_is_half_revoked(world):
    pool, revoked = world.cell_pool(60)
    assert len(pool) == 120 and len(revoked) == 60
    assert revoked == {v.stc_hash for v in pool[:60]}


def test_crl_baseline_grows_linearly(world):
    res = run_crl_baseline(small(crl_entry_cost_us=1.0), world)
    misses = miss_stats(res)
    # a miss scans the whole list
    assert misses[(20, 1)].max_ms == pytest.approx(20 / 1000)
    assert misses[(60, 1)].max_ms == pytest.approx(60 / 1000)
    assert misses[(60, 5)].mean_ms / misses[(20, 5)].mean_ms == pytest.approx(3.0)
    assert max(s.max_ms for s in res.stats.values()) <= 60 / 1000 + 1e-12
    assert (res.false_positives, res.false_negatives) == (0, 0)


def test_crl_slope_doubles_with_cost(world):
    one = miss_stats(run_crl_baseline(small(crl_entry_cost_us=1.0), world))
    two = miss_stats(run_crl_baseline(small(crl_entry_cost_us=2.0), world))
    for cell in one:
        assert two[cell].mean_ms == pytest.approx(2 * one[cell].mean_ms)


# -- window benchmark ------------------------------------------------------------

def test_window_zero_model():
    res = run_window_benchmark(small(publish_latency_model=LatencyModel.zero()), 25)
    assert res.stats.max_ms == 0 and res.stats.n == 25
    assert res.resolved == 25


def test_window_constant_model():
    res = run_window_benchmark(small(publish_latency_model=LatencyModel.constant(8000)), 10)
    assert res.samples == [8000.0] * 10


def test_window_is_deterministic():
    cfg = small(publish_latency_model=LatencyModel.uniform(100, 900))
    assert run_window_benchmark(cfg, 30).samples == run_window_benchmark(cfg, 30).samples


# -- writers ---------------------------------------------------------------------

def test_metrics_writer(tmp_path, world):
    res = run_check_benchmark(small(), world)
    path = tmp_path / "m.csv"
    write_metrics(path, res.rows())
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["kind", "revoked_count", "frequency_hz", "mean_ms", "max_ms", "p95_ms", "n"]
    assert rows[1] == ["check", "20", "1", "10.000000", "10.000000", "10.000000", "20"]
    assert len(rows) == 5
    assert path.read_text() == metrics_text(res.rows())


def test_samples_and_cdf_writers(tmp_path, world):
    res = run_check_benchmark(small(check_latency_model=LatencyModel.uniform(5, 15)), world)
    write_samples(tmp_path / "s.csv", res.sample_records())
    rows = list(csv.DictReader((tmp_path / "s.csv").open()))
    assert len(rows) == res.events
    write_cdf(tmp_path / "c.csv", {("check", c, f): v for (c, f), v in res.samples.items()})
    cdf = list(csv.DictReader((tmp_path / "c.csv").open()))
    last = {}
    for r in cdf:
        key = (r["revoked_count"], r["frequency_hz"])
        p = float(r["cumulative_probability"])
        assert p >= last.get(key, 0)
        last[key] = p
    assert all(v == 1.0 for v in last.values()) and len(last) == 4
