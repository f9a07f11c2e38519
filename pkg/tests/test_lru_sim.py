import json
import math
from collections import OrderedDict

import numpy as np
import pytest

from popinv.cache_model import PopularityVector
from popinv.lru_sim import (
    SimResult,
    exit_time_probe,
    hr_curve_sim,
    lru_hits,
    lru_simulate,
    poisson_irm_simulate,
)
from popinv.trace import RequestTrace


def reference_lru(tokens, capacity):
    """Plain OrderedDict LRU, the oracle for the linked-list kernel."""
    cache, hits = OrderedDict(), 0
    for t in tokens:
        if t in cache:
            hits += 1
            cache.move_to_end(t)
        else:
            cache[t] = None
            if len(cache) > capacity:
                cache.popitem(last=False)
    return hits


def test_abab_examples():
    tr = RequestTrace.from_tokens("abab")
    r1 = lru_simulate(tr, 1)
    assert (r1.hits, r1.misses, r1.hit_ratio) == (0, 4, 0.0)
    r2 = lru_simulate(tr, 2)
    assert (r2.hits, r2.misses, r2.hit_ratio) == (2, 2, 0.5)


def test_cold_misses_only(rng):
    tokens = rng.integers(0, 50, 2000).astype(str)
    tr = RequestTrace.from_tokens(tokens)
    distinct = len(set(tokens))
    for cap in (distinct, distinct + 10):
        assert lru_simulate(tr, cap).hit_ratio == (len(tr) - distinct) / len(tr)


def test_matches_reference_lru(rng):
    for _ in range(20):
        k = int(rng.integers(2, 60))
        tokens = (rng.zipf(1.3, 3000) % k).astype(str)
        tr = RequestTrace.from_tokens(tokens)
        for cap in (1, 2, 5, 17, k):
            assert lru_simulate(tr, cap).hits == reference_lru(tokens, cap)


def test_inclusion_and_conservation(rng):
    ids = (rng.zipf(1.2, 50_000) % 5000).astype(np.int64)
    tr = RequestTrace(ids, tuple(map(str, range(5000))))
    hits = []
    for cap in range(1, 2000, 37):
        r = lru_simulate(tr, cap)
        assert r.hits + r.misses == len(tr) == r.requests
        hits.append(r.hits)
    assert np.all(np.diff(hits) >= 0)


def test_errors_and_empty():
    tr = RequestTrace.from_tokens("ab")
    with pytest.raises(ValueError):
        lru_simulate(tr, 0)
    with pytest.raises(ValueError):
        lru_hits(np.array([0, 3]), 2, 1)
    empty = lru_simulate(RequestTrace.from_tokens([]), 3)
    assert (empty.requests, empty.hit_ratio) == (0, 0.0)


def test_sim_result_json():
    d = json.loads(SimResult(3, 7, 5).to_json({"source": "x"}))
    assert d["hits"] == 3 and d["misses"] == 7 and d["hit_ratio"] == 0.3
    assert d["capacity"] == 5 and d["trace"] == {"source": "x"} and "schema_version" in d


def test_curve_sim(rng):
    tokens = (rng.zipf(1.4, 20_000) % 1000).astype(str)
    tr = RequestTrace.from_tokens(tokens, window=2.0)
    caps = [1, 10, 50, 200, 700]
    c = hr_curve_sim(tr, caps, 1000)
    assert c.source == "simulation" and c.mode == "transient" and c.window == 2.0
    np.testing.assert_array_equal(c.deltas, np.array(caps) / 1000)
    np.testing.assert_array_equal(c.cache_sizes, caps)
    assert np.all(np.diff(c.hit_ratios) >= 0)
    assert hr_curve_sim(tr, [50], 1000).hit_ratios[0] == lru_simulate(tr, 50).hit_ratio
    with pytest.raises(ValueError):
        hr_curve_sim(tr, [10, 5], 1000)
    with pytest.raises(ValueError):
        hr_curve_sim(tr, [0, 5], 1000)


def test_poisson_irm_total_requests():
    p = PopularityVector(np.linspace(0.1, 5, 200))
    W = 2.0
    totals = np.array([len(poisson_irm_simulate(p, W, s)) for s in range(100)])
    mu = p.total_rate * W
    # standard error of the mean of 100 Poisson(mu) totals
    assert abs(totals.mean() - mu) <= 3 * math.sqrt(mu / 100)


def test_poisson_irm_structure_and_determinism():
    p = PopularityVector([1.0, 3.0, 0.5])
    a = poisson_irm_simulate(p, 10.0, 42)
    b = poisson_irm_simulate(p, 10.0, 42)
    np.testing.assert_array_equal(a.ids, b.ids)
    np.testing.assert_array_equal(a.timestamps, b.timestamps)
    assert np.all(np.diff(a.timestamps) >= 0)
    assert a.timestamps.min() >= 0 and a.timestamps.max() <= 10.0
    assert a.labels == ("0", "1", "2") and a.window == 10.0
    with pytest.raises(ValueError):
        poisson_irm_simulate(p, 0.0, 1)


def test_distinct_documents_curve():
    rng = np.random.default_rng(2024)
    p = PopularityVector(rng.pareto(1.5, 1000) + 0.1)
    ts = np.array([0.2, 0.5, 1.0, 2.0, 5.0])
    # one run fluctuates by about sqrt(occupancy); average 20 of them
    seen = np.zeros(ts.size)
    for seed in range(20):
        tr = poisson_irm_simulate(p, 5.0, seed)
        _, first = np.unique(tr.ids, return_index=True)
        seen += np.searchsorted(np.sort(tr.timestamps[first]), ts, side="right")
    expected = np.array([p.occupancy(t) for t in ts])
    assert np.all(np.abs(seen / 20 - expected) <= 0.05 * expected)


def test_exit_time_homogeneous():
    lam = 2.0
    p = PopularityVector(np.full(1000, lam))
    s = exit_time_probe(p, 500, 5.0, 20)
    assert not s.censored.any() and s.seeds == tuple(range(20))
    assert abs(s.mean() - math.log(2) / lam) <= 0.02 * math.log(2) / lam


def test_exit_time_cv_shrinks():
    small = exit_time_probe(PopularityVector(np.ones(100)), 30, 10.0, 40)
    large = exit_time_probe(PopularityVector(np.ones(10_000)), 3000, 10.0, 40)
    assert large.cv() < small.cv()


def test_exit_time_first_arrival():
    p = PopularityVector(np.linspace(0.5, 1.5, 20))
    n = 400
    s = exit_time_probe(p, 1, 50.0, n)
    mean = 1 / p.total_rate
    # exponential first arrival: sd equals the mean
    assert abs(s.mean() - mean) <= 3 * mean / math.sqrt(n)


def test_exit_time_censoring():
    p = PopularityVector(np.full(100, 0.01))
    s = exit_time_probe(p, 50, 1.0, [3, 4])
    assert s.censored.all() and np.all(s.times == 1.0) and s.seeds == (3, 4)
    with pytest.raises(ValueError):
        exit_time_probe(p, 100, 1.0, 2)
