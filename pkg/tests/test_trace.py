import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popinv.trace import (
    CountHistogram,
    DocumentCounts,
    GroundTruth,
    RequestTrace,
    TraceFormatError,
    counts_from_dict,
    counts_from_trace,
    counts_to_dict,
    histogram_from_counts,
    ingest_trace,
    make_rng,
    shuffle_requests,
    synth_delta,
    synth_pareto,
    trace_from_counts,
    write_trace,
)


# -- ingestion -----------------------------------------------------------------

def test_ingest_id_per_line():
    tr = ingest_trace(b"a\nb\na")
    assert tr.requests == ["a", "b", "a"]
    assert tr.window == 1.0


def test_ingest_empty_is_valid():
    assert len(ingest_trace(b"")) == 0


def test_ingest_csv_keeps_order():
    assert ingest_trace(b"0.5,x\n0.7,y", "csv-timestamp-id").requests == ["x", "y"]


def test_ingest_csv_header_and_stream(tmp_path):
    p = tmp_path / "t.csv"
    p.write_bytes(b"time,id\n1.0,q\n2.0,r\n")
    assert ingest_trace(p, "csv-timestamp-id").requests == ["q", "r"]
    assert ingest_trace(io.BytesIO(b"1,z\n"), "csv-timestamp-id").requests == ["z"]


def test_ingest_trailing_blank_lines_ok():
    assert ingest_trace(b"a\nb\n\n\n").requests == ["a", "b"]


@pytest.mark.parametrize("raw, fmt, line", [
    (b"a\n\nb\n", "id-per-line", 2),
    (b"1.0,a\n2.0\n", "csv-timestamp-id", 2),
    (b"1.0,a\nzz,b\n", "csv-timestamp-id", 2),
    (b"1.0,a\n2.0, \n", "csv-timestamp-id", 2),
])
def test_ingest_errors_name_the_line(raw, fmt, line):
    with pytest.raises(TraceFormatError, match=f"line {line}"):
        ingest_trace(raw, fmt)


def test_ingest_rejects_bad_utf8_and_format():
    with pytest.raises(TraceFormatError):
        ingest_trace(b"\xff\xfe")
    with pytest.raises(ValueError):
        ingest_trace(b"a", "xml")


def test_write_trace_round_trip():
    tr = RequestTrace.from_tokens(["x", "y", "x"])
    buf = io.StringIO()
    write_trace(tr, buf)
    assert ingest_trace(buf.getvalue().encode()).requests == tr.requests


def test_trace_invariants():
    with pytest.raises(ValueError):
        RequestTrace.from_tokens(["a"], window=0)
    with pytest.raises(ValueError):
        RequestTrace.from_tokens(["a", ""])


# -- reductions ----------------------------------------------------------------

def test_counts_and_histogram_examples():
    dc = counts_from_trace(RequestTrace.from_tokens("aba"))
    assert dc.counts == {"a": 2, "b": 1}
    assert dc.observed_docs == 2
    h = histogram_from_counts(DocumentCounts.from_mapping({"a": 2, "b": 1, "c": 2}))
    assert h.tally == {1: 1, 2: 2}
    assert (h.observed_docs, h.max_count) == (3, 2)


def test_empty_reductions():
    dc = counts_from_trace(RequestTrace.from_tokens([]))
    assert dc.counts == {} and dc.observed_docs == 0
    h = histogram_from_counts(dc)
    assert h.is_empty() and h.observed_docs == 0


def test_histogram_proportions_sum_exactly():
    h = CountHistogram({1: 3, 2: 5, 7: 11})
    assert math.fsum(h.proportions) == 1.0
    assert h.total_requests == 3 + 10 + 77


def test_histogram_validation_and_json():
    with pytest.raises(ValueError):
        CountHistogram({0: 1})
    with pytest.raises(ValueError):
        CountHistogram({1: 0})
    h = CountHistogram({3: 2, 1: 4})
    again = CountHistogram.from_json(h.to_json())
    assert again.tally == h.tally and list(again.tally) == [1, 3]
    data = json.loads(h.to_json())
    assert data["observed_docs"] == 6 and data["tally"] == {"1": 4, "3": 2}
    data["observed_docs"] = 7
    with pytest.raises(ValueError):
        CountHistogram.from_dict(data)


def test_counts_json_round_trip():
    dc = DocumentCounts.from_mapping({"a": 3, "b": 1})
    assert counts_from_dict(json.loads(json.dumps(counts_to_dict(dc)))) == dc
    with pytest.raises(ValueError):
        counts_from_dict(CountHistogram({1: 1}).to_dict())


def test_document_counts_rejects_zero():
    with pytest.raises(ValueError):
        DocumentCounts(("a",), np.array([0]))


# -- shuffling -------------------------------------------------------------------

def test_shuffle_fixed_point_and_determinism():
    one = RequestTrace.from_tokens(["z"])
    assert shuffle_requests(one, 3).requests == ["z"]
    tr = RequestTrace.from_tokens([str(i % 17) for i in range(500)])
    a, b = shuffle_requests(tr, 9), shuffle_requests(tr, 9)
    assert a.requests == b.requests
    assert a.requests != tr.requests
    assert histogram_from_counts(counts_from_trace(a)) == histogram_from_counts(counts_from_trace(tr))


def test_shuffle_is_uniform_on_small_trace():
    tr = RequestTrace.from_tokens("abc")
    seen = {}
    for s in range(6000):
        key = "".join(shuffle_requests(tr, s).requests)
        seen[key] = seen.get(key, 0) + 1
    assert len(seen) == 6
    # chi-square with 5 dof; 20.5 is the 0.999 quantile
    chi2 = sum((c - 1000) ** 2 / 1000 for c in seen.values())
    assert chi2 < 20.5


def test_trace_from_counts_round_trip():
    dc = DocumentCounts.from_mapping({"a": 2, "b": 1})
    tr = trace_from_counts(dc, 0)
    assert sorted(tr.requests) == ["a", "a", "b"]
    assert counts_from_trace(tr) == dc
    assert trace_from_counts(dc, 0).requests == tr.requests


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3),
                       st.integers(1, 20), max_size=30),
       st.integers(0, 2**32 - 1))
def test_round_trip_property(counts, seed):
    dc = DocumentCounts.from_mapping(counts)
    tr = trace_from_counts(dc, seed)
    assert len(tr) == sum(counts.values())
    assert counts_from_trace(tr) == dc


def test_rng_requires_seed():
    with pytest.raises(ValueError):
        make_rng(None)
    assert make_rng(5).random() == np.random.Generator(np.random.PCG64(5)).random()


# -- synthetic data --------------------------------------------------------------

def test_synth_delta_full_scale(delta_sample):
    gt, dc, _ = delta_sample
    assert gt.catalog_size == 100_000 and np.all(gt.popularities == 4.0)
    assert abs(dc.observed_docs - 98_000) <= 500
    assert abs(dc.total_requests - 400_000) <= 3 * math.sqrt(400_000)
    # binomial 3-sigma band around 1 - exp(-4)
    p = -math.expm1(-4.0)
    assert abs(dc.observed_docs / 1e5 - p) <= 3 * math.sqrt(p * (1 - p) / 1e5)
    assert abs(dc.observed_docs / 1e5 - 0.981684) <= 0.002


def test_delta_histogram_mode_at_four(delta_sample):
    h = delta_sample[2]
    # zero-truncated Poisson(4) has tied modes at 3 and 4 (4**4/4! == 4**3/3!)
    top2 = sorted(h.tally, key=h.tally.get)[-2:]
    assert set(top2) == {3, 4}


def test_synth_delta_single_doc():
    for seed in range(20):
        gt, dc = synth_delta(1, 0.5, seed)
        assert dc.observed_docs in (0, 1)
        assert all(v >= 1 for v in dc.counts.values())


def test_synth_pareto_desk_scale(prt_sample):
    gt, dc, h = prt_sample
    assert abs(dc.observed_docs / 1e6 - 0.19) <= 0.005
    mean = 1.6 * 0.1 / 0.6
    assert abs(dc.total_requests / 1e6 - mean) <= 0.02 * mean
    assert gt.popularities.min() >= 0.1
    assert set(map(int, dc.labels)) <= set(range(gt.catalog_size))


def test_synth_pareto_counts_are_poisson(prt_sample):
    gt, dc, _ = prt_sample
    n = np.zeros(gt.catalog_size)
    n[np.asarray(dc.labels, dtype=np.int64)] = dc.values
    edges = [0.1, 0.15, 0.25, 0.5, 1.0, 3.0]
    for lo, hi in zip(edges, edges[1:]):
        sel = (gt.popularities >= lo) & (gt.popularities < hi)
        # the spread of lambda inside a bin adds Var(lambda) to the count variance
        ratio = (n[sel].var() - gt.popularities[sel].var()) / n[sel].mean()
        assert 0.9 <= ratio <= 1.1, (lo, hi, ratio)


def test_generators_deterministic_and_validated():
    a = synth_pareto(1000, 1.6, 0.1, 3)[1]
    b = synth_pareto(1000, 1.6, 0.1, 3)[1]
    assert a == b
    for bad in [(0, 1.6, 0.1), (10, 0, 0.1), (10, 1.6, -1)]:
        with pytest.raises(ValueError):
            synth_pareto(*bad, seed=0)
    with pytest.raises(ValueError):
        synth_delta(10, 0.0, 0)


def test_ground_truth_save(tmp_path):
    gt = GroundTruth(np.array([0.5, 2.0]), {"type": "delta", "lambda": 1}, 4)
    gt.save(tmp_path / "gt.json", tmp_path / "gt.f64")
    meta = json.loads((tmp_path / "gt.json").read_text())
    assert meta["catalog_size"] == 2 and meta["seed"] == 4
    assert np.array_equal(np.fromfile(tmp_path / "gt.f64", dtype="<f8"), [0.5, 2.0])
    with pytest.raises(ValueError):
        GroundTruth(np.array([1.0, 0.0]), {}, 0)
