"""Trace-driven LRU simulation and a timestamped Poisson-IRM generator.

The LRU recency order is an intrusive doubly-linked list over the interned
document ids (``prev``/``next`` arrays with a sentinel at index ``n``) and
membership is a direct-addressed boolean array, so each request is O(1).
The inner loop is compiled with numba.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numba
import numpy as np

from .cache_model import HitRatioCurve, PopularityVector
from .trace import SCHEMA_VERSION, RequestTrace, make_rng

__all__ = [
    "SimResult",
    "ExitTimeSample",
    "lru_simulate",
    "lru_hits",
    "hr_curve_sim",
    "poisson_irm_simulate",
    "exit_time_probe",
]


@numba.njit(cache=True)
def _lru_kernel(ids, n_docs, capacity):
    head = n_docs  # sentinel: nxt[head] is most recent, prv[head] least recent
    prv = np.empty(n_docs + 1, dtype=np.int64)
    nxt = np.empty(n_docs + 1, dtype=np.int64)
    resident = np.zeros(n_docs, dtype=np.bool_)
    prv[head] = head
    nxt[head] = head
    size = 0
    hits = 0
    for t in range(ids.shape[0]):
        d = ids[t]
        if resident[d]:
            hits += 1
            # unlink
            nxt[prv[d]] = nxt[d]
            prv[nxt[d]] = prv[d]
        else:
            if size == capacity:
                victim = prv[head]
                nxt[prv[victim]] = head
                prv[head] = prv[victim]
                resident[victim] = False
            else:
                size += 1
            resident[d] = True
        # push front
        first = nxt[head]
        nxt[d] = first
        prv[d] = head
        prv[first] = d
        nxt[head] = d
    return hits


@dataclass(frozen=True)
class SimResult:
    hits: int
    misses: int
    capacity: int

    @property
    def requests(self) -> int:
        return self.hits + self.misses

    @property
    def hit_ratio(self) -> float:
        return self.hits / self.requests if self.requests else 0.0

    def to_dict(self, trace_descriptor: dict | None = None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "hits": self.hits,
            "misses": self.misses,
            "hit_ratio": self.hit_ratio,
            "capacity": self.capacity,
            "trace": trace_descriptor or {},
        }

    def to_json(self, trace_descriptor: dict | None = None) -> str:
        return json.dumps(self.to_dict(trace_descriptor), indent=2)


def lru_hits(ids: np.ndarray, n_docs: int, capacity: int) -> int:
    """Hit count of an LRU cache of `capacity` slots fed by dense ids."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n_docs):
        raise ValueError("document ids out of range")
    return int(_lru_kernel(ids, int(n_docs), int(capacity)))


def lru_simulate(trace: RequestTrace, capacity: int) -> SimResult:
    """Replay `trace` through an LRU cache that starts empty."""
    capacity = int(capacity)
    hits = lru_hits(trace.ids, trace.n_labels, capacity)
    return SimResult(hits, len(trace) - hits, capacity)


def hr_curve_sim(trace: RequestTrace, capacities, reference_catalog: float) -> HitRatioCurve:
    """One cold-start simulation per capacity; ``delta = capacity / K_ref``."""
    caps = np.asarray(capacities, dtype=np.int64).ravel()
    if caps.size == 0 or np.any(caps < 1):
        raise ValueError("capacities must be >= 1")
    if caps.size > 1 and not np.all(np.diff(caps) > 0):
        raise ValueError("capacities must be strictly increasing")
    if not reference_catalog > 0:
        raise ValueError("reference catalog must be > 0")
    hr = [lru_simulate(trace, c).hit_ratio for c in caps]
    return HitRatioCurve(caps / float(reference_catalog), hr, mode="transient",
                         source="simulation", window=trace.window,
                         reference_catalog=float(reference_catalog), cache_sizes=caps)


def poisson_irm_simulate(p: PopularityVector, W: float, seed) -> RequestTrace:
    """Independent Poisson request processes on [0, W], merged by time.

    Document k draws ``Poisson(lambda_k W)`` requests at i.i.d. uniform
    times; the trace carries the sorted timestamps and uses ``str(k)`` as
    the label of document k.
    """
    if not W > 0:
        raise ValueError("window must be > 0")
    rng = make_rng(seed)
    n = rng.poisson(p.lambdas * W)
    ids = np.repeat(np.arange(len(p), dtype=np.int64), n)
    times = rng.uniform(0.0, W, ids.size)
    order = np.argsort(times, kind="stable")
    labels = tuple(map(str, range(len(p))))
    return RequestTrace(ids[order], labels, float(W), times[order])


@dataclass(frozen=True, eq=False)
class ExitTimeSample:
    """Per-seed time at which C distinct documents had been requested.

    Runs that never reach C distinct documents inside the window are kept
    with ``times = W`` and ``censored = True``.
    """

    times: np.ndarray
    censored: np.ndarray
    seeds: tuple

    @property
    def uncensored(self) -> np.ndarray:
        return self.times[~self.censored]

    def mean(self) -> float:
        return float(self.uncensored.mean())

    def cv(self) -> float:
        x = self.uncensored
        return float(x.std(ddof=1) / x.mean())


def exit_time_probe(p: PopularityVector, C: int, W: float, seeds,
                    base_seed: int = 0) -> ExitTimeSample:
    """Exit-time sample over independent Poisson-IRM runs.

    `seeds` is either a count (seeds ``base_seed, base_seed + 1, ...``) or
    an explicit sequence of seeds.
    """
    C = int(C)
    if not 1 <= C < len(p):
        raise ValueError("need 1 <= C < K")
    seed_list = tuple(range(base_seed, base_seed + seeds)) if np.isscalar(seeds) else tuple(seeds)
    times = np.empty(len(seed_list))
    censored = np.zeros(len(seed_list), dtype=bool)
    for i, s in enumerate(seed_list):
        tr = poisson_irm_simulate(p, W, s)
        _, first = np.unique(tr.ids, return_index=True)
        if first.size < C:
            times[i], censored[i] = W, True
            continue
        first_times = np.sort(tr.timestamps[first])
        times[i] = first_times[C - 1]
    return ExitTimeSample(times, censored, seed_list)
