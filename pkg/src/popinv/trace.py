"""Request traces, per-document counts, count histograms and synthetic data.

All randomness goes through ``numpy.random.Generator`` backed by PCG64
(``numpy.random.default_rng(seed)``), so a seed pins the output across
platforms running the same NumPy major version.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

SCHEMA_VERSION = 1

__all__ = [
    "RequestTrace",
    "DocumentCounts",
    "CountHistogram",
    "GroundTruth",
    "TraceFormatError",
    "ingest_trace",
    "counts_from_trace",
    "histogram_from_counts",
    "shuffle_requests",
    "synth_pareto",
    "synth_delta",
    "trace_from_counts",
    "make_rng",
]


class TraceFormatError(ValueError):
    """Raised when a trace file line cannot be parsed."""


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for an explicit integer seed."""
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class RequestTrace:
    """Ordered requests, stored as interned integer ids.

    ``labels[ids[t]]`` is the identifier of the t-th request.  ``timestamps``
    is only populated by the timestamped Poisson simulator.
    """

    ids: np.ndarray
    labels: tuple
    window: float = 1.0
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("window must be > 0")
        if any(lab == "" for lab in self.labels):
            raise ValueError("identifiers must be non-empty")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], window: float = 1.0) -> "RequestTrace":
        index: dict[str, int] = {}
        ids = []
        for tok in tokens:
            tok = str(tok)
            if tok not in index:
                index[tok] = len(index)
            ids.append(index[tok])
        return cls(np.asarray(ids, dtype=np.int64), tuple(index), window)

    @property
    def requests(self) -> list[str]:
        labels = self.labels
        return [labels[i] for i in self.ids.tolist()]

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass(frozen=True, eq=False)
class DocumentCounts:
    """Request count per observed document (zero counts never stored)."""

    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        if len(self.labels) != len(self.values):
            raise ValueError("labels and values differ in length")
        if len(self.values) and int(np.min(self.values)) < 1:
            raise ValueError("stored counts must be >= 1")

    @classmethod
    def from_mapping(cls, counts: Mapping[str, int]) -> "DocumentCounts":
        return cls(tuple(counts), np.asarray(list(counts.values()), dtype=np.int64))

    @property
    def counts(self) -> dict[str, int]:
        return dict(zip(self.labels, self.values.tolist()))

    @property
    def observed_docs(self) -> int:
        return len(self.labels)

    @property
    def total_requests(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, DocumentCounts):
            return NotImplemented
        return self.counts == other.counts


@dataclass(frozen=True)
class CountHistogram:
    """``tally[j]`` documents were requested exactly ``j`` times."""

    tally: Mapping[int, int]

    def __post_init__(self):
        clean = {}
        for j, c in self.tally.items():
            j, c = int(j), int(c)
            if j < 1 or c < 1:
                raise ValueError(f"invalid histogram entry {j}: {c}")
            clean[j] = c
        object.__setattr__(self, "tally", dict(sorted(clean.items())))

    @property
    def observed_docs(self) -> int:
        return sum(self.tally.values())

    @property
    def max_count(self) -> int:
        return max(self.tally) if self.tally else 0

    @property
    def counts(self) -> np.ndarray:
        """Distinct observed counts j, increasing."""
        return np.fromiter(self.tally.keys(), dtype=np.int64, count=len(self.tally))

    @property
    def docs(self) -> np.ndarray:
        return np.fromiter(self.tally.values(), dtype=np.int64, count=len(self.tally))

    @property
    def proportions(self) -> np.ndarray:
        """m_j = c_j / K0, aligned with :attr:`counts`."""
        return self.docs / self.observed_docs

    @property
    def total_requests(self) -> int:
        return sum(j * c for j, c in self.tally.items())

    def is_empty(self) -> bool:
        return not self.tally

    def scaled(self, factor: int) -> "CountHistogram":
        return CountHistogram({j: c * factor for j, c in self.tally.items()})

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "observed_docs": self.observed_docs,
            "tally": {str(j): c for j, c in self.tally.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CountHistogram":
        hist = cls({int(j): int(c) for j, c in data["tally"].items()})
        declared = data.get("observed_docs")
        if declared is not None and int(declared) != hist.observed_docs:
            raise ValueError("observed_docs does not match the tally")
        return hist

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CountHistogram":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    popularities: np.ndarray
    generator: dict
    seed: int
    catalog_size: int = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.popularities, dtype=float)
        if lam.size and not np.all(lam > 0):
            raise ValueError("popularities must be > 0")
        object.__setattr__(self, "popularities", lam)
        object.__setattr__(self, "catalog_size", int(lam.size))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "generator": self.generator,
            "seed": self.seed,
            "catalog_size": self.catalog_size,
        }

    def save(self, json_path, popularities_path=None) -> None:
        """Write the descriptor; popularities go to a raw float64 column."""
        meta = self.to_dict()
        if popularities_path is not None:
            self.popularities.astype("<f8").tofile(popularities_path)
            meta["popularities_file"] = str(popularities_path)
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)


# -- ingestion ---------------------------------------------------------------

def ingest_trace(source, fmt: str = "id-per-line", window: float = 1.0) -> RequestTrace:
    """Read a trace from a binary stream, a path, or raw bytes.

    `fmt` is ``"id-per-line"`` or ``"csv-timestamp-id"``; for the csv form a
    non-numeric first line is taken as a header.  Timestamps are validated
    and dropped: only request order is kept.
    """
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TraceFormatError(f"trace is not valid UTF-8: {exc}") from exc

    lines = text.splitlines()
    tokens = []
    if fmt == "id-per-line":
        for lineno, line in enumerate(lines, start=1):
            tok = line.strip()
            if not tok:
                # a trailing blank line is tolerated, embedded ones are not
                if all(not rest.strip() for rest in lines[lineno:]):
                    break
                raise TraceFormatError(f"line {lineno}: empty identifier")
            tokens.append(tok)
    elif fmt == "csv-timestamp-id":
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TraceFormatError(f"line {lineno}: expected 'timestamp,identifier'")
            stamp, tok = parts[0].strip(), parts[1].strip()
            try:
                float(stamp)
            except ValueError:
                if lineno == 1:
                    continue
                raise TraceFormatError(f"line {lineno}: bad timestamp {stamp!r}") from None
            if not tok:
                raise TraceFormatError(f"line {lineno}: empty identifier")
            tokens.append(tok)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return RequestTrace.from_tokens(tokens, window)


def write_trace(trace: RequestTrace, stream) -> None:
    labels = trace.labels
    buf = io.StringIO()
    for i in trace.ids.tolist():
        buf.write(labels[i])
        buf.write("\n")
    stream.write(buf.getvalue())


# -- reductions --------------------------------------------------------------

def counts_from_trace(trace: RequestTrace) -> DocumentCounts:
    """Occurrence count of each distinct identifier, first-seen order."""
    if len(trace) == 0:
        return DocumentCounts((), np.zeros(0, dtype=np.int64))
    per_id = np.bincount(trace.ids, minlength=trace.n_labels)
    _, first = np.unique(trace.ids, return_index=True)
    order = np.sort(first)
    seen = trace.ids[order]
    labels = tuple(trace.labels[i] for i in seen.tolist())
    return DocumentCounts(labels, per_id[seen].astype(np.int64))


def histogram_from_counts(dc: DocumentCounts) -> CountHistogram:
    if dc.observed_docs == 0:
        return CountHistogram({})
    j, c = np.unique(dc.values, return_counts=True)
    return CountHistogram(dict(zip(j.tolist(), c.tolist())))


def shuffle_requests(trace: RequestTrace, seed) -> RequestTrace:
    """Uniform random permutation of the requests (PCG64 + Fisher-Yates)."""
    rng = make_rng(seed)
    return RequestTrace(rng.permutation(trace.ids), trace.labels, trace.window)


def trace_from_counts(dc: DocumentCounts, seed) -> RequestTrace:
    """Materialize a shuffled trace in which document k appears n_k times."""
    ids = np.repeat(np.arange(dc.observed_docs, dtype=np.int64), dc.values)
    rng = make_rng(seed)
    rng.shuffle(ids)
    return RequestTrace(ids, tuple(dc.labels))


# -- synthetic datasets ------------------------------------------------------

def _counts_from_popularities(lam: np.ndarray, rng: np.random.Generator) -> DocumentCounts:
    n = rng.poisson(lam)
    seen = np.flatnonzero(n)
    labels = tuple(map(str, seen.tolist()))
    return DocumentCounts(labels, n[seen].astype(np.int64))


def synth_pareto(n_docs: int, alpha: float, xm: float, seed) -> tuple[GroundTruth, DocumentCounts]:
    """Pareto(alpha, xm) popularities, Poisson counts, zero counts dropped.

    Document labels are the decimal index into ``GroundTruth.popularities``.
    """
    if n_docs < 1 or not alpha > 0 or not xm > 0:
        raise ValueError("synth_pareto needs n_docs >= 1, alpha > 0, xm > 0")
    rng = make_rng(seed)
    u = 1.0 - rng.random(n_docs)  # (0, 1]
    lam = xm * u ** (-1.0 / alpha)
    gt = GroundTruth(lam, {"type": "pareto", "alpha": alpha, "xm": xm}, seed)
    return gt, _counts_from_popularities(lam, rng)


def synth_delta(n_docs: int, lam: float, seed) -> tuple[GroundTruth, DocumentCounts]:
    if n_docs < 1 or not lam > 0:
        raise ValueError("synth_delta needs n_docs >= 1 and lambda > 0")
    rng = make_rng(seed)
    pops = np.full(n_docs, float(lam))
    gt = GroundTruth(pops, {"type": "delta", "lambda": lam}, seed)
    return gt, _counts_from_popularities(pops, rng)


def counts_to_dict(dc: DocumentCounts) -> dict:
    hist = histogram_from_counts(dc)
    out = hist.to_dict()
    out["counts"] = dc.counts
    return out


def counts_from_dict(data: Mapping) -> DocumentCounts:
    if "counts" not in data:
        raise ValueError("JSON holds only a histogram; per-document counts are required")
    return DocumentCounts.from_mapping({str(k): int(v) for k, v in data["counts"].items()})

