"""File formats: timestamp logs, log-binned histograms, fit artifacts.

Timestamps travel as newline-delimited integer milliseconds with an
optional ``unit=ms`` header line.  Fit results travel as versioned JSON;
floats go through Python's shortest round-trip repr, so serialization is
lossless bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fit import FitResult
from .likelihood import ItiSet, ObjectiveValue
from .model import ModelParams, RefractoryKernel
from .selection import ComparisonMatrix
from .simulate import EventTrain

__all__ = [
    "LogBinnedHistogram",
    "load_timestamps",
    "save_timestamps",
    "compute_itis",
    "log_binned_histogram",
    "fit_log_slope",
    "serialize_fit",
    "deserialize_fit",
    "serialize_comparison",
    "write_atomic",
]

log = logging.getLogger(__name__)

_FIT_FORMAT = "burstfit-fit"
_FIT_VERSION = 1

# intervals shorter than the recording resolution are floored to it
_MIN_INTERVAL = 1e-3


@dataclass(frozen=True)
class LogBinnedHistogram:
    """Histogram on geometric bins, normalized to a probability density."""

    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray
    n_total: int

    @property
    def centers(self) -> np.ndarray:
        """Geometric bin midpoints."""
        return np.sqrt(self.edges[:-1] * self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        yield from source.splitlines(keepends=True)
        return
    yield from source


def load_timestamps(source) -> EventTrain:
    """Parse newline-delimited millisecond timestamps into an EventTrain.

    source may be a path, a bytes blob, or an iterable of lines.  A
    single ``unit=ms`` header line is allowed at the top.  Timestamps
    are sorted and exact duplicates collapsed (count logged); anything
    non-integer raises with its line number.
    """
    values: list[int] = []
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        text = raw.strip()
        if not text:
            continue
        if lineno == 1 and text.replace(" ", "") == "unit=ms":
            continue
        try:
            values.append(int(text))
        except ValueError:
            raise ValueError(
                f"line {lineno}: expected an integer millisecond timestamp, got {text!r}"
            ) from None
    if not values:
        raise ValueError("timestamp stream contains no events")
    ts = np.sort(np.asarray(values, dtype=np.int64))
    unique = np.unique(ts)
    n_dup = ts.size - unique.size
    if n_dup:
        log.info("collapsed %d duplicate timestamp(s)", n_dup)
    return EventTrain(unique)


def save_timestamps(train: EventTrain, path) -> None:
    """Write a train in the same format load_timestamps reads."""
    body = "unit=ms\n" + "\n".join(str(int(t)) for t in train.timestamps_ms) + "\n"
    write_atomic(path, body)


def compute_itis(train: EventTrain) -> ItiSet:
    """Consecutive-event intervals in seconds.

    Sub-millisecond intervals are floored to 1 ms; after duplicate
    collapsing they cannot occur, but the guard keeps hand-built trains
    safe too.
    """
    if train.n_events < 2:
        raise ValueError("need at least 2 events to form intervals")
    iv = np.diff(train.timestamps_ms) / 1000.0
    return ItiSet(np.maximum(iv, _MIN_INTERVAL))


def log_binned_histogram(
    data: ItiSet, bins_per_decade: int = 8, bin_range: tuple[float, float] | None = None
) -> LogBinnedHistogram:
    """Density estimate on geometric bins.

    Empty bins stay in the output with zero density; a single distinct
    value degenerates to one bin centered on it.
    """
    if bins_per_decade < 1:
        raise ValueError("bins_per_decade must be at least 1")
    iv = data.intervals
    lo, hi = bin_range if bin_range is not None else (float(iv.min()), float(iv.max()))
    if not 0.0 < lo <= hi:
        raise ValueError("histogram range must be positive and ordered")
    step = 10.0 ** (1.0 / bins_per_decade)
    if lo == hi:
        edges = np.array([lo / math.sqrt(step), lo * math.sqrt(step)])
    else:
        n_bins = max(1, math.ceil(round(bins_per_decade * math.log10(hi / lo), 9)))
        edges = lo * step ** np.arange(n_bins + 1)
        edges[-1] = max(edges[-1], hi)
    counts, _ = np.histogram(iv, bins=edges)
    n_total = int(counts.sum())
    densities = counts / (max(n_total, 1) * np.diff(edges))
    return LogBinnedHistogram(edges=edges, counts=counts, densities=densities, n_total=n_total)


def fit_log_slope(
    hist: LogBinnedHistogram, tau_min: float, tau_max: float
) -> float:
    """Least-squares slope of log density vs log time over occupied bins."""
    centers = hist.centers
    keep = (hist.counts > 0) & (centers >= tau_min) & (centers <= tau_max)
    if keep.sum() < 2:
        raise ValueError("need at least 2 occupied bins in range to fit a slope")
    x = np.log10(centers[keep])
    y = np.log10(hist.densities[keep])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def write_atomic(path, content: str) -> None:
    """Write via a temp file and rename, so readers never see partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def serialize_fit(result: FitResult) -> str:
    """Versioned JSON for a FitResult; floats survive exactly."""
    p = result.params_star
    doc = {
        "format": _FIT_FORMAT,
        "version": _FIT_VERSION,
        "variant": p.variant,
        "params": {
            "a": p.a,
            "b": p.b,
            "c": p.c,
            "gamma": list(p.kernel.gamma),
            "alpha": list(p.kernel.alpha),
        },
        "converged": result.converged,
        "reason": result.reason,
        "n_projections": result.n_projections,
        "bic": result.bic,
        "n_data": result.n_data,
        "data_digest": result.data_digest,
        "objective_trace": [
            [v.log_likelihood, v.penalty, v.objective] for v in result.objective_trace
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _field(doc: dict, name: str):
    if name not in doc:
        raise ValueError(f"fit document is missing required field {name!r}")
    return doc[name]


def deserialize_fit(text: str | bytes) -> FitResult:
    """Inverse of serialize_fit; rejects unknown versions loudly."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"fit document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != _FIT_FORMAT:
        raise ValueError("not a fit document (missing format tag)")
    version = _field(doc, "version")
    if version != _FIT_VERSION:
        raise ValueError(
            f"fit document version {version!r} is not supported (expected {_FIT_VERSION})"
        )
    raw_params = _field(doc, "params")
    gamma = tuple(float(g) for g in _field(raw_params, "gamma"))
    alpha = tuple(float(al) for al in _field(raw_params, "alpha"))
    kernel = (
        RefractoryKernel(gamma=gamma, alpha=alpha) if gamma else RefractoryKernel.none()
    )
    params = ModelParams(
        a=float(_field(raw_params, "a")),
        b=float(_field(raw_params, "b")),
        c=float(_field(raw_params, "c")),
        kernel=kernel,
        variant=str(_field(doc, "variant")),
    )
    trace = tuple(
        ObjectiveValue(float(ll), float(pen), float(obj))
        for ll, pen, obj in _field(doc, "objective_trace")
    )
    return FitResult(
        params_star=params,
        objective_trace=trace,
        converged=bool(_field(doc, "converged")),
        reason=str(_field(doc, "reason")),
        n_projections=int(_field(doc, "n_projections")),
        bic=float(_field(doc, "bic")),
        n_data=int(_field(doc, "n_data")),
        data_digest=str(_field(doc, "data_digest")),
    )


def serialize_comparison(matrix: ComparisonMatrix) -> str:
    """Versioned JSON for a variant comparison."""
    doc = {
        "format": "burstfit-comparison",
        "version": 1,
        "bic": dict(matrix.bic),
        "preference": [
            {"i": i, "j": j, "verdict": verdict}
            for (i, j), verdict in sorted(matrix.preference.items())
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
