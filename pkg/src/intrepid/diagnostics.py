"""Convergence and mixing metrics for sampled chains."""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateVariance, EmptySample, GridMismatch

DEFAULT_BINS = 100
PAD = 0.05
MAX_PAIR_DIMS = 5


@dataclass(frozen=True)
class BinnedDistribution:
    """Histogram masses on a rectangular 2-D grid plus one out-of-range cell."""

    edges: tuple
    masses: np.ndarray
    out_of_range: float = 0.0

    def __post_init__(self):
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        for e in edges:
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("bin edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != tuple(e.size - 1 for e in edges):
            raise ValueError("mass array does not match the grid")
        object.__setattr__(self, "masses", masses)
        total = masses.sum() + self.out_of_range
        if masses.size and abs(total - 1.0) > 1e-12 and total > 0:
            raise ValueError(f"masses sum to {total}, not 1")

    def same_grid(self, other: "BinnedDistribution") -> bool:
        return len(self.edges) == len(other.edges) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.edges, other.edges))


def grid_from_reference(reference, bins: int = DEFAULT_BINS, pad: float = PAD) -> tuple:
    """Uniform edges spanning the reference range widened by ``pad`` per side."""
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    lo, hi = reference.min(axis=0), reference.max(axis=0)
    width = np.where(hi > lo, hi - lo, 1.0)
    return tuple(np.linspace(a - pad * w, b + pad * w, bins + 1) for a, b, w in zip(lo, hi, width))


def bin_samples(samples, edges) -> BinnedDistribution:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise EmptySample("cannot bin an empty sample")
    if samples.shape[1] != len(edges):
        raise GridMismatch(f"samples have {samples.shape[1]} columns, grid has {len(edges)} axes")
    counts, _ = np.histogramdd(samples, bins=edges)
    n = samples.shape[0]
    inside = counts.sum()
    return BinnedDistribution(edges, counts / n, (n - inside) / n)


def tvd(a: BinnedDistribution, b: BinnedDistribution) -> float:
    if not a.same_grid(b):
        raise GridMismatch("distributions are binned on different grids")
    return 0.5 * float(np.abs(a.masses - b.masses).sum() + abs(a.out_of_range - b.out_of_range))


def _pairs(d: int):
    return list(itertools.combinations(range(min(d, MAX_PAIR_DIMS)), 2))


class TvdGrid:
    """Binning built once from a reference sample and reused for every chain.

    In 2-D this is one histogram; for d > 2 the distance is the maximum over
    the 2-D marginals of the first five coordinates.
    """

    def __init__(self, reference, bins: int = DEFAULT_BINS, pad: float = PAD):
        reference = np.atleast_2d(np.asarray(reference, dtype=float))
        self.d = reference.shape[1]
        self.pairs = [(0, 1)] if self.d == 2 else _pairs(self.d)
        self.edges = grid_from_reference(reference, bins, pad)
        self.reference = [bin_samples(reference[:, list(p)], self._edges(p)) for p in self.pairs]

    def _edges(self, pair):
        return (self.edges[pair[0]], self.edges[pair[1]])

    def bin(self, samples) -> list[BinnedDistribution]:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.d:
            raise GridMismatch(f"expected {self.d} columns, got {samples.shape[1]}")
        return [bin_samples(samples[:, list(p)], self._edges(p)) for p in self.pairs]

    def tvd(self, samples) -> float:
        return max(tvd(a, b) for a, b in zip(self.bin(samples), self.reference))


def mean_error(samples, reference_mean, reference_cov) -> float:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0:
        raise EmptySample("no samples")
    m = samples.mean(axis=0)
    return float(np.linalg.norm(m - reference_mean) / np.sqrt(np.trace(np.atleast_2d(reference_cov))))


def cov_error(samples, reference_cov) -> float:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise EmptySample("need at least two samples for a covariance")
    ref = np.atleast_2d(reference_cov)
    c = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    return float(np.linalg.norm(c - ref, "fro") / np.sqrt(np.trace(ref)))


class RunningMoments:
    """Streaming mean and covariance (Welford update, Chan merge)."""

    def __init__(self, d: int):
        self.n = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros((d, d))

    def update(self, x) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        other = RunningMoments(x.shape[1])
        other.n = x.shape[0]
        other.mean = x.mean(axis=0)
        dx = x - other.mean
        other.m2 = dx.T @ dx
        self.merge(other)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        self.mean = self.mean + delta * (other.n / n)
        self.n = n
        return self

    @property
    def covariance(self) -> np.ndarray:
        if self.n < 2:
            raise EmptySample("need at least two samples for a covariance")
        return self.m2 / (self.n - 1)


def lag_correlation(chain, k: int) -> np.ndarray:
    """Per-dimension Pearson correlation between states t and t + k."""
    x = getattr(chain, "samples", chain)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if k < 0 or x.shape[0] <= k:
        raise ValueError(f"chain of length {x.shape[0]} has no lag {k}")
    a, b = x[: x.shape[0] - k], x[k:]
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    sa = np.sqrt(np.sum(a * a, axis=0))
    sb = np.sqrt(np.sum(b * b, axis=0))
    if np.any(sa == 0) or np.any(sb == 0):
        raise DegenerateVariance("a coordinate is constant over the chain")
    return np.sum(a * b, axis=0) / (sa * sb)


def lag_correlation_summary(chains, k: int) -> dict:
    """Pool per-chain lag-k correlations into mean and quantiles per dimension."""
    vals = []
    for c in chains:
        try:
            vals.append(lag_correlation(c, k))
        except DegenerateVariance:
            vals.append(np.full(np.shape(getattr(c, "samples", c))[-1], 1.0))
    vals = np.array(vals)
    q = np.quantile(vals, [0.05, 0.25, 0.5, 0.75, 0.95], axis=0)
    return {"k": k, "mean": vals.mean(axis=0).tolist(), "q05": q[0].tolist(), "q25": q[1].tolist(),
            "median": q[2].tolist(), "q75": q[3].tolist(), "q95": q[4].tolist()}


def ensemble_tvd(chains, l: int, reference) -> float:
    """TVD between the l-th states of all chains and a reference binning.

    ``reference`` is a :class:`BinnedDistribution` (2-D) or a :class:`TvdGrid`.
    """
    states = []
    for c in chains:
        x = getattr(c, "samples", c)
        if np.shape(x)[0] <= l:
            raise ValueError(f"chain of length {np.shape(x)[0]} has no state {l}")
        states.append(x[l])
    states = np.array(states)
    if isinstance(reference, TvdGrid):
        return reference.tvd(states)
    return tvd(bin_samples(states, reference.edges), reference)


def mode_occupancy(samples, mode_regions: Sequence[Callable[[np.ndarray], np.ndarray]],
                   empty_ok: bool = False) -> np.ndarray:
    """Fraction of samples inside each region predicate (regions assumed disjoint)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0 or samples.size == 0:
        if empty_ok:
            return np.zeros(len(mode_regions))
        raise EmptySample("no samples")
    return np.array([np.mean(np.asarray(region(samples), dtype=bool)) for region in mode_regions])


@dataclass
class DiagnosticsReport:
    tvd: float
    mean_error: float
    cov_error: float
    acceptance_total: float
    acceptance_intrepid: float
    acceptance_local: float
    lag_correlations: dict = field(default_factory=dict)
    mode_occupancy: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isnan(self.tvd) or 0.0 <= self.tvd <= 1.0 + 1e-12):
            raise ValueError("tvd must lie in [0, 1]")
        if self.mean_error < 0 or self.cov_error < 0:
            raise ValueError("errors are nonnegative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lag_correlations"] = {str(k): np.asarray(v).tolist() for k, v in self.lag_correlations.items()}
        out["mode_occupancy"] = np.asarray(self.mode_occupancy).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self, chain_id) -> list[dict]:
        """Flat rows, one per metric."""
        rows = [{"chain_id": chain_id, "metric": m, "value": getattr(self, m)} for m in
                ("tvd", "mean_error", "cov_error", "acceptance_total", "acceptance_intrepid", "acceptance_local")]
        for k, v in self.lag_correlations.items():
            for i, c in enumerate(np.atleast_1d(v)):
                rows.append({"chain_id": chain_id, "metric": f"lag{k}_x{i + 1}", "value": float(c)})
        for i, f in enumerate(self.mode_occupancy):
            rows.append({"chain_id": chain_id, "metric": f"mode{i + 1}", "value": float(f)})
        return rows


def reports_to_csv(reports: Sequence[DiagnosticsReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["chain_id", "metric", "value"], lineterminator="\n")
    w.writeheader()
    for i, r in enumerate(reports):
        w.writerows(r.csv_rows(i))
    return buf.getvalue()


def diagnose(record, grid: Optional[TvdGrid], ref_mean, ref_cov, lags: Sequence[int] = (),
             mode_regions: Sequence[Callable] = ()) -> DiagnosticsReport:
    """All per-chain metrics for one :class:`~intrepid.kernel.ChainRecord`."""
    x = record.samples
    lag = {}
    for k in lags:
        if k < x.shape[0]:
            try:
                lag[k] = lag_correlation(x, k)
            except DegenerateVariance:
                lag[k] = np.full(x.shape[1], np.nan)
    return DiagnosticsReport(
        tvd=grid.tvd(x) if grid is not None else np.nan,
        mean_error=mean_error(x, ref_mean, ref_cov),
        cov_error=cov_error(x, ref_cov) if x.shape[0] > 1 else np.nan,
        acceptance_total=record.acceptance_total,
        acceptance_intrepid=record.acceptance_intrepid,
        acceptance_local=record.acceptance_local,
        lag_correlations=lag,
        mode_occupancy=list(mode_occupancy(x, mode_regions)) if mode_regions else [],
        grid={"bins": int(grid.edges[0].size - 1), "pairs": grid.pairs} if grid is not None else {},
    )
