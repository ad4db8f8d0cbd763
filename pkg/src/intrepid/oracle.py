"""Ground truth that does not depend on the samplers under test.

Reference draws come from rejection sampling; normalising constants and cell
probabilities come from midpoint-rule integration on fine grids.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.integrate import quad_vec
from scipy.cluster.vq import kmeans2

from .errors import BoundaryMassWarning, BoundViolation, EmptySample, NonterminatingWarning

MIN_ACCEPTANCE = 1e-5
MAX_BATCH = 1_000_000
CHUNK = 1 << 20


@dataclass
class ReferenceSet:
    samples: np.ndarray
    seed: int
    target: str
    accepted: int = 0
    proposed: int = 0
    envelope: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else np.nan

    def save(self, path) -> Path:
        """Write ``<path>.npy`` plus a ``<path>.json`` sidecar; returns the .npy path."""
        path = Path(path)
        stem = path.with_suffix("") if path.suffix in (".npy", ".json") else path
        stem.parent.mkdir(parents=True, exist_ok=True)
        np.save(stem.with_suffix(".npy"), self.samples)
        side = {"seed": self.seed, "target": self.target, "n": self.n, "accepted": self.accepted,
                "proposed": self.proposed, "envelope": self.envelope, "meta": self.meta}
        if self.n >= 2:
            mean, cov = reference_moments(self)
            side.update(mean=mean.tolist(), cov=cov.tolist())
        stem.with_suffix(".json").write_text(json.dumps(side, indent=2))
        return stem.with_suffix(".npy")

    @classmethod
    def load(cls, path) -> "ReferenceSet":
        path = Path(path)
        stem = path.with_suffix("") if path.suffix in (".npy", ".json") else path
        side = json.loads(stem.with_suffix(".json").read_text())
        samples = np.load(stem.with_suffix(".npy"))
        return cls(samples, side["seed"], side["target"], side.get("accepted", 0), side.get("proposed", 0),
                   side.get("envelope", ""), side.get("meta", {}))


def _rejection(target, n, bound, rng, envelope):
    d = target.dim
    out = []
    have = 0
    proposed = 0
    hits = 0
    warned = False
    acc_rate = None
    while have < n:
        need = n - have
        m = need * 2 if acc_rate is None else int(need / max(acc_rate, 1e-7) * 1.2) + 100
        m = int(min(max(m, 1000), MAX_BATCH))
        x = envelope.sample(rng, m)
        lr = np.asarray(envelope.log_ratio(x), dtype=float)
        log_bound = np.log(bound)
        if np.any(lr > log_bound + 1e-12):
            raise BoundViolation(f"T/bound reached {np.exp(lr.max() - log_bound):.6g} > 1 for {target.name}")
        u = rng.random(m)
        keep = np.log(u) < lr - log_bound
        acc = x[keep]
        out.append(acc[:need])
        have += min(acc.shape[0], need)
        proposed += m
        hits += acc.shape[0]
        acc_rate = max(hits, 1) / proposed
        if not warned and proposed >= 1_000_000 and hits / proposed < MIN_ACCEPTANCE:
            warnings.warn(f"rejection acceptance {hits / proposed:.2e} for {target.name}", NonterminatingWarning)
            warned = True
    samples = np.concatenate(out) if out else np.empty((0, d))
    return samples.reshape(-1, d), proposed, hits


def rejection_sample(target, n: int, bound: Optional[float] = None, rng: Optional[np.random.Generator] = None,
                     envelope=None, seed: int = 0) -> ReferenceSet:
    """n IID draws from the target by rejection from its envelope.

    The default envelope is the parent with acceptance T(x) / bound; targets
    with unbounded T ship an exact envelope instead.
    """
    env = envelope or target.default_envelope()
    bound = env.bound if bound is None else float(bound)
    rng = np.random.default_rng(seed) if rng is None else rng
    if n == 0:
        return ReferenceSet(np.empty((0, target.dim)), seed, target.name, 0, 0, env.name)
    samples, proposed, hits = _rejection(target, n, bound, rng, env)
    return ReferenceSet(samples, seed, target.name, hits, proposed, env.name)


def reference_set(target, n: int, seed: int = 0, chunks: int = 1) -> ReferenceSet:
    """Rejection sample in ``chunks`` independent sub-streams and concatenate."""
    seqs = np.random.SeedSequence(seed).spawn(chunks)
    sizes = [n // chunks + (i < n % chunks) for i in range(chunks)]
    parts = [rejection_sample(target, k, rng=np.random.default_rng(s), seed=seed) for k, s in zip(sizes, seqs)]
    return ReferenceSet(np.concatenate([p.samples for p in parts]), seed, target.name,
                        sum(p.accepted for p in parts), sum(p.proposed for p in parts), parts[0].envelope,
                        {"chunks": chunks})


def reference_moments(ref) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(getattr(ref, "samples", ref))
    if x.shape[0] == 0:
        raise EmptySample("reference set is empty")
    mean = x.mean(axis=0)
    if x.shape[0] == 1:
        return mean, np.zeros((x.shape[1], x.shape[1]))
    return mean, np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


# ---------------------------------------------------------------------------
# grid integration


def _midpoints(lo, hi, k):
    h = (hi - lo) / k
    return lo + h * (np.arange(k) + 0.5), h


def _sum_density(log_density, axes, shift=None):
    """sum of exp(log_density) over the tensor grid, evaluated in chunks."""
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    total = 0.0
    peak = -np.inf
    for s in range(0, pts.shape[0], CHUNK):
        lv = np.asarray(log_density(pts[s : s + CHUNK]), dtype=float)
        peak = max(peak, float(np.max(lv)))
        if shift is not None:
            total += float(np.sum(np.exp(lv - shift)))
    return total, peak


def grid_normalization(log_density: Callable, box, resolution: int = 400) -> float:
    """Midpoint-rule integral of exp(log_density) over ``box`` (one row per axis).

    Warns with :class:`BoundaryMassWarning` when the density half a cell
    outside the box exceeds 1e-8 of its interior maximum.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    axes, widths = zip(*(_midpoints(lo, hi, resolution) for lo, hi in box))
    _, peak = _sum_density(log_density, axes)
    if not np.isfinite(peak):
        return 0.0
    total, _ = _sum_density(log_density, axes, shift=peak)
    _check_boundary(log_density, box, axes, widths, peak)
    return float(total * np.prod(widths) * np.exp(peak))


def _check_boundary(log_density, box, axes, widths, peak):
    worst = -np.inf
    for i, (lo, hi) in enumerate(box):
        for edge in (lo - 0.5 * widths[i], hi + 0.5 * widths[i]):
            face = list(axes)
            face[i] = np.array([edge])
            _, p = _sum_density(log_density, face)
            worst = max(worst, p)
    if worst - peak > np.log(1e-8):
        warnings.warn(f"density just outside the box is {np.exp(worst - peak):.2e} of its maximum",
                      BoundaryMassWarning)


def cell_probabilities(log_density: Callable, edges, sub: int = 40, log_norm: Optional[float] = None) -> np.ndarray:
    """Integral of the density over each cell of a 2-D grid, sub x sub midpoints per cell.

    The density is divided by exp(log_norm) when given.
    """
    ex, ey = (np.asarray(e, dtype=float) for e in edges)
    nx, ny = ex.size - 1, ey.size - 1
    # fine midpoints, cell by cell so cell sums line up with the coarse grid
    fx = (ex[:-1, None] + (np.arange(sub) + 0.5)[None] / sub * np.diff(ex)[:, None]).ravel()
    fy = (ey[:-1, None] + (np.arange(sub) + 0.5)[None] / sub * np.diff(ey)[:, None]).ravel()
    wx = np.repeat(np.diff(ex) / sub, sub)
    wy = np.repeat(np.diff(ey) / sub, sub)
    shift = 0.0 if log_norm is None else log_norm
    vals = np.empty((fx.size, fy.size))
    rows = max(1, CHUNK // fy.size)
    for s in range(0, fx.size, rows):
        xs = fx[s : s + rows]
        pts = np.column_stack([np.repeat(xs, fy.size), np.tile(fy, xs.size)])
        vals[s : s + rows] = np.exp(np.asarray(log_density(pts), dtype=float) - shift).reshape(xs.size, fy.size)
    w = vals * wx[:, None] * wy[None, :]
    return w.reshape(nx, sub, ny, sub).sum(axis=(1, 3))


@dataclass
class Chi2Result:
    statistic: float
    dof: int
    pvalue: float
    observed: np.ndarray
    expected: np.ndarray


def chi2_from_probabilities(counts, probs, min_expected: float = 5.0) -> Chi2Result:
    """Pearson chi-square with cells of expected count < min_expected pooled together."""
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    n = counts.sum()
    expected = probs / probs.sum() * n
    small = expected < min_expected
    obs = np.append(counts[~small], counts[small].sum())
    exp = np.append(expected[~small], expected[small].sum())
    if exp[-1] < min_expected:
        # fold a still-small pool into the smallest kept cell
        if obs.size > 1:
            j = int(np.argmin(exp[:-1]))
            obs[j] += obs[-1]
            exp[j] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1
    return Chi2Result(stat, dof, float(stats.chi2.sf(stat, dof)), obs, exp)


def chi2_gof(samples, log_density: Callable, edges, box=None, sub: int = 40, resolution: int = 2000,
             min_expected: float = 5.0) -> Chi2Result:
    """Goodness of fit of 2-D samples against a density on a rectangular grid.

    If ``box`` is given the density is normalised by a midpoint integral over
    it, otherwise it is taken as normalised.  Mass outside the grid forms one
    extra cell.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    log_norm = None if box is None else np.log(grid_normalization(log_density, box, resolution))
    probs = cell_probabilities(log_density, edges, sub, log_norm)
    outside_p = max(1.0 - probs.sum(), 0.0)
    counts, _ = np.histogramdd(samples, bins=edges)
    outside_n = samples.shape[0] - counts.sum()
    return chi2_from_probabilities(np.append(counts.ravel(), outside_n), np.append(probs.ravel(), outside_p),
                                   min_expected)


def quantile_edges(samples, bins: int = 20, lo_q: float = 0.005, hi_q: float = 0.995) -> tuple:
    """Uniform per-axis edges over a central quantile range of the samples."""
    samples = np.atleast_2d(samples)
    lo = np.quantile(samples, lo_q, axis=0)
    hi = np.quantile(samples, hi_q, axis=0)
    return tuple(np.linspace(a, b, bins + 1) for a, b in zip(lo, hi))


def section_cell_probabilities(ind: str, row: str, edges, epsrel: float = 1e-10) -> tuple[np.ndarray, float]:
    """Cell masses and total mass of I_ind * f_row on a 2-D grid.

    x2 is integrated in closed form over the support's x2-sections and x1
    adaptively, split at every point where the sections kink.  Returns
    unnormalised cell masses and the normalising constant.
    """
    from .targets import SECTION_BREAKS, X1_RANGE, x2_mass, x2_sections

    ex, ey = (np.asarray(e, dtype=float) for e in edges)
    a2, b2 = ey[:-1], ey[1:]

    def column(x1):
        total = np.zeros(a2.size)
        for lo, hi in x2_sections(ind, np.array(x1)):
            total += x2_mass(row, x1, np.maximum(lo, a2), np.minimum(hi, b2))
        return total

    def whole(x1):
        return np.array([sum(float(x2_mass(row, x1, lo, hi)) for lo, hi in x2_sections(ind, np.array(x1)))])

    lo1, hi1 = X1_RANGE[row]
    breaks = [b for b in SECTION_BREAKS[ind] if lo1 < b < hi1]
    z = quad_vec(whole, lo1, hi1, points=breaks or None, epsabs=0.0, epsrel=epsrel, limit=2000)[0][0]
    cells = np.empty((ex.size - 1, ey.size - 1))
    for i in range(ex.size - 1):
        pts = [b for b in SECTION_BREAKS[ind] if ex[i] < b < ex[i + 1]]
        cells[i] = quad_vec(column, ex[i], ex[i + 1], points=pts or None, epsabs=1e-14 * z, epsrel=epsrel,
                            limit=2000)[0]
    return cells, float(z)


def target_gof(ref: ReferenceSet, target, bins: int = 20, sub: int = 40, resolution: int = 3000) -> Chi2Result:
    """Chi-square of a reference set against the normalised target on a bins x bins grid.

    The grid spans the central 99% of the sample along each axis and the rest
    of the plane is one extra cell.  The nine 2-D cases use the semi-analytic
    section integrals; other targets fall back to the midpoint rule on their box.
    """
    edges = quantile_edges(ref.samples, bins)
    counts, _ = np.histogramdd(ref.samples, bins=edges)
    outside_n = ref.n - counts.sum()
    if "indicator" in target.meta and "density" in target.meta:
        cells, z = section_cell_probabilities(target.meta["indicator"], target.meta["density"], edges)
        probs = cells / z
    else:
        if target.box is None:
            raise ValueError(f"target {target.name!r} has no integration box")
        log_norm = np.log(grid_normalization(target.log_density_uncounted, target.box, resolution))
        probs = cell_probabilities(target.log_density_uncounted, edges, sub, log_norm)
    outside_p = max(1.0 - probs.sum(), 0.0)
    return chi2_from_probabilities(np.append(counts.ravel(), outside_n), np.append(probs.ravel(), outside_p))


# ---------------------------------------------------------------------------
# modes


@dataclass
class ModeSplit:
    centres: np.ndarray
    fractions: np.ndarray

    def label(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        dist = np.sum((x[:, None, :] - self.centres[None]) ** 2, axis=-1)
        return np.argmin(dist, axis=1)

    def regions(self) -> list:
        return [lambda x, k=k: self.label(x) == k for k in range(self.centres.shape[0])]


def two_means(ref, seed: int = 0, min_fraction: float = 0.02, target=None) -> ModeSplit:
    """2-means clustering of a reference set, checked to be a genuine split.

    Both clusters must hold at least ``min_fraction`` of the samples; if a
    target is given, the density midway between the centres must be below
    the density at both centres.
    """
    x = np.atleast_2d(getattr(ref, "samples", ref))
    centres, labels = kmeans2(x, 2, seed=seed, minit="++")
    order = np.argsort(centres[:, 0])
    centres = centres[order]
    fractions = np.array([np.mean(labels == k) for k in order])
    if fractions.min() < min_fraction:
        raise ValueError(f"cluster split is lopsided: fractions {fractions}")
    if target is not None:
        lp = target.log_density_uncounted(np.vstack([centres, centres.mean(axis=0)]))
        if not lp[2] < min(lp[0], lp[1]):
            raise ValueError("no density valley between the two cluster centres")
    return ModeSplit(centres, fractions)
