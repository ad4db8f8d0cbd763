"""Parent densities and radial transformation functions (RTFs).

An RTF ``R_{1,2}(r)`` maps a radius along direction ``theta_1`` to the radius
along ``theta_2`` that sits on the same parent-density contour, preserving
order.  Four constructions are supported:

* identity, for densities that depend only on the distance to the anchor;
* uniform scaling ``r * lam(theta_2) / lam(theta_1)`` for uniform densities,
  where ``lam`` is the radial extent of the support;
* ``Psi_2^{-1}(Psi_1(r))`` for densities that decrease strictly along every
  ray from the anchor (``Psi_theta`` is the density restricted to that ray);
* a piecewise map over user-supplied matched partitions of each ray into
  monotone and flat intervals.

All radial conditionals are handled in log space.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InversionFailure, RtfUnavailable
from .geometry import as_point, polar_to_cartesian

MAX_BISECTIONS = 200
MAX_DOUBLINGS = 200
INVERSION_RTOL = 1e-12
MATCH_TOL = 1e-9

LogDensity = Callable[[np.ndarray], np.ndarray]


class RtfClass(enum.Enum):
    IDENTITY = "identity"
    UNIFORM_SCALING = "uniform-scaling"
    MONOTONE_RADIAL = "monotone-radial"
    PIECEWISE_MATCHED = "piecewise-matched"
    NONE = "none"

    @property
    def exists(self) -> bool:
        return self is not RtfClass.NONE


class CriticalKind(enum.Enum):
    """Type of a critical radius along a ray."""

    MIN = "min"
    MAX = "max"
    FLAT_START = "flat-start"
    FLAT_END = "flat-end"


@dataclass(frozen=True)
class RtfEvaluation:
    r_out: float
    log_derivative: float


@dataclass(frozen=True)
class ParentModel:
    """Parent density p(x) with the metadata the Intrepid proposal needs.

    ``log_density`` must accept an ``(n, d)`` array and return ``(n,)`` values
    (``-inf`` off the support).  ``sampler(rng, n)`` is optional and only used
    by the rejection-sampling oracle.
    """

    log_density: LogDensity
    anchor: np.ndarray
    rtf_class: RtfClass
    radial_extent_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_log_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    partitions: Optional[Callable[[np.ndarray], tuple]] = None
    reference_direction: Optional[np.ndarray] = None
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        anchor = as_point(self.anchor)
        object.__setattr__(self, "anchor", anchor)
        if self.reference_direction is not None:
            ref = np.asarray(self.reference_direction, dtype=float)
            if ref.shape != (anchor.size - 1,):
                raise DimensionMismatch("reference direction needs d - 1 angles")
            object.__setattr__(self, "reference_direction", ref)
        if self.rtf_class is RtfClass.UNIFORM_SCALING and self.radial_extent_fn is None:
            raise ValueError("uniform-scaling parents need a radial extent function")
        if self.rtf_class is RtfClass.PIECEWISE_MATCHED and self.partitions is None:
            raise ValueError("piecewise parents need partition tables")

    @property
    def dim(self) -> int:
        return self.anchor.size

    @property
    def theta0(self) -> np.ndarray:
        """Reference direction; defaults to the first coordinate axis."""
        if self.reference_direction is not None:
            return self.reference_direction
        return np.zeros(self.dim - 1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError(f"parent {self.name!r} has no sampler")
        return self.sampler(rng, n)


# ---------------------------------------------------------------------------
# radial conditional


def log_radial_conditional(model: ParentModel, theta, r) -> np.ndarray:
    """ln Psi_theta(r) = ln p(anchor + (r, theta)), vectorised over rows."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    x = polar_to_cartesian(r, theta, model.anchor)
    return np.asarray(model.log_density(np.atleast_2d(x)), dtype=float)


def radial_conditional(model: ParentModel, theta, r) -> float:
    return float(np.exp(log_radial_conditional(model, theta, r))[0])


def _unit_vectors(theta) -> np.ndarray:
    return polar_to_cartesian(np.ones(theta.shape[:-1]), theta, 0.0)


def _dlog_psi(model: ParentModel, theta, r) -> np.ndarray:
    """d/dr ln Psi_theta(r); analytic gradient when available."""
    if model.grad_log_density is not None:
        x = polar_to_cartesian(r, theta, model.anchor)
        return np.sum(model.grad_log_density(x) * _unit_vectors(theta), axis=-1)
    h = 1e-6 * np.maximum(r, 1.0)
    lo = np.maximum(r - h, 0.0)
    hi = r + h
    return (log_radial_conditional(model, theta, hi) - log_radial_conditional(model, theta, lo)) / (hi - lo)


# ---------------------------------------------------------------------------
# uniform parents


def radial_extent(model: ParentModel, theta) -> float:
    if model.rtf_class is not RtfClass.UNIFORM_SCALING:
        raise RtfUnavailable(f"radial extent is only defined for uniform parents, not {model.rtf_class.value}")
    return float(model.radial_extent_fn(np.atleast_2d(np.asarray(theta, dtype=float)))[0])


def halfspace_extent(A: np.ndarray, b: np.ndarray, anchor: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Ray/polytope intersection for the support {x : A x <= b}."""
    A = np.asarray(A, dtype=float)
    slack = np.asarray(b, dtype=float) - A @ anchor
    if np.any(slack <= 0):
        raise ValueError("anchor must be strictly inside the polytope")

    def extent(theta: np.ndarray) -> np.ndarray:
        u = _unit_vectors(theta)
        rate = u @ A.T
        with np.errstate(divide="ignore"):
            t = np.where(rate > 0, slack / np.where(rate > 0, rate, 1.0), np.inf)
        lam = t.min(axis=-1)
        if np.any(~np.isfinite(lam)):
            raise ValueError("uniform support is unbounded along some direction")
        return lam

    return extent


# ---------------------------------------------------------------------------
# inversion helpers


def _bracket_and_bisect(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray, grow: bool) -> np.ndarray:
    """Vectorised root search for a function with f(lo) >= 0 > f(hi) style sign change.

    ``f`` is evaluated on full-length arrays.  If ``grow`` is set, ``hi`` is
    doubled (moving ``lo`` along) until the sign changes.
    """
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    f_lo = f(lo)
    if grow:
        f_hi = f(hi)
        for _ in range(MAX_DOUBLINGS):
            need = f_hi >= 0
            if not need.any():
                break
            lo = np.where(need, hi, lo)
            f_lo = np.where(need, f_hi, f_lo)
            hi = np.where(need, 2.0 * hi, hi)
            f_hi = np.where(need, f(hi), f_hi)
        else:
            raise InversionFailure("could not bracket the contour radius")
    rising = f_lo < 0  # increasing pieces: flip the sign convention
    for _ in range(MAX_BISECTIONS):
        if np.all(hi - lo <= INVERSION_RTOL * np.maximum(hi, 1e-300)):
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        go_right = np.where(rising, fm < 0, fm >= 0)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    if np.all(hi - lo <= INVERSION_RTOL * np.maximum(hi, 1e-300)):
        return 0.5 * (lo + hi)
    raise InversionFailure("bisection did not converge in 200 iterations")


def invert_monotone(model: ParentModel, theta, level, r_guess) -> np.ndarray:
    """Radius along ``theta`` where ln Psi equals ``level`` (Psi decreasing)."""
    theta = np.atleast_2d(theta)
    level = np.atleast_1d(np.asarray(level, dtype=float))
    out = np.full(level.shape, np.nan)
    ok = np.isfinite(level)
    if not ok.any():
        return out
    th = theta[ok] if theta.shape[0] == level.shape[0] else np.broadcast_to(theta, (ok.sum(), theta.shape[-1]))
    lv = level[ok]
    guess = np.maximum(np.broadcast_to(np.atleast_1d(r_guess), level.shape)[ok], 1e-3)

    # points along each ray are anchor + r * unit, so the unit vectors are reused
    unit = _unit_vectors(th)

    def f(r):
        return np.asarray(model.log_density(model.anchor + r[:, None] * unit), dtype=float) - lv

    def df(r):
        return np.sum(model.grad_log_density(model.anchor + r[:, None] * unit) * unit, axis=-1)

    if model.grad_log_density is None:
        out[ok] = _bracket_and_bisect(f, np.zeros_like(lv), guess, grow=True)
    else:
        out[ok] = _bracket_and_newton(f, df, guess)
    return out


def _bracket_and_newton(f, df, guess) -> np.ndarray:
    """Root of a decreasing ``f`` on [0, inf): bracket by doubling, then Newton kept inside the bracket."""
    lo = np.zeros_like(guess)
    hi = guess.astype(float).copy()
    f_hi = f(hi)
    for _ in range(MAX_DOUBLINGS):
        need = f_hi >= 0
        if not need.any():
            break
        lo = np.where(need, hi, lo)
        hi = np.where(need, 2.0 * hi, hi)
        f_hi = np.where(need, f(hi), f_hi)
    else:
        raise InversionFailure("could not bracket the contour radius")
    # the input radius is usually close to the answer, so start there when bracketed
    x = np.where((guess > lo) & (guess < hi), guess, 0.5 * (lo + hi))
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(MAX_BISECTIONS):
        fx = f(x)
        lo = np.where(fx >= 0, x, lo)
        hi = np.where(fx < 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / df(x)
        newton = x - step
        ok = np.isfinite(newton) & (newton >= lo) & (newton <= hi)
        x_new = np.where(ok, newton, 0.5 * (lo + hi))
        conv = np.abs(x_new - x) <= INVERSION_RTOL * np.maximum(np.abs(x_new), 1e-300)
        conv |= hi - lo <= INVERSION_RTOL * np.maximum(hi, 1e-300)
        x = np.where(done, x, x_new)
        done |= conv
        if done.all():
            # one last Newton polish from the converged point
            fx = f(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                polished = x - fx / df(x)
            good = np.isfinite(polished) & (np.abs(polished - x) <= 1e-9 * np.maximum(np.abs(x), 1e-300))
            return np.where(good, polished, x)
    raise InversionFailure("Newton iteration did not converge")


def _rtf_monotone(model, theta_from, theta_to, r):
    level = log_radial_conditional(model, theta_from, r)
    level = np.where(r > 0, level, np.nan)
    r_out = invert_monotone(model, theta_to, level, r)
    r_out = np.where(r > 0, r_out, 0.0)
    good = np.isfinite(r_out)
    logd = np.full(r.shape, np.nan)
    if good.any():
        g_from = _dlog_psi(model, theta_from[good], r[good])
        g_to = _dlog_psi(model, theta_to[good], r_out[good])
        with np.errstate(divide="ignore", invalid="ignore"):
            logd[good] = np.log(g_from / g_to)
    # at the anchor the log-slope ratio is 0/0; difference the map instead
    bad = good & ~np.isfinite(logd)
    if bad.any():
        h = 1e-6 * np.maximum(r[bad], 1.0)
        up = invert_monotone(model, theta_to[bad], log_radial_conditional(model, theta_from[bad], r[bad] + h), r[bad] + h)
        logd[bad] = np.log((up - r_out[bad]) / h)
    return r_out, logd


# ---------------------------------------------------------------------------
# piecewise matched partitions


@dataclass(frozen=True)
class Partition:
    radii: np.ndarray
    kinds: tuple

    def interval(self, r: float) -> int:
        return int(np.searchsorted(self.radii, r, side="right") - 1)

    def flat(self, i: int) -> bool:
        return self.kinds[i] is CriticalKind.FLAT_START


def _as_partition(table) -> Partition:
    radii, kinds = table
    radii = np.asarray(radii, dtype=float)
    kinds = tuple(CriticalKind(k) if not isinstance(k, CriticalKind) else k for k in kinds)
    if radii.size != len(kinds) or radii[0] != 0.0 or np.any(np.diff(radii) <= 0):
        raise ValueError("partition radii must start at 0, increase strictly, and carry one kind each")
    return Partition(radii, kinds)


def _solve_on_interval(model, theta, level, lo, hi):
    th = np.atleast_2d(theta)
    lv = np.atleast_1d(level)

    def f(r):
        return log_radial_conditional(model, th, r) - lv

    if np.isfinite(hi):
        return float(_bracket_and_bisect(f, np.array([lo]), np.array([hi]), grow=False)[0])
    return float(_bracket_and_bisect(f, np.array([lo]), np.array([max(2.0 * lo, lo + 1.0)]), grow=True)[0])


def _rtf_piecewise_one(model, th_from, th_to, r):
    p_from = _as_partition(model.partitions(th_from))
    p_to = _as_partition(model.partitions(th_to))
    i = p_from.interval(r)
    lo1 = p_from.radii[i]
    hi1 = p_from.radii[i + 1] if i + 1 < p_from.radii.size else np.inf
    lo2 = p_to.radii[i]
    hi2 = p_to.radii[i + 1] if i + 1 < p_to.radii.size else np.inf
    if p_from.flat(i):
        scale = (hi2 - lo2) / (hi1 - lo1)
        return lo2 + (r - lo1) * scale, float(np.log(scale))
    level = float(log_radial_conditional(model, th_from, r)[0])
    if r == lo1:
        r_out = lo2
    else:
        r_out = _solve_on_interval(model, th_to, level, lo2, hi2)
    g_from = _dlog_psi(model, th_from[None], np.array([r]))[0]
    g_to = _dlog_psi(model, th_to[None], np.array([r_out]))[0]
    if g_from != 0.0 and g_to != 0.0 and np.isfinite(g_from / g_to) and g_from / g_to > 0:
        return r_out, float(np.log(g_from / g_to))
    h = 1e-6 * max(r, 1.0)
    lv = float(log_radial_conditional(model, th_from, r + h)[0])
    up = _solve_on_interval(model, th_to, lv, lo2, hi2)
    return r_out, float(np.log((up - r_out) / h))


def validate_partitions(model: ParentModel, directions: np.ndarray) -> None:
    """Check the matched-partition conditions on a set of directions."""
    base = _as_partition(model.partitions(model.theta0))
    base_levels = log_radial_conditional(model, np.broadcast_to(model.theta0, (base.radii.size, model.dim - 1)), base.radii)
    for th in np.atleast_2d(directions):
        part = _as_partition(model.partitions(th))
        if part.radii.size != base.radii.size or part.kinds != base.kinds:
            raise ValueError("partition tables differ in length or critical-point types between directions")
        levels = log_radial_conditional(model, np.broadcast_to(th, (part.radii.size, model.dim - 1)), part.radii)
        both_zero = np.isneginf(levels) & np.isneginf(base_levels)
        mismatch = np.abs(np.exp(levels - base_levels) - 1.0)
        if np.any((mismatch > MATCH_TOL) & ~both_zero):
            raise ValueError("density values at matched critical radii differ between directions")


# ---------------------------------------------------------------------------
# public RTF interface


def rtf_map(model: ParentModel, theta_from, theta_to, r) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised RTF: returns (r_out, ln dR/dr).  NaN marks an unreachable contour."""
    cls = model.rtf_class
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n = r.shape[0]
    theta_from = np.broadcast_to(np.atleast_2d(np.asarray(theta_from, dtype=float)), (n, model.dim - 1))
    theta_to = np.broadcast_to(np.atleast_2d(np.asarray(theta_to, dtype=float)), (n, model.dim - 1))
    if cls is RtfClass.NONE:
        raise RtfUnavailable("parent has no radial transformation function")
    if cls is RtfClass.IDENTITY:
        return r.copy(), np.zeros(n)
    if cls is RtfClass.UNIFORM_SCALING:
        lam_from = model.radial_extent_fn(theta_from)
        lam_to = model.radial_extent_fn(theta_to)
        scale = lam_to / lam_from
        return r * scale, np.log(scale)
    if cls is RtfClass.MONOTONE_RADIAL:
        return _rtf_monotone(model, theta_from, theta_to, r)
    out = np.empty(n)
    logd = np.empty(n)
    for k in range(n):
        out[k], logd[k] = _rtf_piecewise_one(model, theta_from[k], theta_to[k], r[k])
    return out, logd


def rtf_apply(model: ParentModel, theta_from, theta_to, r: float) -> RtfEvaluation:
    if r < 0:
        raise ValueError("radius must be nonnegative")
    out, logd = rtf_map(model, theta_from, theta_to, np.array([r]))
    if not np.isfinite(out[0]):
        raise InversionFailure("target contour is not reachable along the destination direction")
    return RtfEvaluation(float(out[0]), float(logd[0]))


# ---------------------------------------------------------------------------
# constructors


def _random_directions(d: int, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    from .geometry import cartesian_to_polar

    _, th = cartesian_to_polar(rng.standard_normal((n, d)), np.zeros(d))
    return th


def gaussian_parent(d: int, mean=None, sd: float = 1.0) -> ParentModel:
    """Isotropic Gaussian; identity RTF about its mean."""
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    var = sd * sd

    def log_density(x):
        z = np.atleast_2d(x) - mean
        return -0.5 * np.sum(z * z, axis=-1) / var

    def grad(x):
        return -(np.atleast_2d(x) - mean) / var

    def sampler(rng, n):
        return mean + sd * rng.standard_normal((n, d))

    return ParentModel(log_density, mean, RtfClass.IDENTITY, grad_log_density=grad, sampler=sampler,
                       name=f"gaussian-{d}d")


def uniform_polytope_parent(A, b, anchor) -> ParentModel:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    anchor = np.asarray(anchor, dtype=float)

    def log_density(x):
        inside = np.all(np.atleast_2d(x) @ A.T <= b, axis=-1)
        return np.where(inside, 0.0, -np.inf)

    return ParentModel(log_density, anchor, RtfClass.UNIFORM_SCALING,
                       radial_extent_fn=halfspace_extent(A, b, anchor), name="uniform-polytope")


def uniform_box_parent(lower, upper, anchor=None) -> ParentModel:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    anchor = 0.5 * (lower + upper) if anchor is None else np.asarray(anchor, dtype=float)
    A = np.vstack([np.eye(d), -np.eye(d)])
    b = np.concatenate([upper, -lower])
    base = uniform_polytope_parent(A, b, anchor)

    def sampler(rng, n):
        return lower + (upper - lower) * rng.random((n, d))

    return ParentModel(base.log_density, anchor, RtfClass.UNIFORM_SCALING,
                       radial_extent_fn=base.radial_extent_fn, sampler=sampler, name="uniform-box")


def monotone_parent(log_density: LogDensity, anchor, grad_log_density=None, sampler=None,
                    reference_direction=None, check: bool = True, name: str = "") -> ParentModel:
    """Parent whose density decreases strictly along every ray from ``anchor``."""
    model = ParentModel(log_density, anchor, RtfClass.MONOTONE_RADIAL, grad_log_density=grad_log_density,
                        reference_direction=reference_direction, sampler=sampler, name=name)
    if check:
        check_radially_decreasing(model)
    return model


def check_radially_decreasing(model: ParentModel, n_directions: int = 16) -> None:
    radii = np.geomspace(1e-3, 1e2, 60)
    for th in _random_directions(model.dim, n_directions, seed=1):
        lp = log_radial_conditional(model, np.broadcast_to(th, (radii.size, model.dim - 1)), radii)
        finite = np.isfinite(lp[:-1])
        with np.errstate(invalid="ignore"):
            steps = np.diff(lp)
        if np.any(steps[finite] >= 0):
            raise ValueError("parent density is not strictly decreasing along every ray from the anchor")


def piecewise_parent(log_density: LogDensity, anchor, partitions, grad_log_density=None, sampler=None,
                     reference_direction=None, check_directions: int = 32, name: str = "") -> ParentModel:
    """Parent with matched critical-radius tables ``partitions(theta) -> (radii, kinds)``."""
    model = ParentModel(log_density, anchor, RtfClass.PIECEWISE_MATCHED, grad_log_density=grad_log_density,
                        partitions=partitions, reference_direction=reference_direction, sampler=sampler, name=name)
    validate_partitions(model, _random_directions(model.dim, check_directions, seed=2))
    return model


def generic_parent(log_density: LogDensity, anchor, sampler=None, name: str = "") -> ParentModel:
    """Parent without an RTF; Intrepid falls back to r_c = gamma * r_s."""
    return ParentModel(log_density, anchor, RtfClass.NONE, sampler=sampler, name=name)


def with_rtf_class(model: ParentModel, rtf_class: RtfClass) -> ParentModel:
    """Same density and metadata, different RTF treatment (e.g. force the fallback)."""
    return ParentModel(model.log_density, model.anchor, rtf_class, model.radial_extent_fn,
                       model.grad_log_density, model.partitions, model.reference_direction,
                       model.sampler, model.name, dict(model.meta))
