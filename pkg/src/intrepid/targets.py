"""Benchmark targets pi(x) = T(x) p(x).

Nine 2-D cases built from six indicator functions and three densities, a
d-dimensional two-plane Gaussian, and the posterior of a two-storey shear
building's stiffness parameters given two measured natural frequencies.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import ConfigError, NonPhysical
from .parent import ParentModel, RtfClass, gaussian_parent, monotone_parent, with_rtf_class


@dataclass
class Envelope:
    """Proposal law for the rejection oracle.

    ``log_ratio(x)`` is ln pi(x) - ln g(x) up to a constant and must not
    exceed ln(bound) anywhere.
    """

    sample: Callable[[np.random.Generator, int], np.ndarray]
    log_ratio: Callable[[np.ndarray], np.ndarray]
    bound: float
    name: str = ""


class TargetModel:
    """Unnormalised target with an evaluation counter.

    The counter is bumped once per row passed to :meth:`log_density`; the
    oracle and the diagnostics go through :meth:`log_density_uncounted`.
    """

    def __init__(self, name: str, parent: ParentModel, log_transform: Callable[[np.ndarray], np.ndarray],
                 box=None, envelope: Optional[Envelope] = None, t_bound: Optional[float] = None,
                 meta: Optional[dict] = None):
        self.name = name
        self.parent = parent
        self.log_transform = log_transform
        self.box = None if box is None else np.asarray(box, dtype=float)
        self.envelope = envelope
        self.t_bound = t_bound
        self.meta = meta or {}
        self.evaluations = 0
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.parent.dim

    def log_parent(self, x):
        return self.parent.log_density(np.atleast_2d(x))

    def log_density_uncounted(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lt = np.asarray(self.log_transform(x), dtype=float)
        out = np.full(x.shape[0], -np.inf)
        live = lt > -np.inf
        if live.any():
            out[live] = lt[live] + self.parent.log_density(x[live])
        return out

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        with self._lock:
            self.evaluations += x.shape[0]
        return self.log_density_uncounted(x)

    def reset_counter(self) -> None:
        with self._lock:
            self.evaluations = 0

    def default_envelope(self) -> Envelope:
        if self.envelope is not None:
            return self.envelope
        if self.t_bound is None:
            raise ValueError(f"target {self.name!r} has no known bound on T")
        return Envelope(self.parent.sample, self.log_transform, self.t_bound, "parent")

    def __repr__(self):
        return f"TargetModel({self.name!r}, d={self.dim})"


# ---------------------------------------------------------------------------
# 2-D building blocks

CIRCLE_ANGLES = (3 * np.pi / 8, 5 * np.pi / 8, 15 * np.pi / 8)
CIRCLE_RADII = (0.8, 1.2, 1.6)
CIRCLE_CENTRES = tuple((4 * np.cos(a), 4 * np.sin(a)) for a in CIRCLE_ANGLES)


def _cols(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0], x[:, 1]


def _indicator_values(case: str, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1 = x[:, 0]
    if case == "I1":
        return np.minimum(1.25 - x1, 1.75 + x1) <= 0
    if case == "I3":
        return np.minimum(2.5 - x1, 2.5 + x1) <= 0
    x1, x2 = _cols(x)
    if case == "I2":
        return np.minimum(4 - 0.8 * x2 - x1, 2 + 0.8 * x2 + x1) <= 0
    if case == "I4":
        return 4 - np.hypot(x1, x2) <= 0
    if case == "I5":
        return 16 - x1 ** 2 - ((x2 - 2.8) / 1.7) ** 2 <= 0
    if case == "I6":
        gaps = [(x1 - cx) ** 2 + (x2 - cy) ** 2 - R ** 2 for (cx, cy), R in zip(CIRCLE_CENTRES, CIRCLE_RADII)]
        return np.min(gaps, axis=0) <= 0
    raise ValueError(f"unknown indicator {case!r}")


def indicator(case: str, x) -> int | np.ndarray:
    """Iverson bracket I1..I6; returns an int for a single point."""
    vals = _indicator_values(case, x).astype(int)
    return int(vals[0]) if np.ndim(x) == 1 else vals


def log_f(which: str, x) -> np.ndarray:
    x1, x2 = _cols(x)
    if which == "f1":
        return -0.5 * (x1 ** 2 + x2 ** 2)
    if which == "f2":
        with np.errstate(over="ignore"):
            return -(x1 + x2 + np.exp(-x1) + np.exp(-x2))
    if which == "f3":
        return -((1 - x1) ** 2 + 5 * (x2 - x1 ** 2) ** 2) / 20
    raise ValueError(f"unknown density {which!r}")


def density_f(which: str, x) -> float | np.ndarray:
    vals = np.exp(log_f(which, x))
    return float(vals[0]) if np.ndim(x) == 1 else vals


CASES = {
    1: ("gauss-ring", "I4", "f1"),
    2: ("gauss-planes", "I1", "f1"),
    3: ("gauss-circles", "I6", "f1"),
    4: ("gumbel-ring", "I4", "f2"),
    5: ("gumbel-planes", "I2", "f2"),
    6: ("gumbel-circles", "I6", "f2"),
    7: ("rosenbrock-ring", "I5", "f3"),
    8: ("rosenbrock-planes", "I3", "f3"),
    9: ("rosenbrock-circles", "I6", "f3"),
}

# boxes holding all but a negligible fraction of each target's mass
CASE_BOXES = {
    "f1": [[-9.0, 9.0], [-9.0, 9.0]],
    "f2": [[-4.0, 30.0], [-4.0, 30.0]],
    "f3": [[-26.0, 28.0], [-15.0, 800.0]],
}
CIRCLE_BOXES = {
    "f1": [[-3.5, 5.5], [-3.5, 5.5]],
    "f2": [[-3.5, 5.5], [-3.5, 5.5]],
    "f3": [[-3.5, 5.5], [-3.5, 5.5]],
}


# ---------------------------------------------------------------------------
# x2-sections for the semi-analytic oracle: at fixed x1 each support is a union
# of x2-intervals and each density integrates in closed form along x2

# x1 values where the sections change non-smoothly
SECTION_BREAKS = {
    "I1": (-1.75, 1.25),
    "I2": (),
    "I3": (-2.5, 2.5),
    "I4": (-4.0, 4.0),
    "I5": (-4.0, 4.0),
    "I6": tuple(c[0] + s * R for c, R in zip(CIRCLE_CENTRES, CIRCLE_RADII) for s in (-1, 1)),
}


def x2_sections(ind: str, x1) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint x2-intervals (lo, hi) of the support at each x1; lo >= hi means empty."""
    x1 = np.asarray(x1, dtype=float)
    inf = np.full(x1.shape, np.inf)
    if ind in ("I1", "I3"):
        keep = _indicator_values(ind, np.column_stack([x1.ravel(), np.zeros(x1.size)])).reshape(x1.shape)
        return [(np.where(keep, -inf, 0.0), np.where(keep, inf, 0.0))]
    if ind == "I2":
        return [(-inf, -(2 + x1) / 0.8), ((4 - x1) / 0.8, inf)]
    if ind in ("I4", "I5"):
        s = np.sqrt(np.maximum(16 - x1 ** 2, 0.0))
        c, k = (0.0, 1.0) if ind == "I4" else (2.8, 1.7)
        return [(-inf, c - k * s), (c + k * s, inf)]
    if ind == "I6":
        out = []
        for (cx, cy), R in zip(CIRCLE_CENTRES, CIRCLE_RADII):
            w = np.sqrt(np.maximum(R * R - (x1 - cx) ** 2, 0.0))
            out.append((cy - w, cy + w))
        return out
    raise ValueError(f"unknown indicator {ind!r}")


def _normal_mass(a, b):
    """Phi(b) - Phi(a) without cancellation in the upper tail."""
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def x2_mass(which: str, x1, lo, hi) -> np.ndarray:
    """Integral of f_which(x1, x2) over x2 in [lo, hi] (zero when lo >= hi)."""
    x1 = np.asarray(x1, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.maximum(np.asarray(hi, dtype=float), lo)
    if which == "f1":
        return np.exp(-0.5 * x1 ** 2) * np.sqrt(2 * np.pi) * _normal_mass(lo, hi)
    if which == "f2":
        with np.errstate(over="ignore"):
            return np.exp(-x1 - np.exp(-x1)) * (np.expm1(-np.exp(-hi)) - np.expm1(-np.exp(-lo)))
    if which == "f3":
        m = x1 ** 2
        r2 = np.sqrt(2.0)
        return np.exp(-((1 - x1) ** 2) / 20) * np.sqrt(4 * np.pi) * _normal_mass((lo - m) / r2, (hi - m) / r2)
    raise ValueError(f"unknown density {which!r}")


# x1 range carrying all but a negligible part of each density's mass
X1_RANGE = {"f1": (-40.0, 40.0), "f2": (-8.0, 60.0), "f3": (-60.0, 62.0)}


def _gaussian_ring_sampler(rng, n):
    # exact draw from f1 restricted to |x| >= 4: r^2 - 16 ~ Exp(mean 2)
    r = np.sqrt(16.0 + rng.exponential(2.0, n))
    a = rng.random(n) * 2 * np.pi
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


def _gumbel_sampler(rng, n):
    return rng.gumbel(0.0, 1.0, (n, 2))


def _rosenbrock_sampler(rng, n):
    x1 = 1.0 + np.sqrt(10.0) * rng.standard_normal(n)
    x2 = x1 ** 2 + np.sqrt(2.0) * rng.standard_normal(n)
    return np.column_stack([x1, x2])


def _log_indicator(ind):
    def fn(x):
        return np.where(_indicator_values(ind, x), 0.0, -np.inf)

    return fn


def make_case(n: int) -> TargetModel:
    """Case n of the 2-D suite: parent f1 (identity RTF about the origin), T = I * f_row / f1."""
    if n not in CASES:
        raise ValueError(f"case must be 1..9, got {n}")
    name, ind, row = CASES[n]
    parent = gaussian_parent(2)
    log_ind = _log_indicator(ind)

    if row == "f1":
        def log_transform(x):
            return log_ind(x)
    else:
        def log_transform(x):
            li = log_ind(x)
            out = np.full(li.shape, -np.inf)
            live = li > -np.inf
            xl = np.atleast_2d(x)[live]
            out[live] = log_f(row, xl) - log_f("f1", xl)
            return out

    if row == "f1" and ind == "I4":
        envelope = Envelope(_gaussian_ring_sampler, log_ind, 1.0, "radial-tail")
    elif row == "f1":
        envelope = None
    else:
        sampler = _gumbel_sampler if row == "f2" else _rosenbrock_sampler
        envelope = Envelope(sampler, log_ind, 1.0, row)
    box = CIRCLE_BOXES[row] if ind == "I6" else CASE_BOXES[row]
    return TargetModel(name, parent, log_transform, box=box, envelope=envelope,
                       t_bound=1.0 if row == "f1" else None, meta={"case": n, "indicator": ind, "density": row})


def make_gauss_planes(d: int) -> TargetModel:
    """I1(x_1) times the standard d-dimensional Gaussian."""
    if d < 2:
        raise ValueError("need d >= 2")
    parent = gaussian_parent(d)

    def log_transform(x):
        return np.where(_indicator_values("I1", x), 0.0, -np.inf)

    box = [[-9.0, 9.0]] * d
    return TargetModel(f"gauss-planes-d{d}", parent, log_transform, box=box, t_bound=1.0, meta={"d": d})


# ---------------------------------------------------------------------------
# shear-building posterior


@dataclass(frozen=True)
class OscillatorSpec:
    m1: float = 16.531e3
    m2: float = 16.131e3
    k0: float = 29.7e6
    measured: tuple = (3.13, 9.83)
    sigma_eps: float = 1.0 / 16.0
    prior_modes: tuple = (1.3, 0.8)
    prior_sds: tuple = (1.0, 1.0)
    rtf: str = "monotone-radial"
    # "literal": ln T = -J / (2 sigma_eps); "gaussian": ln T = -J / (2 sigma_eps^2)
    likelihood: str = "literal"

    def __post_init__(self):
        vals = (self.m1, self.m2, self.k0, self.sigma_eps, *self.measured, *self.prior_modes, *self.prior_sds)
        if any(not v > 0 for v in vals):
            raise ValueError("oscillator quantities must be positive")
        if self.likelihood not in ("literal", "gaussian"):
            raise ValueError("likelihood must be 'literal' or 'gaussian'")

    @property
    def error_scale(self) -> float:
        """Divisor of J / 2 in ln T."""
        return self.sigma_eps if self.likelihood == "literal" else self.sigma_eps ** 2


def eigenfrequencies(spec: OscillatorSpec, x) -> tuple[float, float] | tuple[np.ndarray, np.ndarray]:
    """Natural frequencies (Hz, ascending) of the 2-DOF shear chain with k_i = k0 x_i."""
    scalar = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, x2 = x[:, 0], x[:, 1]
    if np.any(x1 <= 0) or np.any(x2 <= 0):
        raise NonPhysical("stiffness factors must be positive")
    f1, f2 = _frequencies(spec, x1, x2)
    return (float(f1[0]), float(f2[0])) if scalar else (f1, f2)


def _frequencies(spec, x1, x2):
    # det(K - w^2 M) = 0 is a quadratic in w^2
    k1, k2 = spec.k0 * x1, spec.k0 * x2
    a = spec.m1 * spec.m2
    b = spec.m1 * k2 + spec.m2 * (k1 + k2)
    c = k1 * k2
    disc = np.sqrt(b * b - 4 * a * c)
    w2_hi = (b + disc) / (2 * a)
    w2_lo = c / (a * w2_hi)  # product of roots; avoids cancellation
    return np.sqrt(w2_lo) / (2 * np.pi), np.sqrt(w2_hi) / (2 * np.pi)


def lognormal_params(mode: float, sd: float) -> tuple[float, float]:
    """(mu, sigma) of the lognormal with the given mode and standard deviation."""
    # mode = exp(mu - s), var = (e^s - 1) e^{2 mu + s} with s = sigma^2 and mu = ln(mode) + s
    def gap(s):
        return np.log(np.expm1(s)) + 2 * np.log(mode) + 3 * s - 2 * np.log(sd)

    s = brentq(gap, 1e-12, 50.0, xtol=1e-14, rtol=1e-14)
    return float(np.log(mode) + s), float(np.sqrt(s))


def lognormal_prior(spec: OscillatorSpec) -> ParentModel:
    params = [lognormal_params(m, s) for m, s in zip(spec.prior_modes, spec.prior_sds)]
    mu = np.array([p[0] for p in params])
    sig = np.array([p[1] for p in params])
    log_norm = -np.sum(np.log(sig)) - np.log(2 * np.pi)

    def log_density(x):
        x = np.atleast_2d(x)
        out = np.full(x.shape[0], -np.inf)
        ok = np.all(x > 0, axis=-1)
        lx = np.log(x[ok])
        out[ok] = log_norm - np.sum(lx + (lx - mu) ** 2 / (2 * sig ** 2), axis=-1)
        return out

    def grad(x):
        x = np.atleast_2d(x)
        g = np.zeros_like(x)
        ok = np.all(x > 0, axis=-1)
        xo = x[ok]
        g[ok] = -(1.0 + (np.log(xo) - mu) / sig ** 2) / xo
        return g

    def sampler(rng, n):
        return np.exp(mu + sig * rng.standard_normal((n, 2)))

    anchor = np.array(spec.prior_modes, dtype=float)
    model = monotone_parent(log_density, anchor, grad_log_density=grad, sampler=sampler, name="lognormal-prior")
    model.meta.update(mu=mu.tolist(), sigma=sig.tolist())
    return model


def measure_of_fit(spec: OscillatorSpec, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f1, f2 = _frequencies(spec, x[:, 0], x[:, 1])
    m1, m2 = spec.measured
    return (f1 ** 2 / m1 ** 2 - 1) ** 2 + (f2 ** 2 / m2 ** 2 - 1) ** 2


def make_oscillator(spec: OscillatorSpec = OscillatorSpec()) -> TargetModel:
    """Posterior on (x1, x2): lognormal prior times exp(-J / (2 s)), s = sigma_eps or sigma_eps^2."""
    parent = lognormal_prior(spec)
    if spec.rtf != RtfClass.MONOTONE_RADIAL.value:
        parent = with_rtf_class(parent, RtfClass(spec.rtf))

    def log_transform(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], -np.inf)
        ok = np.all(x > 0, axis=-1)
        out[ok] = -measure_of_fit(spec, x[ok]) / (2 * spec.error_scale)
        return out

    return TargetModel("oscillator", parent, log_transform, box=[[0.0, 4.0], [0.0, 3.0]], t_bound=1.0,
                       meta={"spec": spec.__dict__})


# ---------------------------------------------------------------------------
# lookup by name

TARGET_NAMES = tuple(v[0] for v in CASES.values()) + ("gauss-planes-d<d>", "oscillator")


def make_target(name: str, **options) -> TargetModel:
    for n, (case_name, _, _) in CASES.items():
        if name in (case_name, f"case{n}", f"case-{n}"):
            return make_case(n)
    m = re.fullmatch(r"gauss-planes-d(\d+)", name)
    if m:
        return make_gauss_planes(int(m.group(1)))
    if name == "oscillator":
        return make_oscillator(OscillatorSpec(**options))
    raise ConfigError(f"unknown target {name!r}; choose from {', '.join(TARGET_NAMES)}")
