"""Angular, radial and component-wise proposal distributions.

Sampling goes through inverse CDFs so that a chain consumes a fixed number of
uniforms per step regardless of which branch it takes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

TWO_PI = 2.0 * np.pi
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class AngularProposal:
    """Perturbation law for angle ``j`` (1-based) of a ``d``-dimensional state.

    The perturbation ``phi`` is confined to ``[-theta, span - theta]`` so the
    new angle stays in range; ``span`` is pi for polar angles and 2*pi for the
    azimuth.  ``loc`` shifts the truncated normal and exists only to build
    deliberately asymmetric proposals.
    """

    j: int
    d: int
    kind: str = "uniform"
    sigma: float | None = None
    loc: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "truncnorm"):
            raise ValueError(f"unknown angular proposal kind {self.kind!r}")
        if not 1 <= self.j <= self.d - 1:
            raise ValueError(f"angle index {self.j} out of range for d={self.d}")
        if self.kind == "truncnorm":
            if self.sigma is None:
                object.__setattr__(self, "sigma", np.pi if self.is_azimuth else np.pi / 2)
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")

    @property
    def is_azimuth(self) -> bool:
        return self.j == self.d - 1

    @property
    def span(self) -> float:
        return TWO_PI if self.is_azimuth else np.pi

    def support(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -theta, self.span - theta

    def _z(self, theta):
        lo, hi = self.support(theta)
        a = (lo - self.loc) / self.sigma
        b = (hi - self.loc) / self.sigma
        return a, b

    def ppf(self, u, theta):
        u = np.asarray(u, dtype=float)
        lo, hi = self.support(theta)
        if self.kind == "uniform":
            return lo + u * self.span
        a, b = self._z(theta)
        # mirror when both bounds sit in the upper tail to keep ndtr accurate
        flip = a > 0
        a2 = np.where(flip, -b, a)
        b2 = np.where(flip, -a, b)
        u2 = np.where(flip, 1.0 - u, u)
        pa, pb = ndtr(a2), ndtr(b2)
        z = ndtri(pa + u2 * (pb - pa))
        z = np.where(flip, -z, z)
        return np.clip(self.loc + self.sigma * z, lo, hi)

    def logpdf(self, phi, theta):
        phi = np.asarray(phi, dtype=float)
        lo, hi = self.support(theta)
        inside = (phi >= lo) & (phi <= hi)
        if self.kind == "uniform":
            return np.where(inside, -np.log(self.span), -np.inf)
        a, b = self._z(theta)
        log_mass = _log_normal_mass(a, b)
        z = (phi - self.loc) / self.sigma
        val = -0.5 * z * z - LOG_SQRT_2PI - np.log(self.sigma) - log_mass
        return np.where(inside, val, -np.inf)

    def cdf(self, phi, theta):
        lo, hi = self.support(theta)
        phi = np.clip(np.asarray(phi, dtype=float), lo, hi)
        if self.kind == "uniform":
            return (phi - lo) / self.span
        a, b = self._z(theta)
        z = (phi - self.loc) / self.sigma
        return (ndtr(z) - ndtr(a)) / (ndtr(b) - ndtr(a))


def _log_normal_mass(a, b):
    """ln(Phi(b) - Phi(a)) for a < b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    a2 = np.where(upper, -b, a)
    b2 = np.where(upper, -a, b)
    lb, la = log_ndtr(b2), log_ndtr(a2)
    return lb + np.log1p(-np.exp(la - lb))


def sample_angle(p: AngularProposal, theta_current: float, rng: np.random.Generator) -> float:
    phi = float(p.ppf(rng.random(), theta_current))
    if p.is_azimuth and theta_current + phi >= TWO_PI:
        phi = -theta_current
    return phi


def log_density_angle(p: AngularProposal, phi: float, theta_current: float) -> float:
    return float(p.logpdf(phi, theta_current))


def verify_angular_symmetry(p: AngularProposal, n: int = 1000, seed: int = 0, tol: float = 1e-10) -> bool:
    """Check q(-phi | theta_s + phi) == q(phi | theta_s) on random pairs."""
    rng = np.random.default_rng(seed)
    theta_s = rng.random(n) * p.span
    phi = p.ppf(rng.random(n), theta_s)
    theta_c = theta_s + phi
    fwd = p.logpdf(phi, theta_s)
    rev = p.logpdf(-phi, theta_c)
    return bool(np.all(np.abs(np.exp(fwd) - np.exp(rev)) <= tol * np.maximum(1.0, np.exp(fwd))))


def default_angular(d: int, kind: str = "uniform") -> tuple[AngularProposal, ...]:
    """One proposal per angle; truncated normals get sigma = pi/2 (polar) and pi (azimuth)."""
    return tuple(AngularProposal(j, d, kind) for j in range(1, d))


@dataclass(frozen=True)
class RadialProposal:
    """Law of the multiplicative contour perturbation gamma on [1/gamma0, gamma0].

    ``kind="uniform"`` is the flat law; ``kind="power"`` has density
    proportional to ``gamma**(k/2)`` and satisfies q(g) = g**k q(1/g).
    """

    kind: str = "uniform"
    gamma0: float = 2.0
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "power"):
            raise ValueError(f"unknown radial proposal kind {self.kind!r}")
        if not self.gamma0 > 1.0:
            raise ValueError("gamma0 must exceed 1")
        if self.kind == "uniform" and self.k != 0.0:
            raise ValueError("the uniform radial proposal has k = 0")

    @property
    def symmetry_exponent(self) -> float:
        return 0.0 if self.kind == "uniform" else float(self.k)

    @property
    def _a(self) -> float:
        return self.k / 2.0 + 1.0

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        g0 = self.gamma0
        if self.kind == "uniform" or self.k == 0.0:
            return 1.0 / g0 + u * (g0 - 1.0 / g0)
        a = self._a
        if a == 0.0:
            return g0 ** (2.0 * u - 1.0)
        lo, hi = g0 ** (-a), g0 ** a
        return (lo + u * (hi - lo)) ** (1.0 / a)

    def logpdf(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        g0 = self.gamma0
        inside = (gamma >= 1.0 / g0) & (gamma <= g0)
        if self.kind == "uniform" or self.k == 0.0:
            val = -np.log(g0 - 1.0 / g0) + 0.0 * gamma
        elif self._a == 0.0:
            val = -np.log(2.0 * np.log(g0)) - np.log(gamma)
        else:
            k = self.k
            log_c = np.log(abs(k + 2.0)) + 0.5 * (k + 2.0) * np.log(g0) - np.log(2.0 * abs(g0 ** (k + 2.0) - 1.0))
            with np.errstate(divide="ignore"):
                val = log_c + 0.5 * k * np.log(gamma)
        return np.where(inside, val, -np.inf)

    def cdf(self, gamma):
        g0 = self.gamma0
        gamma = np.clip(np.asarray(gamma, dtype=float), 1.0 / g0, g0)
        if self.kind == "uniform" or self.k == 0.0:
            return (gamma - 1.0 / g0) / (g0 - 1.0 / g0)
        a = self._a
        if a == 0.0:
            return (np.log(gamma) / np.log(g0) + 1.0) / 2.0
        return (gamma ** a - g0 ** (-a)) / (g0 ** a - g0 ** (-a))


def sample_gamma(p: RadialProposal, rng: np.random.Generator) -> float:
    return float(p.ppf(rng.random()))


def log_density_gamma(p: RadialProposal, gamma: float) -> float:
    return float(p.logpdf(gamma))


def measure_symmetry_exponent(p: RadialProposal, n: int = 1000, seed: int = 0) -> float:
    """Estimate k in q(g) = g**k q(1/g); raises if the ratio is not a pure power."""
    rng = np.random.default_rng(seed)
    g = p.ppf(rng.random(n))
    g = g[np.abs(np.log(g)) > 1e-3]
    ks = (p.logpdf(g) - p.logpdf(1.0 / g)) / np.log(g)
    if np.ptp(ks) > 1e-9:
        raise ValueError("radial proposal has no power-law reciprocal symmetry")
    return float(np.mean(ks))


@dataclass(frozen=True)
class ComponentProposal:
    """Independent Gaussian random-walk scales for the component-wise kernel."""

    scales: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        scales = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if np.any(scales <= 0):
            raise ValueError("component scales must be positive")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def isotropic(cls, d: int, sigma: float = 1.0) -> "ComponentProposal":
        return cls(np.full(d, float(sigma)))

    def logpdf(self, i: int, y, x):
        s = self.scales[i]
        z = (np.asarray(y, dtype=float) - x) / s
        return -0.5 * z * z - LOG_SQRT_2PI - np.log(s)


def sample_component(p: ComponentProposal, i: int, x_i: float, rng: np.random.Generator) -> float:
    if not 0 <= i < p.scales.size:
        raise IndexError(f"component {i} out of range")
    return float(x_i + p.scales[i] * rng.standard_normal())
