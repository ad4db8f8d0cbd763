"""Transition kernels: component-wise MH, the Intrepid explorative step, and their mixture.

Chains are advanced in lockstep as rows of an ``(n, d)`` array.  Each chain
owns a generator and draws its randomness in fixed-size blocks with a fixed
per-step layout, so a chain's trajectory does not depend on which other chains
share its batch.

Per-step layout (one row per chain)::

    uniforms: [u_mix, u_angle_1 .. u_angle_{d-1}, u_gamma, u_accept, u_local_1 .. u_local_d]
    normals:  [z_1 .. z_d]
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidStart
from .geometry import TWO_PI, cartesian_to_polar, log_sin_terms, polar_to_cartesian
from .parent import ParentModel, RtfClass, rtf_map
from .proposal import (
    AngularProposal,
    ComponentProposal,
    RadialProposal,
    default_angular,
    verify_angular_symmetry,
)

BLOCK = 1024


class KernelKind(str, enum.Enum):
    LOCAL = "Local"
    INTREPID = "Intrepid"


@functools.lru_cache(maxsize=256)
def _symmetric(p: AngularProposal) -> bool:
    return verify_angular_symmetry(p)


@dataclass(frozen=True)
class KernelConfig:
    """Mixture-kernel settings.

    Unset pieces are filled in for a given dimension by :meth:`bind`: uniform
    angular proposals (or truncated normals when ``angular_kind="truncnorm"``)
    and isotropic local steps of scale ``sigma_local``.  ``anchor`` and
    ``reference_direction`` override the parent's values.
    """

    beta: float = 0.1
    angular: tuple = ()
    radial: RadialProposal = field(default_factory=RadialProposal)
    component: Optional[ComponentProposal] = None
    anchor: Optional[np.ndarray] = None
    reference_direction: Optional[np.ndarray] = None
    angular_kind: str = "uniform"
    sigma_local: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        object.__setattr__(self, "angular", tuple(self.angular))
        if self.anchor is not None:
            object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        if self.reference_direction is not None:
            object.__setattr__(self, "reference_direction", np.asarray(self.reference_direction, dtype=float))

    def bind(self, d: int) -> "KernelConfig":
        """Fill defaults for dimension ``d`` and check every piece matches it."""
        angular = self.angular or default_angular(d, self.angular_kind)
        component = self.component or ComponentProposal.isotropic(d, self.sigma_local)
        if len(angular) != d - 1 or any(p.d != d for p in angular):
            raise DimensionMismatch(f"need {d - 1} angular proposals for d={d}")
        if [p.j for p in angular] != list(range(1, d)):
            raise DimensionMismatch("angular proposals must be ordered by index 1..d-1")
        if component.scales.size != d:
            raise DimensionMismatch(f"component proposal has {component.scales.size} scales, target has d={d}")
        if self.anchor is not None and self.anchor.shape != (d,):
            raise DimensionMismatch("anchor dimension does not match the target")
        if self.reference_direction is not None and self.reference_direction.shape != (d - 1,):
            raise DimensionMismatch("reference direction needs d - 1 angles")
        if angular is self.angular and component is self.component:
            return self
        return replace(self, angular=angular, component=component)

    @property
    def angular_symmetric(self) -> bool:
        return all(_symmetric(p) for p in self.angular)

    def resolve_anchor(self, parent: ParentModel) -> np.ndarray:
        if self.anchor is None:
            return parent.anchor
        if parent.rtf_class.exists and not np.array_equal(self.anchor, parent.anchor):
            raise ValueError("the anchor can only be moved for parents without an RTF")
        return self.anchor

    def resolve_theta0(self, parent: ParentModel) -> np.ndarray:
        return parent.theta0 if self.reference_direction is None else self.reference_direction


@dataclass
class TransitionOutcome:
    next_state: np.ndarray
    accepted: bool
    kernel_used: KernelKind
    log_rho: float
    candidate: np.ndarray
    log_density: float = np.nan
    accepted_components: int = 0


@dataclass
class ChainRecord:
    """Post-burn-in trajectory and bookkeeping for one chain.

    Local proposals are counted per component, so one CMH step contributes
    ``d`` proposals.
    """

    samples: np.ndarray
    intrepid_proposed: int = 0
    intrepid_accepted: int = 0
    local_proposed: int = 0
    local_accepted: int = 0
    target_evals: int = 0
    intrepid_steps: int = 0
    local_steps: int = 0

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def acceptance_intrepid(self) -> float:
        return self.intrepid_accepted / self.intrepid_proposed if self.intrepid_proposed else np.nan

    @property
    def acceptance_local(self) -> float:
        return self.local_accepted / self.local_proposed if self.local_proposed else np.nan

    @property
    def acceptance_total(self) -> float:
        n = self.intrepid_proposed + self.local_proposed
        return (self.intrepid_accepted + self.local_accepted) / n if n else np.nan


# ---------------------------------------------------------------------------
# proposal density and acceptance ratio


def _log_q_ratio(radial: RadialProposal, gamma):
    return radial.logpdf(1.0 / gamma) - radial.logpdf(gamma)


def _angular_log_ratio(angular, th_s, th_c, phi):
    """sum_j ln q_j(-phi_j | theta_c) - ln q_j(phi_j | theta_s)."""
    total = np.zeros(th_s.shape[0])
    for j, p in enumerate(angular):
        total += p.logpdf(-phi[:, j], th_c[:, j]) - p.logpdf(phi[:, j], th_s[:, j])
    return total


def _log_gamma(cls: RtfClass, d, radial, gamma, r_s, r_c, ld_s, ld_0c):
    """ln of the radial/Jacobian factor of the acceptance ratio.

    ``ld_s = ln R'_{s,0}(r_s)`` and ``ld_0c = ln R'_{0,c}(gamma R_{s,0}(r_s))``;
    both are ignored for the identity and no-RTF branches.
    """
    base = _log_q_ratio(radial, gamma)
    if cls in (RtfClass.IDENTITY, RtfClass.NONE):
        return base + (d - 2) * np.log(gamma)
    if cls is RtfClass.UNIFORM_SCALING:
        # ld_s + ld_0c = ln(lam_c / lam_s)
        return base + (d - 2) * np.log(gamma) + d * (ld_s + ld_0c)
    return base - np.log(gamma) + (d - 1) * np.log(r_c / r_s) + ld_s + ld_0c


def _log_rho_core(cfg, parent, r_s, th_s, r_c, th_c, gamma, phi, lp_s, lp_c, ld_s, ld_0c):
    d = th_s.shape[-1] + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lp_c - lp_s
        out = out + _log_gamma(parent.rtf_class, d, cfg.radial, gamma, r_s, r_c, ld_s, ld_0c)
        if not cfg.angular_symmetric:
            out = out + _angular_log_ratio(cfg.angular, th_s, th_c, phi)
        if d > 2:
            out = out + log_sin_terms(th_c) - log_sin_terms(th_s)
    return np.where(np.isnan(out), -np.inf, out)


def intrepid_log_proposal(cfg: KernelConfig, parent: ParentModel, v_s, v_c, gamma, phis) -> float:
    """ln q_I(x_c | x_s) for polar states ``v_s`` and ``v_c`` (anchor-relative).

    With an RTF the contour coordinate is carried through the reference
    direction; without one the radius is simply scaled by ``gamma``.
    """
    d = v_s.dim
    cfg = cfg.bind(d)
    gamma = float(gamma)
    phis = np.asarray(phis, dtype=float)
    lq = float(cfg.radial.logpdf(gamma))
    for j, p in enumerate(cfg.angular):
        lq += float(p.logpdf(phis[j], v_s.angles[j]))
    if not np.isfinite(lq):
        return -np.inf
    sin_c = float(log_sin_terms(v_c.angles)) if d > 2 else 0.0
    if not np.isfinite(sin_c) or v_s.r <= 0 or v_c.r <= 0:
        return -np.inf
    if parent.rtf_class.exists:
        th0 = cfg.resolve_theta0(parent)
        u_s, _ = rtf_map(parent, v_s.angles, th0, np.array([v_s.r]))
        _, ld_c0 = rtf_map(parent, v_c.angles, th0, np.array([v_c.r]))
        # R'_{0,c}(R_{c,0}(r_c)) = 1 / R'_{c,0}(r_c)
        denom = (d - 1) * np.log(v_c.r) - ld_c0[0] + np.log(u_s[0])
    else:
        denom = (d - 1) * np.log(gamma) + d * np.log(v_s.r)
    return float(lq - denom - sin_c)


def intrepid_log_rho_batch(cfg: KernelConfig, parent: ParentModel, target, x_s, x_c, gamma, phis) -> np.ndarray:
    """ln rho_I for each row move x_s -> x_c generated by (gamma, phis).

    ``x_s`` and ``x_c`` are ``(n, d)``, ``gamma`` is ``(n,)`` and ``phis`` is
    ``(n, d - 1)``.
    """
    x_s = np.atleast_2d(np.asarray(x_s, dtype=float))
    x_c = np.atleast_2d(np.asarray(x_c, dtype=float))
    n, d = x_s.shape
    cfg = cfg.bind(d)
    anchor = cfg.resolve_anchor(parent)
    r_s, th_s = cartesian_to_polar(x_s, anchor)
    r_c, th_c = cartesian_to_polar(x_c, anchor)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
    phi = np.asarray(phis, dtype=float).reshape(n, d - 1)
    lp_s = target.log_density_uncounted(x_s)
    if not np.all(lp_s > -np.inf):
        raise InvalidStart("pi(x_s) must be positive")
    lp_c = target.log_density_uncounted(x_c)
    ld_s = ld_0c = np.zeros(n)
    if parent.rtf_class.exists and parent.rtf_class is not RtfClass.IDENTITY:
        th0 = cfg.resolve_theta0(parent)
        u_s, ld_s = rtf_map(parent, th_s, th0, r_s)
        _, ld_0c = rtf_map(parent, th0, th_c, gamma * u_s)
    return _log_rho_core(cfg, parent, r_s, th_s, r_c, th_c, gamma, phi, lp_s, lp_c, ld_s, ld_0c)


def intrepid_log_rho(cfg: KernelConfig, parent: ParentModel, target, x_s, x_c, gamma, phis) -> float:
    """ln rho_I for the move x_s -> x_c generated by (gamma, phis)."""
    x_s = np.asarray(x_s, dtype=float)
    x_c = np.asarray(x_c, dtype=float)
    d = x_s.size
    return float(intrepid_log_rho_batch(cfg, parent, target, x_s.reshape(1, d), x_c.reshape(1, d),
                                        np.atleast_1d(np.asarray(gamma, dtype=float)),
                                        np.asarray(phis, dtype=float).reshape(1, d - 1))[0])


# ---------------------------------------------------------------------------
# batched kernels


def _intrepid_batch(cfg, parent, target, x, lp, u_ang, u_gam, u_acc):
    """One Intrepid step for every row; returns (x_new, lp_new, accepted, log_rho, candidate, n_evals)."""
    n, d = x.shape
    anchor = cfg.resolve_anchor(parent)
    r_s, th_s = cartesian_to_polar(x, anchor)
    ok = r_s > 0
    if d > 2:
        ok &= np.isfinite(log_sin_terms(th_s))

    phi = np.empty((n, d - 1))
    for j, p in enumerate(cfg.angular):
        phi[:, j] = p.ppf(u_ang[:, j], th_s[:, j])
    th_c = th_s + phi
    th_c[:, : d - 2] = np.clip(th_c[:, : d - 2], 0.0, np.pi)
    wrap = th_c[:, -1] >= TWO_PI
    th_c[wrap, -1] = 0.0
    phi[wrap, -1] = -th_s[wrap, -1]
    gamma = cfg.radial.ppf(u_gam)

    r_c = gamma * r_s
    ld_s = np.zeros(n)
    ld_0c = np.zeros(n)
    cls = parent.rtf_class
    if cls.exists and cls is not RtfClass.IDENTITY and ok.any():
        th0 = cfg.resolve_theta0(parent)
        idx = np.flatnonzero(ok)
        u_s, ld_s[idx] = rtf_map(parent, th_s[idx], th0, r_s[idx])
        r_c[idx], ld_0c[idx] = rtf_map(parent, th0, th_c[idx], gamma[idx] * u_s)
        ok &= np.isfinite(r_c) & np.isfinite(ld_s) & np.isfinite(ld_0c) & (r_c > 0)

    cand = polar_to_cartesian(np.where(ok, r_c, 0.0), th_c, anchor)
    log_rho = np.full(n, -np.inf)
    lp_c = np.full(n, -np.inf)
    idx = np.flatnonzero(ok)
    if idx.size:
        lp_c[idx] = target.log_density(cand[idx])
        log_rho[idx] = _log_rho_core(cfg, parent, r_s[idx], th_s[idx], r_c[idx], th_c[idx], gamma[idx],
                                     phi[idx], lp[idx], lp_c[idx], ld_s[idx], ld_0c[idx])
    accepted = u_acc < np.exp(np.minimum(log_rho, 0.0))
    x_new = np.where(accepted[:, None], cand, x)
    lp_new = np.where(accepted, lp_c, lp)
    return x_new, lp_new, accepted, log_rho, cand, ok.astype(int)


def _cmh_batch(cfg, target, x, lp, z, u):
    """One sweep of component-wise MH in ascending order for every row."""
    n, d = x.shape
    x = x.copy()
    lp = lp.copy()
    cand = x + cfg.component.scales * z
    n_acc = np.zeros(n, dtype=int)
    log_rho = np.empty((n, d))
    for i in range(d):
        y = x.copy()
        y[:, i] = cand[:, i]
        lp_y = target.log_density(y)
        with np.errstate(invalid="ignore"):
            lr = lp_y - lp
        lr = np.where(np.isnan(lr), -np.inf, lr)
        log_rho[:, i] = lr
        acc = u[:, i] < np.exp(np.minimum(lr, 0.0))
        x[acc, i] = cand[acc, i]
        lp = np.where(acc, lp_y, lp)
        n_acc += acc
    return x, lp, n_acc, log_rho, cand


# ---------------------------------------------------------------------------
# single-step API


def _current_log_density(target, x_s, log_pi_s):
    if log_pi_s is None:
        log_pi_s = float(target.log_density_uncounted(x_s[None])[0])
    if not log_pi_s > -np.inf:
        raise InvalidStart("pi(x_s) must be positive")
    return log_pi_s


def intrepid_step(cfg: KernelConfig, parent: ParentModel, target, x_s, rng: np.random.Generator,
                  log_pi_s: Optional[float] = None) -> TransitionOutcome:
    """One Intrepid proposal and accept/reject; draws d + 1 uniforms."""
    x_s = np.asarray(x_s, dtype=float)
    d = x_s.size
    cfg = cfg.bind(d)
    lp = np.array([_current_log_density(target, x_s, log_pi_s)])
    u = rng.random(d + 1)
    x_new, lp_new, acc, lr, cand, _ = _intrepid_batch(cfg, parent, target, x_s[None], lp,
                                                      u[None, : d - 1], u[d - 1 : d], u[d:])
    return TransitionOutcome(x_new[0], bool(acc[0]), KernelKind.INTREPID, float(lr[0]), cand[0], float(lp_new[0]))


def cmh_step(cfg: KernelConfig, target, x_s, rng: np.random.Generator,
             log_pi_s: Optional[float] = None) -> TransitionOutcome:
    """One ascending sweep of component-wise MH; draws d normals then d uniforms."""
    x_s = np.asarray(x_s, dtype=float)
    d = x_s.size
    cfg = cfg.bind(d)
    lp = np.array([_current_log_density(target, x_s, log_pi_s)])
    z = rng.standard_normal(d)
    u = rng.random(d)
    x_new, lp_new, n_acc, lr, cand = _cmh_batch(cfg, target, x_s[None], lp, z[None], u[None])
    return TransitionOutcome(x_new[0], bool(n_acc[0] > 0), KernelKind.LOCAL, float(np.sum(lr[0])), cand[0],
                             float(lp_new[0]), int(n_acc[0]))


def mixture_step(cfg: KernelConfig, parent: ParentModel, target, x_s, rng: np.random.Generator,
                 log_pi_s: Optional[float] = None) -> TransitionOutcome:
    """Intrepid with probability beta, otherwise a CMH sweep.

    The selector uniform is only drawn when 0 < beta < 1, so beta = 0 consumes
    the stream exactly like :func:`cmh_step`.
    """
    if cfg.beta <= 0.0:
        return cmh_step(cfg, target, x_s, rng, log_pi_s)
    if cfg.beta >= 1.0 or rng.random() < cfg.beta:
        return intrepid_step(cfg, parent, target, x_s, rng, log_pi_s)
    return cmh_step(cfg, target, x_s, rng, log_pi_s)


# ---------------------------------------------------------------------------
# chains


def run_chains(cfg: KernelConfig, parent: ParentModel, target, x0, length: int, burn_in: int,
               rngs: Sequence[np.random.Generator], keep: Optional[Sequence[int]] = None) -> list[ChainRecord]:
    """Advance ``len(rngs)`` chains in lockstep.

    ``x0`` is ``(n, d)`` (or a single point shared by all chains).  The record
    holds the ``length`` states after ``burn_in``; passing ``keep`` stores only
    those post-burn-in step indices.
    """
    n = len(rngs)
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (n, np.shape(x0)[-1])))
    d = x.shape[1]
    if length <= 0:
        raise ValueError("length must be positive")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    cfg = cfg.bind(d)
    lp = target.log_density(x)
    if not np.all(lp > -np.inf):
        raise InvalidStart(f"pi(x_0) = 0 for chain(s) {np.flatnonzero(~(lp > -np.inf)).tolist()}")

    keep_idx = np.arange(length) if keep is None else np.asarray(sorted(set(keep)), dtype=int)
    if keep_idx.size and (keep_idx[0] < 0 or keep_idx[-1] >= length):
        raise ValueError("keep indices must lie in [0, length)")
    slot = np.full(length, -1)
    slot[keep_idx] = np.arange(keep_idx.size)
    samples = np.empty((n, keep_idx.size, d))

    evals = np.ones(n, dtype=int)
    i_prop = np.zeros(n, dtype=int)
    i_acc = np.zeros(n, dtype=int)
    l_steps = np.zeros(n, dtype=int)
    l_acc = np.zeros(n, dtype=int)
    width = 2 * d + 2
    beta = cfg.beta
    total = burn_in + length
    U = Z = None
    for t in range(total):
        b = t % BLOCK
        if b == 0:
            rows = min(BLOCK, total - t)
            U = np.stack([g.random((rows, width)) for g in rngs])
            Z = np.stack([g.standard_normal((rows, d)) for g in rngs])
        u = U[:, b]
        sel = u[:, 0] < beta
        if sel.any():
            xi, lpi, acc, _, _, ev = _intrepid_batch(cfg, parent, target, x[sel], lp[sel], u[sel, 1:d],
                                                     u[sel, d], u[sel, d + 1])
            x[sel], lp[sel] = xi, lpi
            i_prop[sel] += 1
            i_acc[sel] += acc
            evals[sel] += ev
        loc = ~sel
        if loc.any():
            xl, lpl, nacc, _, _ = _cmh_batch(cfg, target, x[loc], lp[loc], Z[loc, b], u[loc, d + 2:])
            x[loc], lp[loc] = xl, lpl
            l_steps[loc] += 1
            l_acc[loc] += nacc
            evals[loc] += d
        if t >= burn_in and slot[t - burn_in] >= 0:
            samples[:, slot[t - burn_in]] = x

    return [ChainRecord(samples[k], int(i_prop[k]), int(i_acc[k]), int(d * l_steps[k]), int(l_acc[k]),
                        int(evals[k]), int(i_prop[k]), int(l_steps[k])) for k in range(n)]


def run_chain(cfg: KernelConfig, parent: ParentModel, target, x0, length: int, burn_in: int,
              rng: np.random.Generator) -> ChainRecord:
    x0 = np.asarray(x0, dtype=float)
    return run_chains(cfg, parent, target, x0[None], length, burn_in, [rng])[0]
