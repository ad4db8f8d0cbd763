"""Seeded multi-chain campaigns: config parsing, execution, CSV/JSON output.

A campaign sweeps exploration ratios and chain lengths on one target.  Every
chain's generator is derived from ``SeedSequence(seed, spawn_key=(beta index,
length index, chain index))``, so any subset of chains can be re-run on its
own and reproduce the same numbers.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .diagnostics import TvdGrid, diagnose, ensemble_tvd, lag_correlation_summary
from .errors import ConfigError
from .kernel import KernelConfig, run_chains
from .oracle import ReferenceSet, reference_moments, reference_set
from .proposal import AngularProposal, ComponentProposal, RadialProposal, default_angular
from .targets import make_target

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

OUTPUT_ENV = "INTREPID_OUTPUT_DIR"
DEFAULT_BETAS = (0.0, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0)
CSV_COLUMNS = ("target", "beta", "chain_id", "length", "tvd", "mean_error", "cov_error", "acceptance_total",
               "acceptance_intrepid", "acceptance_local", "target_evals", "wall_time")
METRIC_COLUMNS = CSV_COLUMNS[4:-1]
QUANTILES = (("min", 0.0), ("q05", 0.05), ("q25", 0.25), ("median", 0.5), ("q75", 0.75), ("q95", 0.95),
             ("max", 1.0))


@dataclass
class ProposalSettings:
    angular: str = "uniform"
    angular_sigma: Optional[float] = None
    radial: str = "uniform"
    gamma0: float = 2.0
    k: float = 0.0
    sigma_local: float = 1.0

    def kernel_config(self, beta: float, d: int, anchor=None, reference_direction=None) -> KernelConfig:
        if self.angular_sigma is not None and self.angular == "truncnorm":
            angular = tuple(AngularProposal(j, d, "truncnorm", self.angular_sigma) for j in range(1, d))
        else:
            angular = default_angular(d, self.angular)
        return KernelConfig(beta=beta, angular=angular, radial=RadialProposal(self.radial, self.gamma0, self.k),
                            component=ComponentProposal.isotropic(d, self.sigma_local), anchor=anchor,
                            reference_direction=reference_direction)


@dataclass
class CampaignConfig:
    """Everything needed to reproduce a campaign; mirrors the TOML schema."""

    target: str
    betas: list = field(default_factory=lambda: list(DEFAULT_BETAS))
    chains: int = 20
    lengths: list = field(default_factory=lambda: [100_000])
    burn_in: int = 10_000
    seed: int = 0
    output_dir: str = "results"
    name: str = ""
    workers: Optional[int] = None
    start: Any = "reference"
    target_options: dict = field(default_factory=dict)
    proposal: ProposalSettings = field(default_factory=ProposalSettings)
    anchor: Optional[list] = None
    reference_direction: Optional[list] = None
    reference_path: Optional[str] = None
    reference_n: int = 1_000_000
    reference_seed: int = 12345
    bins: int = 100
    lags: list = field(default_factory=list)
    ensemble_steps: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.target, str) or not self.target:
            raise ConfigError("campaign.target must be a target name")
        if not isinstance(self.chains, int) or self.chains < 1:
            raise ConfigError("campaign.chains must be an integer >= 1")
        if not self.betas or any(not isinstance(b, (int, float)) or not 0.0 <= b <= 1.0 for b in self.betas):
            raise ConfigError("campaign.betas must be a nonempty list of values in [0, 1]")
        if not self.lengths or any(not isinstance(n, int) or n <= 0 for n in self.lengths):
            raise ConfigError("campaign.lengths must be a nonempty list of positive integers")
        if not isinstance(self.burn_in, int) or self.burn_in < 0:
            raise ConfigError("campaign.burn_in must be a nonnegative integer")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("campaign.workers must be >= 1")
        if isinstance(self.start, str) and self.start not in ("reference", "parent"):
            raise ConfigError("campaign.start must be 'reference', 'parent' or a point")
        if self.ensemble_steps and any(l >= min(self.lengths) for l in self.ensemble_steps):
            raise ConfigError("campaign.ensemble_steps must be below every chain length")
        if self.lags and any(k < 0 for k in self.lags):
            raise ConfigError("campaign.lags must be nonnegative")

    # ---- (de)serialisation

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        data = dict(data)
        camp = dict(data.pop("campaign", {}))
        prop = data.pop("proposal", {})
        ref = data.pop("reference", {})
        target_opts = data.pop("target", {})
        acceptance = data.pop("acceptance", {})
        if data:
            raise ConfigError(f"unknown top-level section(s): {', '.join(sorted(data))}")
        known = {f for f in cls.__dataclass_fields__} - {"proposal", "target_options", "acceptance",
                                                          "reference_path", "reference_n", "reference_seed"}
        extra = set(camp) - known
        if extra:
            raise ConfigError(f"unknown campaign key(s): {', '.join(sorted(extra))}")
        if "target" not in camp:
            raise ConfigError("campaign.target is required")
        try:
            proposal = ProposalSettings(**prop)
        except TypeError as exc:
            raise ConfigError(f"bad [proposal] section: {exc}") from None
        ref_keys = {"path", "n", "seed"}
        if set(ref) - ref_keys:
            raise ConfigError(f"unknown reference key(s): {', '.join(sorted(set(ref) - ref_keys))}")
        return cls(proposal=proposal, target_options=target_opts, acceptance=acceptance,
                   reference_path=ref.get("path"), reference_n=ref.get("n", 1_000_000),
                   reference_seed=ref.get("seed", 12345), **camp)

    def to_dict(self) -> dict:
        camp = {k: v for k, v in asdict(self).items()
                if k not in ("proposal", "target_options", "acceptance", "reference_path", "reference_n",
                             "reference_seed") and v is not None}
        ref = {"n": self.reference_n, "seed": self.reference_seed}
        if self.reference_path:
            ref["path"] = self.reference_path
        out = {"campaign": camp, "proposal": {k: v for k, v in asdict(self.proposal).items() if v is not None},
               "reference": ref}
        if self.target_options:
            out["target"] = dict(self.target_options)
        if self.acceptance:
            out["acceptance"] = dict(self.acceptance)
        return out


def _line_of(text: str, key: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return None


def load_config(path) -> CampaignConfig:
    """Read a TOML campaign config or a JSON manifest written by :func:`run_campaign`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            return CampaignConfig.from_dict(json.loads(text)["config"])
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: not a campaign manifest ({exc})") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        cfg = CampaignConfig.from_dict(data)
    except ConfigError as exc:
        m = re.search(r"campaign\.(\w+)", str(exc))
        line = _line_of(text, m.group(1)) if m else None
        raise ConfigError(f"{path}:{line}: {exc}" if line else f"{path}: {exc}") from None
    try:
        make_target(cfg.target, **cfg.target_options)
    except (ConfigError, TypeError, ValueError) as exc:
        line = _line_of(text, "target")
        raise ConfigError(f"{path}:{line}: {exc}" if line else f"{path}: {exc}") from None
    return cfg


# ---------------------------------------------------------------------------
# execution


def chain_seed(master: int, beta_idx: int, length_idx: int, chain_idx: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed of one chain's stream; ``stream`` 0 drives the kernel, 1 picks the start."""
    return np.random.SeedSequence(master, spawn_key=(beta_idx, length_idx, chain_idx, stream))


@dataclass
class CampaignResult:
    rows: list
    ensemble_rows: list
    lag_summaries: list
    failures: list
    manifest: dict
    paths: dict = field(default_factory=dict)

    def metric_columns(self) -> list:
        return [[r[c] for c in CSV_COLUMNS if c != "wall_time"] for r in self.rows]


def output_dir(cfg: CampaignConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def load_or_make_reference(cfg: CampaignConfig, target, out: Optional[Path] = None) -> ReferenceSet:
    if cfg.reference_path and Path(cfg.reference_path).with_suffix(".npy").exists():
        ref = ReferenceSet.load(cfg.reference_path)
        if ref.target != target.name:
            raise ConfigError(f"reference set is for {ref.target!r}, campaign targets {target.name!r}")
        return ref
    ref = reference_set(target, cfg.reference_n, cfg.reference_seed)
    if cfg.reference_path:
        ref.save(cfg.reference_path)
    elif out is not None:
        ref.save(out / f"reference-{target.name}")
    return ref


def _start_points(cfg, target, ref, bi, li):
    d = target.dim
    if not isinstance(cfg.start, str):
        x0 = np.asarray(cfg.start, dtype=float)
        if x0.shape != (d,):
            raise ConfigError(f"campaign.start must have {d} coordinates")
        return np.tile(x0, (cfg.chains, 1))
    starts = np.empty((cfg.chains, d))
    for c in range(cfg.chains):
        g = np.random.default_rng(chain_seed(cfg.seed, bi, li, c, stream=1))
        if cfg.start == "reference":
            starts[c] = ref.samples[g.integers(ref.n)]
        else:
            # parent draws, retried until the target is positive
            while True:
                x = target.parent.sample(g, 1)[0]
                if target.log_density_uncounted(x[None])[0] > -np.inf:
                    starts[c] = x
                    break
    return starts


def _run_group(job: dict) -> dict:
    """Run one (beta, length) group; rebuilds the target so it can execute in a worker process."""
    cfg = CampaignConfig.from_dict(job["config"])
    target = make_target(cfg.target, **cfg.target_options)
    d = target.dim
    kcfg = cfg.proposal.kernel_config(job["beta"], d, cfg.anchor, cfg.reference_direction)
    grid, mean, cov = job["grid"], job["mean"], job["cov"]
    chain_ids = job["chain_ids"]
    rngs = [np.random.default_rng(chain_seed(cfg.seed, job["bi"], job["li"], c)) for c in chain_ids]
    keep = None
    burn_in = cfg.burn_in
    if cfg.ensemble_steps:
        burn_in = 0
    t0 = time.perf_counter()
    records = run_chains(kcfg, target.parent, target, job["starts"], job["length"], burn_in, rngs, keep)
    wall = (time.perf_counter() - t0) / len(chain_ids)
    rows = []
    for c, rec in zip(chain_ids, records):
        rep = diagnose(rec, grid, mean, cov)
        rows.append({"target": target.name, "beta": job["beta"], "chain_id": c, "length": job["length"],
                     "tvd": rep.tvd, "mean_error": rep.mean_error, "cov_error": rep.cov_error,
                     "acceptance_total": rep.acceptance_total, "acceptance_intrepid": rep.acceptance_intrepid,
                     "acceptance_local": rep.acceptance_local, "target_evals": rec.target_evals, "wall_time": wall})
    ens = [{"target": target.name, "beta": job["beta"], "length": job["length"], "step": l,
            "ensemble_tvd": ensemble_tvd(records, l, grid), "chains": len(records)} for l in cfg.ensemble_steps]
    lags = []
    for k in cfg.lags:
        if k < job["length"]:
            s = lag_correlation_summary(records, k)
            s.update(target=target.name, beta=job["beta"], length=job["length"])
            lags.append(s)
    return {"rows": rows, "ensemble": ens, "lags": lags}


def _execute(job: dict) -> tuple[dict, list]:
    """Run a group; on failure fall back to one chain at a time and record what still fails."""
    try:
        return _run_group(job), []
    except Exception as exc:  # noqa: BLE001 - the policy is to record and continue
        log.warning("group beta=%s length=%s failed (%s); retrying chain by chain", job["beta"], job["length"], exc)
    merged = {"rows": [], "ensemble": [], "lags": []}
    failures = []
    for k, c in enumerate(job["chain_ids"]):
        single = dict(job, chain_ids=[c], starts=job["starts"][k : k + 1])
        try:
            out = _run_group(single)
            merged["rows"].extend(out["rows"])
        except Exception as exc:  # noqa: BLE001
            failures.append({"beta": job["beta"], "length": job["length"], "chain_id": c, "error": repr(exc)})
    return merged, failures


def run_campaign(cfg: CampaignConfig, workers: Optional[int] = None, write: bool = True) -> CampaignResult:
    target = make_target(cfg.target, **cfg.target_options)
    out = output_dir(cfg)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    ref = load_or_make_reference(cfg, target, out if write else None)
    mean, cov = reference_moments(ref)
    grid = TvdGrid(ref.samples, bins=cfg.bins)
    jobs = []
    for bi, beta in enumerate(cfg.betas):
        for li, length in enumerate(cfg.lengths):
            jobs.append({"config": cfg.to_dict(), "beta": float(beta), "bi": bi, "li": li, "length": int(length),
                         "chain_ids": list(range(cfg.chains)), "starts": _start_points(cfg, target, ref, bi, li),
                         "grid": grid, "mean": mean, "cov": cov})
    n_workers = workers or cfg.workers or os.cpu_count() or 1
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]

    rows, ens, lags, failures = [], [], [], []
    for res, fail in results:
        rows.extend(res["rows"])
        ens.extend(res["ensemble"])
        lags.extend(res["lags"])
        failures.extend(fail)
    rows.sort(key=lambda r: (r["beta"], r["length"], r["chain_id"]))
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "reference": {"target": ref.target, "n": ref.n, "seed": ref.seed, "acceptance": ref.acceptance,
                      "mean": mean.tolist(), "cov": cov.tolist()},
        "grid": {"bins": cfg.bins, "pairs": grid.pairs, "lower": [float(e[0]) for e in grid.edges],
                 "upper": [float(e[-1]) for e in grid.edges]},
        "failures": failures,
        "lag_correlations": lags,
    }
    result = CampaignResult(rows, ens, lags, failures, manifest)
    if write:
        stem = cfg.name or cfg.target
        result.paths["csv"] = out / f"{stem}.csv"
        result.paths["csv"].write_text(rows_to_csv(rows))
        if ens:
            result.paths["ensemble"] = out / f"{stem}-ensemble.csv"
            result.paths["ensemble"].write_text(_dicts_to_csv(ens, ("target", "beta", "length", "step",
                                                                    "ensemble_tvd", "chains")))
        manifest["outputs"] = {k: str(v) for k, v in result.paths.items()}
        result.paths["manifest"] = out / f"{stem}-manifest.json"
        result.paths["manifest"].write_text(json.dumps(manifest, indent=2))
    return result


# ---------------------------------------------------------------------------
# tables


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dicts_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def rows_to_csv(rows: Sequence[dict]) -> str:
    return _dicts_to_csv(rows, CSV_COLUMNS)


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k in ("target",):
                continue
            r[k] = int(v) if k in ("chain_id", "length", "target_evals") else float(v)
    return rows


def summarize(rows: Sequence[dict], metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict]:
    """Per-(target, beta, length) quantiles of each metric (linear interpolation)."""
    if not rows:
        raise ValueError("no rows to summarize")
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["target"], float(r["beta"]), int(r["length"])), []).append(r)
    out = []
    for (tname, beta, length), grp in sorted(groups.items()):
        for m in metrics:
            vals = np.array([float(r[m]) for r in grp], dtype=float)
            vals = vals[~np.isnan(vals)]
            entry = {"target": tname, "beta": beta, "length": length, "metric": m, "n": int(vals.size)}
            for label, q in QUANTILES:
                entry[label] = float(np.quantile(vals, q)) if vals.size else np.nan
            out.append(entry)
    return out


def summary_to_csv(summary: Sequence[dict]) -> str:
    return _dicts_to_csv(summary, ("target", "beta", "length", "metric", "n") + tuple(q for q, _ in QUANTILES))


def check_acceptance(cfg: CampaignConfig, rows: Sequence[dict]) -> list[str]:
    """Compare group medians against ``[acceptance] max_median_<metric>`` thresholds."""
    problems = []
    for key, limit in cfg.acceptance.items():
        m = re.fullmatch(r"max_median_(\w+)", key)
        if not m or m.group(1) not in METRIC_COLUMNS:
            raise ConfigError(f"unknown acceptance key {key!r}")
        for s in summarize(rows, [m.group(1)]):
            if s["median"] > limit:
                problems.append(f"{s['target']} beta={s['beta']} length={s['length']}: median {m.group(1)} "
                                f"{s['median']:.4g} > {limit}")
    return problems
