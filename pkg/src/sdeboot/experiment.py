"""Monte Carlo coverage studies: simulate -> fit -> bootstrap -> interval."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adjustment, bootstrap, gqmle
from .errors import ExperimentError, ParameterError, SdeBootError
from .model import SamplingDesign, get_model
from .noise import RngStream, parse_noise
from .simulate import SamplePath, simulate_batch

log = logging.getLogger(__name__)

# paths simulated together; fixed so results never depend on the worker count
CHUNK = 100
MAX_PATH_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "ou_sqrt_scale"
    noise: str = "wiener"
    n: int = 100_000
    T: float = 500.0
    k: int = 25
    paths: int = 1000
    reps: int = 1000
    level: float = 0.99
    scheme: str = "beta"
    mode: str = "score_shortcut"
    substeps: int = 1
    seed: int = 0
    threads: int = 1
    target: int = 0

    def __post_init__(self):
        get_model(self.model)
        noise = parse_noise(self.noise)
        object.__setattr__(self, "noise", _noise_label(noise))
        object.__setattr__(self, "scheme", bootstrap.parse_scheme(self.scheme).name)
        object.__setattr__(self, "mode", bootstrap.parse_mode(self.mode).value)
        for name in ("n", "k", "paths", "reps", "substeps", "threads"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T}")
        object.__setattr__(self, "T", float(self.T))
        if not 0.0 < self.level < 1.0:
            raise ParameterError(f"level must lie in (0, 1), got {self.level}")
        bootstrap.partition(self.n, self.k)
        if not 0 <= self.target < get_model(self.model).model.p:
            raise ParameterError(f"target index {self.target} out of range")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def h(self) -> float:
        return self.T / self.n

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if isinstance(d.get("noise"), dict):
            d["noise"] = _noise_label(parse_noise(d["noise"]))
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def echo(self) -> dict:
        """Config fields that determine the results (worker count excluded)."""
        d = asdict(self)
        d.pop("threads")
        d["h"] = self.h
        return d


def _noise_label(noise) -> str:
    if noise.name == "wiener":
        return "wiener"
    return "bgamma:" + ",".join(repr(float(v)) for v in
                                (noise.delta1, noise.gamma1, noise.delta2, noise.gamma2))


def load_config(path) -> dict:
    """Read a TOML or JSON config file into a plain dict."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        import tomli
        with open(path, "rb") as fh:
            return tomli.load(fh)
    with open(path) as fh:
        return json.load(fh)


@dataclass(frozen=True)
class PathRecord:
    path_id: int
    theta_hat: list | None = None
    b_n: float | None = None
    ci_lo: list | None = None
    ci_hi: list | None = None
    covered: bool | None = None
    failures: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CoverageReport:
    config: ExperimentConfig
    coverage: float
    mean_width: float
    n_success: int
    n_failed: int
    theta_star: list
    records: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        """Serialisable form; wall time is left out so reruns compare byte for byte."""
        return {
            "config": self.config.echo(),
            "coverage": self.coverage,
            "mean_width": self.mean_width,
            "n_success": self.n_success,
            "n_failed": self.n_failed,
            "theta_star": list(self.theta_star),
            "records": [asdict(r) for r in self.records],
        }

    def recompute_coverage(self) -> float:
        ok = [r for r in self.records if r.ok]
        return sum(1 for r in ok if r.covered) / len(ok)


def analyse_path(path: SamplePath, cfg: ExperimentConfig, path_id: int,
                 theta_star=None) -> PathRecord:
    """Fit, bootstrap and build the interval for one path."""
    entry = get_model(cfg.model)
    m = entry.model
    theta_star = np.asarray(entry.theta_star if theta_star is None else theta_star)
    try:
        fit = gqmle.fit(path, m)
        _, gamma_bar = gqmle.hessians(path, m, fit)
        s = adjustment.scalings(path, m, fit)
        part = bootstrap.partition(path.n, cfg.k)
        dist = bootstrap.distribution(
            path, m, fit, s, gamma_bar, part, bootstrap.parse_scheme(cfg.scheme), cfg.reps,
            cfg.mode, RngStream.for_role(cfg.seed, "weights", path_id))
        ci = bootstrap.confidence_interval(dist, fit, gamma_bar, s, cfg.level)
    except SdeBootError as exc:
        return PathRecord(path_id, error=f"{exc.code}: {exc}")
    t = cfg.target
    return PathRecord(
        path_id=path_id,
        theta_hat=[float(v) for v in fit.theta_hat],
        b_n=float(s.b),
        ci_lo=[float(v) for v in ci.lower],
        ci_hi=[float(v) for v in ci.upper],
        covered=bool(ci.lower[t] <= theta_star[t] <= ci.upper[t]),
        failures=int(dist.failures),
    )


def _run_chunk(cfg: ExperimentConfig, ids: list) -> list:
    entry = get_model(cfg.model)
    dyn = entry.dynamics(parse_noise(cfg.noise))
    design = SamplingDesign.from_horizon(cfg.n, cfg.T)
    streams = [RngStream.for_role(cfg.seed, "path", i) for i in ids]
    try:
        values = simulate_batch(dyn, design, cfg.substeps, streams)
    except SdeBootError:
        # one diverging path must not take its chunk-mates with it
        return [_run_single(cfg, dyn, design, i) for i in ids]
    return [analyse_path(SamplePath(values[j], design), cfg, i) for j, i in enumerate(ids)]


def _run_single(cfg, dyn, design, path_id):
    try:
        values = simulate_batch(dyn, design, cfg.substeps,
                                [RngStream.for_role(cfg.seed, "path", path_id)])[0]
    except SdeBootError as exc:
        return PathRecord(path_id, error=f"{exc.code}: {exc}")
    return analyse_path(SamplePath(values, design), cfg, path_id)


def run_coverage(cfg: ExperimentConfig) -> CoverageReport:
    """Coverage rate of the bootstrap interval over ``cfg.paths`` independent paths."""
    start = time.perf_counter()
    design = SamplingDesign.from_horizon(cfg.n, cfg.T)
    bootstrap.check_block_growth(cfg.k, design.T)
    ids = list(range(1, cfg.paths + 1))
    chunks = [ids[i:i + CHUNK] for i in range(0, len(ids), CHUNK)]
    if cfg.threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * len(chunks), chunks))
    else:
        parts = [_run_chunk(cfg, c) for c in chunks]
    records = [r for part in parts for r in part]

    ok = [r for r in records if r.ok]
    n_failed = len(records) - len(ok)
    if n_failed:
        log.warning("%d of %d paths failed and were excluded", n_failed, len(records))
    if not ok or n_failed > MAX_PATH_FAILURE_RATE * len(records):
        raise ExperimentError(f"{n_failed} of {len(records)} paths failed")
    t = cfg.target
    covered = sum(1 for r in ok if r.covered)
    widths = [r.ci_hi[t] - r.ci_lo[t] for r in ok]
    report = CoverageReport(
        config=cfg,
        coverage=covered / len(ok),
        mean_width=float(math.fsum(widths) / len(widths)),
        n_success=len(ok),
        n_failed=n_failed,
        theta_star=[float(v) for v in get_model(cfg.model).theta_star],
        records=records,
        wall_time=time.perf_counter() - start,
    )
    log.info("coverage %.4f over %d paths in %.1fs", report.coverage, len(ok), report.wall_time)
    return report


# --- persistence ------------------------------------------------------------

SUMMARY_FIELDS = ["n", "T", "k", "noise", "M", "R", "level", "coverage", "mean_width", "seed"]
PATH_FIELDS = ["path_id", "gamma_hat", "b_n", "ci_lo", "ci_hi", "covered"]


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: CoverageReport, path, format: str | None = None,
                 per_path: bool = True) -> list:
    """Write ``report`` as JSON or CSV; returns the files written.

    CSV output is a one-row summary plus, when ``per_path``, a sibling
    ``<stem>_paths.csv`` with one row per Monte Carlo path.
    """
    if not report.records:
        raise ExperimentError("refusing to write an empty report")
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "json").lower()
    written = []
    try:
        if fmt == "json":
            path.write_text(dumps_json(report.to_dict()))
            written.append(path)
        elif fmt == "csv":
            cfg = report.config
            row = [cfg.n, cfg.T, cfg.k, cfg.noise, cfg.paths, cfg.reps, cfg.level,
                   report.coverage, report.mean_width, cfg.seed]
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SUMMARY_FIELDS)
                w.writerow([_fmt(v) for v in row])
            written.append(path)
            if per_path:
                pp = path.with_name(path.stem + "_paths.csv")
                t = cfg.target
                with open(pp, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(PATH_FIELDS)
                    for r in report.records:
                        vals = [r.path_id] + ([None] * 5 if not r.ok else
                                              [r.theta_hat[t], r.b_n, r.ci_lo[t], r.ci_hi[t], r.covered])
                        w.writerow([_fmt(v) for v in vals])
                written.append(pp)
        else:
            raise ParameterError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise ExperimentError(f"cannot write report to {path}: {exc}") from exc
    return written


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
