"""Experiment runner: ``python -m ewens_pitman --command clt --lambda 1 --alpha 0.5 --n 250 ...``.

Exit codes: 0 ok, 2 usage, 3 budget, 4 internal. Failures print a one-line
JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .asymptotics import constants, exact_mean_k, finite_sigma2, normaliser_gaps
from .errors import BudgetError, ContractError
from .martingale import azuma_bound, petrov_diagnostics, simulate_martingale
from .model import (EXACT_DP_MAX_N, ModelParams, ScalingParams, exact_k_distribution,
                    sample_k_batch, sample_k_final)
from .stats import fit_loglog_slope, ks_to_normal, standardize

COMMANDS = ("sample", "exact", "constants", "lln", "clt", "martingale", "diagnostics")
FORMATS = ("csv", "json")
OUTDIR_ENV = "EWENS_PITMAN_OUTDIR"
EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_INTERNAL = 0, 2, 3, 4
DEFAULTS = dict(replicates=10_000, seed=0, delta=1.0, eps=0.05, format="csv")
_FILE_KEYS = {"command", "lambda", "alpha", "n", "replicates", "seed", "delta", "eps",
              "out", "format", "workers", "theta"}


class UsageError(ContractError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    lambdas: tuple
    alphas: tuple
    n_values: tuple = ()
    replicates: int = DEFAULTS["replicates"]
    seed: int = DEFAULTS["seed"]
    delta: float = DEFAULTS["delta"]
    eps: float = DEFAULTS["eps"]
    out: Optional[str] = None
    format: str = DEFAULTS["format"]
    workers: Optional[int] = None
    theta: Optional[float] = None  # fixed theta for `exact`/`sample`, instead of lam * n

    def cells(self) -> list:
        return [(lam, alpha) for lam, alpha in itertools.product(self.lambdas, self.alphas)]

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # never affects results
        return d


@dataclass
class RunReport:
    config: ExperimentConfig
    results: list
    timings: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def seed(self) -> int:
        return self.config.seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ewens_pitman", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON or YAML file with the same keys as the flags")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--lambda", dest="lam", type=float, action="append")
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--n", type=int, action="append")
    p.add_argument("--theta", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--workers", type=int)
    return p


def _listify(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _load_file(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise UsageError(f"--config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"--config {path}: top level must be a mapping")
    unknown = sorted(set(data) - _FILE_KEYS)
    if unknown:
        raise UsageError(f"--config {path}: unknown key '{unknown[0]}'")
    return data


def parse_config(argv=None) -> ExperimentConfig:
    """Merge defaults, an optional config file and flags (flags win) into a validated config."""
    args = _parser().parse_args(argv)
    merged = dict(DEFAULTS)
    source = {}
    if args.config:
        for key, value in _load_file(args.config).items():
            merged[key] = value
            source[key] = f"config key '{key}'"
    flags = {"lambda": args.lam, "alpha": args.alpha, "n": args.n}
    for key in ("command", "theta", "replicates", "seed", "delta", "eps", "out", "format", "workers"):
        flags[key] = getattr(args, key)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
            source[key] = f"--{key}"

    def where(key):
        return source.get(key, key)

    def number(key, kind):
        values = []
        for v in _listify(merged[key]):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and v != int(v)):
                raise UsageError(f"{where(key)} {v!r}: expected {kind.__name__}")
            values.append(kind(v))
        return values

    if merged.get("command") not in COMMANDS:
        raise UsageError(f"{where('command')}: command must be one of {', '.join(COMMANDS)}")
    for key in ("lambda", "alpha"):
        if key not in merged:
            raise UsageError(f"--{key} is required")
    lambdas, alphas = number("lambda", float), number("alpha", float)
    for a in alphas:
        if not 0.0 <= a < 1.0:
            raise UsageError(f"{where('alpha')} {a}: alpha must lie in [0, 1)")
    for lam in lambdas:
        if not (lam > 0.0 and math.isfinite(lam)):
            raise UsageError(f"{where('lambda')} {lam}: lambda must be positive")
    n_values = number("n", int) if "n" in merged else []
    for n in n_values:
        if n < 1:
            raise UsageError(f"{where('n')} {n}: n must be at least 1")
    command = merged["command"]
    if command != "constants" and not n_values:
        raise UsageError(f"--n is required for command '{command}'")
    if not lambdas or not alphas:
        raise UsageError("parameter grids must be non-empty")
    (replicates,) = number("replicates", int)
    if replicates < 1:
        raise UsageError(f"{where('replicates')} {replicates}: must be at least 1")
    (seed,) = number("seed", int)
    if not -2**63 <= seed < 2**64:
        raise UsageError(f"{where('seed')} {seed}: seed must fit in 64 bits")
    (delta,) = number("delta", float)
    if not 0.0 < delta <= 1.0:
        raise UsageError(f"{where('delta')} {delta}: delta must lie in (0, 1]")
    (eps,) = number("eps", float)
    if not eps > 0.0:
        raise UsageError(f"{where('eps')} {eps}: eps must be positive")
    fmt = merged["format"]
    if fmt not in FORMATS:
        raise UsageError(f"{where('format')} {fmt!r}: format must be csv or json")
    workers = None
    if merged.get("workers") is not None:
        (workers,) = number("workers", int)
        if workers < 1:
            raise UsageError(f"{where('workers')} {workers}: must be at least 1")
    theta = None
    if merged.get("theta") is not None:
        (theta,) = number("theta", float)
        if command not in ("exact", "sample"):
            raise UsageError(f"{where('theta')}: only valid with commands exact and sample")
        for a in alphas:
            if not theta + a > 0:
                raise UsageError(f"{where('theta')} {theta}: theta must exceed -alpha")
    return ExperimentConfig(
        command=command, lambdas=tuple(lambdas), alphas=tuple(alphas), n_values=tuple(n_values),
        replicates=replicates, seed=seed, delta=delta, eps=eps, out=merged.get("out"),
        format=fmt, workers=workers, theta=theta)


def _cell_params(cfg: ExperimentConfig, lam: float, alpha: float, n: int) -> ModelParams:
    return ModelParams(alpha, cfg.theta if cfg.theta is not None else lam * n)


def _rows_constants(cfg, lam, alpha):
    c = constants(ScalingParams(alpha, lam))
    return [dict(lam=lam, alpha=alpha, m=c.m, s2=c.s2, sigma2=c.sigma2, a=c.a)]


def _rows_exact(cfg, lam, alpha):
    rows = []
    for n in cfg.n_values:
        if n > EXACT_DP_MAX_N:
            raise BudgetError(f"--n {n}: exact distribution limited to n <= {EXACT_DP_MAX_N}")
        params = _cell_params(cfg, lam, alpha, n)
        dist = exact_k_distribution(params, n)
        rows += [dict(lam=lam, alpha=alpha, theta=params.theta, n=n, k=k, pmf=float(p))
                 for k, p in enumerate(dist.pmf, start=1)]
    return rows


def _rows_sample(cfg, lam, alpha):
    rows = []
    for n in cfg.n_values:
        params = _cell_params(cfg, lam, alpha, n)
        ks = sample_k_final(params, n, cfg.replicates, cfg.seed, cfg.workers)
        rows += [dict(lam=lam, alpha=alpha, theta=params.theta, n=n, replicate=r, k=int(k))
                 for r, k in enumerate(ks)]
    return rows


def _rows_lln(cfg, lam, alpha):
    scaling = ScalingParams(alpha, lam)
    m = constants(scaling).m
    rows = []
    for n in cfg.n_values:
        ratio = sample_k_batch(scaling, n, cfg.replicates, cfg.seed, cfg.workers) / n
        rows.append(dict(lam=lam, alpha=alpha, n=n, replicates=cfg.replicates, m=m,
                         mean_k_over_n=math.fsum(ratio.tolist()) / ratio.size,
                         exact_mean_k_over_n=exact_mean_k(scaling.at(n), n) / n,
                         max_abs_dev=float(np.max(np.abs(ratio - m)))))
    return rows


def _rows_clt(cfg, lam, alpha):
    scaling = ScalingParams(alpha, lam)
    rows = []
    for n in sorted(set(cfg.n_values)):
        z = standardize(sample_k_batch(scaling, n, cfg.replicates, cfg.seed, cfg.workers),
                        scaling, n)
        v = z.values
        rows.append(dict(lam=lam, alpha=alpha, n=n, replicates=cfg.replicates,
                         mean=math.fsum(v.tolist()) / v.size,
                         variance=float(np.var(v, ddof=1)) if v.size > 1 else math.nan,
                         ks=ks_to_normal(z), slope=math.nan))
    if len(rows) >= 3:
        slope = fit_loglog_slope([r["n"] for r in rows], [r["ks"] for r in rows])
        for r in rows:
            r["slope"] = slope
    return rows


def _rows_martingale(cfg, lam, alpha):
    if alpha == 0.0:
        raise UsageError("--alpha 0: command martingale needs alpha > 0 (use diagnostics)")
    scaling = ScalingParams(alpha, lam)
    rows = []
    for n in cfg.n_values:
        s = simulate_martingale(scaling, n, cfg.replicates, cfg.seed, cfg.delta, cfg.workers)
        az = azuma_bound(scaling, n, cfg.eps)
        rows.append(dict(
            lam=lam, alpha=alpha, n=n, replicates=cfg.replicates, delta=cfg.delta,
            mean_y_end=s.mean_y_end, se_y_end=s.se_y_end,
            increment_violations=s.increment_violations,
            fourth_power_violations=s.fourth_power_violations,
            fourth_power_bound=s.fourth_power_bound,
            v2_mean=s.v2_mean, v2_var=s.v2_var, v2_max=s.v2_max,
            ln=s.hall_heyde.ln, ln_increment_term=s.hall_heyde.increment_term,
            ln_variance_term=s.hall_heyde.variance_term,
            eps=cfg.eps, azuma_fraction=float(np.count_nonzero(s.max_deviation > cfg.eps)) / s.replicates,
            azuma_bound=az.union, azuma_c_hat=az.c_hat))
    return rows


def _rows_diagnostics(cfg, lam, alpha):
    scaling = ScalingParams(alpha, lam)
    c = constants(scaling)
    rows = []
    for n in cfg.n_values:
        gaps = normaliser_gaps(scaling, n) if n >= 2 else None
        row = dict(lam=lam, alpha=alpha, n=n,
                   phi_gap=gaps.phi_gap if gaps else None,
                   weighted_sum_gap=gaps.weighted_sum_gap if gaps else None,
                   exact_mean_k_over_n=exact_mean_k(scaling.at(n), n) / n,
                   sigma2_finite=None, sigma2_gap=None, petrov_sigma_n2=None, petrov_lyapunov=None)
        if alpha > 0:
            fs = finite_sigma2(scaling, n)
            row.update(sigma2_finite=fs, sigma2_gap=abs(fs - c.sigma2))
        else:
            pr = petrov_diagnostics(lam, n)
            row.update(petrov_sigma_n2=pr.sigma_n2,
                       petrov_lyapunov=None if pr.degenerate else pr.lyapunov)
        rows.append(row)
    return rows


_DISPATCH = {
    "constants": _rows_constants, "exact": _rows_exact, "sample": _rows_sample,
    "lln": _rows_lln, "clt": _rows_clt, "martingale": _rows_martingale,
    "diagnostics": _rows_diagnostics,
}


def run(config: ExperimentConfig) -> RunReport:
    """Run every (lambda, alpha) cell of the grid; rows keep grid order."""
    results, timings = [], {}
    handler = _DISPATCH[config.command]
    for lam, alpha in config.cells():
        t0 = time.perf_counter()
        results += handler(config, lam, alpha)
        timings[f"lambda={lam!r},alpha={alpha!r}"] = time.perf_counter() - t0
    return RunReport(config=config, results=results, timings=timings)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _column(key: str) -> str:
    return "lambda" if key == "lam" else key


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def results_bytes(report: RunReport, fmt: str) -> bytes:
    """Serialised results section; identical configs give identical bytes."""
    if fmt == "json":
        rows = [{_column(k): _jsonable(v) for k, v in row.items()} for row in report.results]
        return json.dumps(rows, sort_keys=True, indent=1).encode("utf-8")
    buf = io.StringIO()
    header = []
    for row in report.results:
        header += [k for k in row if k not in header]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([_column(h) for h in header])
    for row in report.results:
        writer.writerow([_fmt(row.get(h)) for h in header])
    return buf.getvalue().encode("utf-8")


def _metadata(report: RunReport) -> dict:
    return {"config": report.config.echo(), "seed": report.seed, "version": report.version,
            "timings_seconds": report.timings}


def report_bytes(report: RunReport, fmt: str) -> bytes:
    if fmt == "csv":
        return results_bytes(report, "csv")
    doc = _metadata(report)
    doc["results"] = json.loads(results_bytes(report, "json"))
    return json.dumps(doc, sort_keys=True, indent=1).encode("utf-8")


def atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_path(config: ExperimentConfig) -> Optional[Path]:
    if config.out == "-":
        return None
    if config.out:
        return Path(config.out)
    return Path(os.environ.get(OUTDIR_ENV, ".")) / f"{config.command}.{config.format}"


def write_report(report: RunReport) -> Optional[Path]:
    cfg = report.config
    data = report_bytes(report, cfg.format)
    path = output_path(cfg)
    if path is None:
        sys.stdout.write(data.decode("utf-8"))
        return None
    atomic_write(path, data)
    if cfg.format == "csv":
        meta = json.dumps(_metadata(report), sort_keys=True, indent=1).encode("utf-8")
        atomic_write(path.with_name(path.name + ".meta.json"), meta)
    return path


def _fail(kind: str, message: str, code: int) -> int:
    record = {"error": kind, "message": message, "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        config = parse_config(argv)
        write_report(run(config))
    except BudgetError as exc:
        return _fail("budget", str(exc), EXIT_BUDGET)
    except ContractError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
