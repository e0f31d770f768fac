"""Command-line front end: ``screen``, ``run``, ``verify`` and ``rates``.

Configuration is an INI file with flat sections; command-line flags override
it.  Example::

    [problem]
    name = sine_modes
    d = 2
    s = 4
    kappa = 0.9

    [estimator]
    driver = miqmc
    eps = 4e-3, 2e-3, 1e-3
    seed = 7
    R = 32

    [output]
    dir = results

Result files (``*.jsonl``, ``*.csv``) are byte-identical for identical
configuration and seed.  Wall-clock timings go to ``timing.json`` and
standard output only.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import ConfigurationError, EstimatorFailure, SolverError
from .estimators import DRIVERS, EstimatorParams, LevelRecord, run_estimator, screen_only
from .grid import SolverConfig
from .model import make_problem, validate_ellipticity
from .rates import fit_rates, linear_fit, theorem_verdict
from .sampler import load_lattice_file

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR, EXIT_VERIFY = 0, 2, 3, 4
CSV_COLUMNS = ["key", "mean", "raw_variance", "variance_of_mean", "cost_per_sample", "N", "R",
               "total_cost"]

SECTIONS = {
    "problem": {"name", "d", "s", "kappa"},
    "estimator": {"driver", "eps", "seed", "R", "n_screen", "screen_level", "qmc_screen_points",
                  "qmc_screen_shifts", "max_level", "fixed_L", "p", "max_refinements",
                  "bias_levels"},
    "solver": {"kind", "tol", "max_cycles", "pre_sweeps", "post_sweeps", "direct_limit"},
    "lattice": {"file", "korobov_fallback", "n_max", "search_cap"},
    "output": {"dir"},
    "run": {"threads"},
}


@dataclass
class RunConfig:
    problem: str = "sine_modes"
    d: int = 1
    s: int = 4
    kappa: float = 0.9
    driver: str = "mlmc"
    eps: List[float] = field(default_factory=lambda: [1e-3])
    seed: Optional[int] = None
    R: int = 32
    n_screen: int = 200
    screen_level: Optional[int] = None
    qmc_screen_points: int = 32
    qmc_screen_shifts: int = 16
    max_level: int = 10
    fixed_L: Optional[int] = None
    p: Optional[float] = None
    max_refinements: int = 10
    bias_levels: int = 3
    solver_kind: str = "auto"
    tol: float = 1e-10
    max_cycles: int = 100
    pre_sweeps: int = 2
    post_sweeps: int = 2
    direct_limit: int = 10_000
    lattice_file: Optional[str] = None
    korobov_fallback: bool = True
    n_max: int = 2**16
    search_cap: int = 512
    out: str = "results"
    threads: int = 0  # 0: machine parallelism

    def validate(self):
        if self.driver not in DRIVERS:
            raise ConfigurationError(
                f"[estimator] driver: unknown driver {self.driver!r}; choose from {sorted(DRIVERS)}")
        if self.seed is None:
            raise ConfigurationError("[estimator] seed: a seed is required")
        if not self.eps:
            raise ConfigurationError("[estimator] eps: at least one value is required")
        for e in self.eps:
            if not (0 < e < math.exp(-1)):
                raise ConfigurationError(f"[estimator] eps: {e} is not in (0, 1/e)")
        if self.R < 2:
            raise ConfigurationError("[estimator] R: need at least 2 shifts")
        if self.n_max < 1 or self.n_max & (self.n_max - 1):
            raise ConfigurationError(f"[lattice] n_max: {self.n_max} is not a power of 2")
        return self

    def canonical(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out.pop("out")
        out.pop("threads")
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def spec(self):
        params = {"d": self.d, "s": self.s}
        if self.problem == "sine_modes":
            params["kappa"] = self.kappa
        spec = make_problem(self.problem, **params)
        validate_ellipticity(spec)
        return spec

    def worker_count(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def estimator_params(self, spec) -> EstimatorParams:
        lattice = None
        if DRIVERS[self.driver].sampling == "qmc":
            if self.lattice_file:
                lattice = load_lattice_file(self.lattice_file, spec.s, self.n_max)
            elif not self.korobov_fallback:
                raise ConfigurationError(
                    "[lattice] file: no lattice file given and korobov_fallback is off")
        solver = SolverConfig(kind=self.solver_kind, tol=self.tol, max_cycles=self.max_cycles,
                              pre_sweeps=self.pre_sweeps, post_sweeps=self.post_sweeps,
                              direct_limit=self.direct_limit)
        return EstimatorParams(
            seed=self.seed, screen_level=self.screen_level, n_screen=self.n_screen,
            qmc_screen_points=self.qmc_screen_points, qmc_screen_shifts=self.qmc_screen_shifts,
            R=self.R, max_level=self.max_level, fixed_L=self.fixed_L, p=self.p,
            bias_levels=self.bias_levels, max_refinements=self.max_refinements,
            lattice=lattice, lattice_n_max=self.n_max, korobov_fallback=self.korobov_fallback,
            korobov_cap=self.search_cap, solver=solver, threads=self.worker_count())


_KEYMAP = {("problem", "name"): "problem", ("solver", "kind"): "solver_kind",
           ("lattice", "file"): "lattice_file", ("output", "dir"): "out"}


def _convert(name: str, raw: str, section: str):
    target = {f.name: f for f in fields(RunConfig)}[name]
    text = raw.strip()
    try:
        if name == "eps":
            return [float(v) for v in text.replace(",", " ").split()]
        if name == "korobov_fallback":
            return text.lower() in ("1", "true", "yes", "on")
        if text.lower() in ("", "none") and "Optional" in str(target.type):
            return None
        kind = str(target.type)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"[{section}] {name}: cannot parse {raw!r}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"{path}: [{section}] unknown key {key!r}")
            name = _KEYMAP.get((section, key), key)
            setattr(cfg, name, _convert(name, raw, section))
    return cfg


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    for flag, name in (("driver", "driver"), ("seed", "seed"), ("dim", "d"), ("sdim", "s"),
                       ("out", "out"), ("lattice_file", "lattice_file"), ("threads", "threads")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "eps", None):
        cfg.eps = list(args.eps)
    return cfg


# -- output ------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True)


def write_csv(path: Path, records, extra: dict = None):
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(extra) + CSV_COLUMNS)
        for rows, vals in records:
            for r in rows:
                w.writerow([*vals, r.key_label(), repr(float(r.mean)), repr(float(r.raw_variance)),
                            repr(float(r.variance_of_mean)), repr(float(r.cost_per_sample)),
                            int(r.N), int(r.R), repr(float(r.total_cost))])


def read_csv(path) -> List[LevelRecord]:
    """Level records from a table written by ``screen`` or ``run``."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"table {path} does not exist")
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                label = row["key"]
                key = (tuple(int(v) for v in label.strip("()").split(","))
                       if label.startswith("(") else int(label))
                out.append(LevelRecord(key, float(row["mean"]), float(row["variance_of_mean"]),
                                       float(row["raw_variance"]), float(row["cost_per_sample"]),
                                       int(row["N"]), int(row["R"]), float(row["total_cost"])))
            except (KeyError, ValueError) as exc:
                raise ConfigurationError(f"{path}: bad row {row}: {exc}") from None
    return out


def _environment(cfg: RunConfig) -> dict:
    return {"package_version": __version__, "numpy": np.__version__,
            "config_hash": cfg.config_hash(), "config": cfg.canonical()}


def _write_timing(out: Path, timing: dict):
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n")


def _rates_lines(rf, p=None) -> List[str]:
    if rf is None:
        return ["  rates: not enough resolvable levels"]
    s = (f"  alpha = {rf.alpha:.3f} +- {rf.se_alpha:.3f}, beta = {rf.beta:.3f} +- {rf.se_beta:.3f},"
         f" gamma = {rf.gamma:.3f} +- {rf.se_gamma:.3f}")
    if p is not None:
        s += f", p = {p:.3f}"
    return [s]


# -- commands ----------------------------------------------------------------

def cmd_screen(cfg: RunConfig) -> int:
    spec = cfg.spec()
    params = cfg.estimator_params(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    records, rf, p, notes = screen_only(spec, cfg.driver, params)
    qmc = DRIVERS[cfg.driver].sampling == "qmc"
    with open(out / "screen.jsonl", "w") as fh:
        fh.write(_dump({"type": "environment", **_environment(cfg)}) + "\n")
        for r in records:
            fh.write(_dump({"type": "level", **r.to_dict()}) + "\n")
        fh.write(_dump({"type": "rates", "fit": None if rf is None else rf.to_dict(),
                        "p": p if qmc else None, "notes": notes}) + "\n")
    write_csv(out / "screen.csv", [(records, [])])
    elapsed = time.perf_counter() - t0
    _write_timing(out, {"command": "screen", "seconds": elapsed})
    print(f"screen {cfg.driver} d={spec.d} s={spec.s}: {len(records)} rows -> {out}")
    print(f"{'key':>14} {'mean':>12} {'raw_var':>11} {'cost':>9}")
    for r in records:
        print(f"{r.key_label():>14} {r.mean:12.4e} {r.raw_variance:11.3e} {r.cost_per_sample:9.1f}")
    for line in _rates_lines(rf, p if qmc else None):
        print(line)
    print(f"  time {elapsed:.2f}s")
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    spec = cfg.spec()
    params = cfg.estimator_params(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, failures, timing = [], [], {}
    status = EXIT_OK
    with open(out / "run.jsonl", "w") as fh:
        fh.write(_dump({"type": "environment", **_environment(cfg)}) + "\n")
        for eps in cfg.eps:
            t0 = time.perf_counter()
            try:
                rep = run_estimator(spec, cfg.driver, eps, params)
            except (EstimatorFailure, SolverError) as exc:
                diag = getattr(exc, "diagnostics", {}) or {"history": getattr(exc, "history", [])}
                fh.write(_dump({"type": "failure", "eps": eps, "message": str(exc),
                                "diagnostics": diag}) + "\n")
                failures.append((eps, str(exc)))
                status = EXIT_ESTIMATOR
                continue
            timing[repr(eps)] = time.perf_counter() - t0
            reports.append(rep)
            fh.write(_dump({"type": "report", **rep.to_dict()}) + "\n")
        verdict = None
        if reports and reports[0].fitted_rates is not None:
            slope = None
            if len(reports) >= 2:
                fit = linear_fit([math.log2(r.eps) for r in reports],
                                 [math.log2(r.modeled_cost) for r in reports])
                slope = fit.slope
            verdict = theorem_verdict(reports[-1].fitted_rates, spec.d, cfg.driver, slope)
            fh.write(_dump({"type": "verdict", **verdict.to_dict()}) + "\n")
    write_csv(out / "levels.csv", [(r.levels, [repr(r.eps)]) for r in reports], {"eps": None})
    _write_timing(out, {"command": "run", "seconds_per_eps": timing})

    print(f"run {cfg.driver} d={spec.d} s={spec.s} seed={cfg.seed} -> {out}")
    for r in reports:
        print(f"  eps={r.eps:.3g}: estimate {r.estimate:.8f}  L={r.L}  bias~{r.bias_estimate:.2e}"
              f"  var={r.variance:.2e}  cost={r.total_cost:.4g} (model {r.modeled_cost:.4g})"
              f"  levels={len(r.levels)}  {timing[repr(r.eps)]:.2f}s")
    for eps, msg in failures:
        print(f"  eps={eps:.3g}: FAILED {msg}")
    if verdict is not None:
        print("  " + verdict.summary)
    return status


def cmd_verify(cfg: RunConfig, quick: bool = False) -> int:
    from .verification import run_verification

    t0 = time.perf_counter()
    results = run_verification(statistical=not quick, seed=cfg.seed or 0)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "verify.jsonl", "w") as fh:
        for r in results:
            fh.write(_dump(r.to_dict()) + "\n")
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in "
          f"{time.perf_counter() - t0:.1f}s")
    if failed:
        print("failed: " + "; ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_rates(table, driver: str, d: int, abscissa: Optional[str]) -> int:
    records = read_csv(table)
    if abscissa is None:
        abscissa = "order1_norm" if records and isinstance(records[0].key, tuple) else "scalar_level"
    try:
        rf = fit_rates(records, abscissa)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    for line in _rates_lines(rf):
        print(line)
    print("  " + theorem_verdict(rf, d, driver).summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="miqmc", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", help="INI configuration file")
        p.add_argument("--driver", choices=sorted(DRIVERS))
        p.add_argument("--eps", type=float, nargs="+")
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", type=int, help="spatial dimension d")
        p.add_argument("--sdim", type=int, help="stochastic dimension s")
        p.add_argument("--out", help="output directory")
        p.add_argument("--lattice-file", dest="lattice_file")
        p.add_argument("--threads", type=int)

    for name, helptext in (("screen", "pilot run only: level table and rate fits"),
                           ("run", "full estimator runs over the eps list"),
                           ("verify", "identity suites and reduced statistical checks")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="identity suites only")
    p = sub.add_parser("rates", help="re-fit rates from a saved table")
    p.add_argument("table")
    p.add_argument("--driver", choices=sorted(DRIVERS), default="mimc")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--abscissa", choices=["scalar_level", "order1_norm"])
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rates":
            return cmd_rates(args.table, args.driver, args.dim, args.abscissa)
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_flags(cfg, args)
        if args.command == "verify":
            if cfg.seed is None:
                cfg.seed = 0
            return cmd_verify(cfg, quick=args.quick)
        cfg.validate()
        if args.command == "screen":
            return cmd_screen(cfg)
        return cmd_run(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimatorFailure, SolverError) as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR


if __name__ == "__main__":
    sys.exit(main())
