"""Benchmark harness: run seeded (problem x seed) cells and write traces and summaries.

Usage::

    bads-bench --problem rosenbrock --dim 2 --seeds 10 --max-evals 300 --out-dir out/

Outputs, per invocation:

* ``<out-dir>/traces/<problem>_d<D>_s<seed>[_poll-only].csv`` with header
  ``iteration,evals,stage,poll_size,f_best,x_1..x_D``
* ``<out-dir>/summary.jsonl`` with one JSON object per cell.

Exit codes: 0 success, 1 a run raised, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ObjectiveRaised
from ..optimizer import OptimizationResult, Options, optimize
from ..problem import ProblemSpec, validate_spec
from .functions import PROBLEM_NAMES, make_objective, make_problem

_log = logging.getLogger(__name__)

EXIT_OK, EXIT_RUN_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
ABLATIONS = ("none", "poll-only")


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    problems: list = field(default_factory=lambda: ["rosenbrock"])
    dim: int = 2
    seeds: list = field(default_factory=lambda: list(range(10)))
    max_evals: int | None = None
    noise_sd: float | None = None
    ablation: str = "none"
    out_dir: str = "bench_out"
    kappa: float = 2.0
    workers: int = 1
    record_timing: bool = False

    def validate(self):
        for name in self.problems:
            if name not in PROBLEM_NAMES:
                raise ConfigError(f"unknown problem {name!r}")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if "rosenbrock" in self.problems and self.dim < 2:
            raise ConfigError("rosenbrock needs dim >= 2")
        if not self.seeds:
            raise ConfigError("no seeds given")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative")
        if self.max_evals is not None and self.max_evals < 1:
            raise ConfigError("max_evals must be >= 1")
        if self.noise_sd is not None and not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise ConfigError("noise_sd must be a nonnegative number")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ConfigError("kappa must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


def parse_seeds(text) -> list:
    """``"10"`` -> 0..9, ``"3-7"`` -> 3..7, ``"1,5,9"`` -> that list."""
    text = str(text).strip()
    try:
        if "," in text:
            return [int(t) for t in text.split(",") if t.strip()]
        if "-" in text[1:]:
            lo, hi = text.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        return list(range(int(text)))
    except ValueError as exc:
        raise ConfigError(f"cannot parse seeds {text!r}") from exc


def _convert(key, raw):
    try:
        if key == "problems":
            return [p.strip() for p in str(raw).split(",") if p.strip()]
        if key == "seeds":
            return parse_seeds(raw)
        if key in ("dim", "workers", "max_evals"):
            return int(raw)
        if key in ("kappa", "noise_sd"):
            return float(raw)
        if key == "record_timing":
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        return str(raw).strip()
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from exc


_KEY_ALIASES = {"problem": "problems", "max_evaluations": "max_evals", "timing": "record_timing"}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; an optional ``[section]`` header is ignored."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser()
    try:
        parser.read_string("[__flat__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    known = {f.name for f in fields(BenchConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            key = key.replace("-", "_")
            key = _KEY_ALIASES.get(key, key)
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _convert(key, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bads-bench", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--problem", dest="problems", help=f"comma-separated: {', '.join(PROBLEM_NAMES)}")
    p.add_argument("--dim", type=int)
    p.add_argument("--seeds", help="count N, range A-B or list a,b,c")
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--kappa", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", dest="record_timing", action="store_true", default=None,
                   help="record wall_ms (otherwise null, keeping output reproducible)")
    return p


def config_from_args(argv=None) -> BenchConfig:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key, raw in vars(args).items():
        if key == "config" or raw is None:
            continue
        values[key] = _convert(key, raw) if key in ("problems", "seeds") else raw
    return BenchConfig(**values).validate()


def cell_name(problem, dim, seed, ablation) -> str:
    suffix = "" if ablation == "none" else f"_{ablation}"
    return f"{problem}_d{dim}_s{seed}{suffix}"


def run_cell(problem_name, seed, config: BenchConfig) -> tuple[OptimizationResult, float]:
    """Run one (problem, seed) cell; returns the result and wall time in ms."""
    tp = make_problem(problem_name, config.dim, config.noise_sd)
    noise_rng = np.random.default_rng([seed, 1])
    objective = make_objective(tp, noise_rng)
    noisy = bool(tp.noise_sd)
    spec = ProblemSpec(objective, tp.dim, tp.x0, tp.lower, tp.upper, noisy=noisy,
                       noise_scale_hint=tp.noise_sd if noisy else None)
    poll_only = config.ablation == "poll-only"
    opts = Options(max_evaluations=config.max_evals, seed=seed, kappa=config.kappa,
                   use_search=not poll_only, rank_poll=not poll_only)
    start = time.perf_counter()
    result = optimize(validate_spec(spec), opts)
    return result, 1000.0 * (time.perf_counter() - start)


def _fmt(v) -> str:
    return repr(float(v))


def trace_csv(result: OptimizationResult, dim: int) -> str:
    header = ["iteration", "evals", "stage", "poll_size", "f_best"] + [f"x_{i + 1}" for i in range(dim)]
    lines = [",".join(header)]
    for row in result.trace:
        cells = [str(row.iteration), str(row.evaluations), row.stage, _fmt(row.poll_size), _fmt(row.f_best)]
        cells += [_fmt(v) for v in row.x]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def summary_row(problem, dim, result: OptimizationResult, wall_ms) -> dict:
    return {
        "problem": problem,
        "dim": dim,
        "seed": result.seed,
        "f_best": float(result.f_best),
        "f_sd": float(result.f_sd),
        "evals": result.total_evaluations,
        "iters": result.total_iterations,
        "reason": result.termination_reason,
        "wall_ms": wall_ms,
    }


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_benchmark(config: BenchConfig) -> int:
    """Run every cell of ``config`` and write outputs; returns the exit code."""
    trace_dir = os.path.join(config.out_dir, "traces")
    try:
        os.makedirs(trace_dir, exist_ok=True)
    except OSError as exc:
        _log.error("cannot create output directory: %s", exc)
        return EXIT_IO

    cells = [(p, s) for p in config.problems for s in config.seeds]

    def work(cell):
        problem, seed = cell
        try:
            result, wall_ms = run_cell(problem, seed, config)
        except ObjectiveRaised as exc:
            _log.error("cell %s seed %d failed: %s", problem, seed, exc)
            return None
        name = cell_name(problem, config.dim, seed, config.ablation)
        write_atomic(os.path.join(trace_dir, name + ".csv"), trace_csv(result, config.dim))
        return summary_row(problem, config.dim, result, wall_ms if config.record_timing else None)

    try:
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                rows = list(pool.map(work, cells))
        else:
            rows = [work(c) for c in cells]
        done = [r for r in rows if r is not None]
        text = "".join(json.dumps(r) + "\n" for r in done)
        write_atomic(os.path.join(config.out_dir, "summary.jsonl"), text)
    except OSError as exc:
        _log.error("I/O failure: %s", exc)
        return EXIT_IO
    for r in done:
        _log.info("%s d=%d seed=%d f_best=%.6g evals=%d reason=%s",
                  r["problem"], r["dim"], r["seed"], r["f_best"], r["evals"], r["reason"])
    return EXIT_OK if len(done) == len(cells) else EXIT_RUN_FAILED


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(message)s", level=logging.INFO)
    try:
        config = config_from_args(argv)
    except ConfigError as exc:
        print(f"bads-bench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return run_benchmark(config)


if __name__ == "__main__":
    sys.exit(main())
