"""Command-line entry point.

``growthfrag kappa``    print Phi(q) and kappa(q) of a configured model;
``growthfrag simulate`` simulate one tree / particle system and export it;
``growthfrag verify``   run verification suites and write reports.

Exit codes: 0 success, 1 configuration or precondition error, 2 statistical
failure or incomplete (resource-limited) result.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bblp import bblp_cumulant, simulate_bblp
from .cellsystem import simulate_cell_system, snapshot
from .config import ExperimentConfig
from .levy import ConfigurationError, cumulant, laplace_exponent
from .rng import RandomStream
from .verify import (
    ExperimentReport,
    verify_bblp_correspondence,
    verify_calibration,
    verify_coupled_symmetry,
    verify_cumulant_martingale,
    verify_excessive,
    verify_fdd_equality,
    verify_potential,
    verify_self_similarity,
    verify_switching,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAIL = 2

DEFAULT_Q_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0)

log = logging.getLogger("growthfrag")


# ---------------------------------------------------------------------------
# kappa
# ---------------------------------------------------------------------------

def kappa_table(cfg: ExperimentConfig, model_name: str, q_grid=DEFAULT_Q_GRID) -> list[tuple[float, float, float]]:
    """Rows ``(q, Phi(q), kappa(q))``; for BBLP blocks the motion exponent and the BBLP cumulant."""
    if model_name in cfg.models:
        chars = cfg.models[model_name].chars
        return [(float(q), laplace_exponent(chars, q), cumulant(chars, q)) for q in q_grid]
    if model_name in cfg.bblp_models:
        b = cfg.bblp_models[model_name]
        return [(float(q), laplace_exponent(b.motion, q), bblp_cumulant(b, q)) for q in q_grid]
    raise ConfigurationError(f"unknown model {model_name!r}")


def cmd_kappa(cfg: ExperimentConfig, model_name: str, q_grid=DEFAULT_Q_GRID, stream=None) -> int:
    stream = stream or sys.stdout
    rows = kappa_table(cfg, model_name, q_grid)
    stream.write(f"{'q':>8} {'Phi(q)':>22} {'kappa(q)':>22}\n")
    for q, phi, kap in rows:
        stream.write(f"{q:8.4g} {phi:22.15g} {kap:22.15g}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _snapshot_times(cfg: ExperimentConfig) -> list[float]:
    if cfg.snapshot_times is not None:
        return list(cfg.snapshot_times)
    return [cfg.horizon * k / 4 for k in range(5)]


def _write_lines(path: Path, lines) -> None:
    with path.open("w") as fh:
        for line in lines:
            fh.write(line + "\n")


def cmd_simulate(cfg: ExperimentConfig, model_name: str, out: Path, seed: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rng = RandomStream(seed)
    times = _snapshot_times(cfg)
    if model_name in cfg.models:
        model = cfg.models[model_name]
        tree = simulate_cell_system(model, cfg.eps, cfg.horizon, cfg.limits, rng)
        _write_lines(out / "tree.ndjson", tree.iter_ndjson())
        _write_lines(out / "snapshots.csv", (snapshot(tree, t).csv_row() for t in times))
        summary = {"model": model_name, "nodes": len(tree), "eps_kills": tree.eps_kills,
                   "complete": tree.complete, "notes": tree.notes}
        complete = tree.complete
    elif model_name in cfg.bblp_models:
        trunc = cfg.raw["models"][model_name].get("trunc", -math.inf)
        trunc = -math.inf if trunc in ("-inf", None) else float(trunc)
        system = simulate_bblp(cfg.bblp_models[model_name], trunc, cfg.horizon, cfg.limits, rng)
        _write_lines(out / "particles.ndjson", system.iter_ndjson())
        rows = []
        for t in times:
            pos = system.positions(t)
            rows.append(",".join([repr(float(t))] + [repr(float(v)) for v in pos]))
        _write_lines(out / "positions.csv", rows)
        summary = {"model": model_name, "particles": len(system), "complete": system.complete,
                   "notes": system.notes}
        complete = system.complete
    else:
        raise ConfigurationError(f"unknown model {model_name!r}")
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return EXIT_OK if complete else EXIT_FAIL


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _times(cfg, suite) -> list[float]:
    return [float(t) for t in suite.get("times", [cfg.horizon])]


def _trunc(v) -> float:
    return -math.inf if v in (None, "-inf") else float(v)


def run_suite(cfg: ExperimentConfig, suite: dict, seed: int, threads: int = 1) -> ExperimentReport:
    """Run one configured suite."""
    kind = suite["kind"]
    N = int(suite.get("N", cfg.N))
    eps = float(suite.get("eps", cfg.eps))
    lim = cfg.limits
    if kind == "cumulant_martingale":
        return verify_cumulant_martingale(cfg.model(suite["model"]), float(suite.get("q", 2.0)),
                                          float(suite.get("t", cfg.horizon)), N, seed, eps, lim, threads)
    if kind == "fdd_equality":
        return verify_fdd_equality(cfg.model(suite["model_a"]), cfg.model(suite["model_b"]), _times(cfg, suite), N,
                                   seed, eps, lim, threads, bool(suite.get("require_same_kappa", True)))
    if kind == "self_similarity":
        return verify_self_similarity(cfg.model(suite["model"]), float(suite.get("c", 2.0)), _times(cfg, suite), N,
                                      seed, eps, lim, threads)
    if kind == "excessive":
        return verify_excessive(cfg.model(suite["model"]), float(suite.get("q", 2.0)), float(suite.get("K", 0.0)),
                                float(suite.get("s", 0.0)), float(suite.get("t", cfg.horizon)), N, seed, eps,
                                suite.get("tree_replicas"), lim, threads)
    if kind == "potential":
        return verify_potential(cfg.model(suite["model"]), float(suite.get("q", 2.0)),
                                float(suite.get("t_max", cfg.horizon)), N, seed, eps, lim, threads)
    if kind == "switching":
        q_grid = tuple(float(q) for q in suite.get("q_grid", (2.0, 2.5, 3.0, 4.0)))
        return verify_switching(cfg.model(suite["model"]).chars, cfg.switches[suite["switch"]], N, seed, q_grid,
                                threads)
    if kind == "coupled_symmetry":
        mx, my = cfg.model(suite["model_x"]), cfg.model(suite["model_y"])
        return verify_coupled_symmetry(mx.chars, my.chars, mx.alpha, mx.start_size, eps, _times(cfg, suite), N,
                                       seed, lim, threads, bool(suite.get("compare_truncated_system", False)))
    if kind == "bblp_correspondence":
        return verify_bblp_correspondence(cfg.model(suite["model"]).chars, _times(cfg, suite), N, seed, eps,
                                          _trunc(suite.get("trunc")), float(suite.get("q", 2.0)), lim, threads)
    if kind == "calibration":
        return verify_calibration(cfg.model(suite["model"]), _times(cfg, suite), N, seed,
                                  int(suite.get("n_seeds", 100)), float(suite.get("max_failure_rate", 0.05)), eps,
                                  lim, threads)
    raise ConfigurationError(f"unknown suite kind {kind!r}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _estimate_rows(report: ExperimentReport):
    rows = []
    for key in sorted(report.estimates):
        est = report.estimates[key]
        rows.append(["estimate", key, repr(est.get("value")), repr(est.get("se"))])
    for key in sorted(report.references):
        ref = report.references[key]
        rows.append(["reference", key, repr(ref.get("value")), ""])
    return rows


def _ecdf_rows(report: ExperimentReport):
    rows = []
    for key in sorted(report.samples):
        for label, sample in zip(("a", "b"), report.samples[key]):
            x = np.sort(np.asarray(sample, dtype=float))
            F = np.arange(1, x.size + 1) / x.size
            rows.extend([key, label, repr(float(v)), repr(float(f))] for v, f in zip(x, F))
    return rows


def write_reports(reports: dict[str, ExperimentReport], out: Path, seed: int) -> None:
    """Deterministic outputs: report.json, report.txt and per-suite CSV plot data."""
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema": 1, "seed": seed, "reports": {name: r.to_dict() for name, r in reports.items()},
           "verdict": "pass" if all(r.passed for r in reports.values()) else "fail"}
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    (out / "report.txt").write_text("\n\n".join(r.to_text() for r in reports.values()) + "\n")
    for name, r in reports.items():
        (out / f"{name}_estimates.csv").write_text(_csv_text(["kind", "quantity", "value", "se"],
                                                             _estimate_rows(r)))
        if r.samples:
            (out / f"{name}_ecdf.csv").write_text(_csv_text(["series", "sample", "value", "ecdf"],
                                                            _ecdf_rows(r)))


def cmd_verify(cfg: ExperimentConfig, suite_names, out: Path, seed: int, threads: int = 1) -> int:
    names = list(cfg.suites) if not suite_names else list(suite_names)
    for n in names:
        if n not in cfg.suites:
            raise ConfigurationError(f"unknown suite {n!r}")
    if not names:
        log.info("no suites selected")
        return EXIT_OK
    reports = {}
    for n in names:
        log.info("running suite %s", n)
        reports[n] = run_suite(cfg, cfg.suites[n], seed, threads)
        log.info("suite %s: %s", n, reports[n].verdict)
    write_reports(reports, out, seed)
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _q_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad q grid {text!r}") from None


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="growthfrag", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON experiment configuration")
        sp.add_argument("--seed", type=_u64, default=None, help="master seed (overrides the config)")
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")

    k = sub.add_parser("kappa", help="tabulate Phi(q) and kappa(q)")
    common(k)
    k.add_argument("--model", required=True)
    k.add_argument("--q", type=_q_grid, default=DEFAULT_Q_GRID, help="comma-separated q values")

    s = sub.add_parser("simulate", help="simulate and export one system")
    common(s)
    s.add_argument("--model", required=True)

    v = sub.add_parser("verify", help="run verification suites")
    common(v)
    v.add_argument("--suite", action="append", default=None, help="suite name (repeatable; default: all)")
    v.add_argument("--threads", type=int, default=None, help="worker processes for replicas")
    return p


def _write_metadata(out: Path, args, started: float, code: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": args.command, "argv": sys.argv[1:], "config": str(args.config),
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(), "wall_seconds": time.time() - started,
        "exit_code": code, "version": __version__, "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (out / "metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = ExperimentConfig.load(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out if args.out is not None else cfg.out)
        if args.command == "kappa":
            return cmd_kappa(cfg, args.model, args.q)
        wrote = True
        if args.command == "simulate":
            code = cmd_simulate(cfg, args.model, out, seed)
        else:
            wrote = bool(args.suite or cfg.suites)
            threads = args.threads if args.threads is not None else cfg.threads
            if threads < 1:
                raise ConfigurationError("--threads must be >= 1")
            code = cmd_verify(cfg, args.suite, out, seed, threads)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if wrote:
        _write_metadata(out, args, started, code)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
