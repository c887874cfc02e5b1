"""Command-line front end: ``qkdmm verify|simulate|bounds|keyrate|sweep``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .channel import simulate
from .conic import SubproblemError
from .config import ConfigError, ScenarioConfig, load
from .detectors import build_bob_povm
from .keyrate import KeyRateError, build_problem, photon_bounds_for, solve
from .operators import random_joint_state
from .photon_bounds import MonotonicityError, sector_minima
from .squasher import squashing_residual

log = logging.getLogger("qkdmm")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_SOLVER = 0, 1, 2, 3
CSV_COLUMNS = (
    "param_value", "b1", "b2", "beta", "leak_ec", "key_rate_lb",
    "key_rate_lb_clamped", "fw_gap", "status",
)
COMPLETENESS_TOL = 1e-10
POSITIVITY_TOL = 1e-12
SQUASH_TOL = 1e-10
SQUASH_SAMPLES = 20


class VerificationError(RuntimeError):
    """A self-check failed; carries the full report."""

    def __init__(self, report: dict):
        super().__init__("verification failed")
        self.report = report


def cmd_verify(cfg: ScenarioConfig) -> dict:
    """POVM validity, squashing identity and monotonicity for one receiver."""
    spec = cfg.receiver()
    N = cfg.analysis.n_max_bounds
    povm = build_bob_povm(spec, max(N, 2))
    dev, mineig = povm.completeness_deviation(), povm.min_eigenvalue()
    report = {
        "povm": {
            "max_sector": povm.max_sector,
            "completeness_deviation": dev,
            "min_eigenvalue": mineig,
            "pass": dev < COMPLETENESS_TOL and mineig >= -POSITIVITY_TOL,
        }
    }
    rng = np.random.default_rng(0)
    dims = {n: len(povm.elements[0].blocks[n]) for n in range(povm.max_sector + 1)}
    worst = 0.0
    for _ in range(SQUASH_SAMPLES):
        rho = random_joint_state(dims, rng)
        for k in (1, 2):
            worst = max(worst, squashing_residual(rho, povm, k))
    report["squasher"] = {"samples": SQUASH_SAMPLES, "max_residual": worst,
                          "pass": worst < SQUASH_TOL}
    if N < 3:
        report["monotonicity"] = {"status": "insufficient range", "n_max": N}
    else:
        minima = sector_minima(povm, N)
        report["monotonicity"] = {
            "status": "pass" if minima.monotone else "fail",
            **minima.to_dict(),
        }
    report["ok"] = (
        report["povm"]["pass"]
        and report["squasher"]["pass"]
        and report["monotonicity"]["status"] != "fail"
    )
    if not report["ok"]:
        raise VerificationError(report)
    return report


def cmd_simulate(cfg: ScenarioConfig) -> dict:
    stats, _ = simulate(cfg.receiver(), cfg.channel())
    return stats.to_dict()


def _require_bounds_range(cfg: ScenarioConfig):
    if cfg.analysis.n_max_bounds < 3:
        raise ConfigError("photon-number bounds need analysis.n_max_bounds >= 3")


def cmd_bounds(cfg: ScenarioConfig) -> dict:
    _require_bounds_range(cfg)
    spec = cfg.receiver()
    stats, _ = simulate(spec, cfg.channel())
    bounds, minima = photon_bounds_for(spec, stats, cfg.analysis.n_max_bounds)
    return {**bounds.to_dict(), "minima": minima.to_dict()}


def cmd_keyrate(cfg: ScenarioConfig) -> dict:
    """Simulate, bound (flag mode only), solve and return the result document."""
    a = cfg.analysis
    spec = cfg.receiver()
    k = a.flag_k if a.mode == "flag" else a.cutoff_n
    povm = build_bob_povm(spec, max(k, 2))
    stats, rho = simulate(spec, cfg.channel(), povm)
    bounds = None
    if a.mode == "flag":
        _require_bounds_range(cfg)
        bounds, _ = photon_bounds_for(spec, stats, a.n_max_bounds)
    problem = build_problem(spec, stats, rho, a.mode, k, bounds, povm)
    result = solve(
        problem, eps=a.epsilon, gap_tol=a.fw_gap_tol, max_iter=a.fw_max_iter,
        f_ec=a.f_ec, warm_start=a.warm_start, conic_tol=a.conic_tol,
    )
    out = result.to_dict()
    out["b1"] = None if bounds is None else bounds.b1
    out["b2"] = None if bounds is None else bounds.b2
    return out


def _sweep_point(args) -> dict:
    cfg, value = args
    row = dict.fromkeys(CSV_COLUMNS, "")
    row["param_value"] = value
    try:
        res = cmd_keyrate(cfg.at(value))
    except (ConfigError, MonotonicityError, KeyRateError, SubproblemError, ValueError) as exc:
        row["status"] = f"error:{type(exc).__name__}"
        log.warning("sweep point %s failed: %s", value, exc)
        return row
    for key in ("b1", "b2", "beta", "leak_ec", "key_rate_lb", "fw_gap", "status"):
        row[key] = "" if res[key] is None else res[key]
    row["key_rate_lb_clamped"] = max(res["key_rate_lb"], 0.0)
    return row


def workers() -> int:
    raw = os.environ.get("QKDMM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"QKDMM_THREADS must be an integer, got {raw!r}") from None


def cmd_sweep(cfg: ScenarioConfig) -> list[dict]:
    """One row per sweep value, in grid order, computed on a worker pool."""
    if cfg.sweep is None:
        raise ConfigError("sweep command needs a 'sweep' section")
    jobs = [(cfg, v) for v in cfg.sweep.values()]
    n = min(workers(), len(jobs))
    if n <= 1:
        return [_sweep_point(j) for j in jobs]
    # fork is unsafe once a numerical library has started OpenMP threads
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=n, mp_context=ctx) as pool:
        return list(pool.map(_sweep_point, jobs))


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return v


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


COMMANDS = {
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "keyrate": cmd_keyrate,
    "sweep": cmd_sweep,
}


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qkdmm", description="Key-rate analysis of BB84 receivers with efficiency mismatch."
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load(args.config)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationError as exc:
        _emit(json.dumps(exc.report, indent=2) + "\n", args.out)
        print("verification failed", file=sys.stderr)
        return EXIT_VERIFY
    except MonotonicityError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (KeyRateError, SubproblemError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.command == "sweep":
        _emit(rows_to_csv(result), args.out)
        if any(str(r["status"]).startswith("error") for r in result):
            return EXIT_SOLVER
    else:
        _emit(json.dumps(result, indent=2) + "\n", args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
