"""Command-line front end.

    nbvb analyze   --dv 5 --dc 6 --alg sbb --alpha0 0.30
    nbvb threshold --grid table1
    nbvb simulate  --n 3000 --dv 5 --dc 6 --alg sbb --alpha-grid 0.20:0.45:0.01 --trials 100
    nbvb compare   --dv 5 --dc 6 --alg sbb --offset -0.02 --n 100000
    nbvb rerun     out/analyze_manifest.json --out out2

Settings resolve as flags > ``--config`` JSON file > built-in defaults;
``--show-config`` prints the resolved settings and exits.  Output goes to
``--out``, else ``$NBVB_OUT``, else the current directory.  Every command
writes ``<command>_manifest.json`` next to its outputs.

Exit codes: 0 ok / DE success, 2 DE stall, 3 DE inconclusive, 1 all
threshold cells failed, 64 usage error, 130 interrupted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .de import DeParams, StopRule, Verdict, de_trace, write_de_trace_csv
from .decoders import Algorithm, EqualityPolicy
from .graph import GraphSpec, valid_n
from .montecarlo import (
    SweepConfig,
    run_sweep,
    run_trace_comparison,
    write_gnuplot,
    write_sweep_csv,
    write_trace_csv,
)
from .signals import ValueModel
from .threshold import (
    TABLE1_GRID,
    ThresholdError,
    audit_scan,
    find_threshold,
    format_table,
    threshold_table,
    write_threshold_csv,
)

EX_USAGE = 64
EXIT_FOR_VERDICT = {Verdict.SUCCESS: 0, Verdict.STALL: 2, Verdict.INCONCLUSIVE: 3}

STOP_DEFAULTS = {
    "stop.success_eps": 1e-7,
    "stop.progress_eps": 1e-10,
    "stop.patience": 50,
    "stop.max_iter": 10**6,
}

DEFAULTS = {
    "analyze": {"dv": 5, "dc": 6, "alg": "sbb", "alpha0": None, **STOP_DEFAULTS},
    "threshold": {"dv": None, "dc": None, "alg": None, "grid": None, "tol": 1e-4,
                  "audit": 0, "jobs": 1, **STOP_DEFAULTS},
    "simulate": {"n": 3000, "dv": 5, "dc": 6, "alg": "sbb", "alpha_grid": "0.20:0.45:0.01",
                 "trials": 1000, "seed": 0, "graph_seed": None, "graph_mode": "fixed",
                 "value_model": "exact", "max_rounds": None, "jobs": 1},
    "compare": {"n": 100000, "dv": 5, "dc": 6, "alg": "sbb", "alpha0": None, "offset": None,
                "trials": 10, "seed": 0, "graph_seed": None, "prefix": 5,
                "value_model": "exact", "tol": 1e-4, "jobs": 1, **STOP_DEFAULTS},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _add_stop(p):
    g = p.add_argument_group("DE stop rule")
    g.add_argument("--stop.success-eps", dest="stop.success_eps", type=float)
    g.add_argument("--stop.progress-eps", dest="stop.progress_eps", type=float)
    g.add_argument("--stop.patience", dest="stop.patience", type=int)
    g.add_argument("--stop.max-iter", dest="stop.max_iter", type=int)


def _add_common(p):
    p.add_argument("--out", help="output directory (default: $NBVB_OUT or .)")
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--show-config", action="store_true", help="print resolved settings and exit")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nbvb", description="Verification-decoding workbench: DE analysis and simulation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    p = sub.add_parser("analyze", help="run density evolution for one alpha0", argument_default=S)
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--alg")
    p.add_argument("--alpha0", type=float)
    _add_stop(p)
    _add_common(p)

    p = sub.add_parser("threshold", help="bisect for success thresholds", argument_default=S)
    p.add_argument("--grid", help="'table1' or cells like '5,6,sbb;3,4,lm'")
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--alg", help="algorithm or comma-separated list")
    p.add_argument("--tol", type=float)
    p.add_argument("--audit", type=int, help="also scan this many uniform alpha0 probes per cell")
    p.add_argument("--jobs", type=int)
    _add_stop(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo success-rate sweep", argument_default=S)
    p.add_argument("--n", type=int)
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--alg", help="algorithm or comma-separated list")
    p.add_argument("--alpha-grid", dest="alpha_grid", help="'start:stop:step' or 'a,b,c'")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--graph-seed", dest="graph_seed", type=int)
    p.add_argument("--graph-mode", dest="graph_mode", choices=["fixed", "fresh"])
    p.add_argument("--value-model", dest="value_model", choices=["exact", "gaussian"])
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--jobs", type=int)
    _add_common(p)

    p = sub.add_parser("compare", help="DE vs simulated alpha trace", argument_default=S)
    p.add_argument("--n", type=int)
    p.add_argument("--dv", type=int)
    p.add_argument("--dc", type=int)
    p.add_argument("--alg")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--offset", type=float, help="alpha0 = computed threshold + offset")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--graph-seed", dest="graph_seed", type=int)
    p.add_argument("--prefix", type=int)
    p.add_argument("--value-model", dest="value_model", choices=["exact", "gaussian"])
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int)
    _add_stop(p)
    _add_common(p)

    p = sub.add_parser("rerun", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return ap


def resolve(command: str, ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    path = getattr(ns, "config", None)
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    for k in DEFAULTS[command]:
        if hasattr(ns, k):
            cfg[k] = getattr(ns, k)
    return cfg


def _stop(cfg) -> StopRule:
    try:
        return StopRule(cfg["stop.success_eps"], cfg["stop.progress_eps"],
                        int(cfg["stop.patience"]), int(cfg["stop.max_iter"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _alg(name) -> Algorithm:
    try:
        return Algorithm(str(name).lower())
    except ValueError:
        raise UsageError(f"unknown algorithm {name!r}; choose from genie, lm, sbb, xh") from None


def _algs(spec) -> list[Algorithm]:
    return [_alg(a) for a in str(spec).split(",") if a]


def _alpha(a, what="alpha0") -> float:
    if a is None:
        raise UsageError(f"--{what} is required")
    a = float(a)
    if not 0.0 <= a <= 1.0:
        raise UsageError(f"--{what} must lie in [0, 1], got {a}")
    return a


def _degrees(cfg):
    dv, dc = cfg["dv"], cfg["dc"]
    if dv is None or dc is None or int(dv) < 1 or int(dc) < 1:
        raise UsageError("--dv and --dc must be positive integers")
    return int(dv), int(dc)


def parse_alpha_grid(text: str) -> list[float]:
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(round((stop - start) / step)) + 1
            grid = [round(start + i * step, 12) for i in range(count)]
        else:
            grid = sorted(float(x) for x in text.split(",") if x)
    except ValueError:
        raise UsageError(f"bad --alpha-grid {text!r}") from None
    if not grid or any(not 0.0 <= a <= 1.0 for a in grid):
        raise UsageError("--alpha-grid values must lie in [0, 1]")
    return grid


def _graph_spec(cfg, dv, dc, log) -> GraphSpec:
    n = int(cfg["n"])
    if n < 1:
        raise UsageError("--n must be positive")
    n_eff = valid_n(n, dv, dc)
    if n_eff != n:
        log(f"note: n={n} is not compatible with ({dv},{dc}); using n={n_eff}")
    gseed = cfg["graph_seed"] if cfg["graph_seed"] is not None else cfg["seed"]
    return GraphSpec(n_eff, dv, dc, int(gseed))


def _policy(value_model: str) -> EqualityPolicy:
    return EqualityPolicy() if value_model == "exact" else EqualityPolicy.tolerant()


def cmd_analyze(cfg, out: Path, log) -> tuple[int, list[str], dict]:
    dv, dc = _degrees(cfg)
    params = DeParams(dv, dc, _alg(cfg["alg"]))
    alpha0 = _alpha(cfg["alpha0"])
    tr = de_trace(alpha0, params, _stop(cfg))
    name = f"analyze_{params.algorithm.value}_{dv}_{dc}.csv"
    write_de_trace_csv(tr, out / name)
    log(f"{params.algorithm.value} ({dv},{dc}) alpha0={alpha0}: {tr.verdict.value} "
        f"after {tr.iterations} iterations, final alpha={tr.states[-1].alpha:.3e}")
    return EXIT_FOR_VERDICT[tr.verdict], [name], {"verdict": tr.verdict.value,
                                                  "iterations": tr.iterations}


def _grid(cfg) -> list[tuple[int, int, Algorithm]]:
    g = cfg["grid"]
    if g is None:
        dv, dc = _degrees(cfg)
        if cfg["alg"] is None:
            raise UsageError("give --grid or --dv/--dc/--alg")
        return [(dv, dc, a) for a in _algs(cfg["alg"])]
    if g == "table1":
        return list(TABLE1_GRID)
    cells = []
    for part in str(g).split(";"):
        try:
            dv, dc, a = part.split(",")
            cells.append((int(dv), int(dc), _alg(a)))
        except ValueError:
            raise UsageError(f"bad grid cell {part!r}; expected d_v,d_c,alg") from None
    return cells


def cmd_threshold(cfg, out: Path, log) -> tuple[int, list[str], dict]:
    stop = _stop(cfg)
    tol = float(cfg["tol"])
    if not tol > 0:
        raise UsageError("--tol must be positive")
    cells = threshold_table(_grid(cfg), stop, tol, int(cfg["jobs"]))
    write_threshold_csv(cells, out / "thresholds.csv")
    text = format_table(cells)
    errors = [f"({c.d_v},{c.d_c}) {c.algorithm.value}: {c.error}" for c in cells if c.error]
    audits = []
    if int(cfg["audit"]) > 1:
        for c in cells:
            _, bad = audit_scan(DeParams(c.d_v, c.d_c, c.algorithm), stop, int(cfg["audit"]))
            if bad:
                audits.append(f"({c.d_v},{c.d_c}) {c.algorithm.value}: non-monotone verdict near {bad}")
        text += "audit: " + ("; ".join(audits) if audits else "verdicts monotone on every scanned cell") + "\n"
    if errors:
        text += "errors:\n" + "\n".join(errors) + "\n"
    (out / "thresholds.txt").write_text(text)
    log(text.rstrip())
    code = 1 if cells and all(c.report is None for c in cells) else 0
    return code, ["thresholds.csv", "thresholds.txt"], {"failed_cells": len(errors)}


def cmd_simulate(cfg, out: Path, log) -> tuple[int, list[str], dict]:
    dv, dc = _degrees(cfg)
    spec = _graph_spec(cfg, dv, dc, log)
    grid = parse_alpha_grid(cfg["alpha_grid"])
    trials = int(cfg["trials"])
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    files, results = [], {}
    for alg in _algs(cfg["alg"]):
        sc = SweepConfig(spec, alg, tuple(grid), trials, _policy(cfg["value_model"]),
                         int(cfg["seed"]), cfg["graph_mode"], cfg["value_model"], cfg["max_rounds"])
        csv_name, dat_name = f"sweep_{alg.value}.csv", f"sweep_{alg.value}.dat"
        files += [csv_name, dat_name]
        with open(out / csv_name, "w", newline="") as fh, open(out / dat_name, "w", newline="") as dat:
            fh.write("alpha0,success_rate,trials,mean_iterations,anomalies\n")
            dat.write(f"# {alg.value} n={spec.n}\n# alpha0 success_rate\n")

            def flush(p):
                fh.write(f"{p.alpha0!r},{p.success_rate!r},{p.trials},{p.mean_iterations!r},{p.anomaly_count}\n")
                dat.write(f"{p.alpha0!r} {p.success_rate!r}\n")
                fh.flush()
                dat.flush()
                log(f"{alg.value} alpha0={p.alpha0:.4f} rate={p.success_rate:.3f} anomalies={p.anomaly_count}")

            curve = run_sweep(sc, int(cfg["jobs"]), on_point=flush)
        results[alg.value] = {"anomalies": sum(p.anomaly_count for p in curve.points),
                              "monotonicity_flags": curve.monotonicity_flags}
    return 0, files, {"n": spec.n, **results}


def cmd_compare(cfg, out: Path, log) -> tuple[int, list[str], dict]:
    dv, dc = _degrees(cfg)
    alg = _alg(cfg["alg"])
    params = DeParams(dv, dc, alg)
    stop = _stop(cfg)
    thr = None
    if cfg["offset"] is not None:
        if cfg["alpha0"] is not None:
            raise UsageError("give --alpha0 or --offset, not both")
        thr = find_threshold(params, stop, float(cfg["tol"])).threshold
        alpha0 = _alpha(round(thr + float(cfg["offset"]), 12), "offset")
    else:
        alpha0 = _alpha(cfg["alpha0"])
    spec = _graph_spec(cfg, dv, dc, log)
    sc = SweepConfig(spec, alg, (alpha0,), int(cfg["trials"]), _policy(cfg["value_model"]),
                     int(cfg["seed"]), "fixed", cfg["value_model"])
    tc = run_trace_comparison(sc, params, stop, int(cfg["prefix"]), int(cfg["jobs"]))
    name = f"compare_{alg.value}.csv"
    write_trace_csv(tc, out / name)
    table = tc.table()
    summary = {
        "alpha0": alpha0,
        "threshold": thr,
        "n": spec.n,
        "trials": len(tc.sim_traces),
        "prefix": tc.prefix,
        "max_abs_gap_over_prefix": tc.max_abs_gap_over_prefix,
        "final_alpha_de": float(table[-1, 1]),
        "final_alpha_sim_mean": float(table[-1, 2]),
        "sim_successes": tc.successes,
        "anomalies": tc.anomalies,
    }
    jname = f"compare_{alg.value}.json"
    (out / jname).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log(f"{alg.value} ({dv},{dc}) n={spec.n} alpha0={alpha0:.4f}: prefix-{tc.prefix} gap "
        f"{tc.max_abs_gap_over_prefix:.4f}; final alpha DE={summary['final_alpha_de']:.4g} "
        f"sim={summary['final_alpha_sim_mean']:.4g}")
    return 0, [name, jname], summary


COMMANDS = {"analyze": cmd_analyze, "threshold": cmd_threshold,
            "simulate": cmd_simulate, "compare": cmd_compare}


def execute(command: str, cfg: dict, out: Path, argv: list[str] | None = None) -> int:
    def log(msg):
        print(msg, file=sys.stderr if msg.startswith("note:") else sys.stdout)

    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"command": command, "config": cfg, "version": __version__,
                "argv": argv, "outputs": [], "interrupted": False}
    try:
        code, files, results = COMMANDS[command](cfg, out, log)
        manifest.update(outputs=files, results=results, exit_code=code)
    except KeyboardInterrupt:
        manifest.update(interrupted=True, exit_code=130)
        code = 130
    except ThresholdError as exc:
        print(f"nbvb {command}: {exc}", file=sys.stderr)
        manifest.update(error=str(exc), exit_code=1)
        code = 1
    manifest["wall_time_s"] = round(time.perf_counter() - t0, 3)
    (out / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = build_parser().parse_args(argv)
    try:
        if ns.command == "rerun":
            try:
                m = json.loads(Path(ns.manifest).read_text())
                command, cfg = m["command"], m["config"]
            except (OSError, ValueError, KeyError) as exc:
                raise UsageError(f"cannot read manifest {ns.manifest}: {exc}") from None
            if command not in COMMANDS:
                raise UsageError(f"manifest names unknown command {command!r}")
            return execute(command, cfg, Path(ns.out), argv)
        cfg = resolve(ns.command, ns)
        if getattr(ns, "show_config", False):
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        out = Path(getattr(ns, "out", None) or os.environ.get("NBVB_OUT") or ".")
        return execute(ns.command, cfg, out, argv)
    except UsageError as exc:
        print(f"nbvb: error: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
