"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 run failure,
3 check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    TheoremConstants, check_distance_lemma, check_lemmas, check_theorem_bound, compute_constants, compute_gamma0,
    estimate_eta, fit_contraction, stepsize_bounds,
)
from .config import SWEEP_PARAMS, ConfigError, RunConfig, initial_point, load_config, with_param
from .data import generate_synthetic, load_sparse_text, preprocess
from .logistic import make_logistic
from .objective import ObjectiveInstance, diagonal_quadratic, least_squares, pl_sine, random_least_squares
from .partition import make_partition
from .plotting import write_svg
from .schedule import generate_schedule, iter_event_chunks
from .simulator import TRACE_COLUMNS, DivergenceError, HistoryUnderflow, _fmt, run, run_until
from .suites import SUITES, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_CHECK = 0, 1, 2, 3


class RunFailure(RuntimeError):
    pass


# -- building a run from a config --------------------------------------------


def build_objective(cfg: RunConfig) -> ObjectiveInstance:
    spec = cfg.objective
    p = dict(spec.params)
    try:
        if spec.kind == "diagonal-quadratic":
            return diagonal_quadratic(p["diag"])
        if spec.kind == "pl-sine":
            return pl_sine(p.get("dim", 1))
        if spec.kind == "least-squares":
            if "A" in p:
                return least_squares(np.array(p["A"]), np.array(p["b"]))
            return random_least_squares(p["rows"], p["cols"], p["rank"], p.get("seed", 0))
        source = p.get("data", "synthetic")
        if source == "synthetic":
            d = generate_synthetic(p["N"], p["m"], p.get("separation", 1.0), p.get("data_seed", 0),
                                   latent_dim=p.get("latent_dim"), noise=p.get("noise", 1.0))
        else:
            d = load_sparse_text(source, p.get("m"))
        if p.get("preprocess", True):
            d = preprocess(d)
        return make_logistic(d, p.get("lambda", 1e-2))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"objective ({spec.kind})", str(exc)) from None


def resolve_gamma(cfg: RunConfig, obj: ObjectiveInstance, n: int) -> tuple[float, float | None]:
    """Stepsize to use and the threshold gamma0 (None when mu or L is unknown)."""
    gamma0 = None
    if obj.mu is not None and obj.lipschitz is not None:
        gamma0 = compute_gamma0(obj.mu, obj.lipschitz, n, cfg.schedule.B)
    if cfg.run.gamma == "auto":
        if gamma0 is None:
            raise ConfigError("run.gamma", f"'auto' needs mu and L, which {obj.name} does not certify")
        return 0.99 * gamma0, gamma0
    return float(cfg.run.gamma), gamma0


@dataclass
class RunOutcome:
    times: np.ndarray
    gaps: np.ndarray
    report: dict
    columns: dict = field(default_factory=dict)   # CSV columns in order

    @property
    def summary(self) -> str:
        r = self.report
        rho = r["contraction"]["rho_hat"]
        gap = r["final_gap"]
        return (f"steps {r['steps']}, final gap {'n/a' if gap is None else format(gap, '.6e')}, "
                f"rho_hat {'n/a' if rho is None else format(rho, '.6f')}, bound {r['bound']['status']}")


def _clean(v):
    """JSON-safe copy: numpy scalars become Python numbers, non-finite floats become null."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def simulate(cfg: RunConfig) -> RunOutcome:
    """Execute one configured run; raises ConfigError or RunFailure."""
    obj = build_objective(cfg)
    try:
        part = make_partition(obj.dim, sizes=cfg.partition.sizes) if cfg.partition.sizes \
            else make_partition(obj.dim, cfg.partition.n)
    except ValueError as exc:
        raise ConfigError("partition", str(exc)) from None
    n, B = part.n, cfg.schedule.B
    gamma, gamma0 = resolve_gamma(cfg, obj, n)
    enforced = gamma0 is not None and gamma <= gamma0
    x0 = initial_point(cfg.run.x0, obj.dim)
    s = cfg.schedule
    report = {
        "objective": obj.name, "params": dict(cfg.objective.params), "dim": obj.dim, "n": n, "B": B,
        "mode": s.mode, "seed": s.seed, "period": s.period, "horizon": cfg.run.horizon,
        "gamma": gamma, "gamma_source": "auto" if cfg.run.gamma == "auto" else "user",
        "mu": obj.mu, "L": obj.lipschitz, "f_star": obj.f_star, "f_star_residual": obj.f_star_residual,
        "gamma0": gamma0,
        "stepsize_bounds": stepsize_bounds(obj.mu, obj.lipschitz, n, B) if gamma0 is not None else None,
        "constants": compute_constants(obj.mu, obj.lipschitz, n, B, gamma).as_dict() if gamma0 else None,
        "enforced": enforced,
    }
    try:
        if cfg.run.record == "full":
            return _simulate_full(cfg, obj, part, x0, gamma, enforced, report)
        return _simulate_sparse(cfg, obj, part, x0, gamma, report)
    except (DivergenceError, HistoryUnderflow) as exc:
        raise RunFailure(str(exc)) from None


def _simulate_full(cfg, obj, part, x0, gamma, enforced, report) -> RunOutcome:
    s = cfg.schedule
    sched = generate_schedule(part.n, cfg.run.horizon, s.B, s.mode, s.seed, s.period)
    trace = run(obj, part, sched, x0, gamma)
    gaps = trace.column("gap")
    report.update(steps=len(trace), initial_gap=gaps[0] if obj.f_star is not None else None,
                  final_gap=gaps[-1] if obj.f_star is not None else None, f_final=trace.records[-1].f_true)
    bound = {"status": "unavailable", "holds": None, "first_violation": None, "slack": None}
    contraction = {"rho_hat": None, "residual": None, "windows": None,
                   "rate_bound": None if obj.mu is None else 1 - gamma * obj.mu}
    windows, eta = [], None
    if obj.f_star is not None and len(trace) >= 2 * s.B:
        series = estimate_eta(trace)
        eta = series.eta
        if obj.mu is not None and gamma * obj.mu < 1:
            rep = check_theorem_bound(series, obj.mu, gamma)
            windows = rep.windows
            status = ("pass" if rep.passed else "fail") if enforced else "informational"
            bound.update(status=status, holds=rep.passed, first_violation=rep.first_violation, slack=rep.slack)
        else:
            windows = [{"k": k, "alpha": a, "beta": b} for k, (a, b) in enumerate(zip(series.alpha, series.beta))]
        try:
            fit = fit_contraction(series)
            contraction.update(rho_hat=fit.rho, residual=fit.residual, windows=fit.windows)
        except ValueError:
            pass
    lemmas = {}
    if obj.lipschitz is not None:
        for name, chk in check_lemmas(trace).items():
            lemmas[name] = {"checked": chk.checked, "violations": len(chk.violations),
                            "first_violation": chk.violations[0] if chk.violations else None,
                            "worst_excess": chk.worst_excess}
        if report["constants"] is not None and obj.f_star is not None:
            chk = check_distance_lemma(trace, TheoremConstants(**report["constants"]))
            lemmas["distance (informational)"] = {"checked": chk.checked, "violations": len(chk.violations),
                                                  "worst_excess": chk.worst_excess}
    report.update(eta=eta, windows=windows, bound=bound, contraction=contraction, lemmas=lemmas)
    report["checks_passed"] = (not enforced) or (
        bound["status"] != "fail"
        and all(v["violations"] == 0 for k, v in lemmas.items() if not k.endswith("(informational)")))
    columns = {c: [getattr(r, c) for r in trace.records] for c in TRACE_COLUMNS}
    return RunOutcome(np.arange(len(trace)), gaps, _clean(report), columns)


def _simulate_sparse(cfg, obj, part, x0, gamma, report) -> RunOutcome:
    s = cfg.schedule
    if obj.f_star is None:
        raise ConfigError("run.record", f"sparse records store the gap, and f* of {obj.name} is unknown")
    events = iter_event_chunks(part.n, s.B, s.mode, s.seed, s.period, cfg.run.horizon)
    curve = run_until(obj, part, events, x0, gamma, max_steps=cfg.run.horizon, B=s.B,
                      stop_ratio=cfg.run.stop_ratio, record_every=cfg.run.record_every)
    report.update(steps=curve.steps, events=curve.events, hit=curve.hit, stop_ratio=cfg.run.stop_ratio,
                  initial_gap=curve.gaps[0], final_gap=curve.gaps[-1],
                  bound={"status": "unavailable", "holds": None, "reason": "sparse record keeps no window sums"})
    contraction = {"rho_hat": None, "residual": None, "windows": None,
                   "rate_bound": None if obj.mu is None else 1 - gamma * obj.mu}
    ok = curve.gaps > 1e-14
    if ok.sum() >= 5:
        # per-window factor from the slope of log gap against t
        slope, icpt = np.polyfit(curve.times[ok].astype(float), np.log(curve.gaps[ok]), 1)
        resid = np.log(curve.gaps[ok]) - (slope * curve.times[ok] + icpt)
        contraction.update(rho_hat=math.exp(slope * s.B), residual=float(np.sqrt(np.mean(resid**2))),
                           windows=int(curve.steps // s.B))
    report.update(contraction=contraction, checks_passed=True)
    return RunOutcome(curve.times, curve.gaps, _clean(report), {"t": curve.times, "gap": curve.gaps})


# -- file output -------------------------------------------------------------


def write_columns(path: Path, columns: dict, run_id: str | None = None) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["run_id"] if run_id is not None else []) + names)
        for row in zip(*columns.values()):
            w.writerow(([run_id] if run_id is not None else []) + [_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _read_series(path: Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """``{label: (t, gap)}`` from a run or sweep CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "t" not in fields or "gap" not in fields:
            raise ConfigError("--in", f"{path} has no 't' and 'gap' columns")
        groups: dict[str, tuple[list, list]] = {}
        for row in reader:
            if row["gap"] == "":
                continue
            t, g = groups.setdefault(row.get("run_id", "gap"), ([], []))
            t.append(float(row["t"]))
            g.append(float(row["gap"]))
    return {k: (np.array(t), np.array(g)) for k, (t, g) in groups.items()}


def _plot_csv(csv_path: Path, svg_path: Path, title: str) -> bool:
    """SVG drawn from the CSV on disk, so the plot can never disagree with it."""
    try:
        write_svg(_read_series(csv_path), svg_path, title=title)
    except ValueError as exc:
        print(f"warning: no SVG written: {exc}", file=sys.stderr)
        return False
    return True


# -- commands ----------------------------------------------------------------


def cmd_run(config: str, out: str | None = None) -> int:
    try:
        cfg = load_config(config)
        outcome = simulate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    directory = Path(out if out is not None else cfg.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "trace.csv"
    if cfg.output.emit_csv or cfg.output.emit_svg:
        write_columns(csv_path, outcome.columns)
    if cfg.output.emit_svg:
        _plot_csv(csv_path, directory / "gap.svg", f"{outcome.report['objective']}, B={cfg.schedule.B}")
        if not cfg.output.emit_csv:
            csv_path.unlink()
    if cfg.output.emit_report:
        write_json(directory / "report.json", outcome.report)
    print(f"{outcome.report['objective']}: {outcome.summary}")
    return EXIT_OK if outcome.report["checks_passed"] else EXIT_CHECK


def _sweep_one(cfg: RunConfig) -> tuple[RunOutcome | None, str | None]:
    try:
        return simulate(cfg), None
    except (ConfigError, RunFailure) as exc:
        return None, str(exc)


def _sort_key(raw: str):
    try:
        return (0, float(raw), raw)
    except ValueError:
        return (1, 0.0, raw)


def cmd_sweep(config: str, param: str, values: str, out: str | None = None, jobs: int = 1) -> int:
    try:
        cfg = load_config(config)
        if param not in SWEEP_PARAMS:
            raise ConfigError("--param", f"cannot sweep {param!r}; expected one of {SWEEP_PARAMS}")
        raw = [v.strip() for v in values.split(",") if v.strip()]
        if not raw:
            raise ConfigError("--values", "the list of values is empty")
        if len(set(raw)) != len(raw):
            raise ConfigError("--values", "values must be distinct")
        raw.sort(key=_sort_key)
        configs = [with_param(cfg, param, v) for v in raw]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ids = [f"{param}={v}" for v in raw]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, configs))
    else:
        results = [_sweep_one(c) for c in configs]

    directory = Path(out if out is not None else cfg.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "t", "gap"])
        for rid, (outcome, _) in zip(ids, results):
            if outcome is not None:
                for t, g in zip(outcome.times, outcome.gaps):
                    w.writerow([rid, int(t), _fmt(g)])
    runs, failed = [], 0
    for rid, (outcome, err) in zip(ids, results):
        if outcome is None:
            failed += 1
            runs.append({"run_id": rid, "status": "failed", "error": err})
            print(f"{rid}: FAILED: {err}")
            continue
        r = outcome.report
        runs.append({"run_id": rid, "status": "ok", "steps": r["steps"], "hit": r.get("hit"),
                     "final_gap": r["final_gap"], "bound": r["bound"]["status"],
                     "rho_hat": r["contraction"]["rho_hat"], "gamma": r["gamma"], "gamma0": r["gamma0"]})
        hit = r.get("hit")
        print(f"{rid}: {outcome.summary}" + ("" if hit is None else f", threshold reached at t={hit}"))
    if cfg.output.emit_report:
        write_json(directory / "sweep_report.json", {"param": param, "values": raw, "runs": runs})
    if failed < len(ids):
        _plot_csv(csv_path, directory / "sweep.svg", f"{cfg.objective.kind}: sweep over {param}")
    print(f"sweep over {param}: {len(ids) - failed}/{len(ids)} runs succeeded")
    return EXIT_RUN if failed else EXIT_OK


def cmd_check(suite: str) -> int:
    results = run_suite(suite)
    bad = 0
    for c in results:
        bad += not c.passed
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    print(f"{suite}: {len(results) - bad}/{len(results)} cases passed")
    return EXIT_CHECK if bad else EXIT_OK


def cmd_report(src: str, svg: str) -> int:
    try:
        series = _read_series(Path(src))
        write_svg(series, svg, title=Path(src).stem)
    except OSError as exc:
        print(f"config error: cannot read {src}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {svg} ({len(series)} series)")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # Usage errors share the configuration-error exit code; 2 is reserved for run failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asyncbcd", description="Simulate asynchronous block coordinate descent.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute one configured simulation")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides [output] directory)")

    s = sub.add_parser("sweep", help="repeat a run over values of one parameter")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1, help="parallel sub-runs")

    c = sub.add_parser("check", help="run a built-in verification suite")
    c.add_argument("suite_pos", nargs="?", choices=SUITES, metavar="suite")
    c.add_argument("--suite", choices=SUITES)

    rep = sub.add_parser("report", help="plot a trace or sweep CSV as SVG")
    rep.add_argument("--in", dest="src", required=True)
    rep.add_argument("--svg", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "sweep":
        if args.jobs < 1:
            parser.error("--jobs must be at least 1")
        return cmd_sweep(args.config, args.param, args.values, args.out, args.jobs)
    if args.command == "check":
        suite = args.suite or args.suite_pos
        if suite is None:
            parser.error("check needs a suite name")
        return cmd_check(suite)
    return cmd_report(args.src, args.svg)


if __name__ == "__main__":
    sys.exit(main())
