"""Built-in verification grids behind ``asyncbcd check``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .analysis import check_lemmas, check_theorem_bound, compute_gamma0, estimate_eta, fit_contraction
from .data import generate_synthetic, preprocess
from .logistic import make_logistic
from .objective import (
    ObjectiveInstance, RCParameters, check_pl_at, check_rc_at, diagonal_quadratic, gradient_check,
    pl_sine, random_least_squares, rc_to_pl,
)
from .partition import make_partition
from .schedule import MODES, generate_schedule, validate_schedule
from .simulator import SimulationTrace, run

SUITES = ("lemmas", "pl", "grad", "schedule", "theorem")


@dataclass(frozen=True)
class CaseResult:
    name: str
    passed: bool
    detail: str


def builtin_objectives() -> list[ObjectiveInstance]:
    """One or two instances of every built-in kind, small enough for exhaustive checks."""
    data = preprocess(generate_synthetic(60, 5, 1.0, seed=0))
    return [
        diagonal_quadratic([1.0, 4.0]),
        diagonal_quadratic([0.5, 2.0, 3.0, 10.0]),
        pl_sine(1),
        pl_sine(4),
        random_least_squares(8, 6, 3, seed=0),
        make_logistic(data, 0.1),
    ]


def grad_suite(points: int = 100, tol: float = 1e-5) -> list[CaseResult]:
    out = []
    for k, obj in enumerate(builtin_objectives()):
        pts = np.random.default_rng(k).uniform(-3, 3, size=(points, obj.dim))
        err = gradient_check(obj, pts)
        out.append(CaseResult(f"{obj.name}[dim={obj.dim}]", err <= tol, f"worst relative error {err:.2e}"))
    return out


def pl_suite(points: int = 1000) -> list[CaseResult]:
    out = []
    for k, obj in enumerate(builtin_objectives()):
        width = 10.0 if obj.name == "pl-sine" else 5.0
        count = 10_000 if obj.name == "pl-sine" and obj.dim == 1 else points
        pts = np.random.default_rng(100 + k).uniform(-width, width, size=(count, obj.dim))
        rep = check_pl_at(obj, obj.certificate, pts)
        out.append(CaseResult(f"{obj.name}[dim={obj.dim}]", rep.passed,
                              f"mu={rep.mu:.4g}, worst sampled ratio {rep.worst_ratio:.4g}"))
    # 1/2 ||x||^2 satisfies RC(2, 2); the derived PL constant must hold on samples
    half = diagonal_quadratic([1.0, 1.0])
    rc = RCParameters(2.0, 2.0, np.zeros(2))
    pts = np.random.default_rng(7).uniform(-5, 5, size=(points, 2))
    rc_rep = check_rc_at(half, rc, pts)
    pl_rep = check_pl_at(half, rc_to_pl(rc, half.lipschitz), pts)
    out.append(CaseResult("rc(2,2)->pl on 1/2||x||^2", rc_rep.passed and pl_rep.passed,
                          f"rc margin {rc_rep.worst_margin:.3g}, mu={pl_rep.mu:.4g}"))
    return out


def schedule_suite(count: int = 200, seed: int = 0) -> list[CaseResult]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        mode = str(rng.choice(MODES))
        n, B = int(rng.integers(1, 7)), int(rng.integers(1, 13))
        horizon = int(rng.integers(B, 6 * B + 1))
        period = int(rng.integers(1, B + 1)) if mode == "periodic" else None
        s_seed = int(rng.integers(0, 2**31))
        sched = generate_schedule(n, horizon, B, mode, s_seed, period)
        rep = validate_schedule(sched)
        ok, detail = rep.ok, rep.message
        if ok and mode == "adversarial-max" and n > 1 and horizon >= 2 * B:
            stale = sched.max_staleness()
            ok = stale == B - 1
            detail = f"max staleness {stale}, expected {B - 1}"
        name = f"{mode} n={n} B={B} H={horizon} seed={s_seed}" + (f" p={period}" if period else "")
        out.append(CaseResult(name, ok, detail))
    return out


def grid_objectives() -> dict[str, Callable[[], ObjectiveInstance]]:
    """Four-dimensional instances of the convex, non-convex and rank-deficient cases."""
    return {
        "diagonal-quadratic": lambda: diagonal_quadratic([1.0, 2.0, 3.0, 4.0]),
        "pl-sine": lambda: pl_sine(4),
        "least-squares": lambda: random_least_squares(6, 4, 2, seed=0),
    }


def theorem_grid(seeds: int = 5) -> Iterator[tuple[str, int, int, str, int]]:
    for name in grid_objectives():
        for n in (1, 2, 4):
            for B in (1, 2, 5):
                for mode in ("periodic", "uniform-random", "adversarial-max"):
                    for seed in range(seeds):
                        yield name, n, B, mode, seed


def grid_trace(name: str, n: int, B: int, mode: str, seed: int, windows: int = 20) -> SimulationTrace:
    """Run one grid case at ``gamma = 0.99 gamma0`` for ``windows * B + 1`` steps."""
    obj = grid_objectives()[name]()
    gamma = 0.99 * compute_gamma0(obj.mu, obj.lipschitz, n, B)
    horizon = windows * B + 1
    sched = generate_schedule(n, horizon, B, mode, seed, period=B if mode == "periodic" else None)
    x0 = np.random.default_rng(seed).uniform(-2, 2, size=obj.dim)
    return run(obj, make_partition(obj.dim, n), sched, x0, gamma)


def _grid_cases(seeds: int) -> Iterator[tuple[str, SimulationTrace, ObjectiveInstance]]:
    for name, n, B, mode, seed in theorem_grid(seeds):
        label = f"{name} n={n} B={B} {mode} seed={seed}"
        yield label, grid_trace(name, n, B, mode, seed), grid_objectives()[name]()


def lemma_suite(seeds: int = 5) -> list[CaseResult]:
    out = []
    for label, trace, _ in _grid_cases(seeds):
        checks = check_lemmas(trace)
        bad = {k: len(v.violations) for k, v in checks.items() if not v.passed}
        out.append(CaseResult(label, not bad, f"violations {bad}" if bad else
                              f"{sum(v.checked for v in checks.values())} inequalities hold"))
    return out


def theorem_suite(seeds: int = 5) -> list[CaseResult]:
    out = []
    for label, trace, obj in _grid_cases(seeds):
        series = estimate_eta(trace)
        rep = check_theorem_bound(series, obj.mu, trace.gamma)
        rho = fit_contraction(series).rho
        ok = rep.passed and rho <= 1 - trace.gamma * obj.mu + 1e-6
        out.append(CaseResult(label, ok, f"max ratio to bound {rep.slack:.6f}, rho_hat {rho:.10f}"
                              + ("" if rep.passed else f", first violation {rep.first_violation}")))
    return out


def run_suite(name: str) -> list[CaseResult]:
    table = {"lemmas": lemma_suite, "pl": pl_suite, "grad": grad_suite,
             "schedule": schedule_suite, "theorem": theorem_suite}
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    return table[name]()
