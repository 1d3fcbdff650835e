import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asyncbcd.analysis import (
    WindowSeries, beta_denominator, check_distance_lemma, check_lemmas, check_theorem_bound,
    compute_constants, compute_gamma0, estimate_eta, fit_contraction, stepsize_bounds, window_series,
)
from asyncbcd.objective import ObjectiveInstance, diagonal_quadratic, pl_sine, random_least_squares
from asyncbcd.partition import make_partition
from asyncbcd.schedule import MODES, generate_schedule
from asyncbcd.simulator import run


def independent_bounds(mu, L, n, B):
    # second transcription of the stepsize bounds, kept deliberately literal
    A1 = (L / 2) * n * B * (1 + 2 * L * (B / 2 * (n + 1) + 1))
    A2 = 2 * mu + A1 * ((L / 2) * n * B + 4 * L * n * B + 8)
    return [
        (2 / L) * (1 / (L * n * n * B + B + 1)),
        1 / (L * (B / 2) * (n + 1) + L + (L / 2) * n * B),
        (1 / (2 * L)) * (1 / (L * n * B + B + 1)),
        mu / (A2 * L * n) * (1 / ((1 + L * (B * (n + 1) + 2)) * (n * B * L * L + L + B + 1))),
        1 / (L * (B / 2) * (3 * n + 1) + L + mu + 1),
        1 / mu,
        1.0,
    ]


def test_unit_case_constants():
    c = compute_constants(1, 1, 1, 1, 0.1)
    assert c.C3 == pytest.approx(0.005, abs=1e-17)
    assert c.C4 == pytest.approx(0.08, abs=1e-17)
    assert c.A1 == 2.5 and c.A2 == 33.25


def test_unit_case_threshold():
    assert compute_gamma0(1, 1, 1, 1) == pytest.approx(1 / 665, rel=1e-15)
    bounds = stepsize_bounds(1, 1, 1, 1)
    assert min(bounds, key=bounds.get) == "rate_A2"


@given(st.floats(0.01, 10), st.floats(1, 50), st.integers(1, 30), st.integers(1, 200))
def test_threshold_matches_second_transcription(mu, Lratio, n, B):
    L = mu * Lratio
    assert sorted(stepsize_bounds(mu, L, n, B).values()) == pytest.approx(sorted(independent_bounds(mu, L, n, B)),
                                                                          rel=1e-12)
    assert compute_gamma0(mu, L, n, B) == pytest.approx(min(independent_bounds(mu, L, n, B)), rel=1e-12)


@given(st.floats(0.01, 10), st.floats(1, 50), st.integers(1, 30), st.integers(1, 200))
def test_sign_conditions_below_threshold(mu, Lratio, n, B):
    L = mu * Lratio
    g = 0.99 * compute_gamma0(mu, L, n, B)
    c = compute_constants(mu, L, n, B, g)
    assert c.C1 > 0 and c.C4 > 0
    assert c.C3 - c.C4 < 0
    assert beta_denominator(L, n, B, g) > 0
    assert c.C3 == (L / 2) * g**2 * n * B


@given(st.floats(0.01, 10), st.floats(1, 50), st.integers(1, 30), st.integers(1, 200))
def test_threshold_monotone_in_n_B_L(mu, Lratio, n, B):
    L = mu * Lratio
    g = compute_gamma0(mu, L, n, B)
    assert compute_gamma0(mu, L, n + 1, B) <= g
    assert compute_gamma0(mu, L, n, B + 1) <= g
    assert compute_gamma0(mu, 2 * L, n, B) < g


def test_c4_changes_sign_at_its_threshold():
    L, n, B = 2.0, 3, 4
    edge = 1 / (L * (B * (n + 1) / 2 + 1))
    assert compute_constants(1, L, n, B, edge * 0.999).C4 > 0
    assert compute_constants(1, L, n, B, edge * 1.001).C4 < 0


def _quad_trace(gamma_scale=0.9, windows=50, B=1, n=1, diag=(1.0, 1.0), mode="synchronous", seed=0, x0=None):
    obj = diagonal_quadratic(list(diag))
    g = gamma_scale * compute_gamma0(obj.mu, obj.lipschitz, n, B)
    sched = generate_schedule(n, windows * B + 1, B, mode, seed)
    x0 = np.ones(obj.dim) if x0 is None else x0
    return obj, run(obj, make_partition(obj.dim, n), sched, x0, g)


def test_eta_is_max_of_first_two_windows():
    obj, trace = _quad_trace(x0=np.array([1.0, 1.0]), B=3, n=2, mode="uniform-random")
    assert trace.records[0].gap == 1.0
    s = estimate_eta(trace)
    gap, ssq = trace.column("gap"), trace.column("s_norm_sq")
    beta_B = trace.gamma**2 * ssq[:3].sum()
    assert s.eta == max(gap[0], gap[3], 0.0, beta_B)
    assert s.eta >= 1.0


def test_eta_rejections():
    _, trace = _quad_trace(windows=3, B=2, n=2, mode="uniform-random")
    short = dataclasses.replace(trace, records=trace.records[:3])
    with pytest.raises(ValueError, match="2B"):
        estimate_eta(short)
    with pytest.raises(ValueError, match="f\\*"):
        estimate_eta(dataclasses.replace(trace, f_star=None))


def test_zero_series_passes():
    s = WindowSeries(np.zeros(6), np.zeros(6), 0.0, 2, 0.1)
    assert check_theorem_bound(s, 1.0, 0.1).passed


def test_centralized_descent_passes_with_room():
    obj, trace = _quad_trace(gamma_scale=0.9, windows=50)
    rep = check_theorem_bound(estimate_eta(trace), obj.mu, trace.gamma)
    assert rep.passed and rep.slack < 1
    assert len(rep.windows) == 50


def test_injected_violation_is_located():
    obj, trace = _quad_trace(gamma_scale=0.9, windows=10, B=2, n=2, mode="uniform-random")
    s = estimate_eta(trace)
    s.alpha[3] *= 10
    rep = check_theorem_bound(s, obj.mu, trace.gamma)
    assert not rep.passed and rep.first_violation == (3, "alpha")


def test_bound_requires_small_step():
    with pytest.raises(ValueError):
        check_theorem_bound(WindowSeries(np.ones(3), np.ones(3), 1.0, 1, 2.0), 1.0, 2.0)


def test_fit_recovers_exact_geometric_series():
    k = np.arange(12)
    fit = fit_contraction(WindowSeries(0.9**k, np.zeros(12), 1.0, 1, 0.1))
    assert fit.rho == pytest.approx(0.9, rel=1e-13) and fit.residual < 1e-13


def test_fit_recovers_closed_form_descent_rate():
    obj = diagonal_quadratic([1.0, 1.0])
    trace = run(obj, make_partition(2, 1), generate_schedule(1, 60, 1, "synchronous"), [1.0, -2.0], 0.1)
    # x(t) = 0.9^t x(0), so the gap contracts by 0.81 per step
    assert np.allclose(trace.column("gap"), 2.5 * 0.81 ** np.arange(60), rtol=1e-12)
    fit = fit_contraction(estimate_eta(trace))
    assert fit.rho == pytest.approx(0.81, rel=1e-6)


def test_fit_needs_five_windows():
    with pytest.raises(ValueError, match="need at least 5"):
        fit_contraction(WindowSeries(np.array([1.0, 0.5, 0.25, 0.0, 0.0]), np.zeros(5), 1.0, 1, 0.1))


GRID_OBJ = {
    "quadratic": lambda: diagonal_quadratic([1.0, 2.0, 3.0, 4.0]),
    "pl-sine": lambda: pl_sine(4),
    "least-squares": lambda: random_least_squares(6, 4, 2, seed=0),
}


def _grid_run(name, mode, n, B, seed):
    obj = GRID_OBJ[name]()
    g = 0.99 * compute_gamma0(obj.mu, obj.lipschitz, n, B)
    sched = generate_schedule(n, 20 * B + 1, B, mode, seed, period=B if mode == "periodic" else None)
    x0 = np.random.default_rng(seed).uniform(-2, 2, obj.dim)
    return obj, run(obj, make_partition(4, n), sched, x0, g)


@given(st.sampled_from(sorted(GRID_OBJ)), st.sampled_from(MODES), st.sampled_from([1, 2, 4]),
       st.integers(1, 6), st.integers(0, 10**6))
def test_bound_lemmas_and_rate_hold_below_threshold(name, mode, n, B, seed):
    obj, trace = _grid_run(name, mode, n, B, seed)
    series = estimate_eta(trace)
    assert check_theorem_bound(series, obj.mu, trace.gamma).passed
    assert fit_contraction(series).rho <= 1 - trace.gamma * obj.mu + 1e-6
    assert all(c.passed for c in check_lemmas(trace).values())
    assert np.all(series.alpha >= 0) and np.all(series.beta >= 0)


def test_lemma_checker_flags_corruption():
    _, trace = _grid_run("quadratic", "uniform-random", 2, 3, 1)
    trace.records[10].lemma1_lhs = trace.records[10].lemma1_rhs + 1.0
    checks = check_lemmas(trace)
    assert checks["lemma1"].violations == [10]
    assert checks["lemma2"].passed and checks["lemma3"].passed


def test_lemma2_checked_at_every_start():
    _, trace = _grid_run("pl-sine", "periodic", 2, 4, 0)
    assert check_lemmas(trace)["lemma2"].checked == len(trace) - 4


def test_lemma_checks_need_lipschitz():
    _, trace = _grid_run("quadratic", "synchronous", 1, 1, 0)
    with pytest.raises(ValueError, match="Lipschitz"):
        check_lemmas(dataclasses.replace(trace, lipschitz=None))


def test_distance_lemma_runs_on_grid_trace():
    obj, trace = _grid_run("quadratic", "uniform-random", 2, 2, 3)
    c = compute_constants(obj.mu, obj.lipschitz, 2, 2, trace.gamma)
    chk = check_distance_lemma(trace, c)
    assert chk.checked == len(trace) - 2


def test_window_series_definition():
    gap = np.array([4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.25])
    ssq = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    s = window_series(gap, ssq, 2, 0.5)
    assert s.alpha.tolist() == [4.0, 2.0, 1.0, 0.25]
    assert s.beta.tolist() == [0.0, 0.75, 1.75, 2.75]
    assert s.eta == 4.0


def test_objective_without_f_star_is_rejected_for_eta():
    obj = ObjectiveInstance("anon", 1, lambda x: float(x @ x), lambda x: 2 * x, lipschitz=2.0)
    trace = run(obj, make_partition(1, 1), generate_schedule(1, 4, 1, "synchronous"), [1.0], 0.1)
    with pytest.raises(ValueError):
        estimate_eta(trace)
