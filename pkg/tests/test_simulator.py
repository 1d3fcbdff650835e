import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asyncbcd.data import generate_synthetic, preprocess
from asyncbcd.logistic import make_logistic
from asyncbcd.objective import diagonal_quadratic, least_squares, pl_sine, random_least_squares
from asyncbcd.partition import make_partition
from asyncbcd.schedule import AsyncSchedule, MODES, generate_schedule, iter_event_chunks
from asyncbcd.simulator import (
    TRACE_COLUMNS, DivergenceError, HistoryUnderflow, Simulator, init_run, read_trace_csv, run, run_until,
)


def reference_run(obj, part, sched, x0, gamma, steps):
    """Keeps every true state x(0..steps) and builds each view from that full record."""
    xs = [np.array(x0, dtype=float)]
    for t in range(steps):
        active, taus = sched.events_at(t)
        x_next = xs[-1].copy()
        for i, row in zip(active, taus):
            view = np.concatenate([xs[t][part.block(j)] if j == i else xs[int(row[j])][part.block(j)]
                                   for j in range(part.n)])
            x_next[part.block(i)] = xs[t][part.block(i)] - gamma * obj.gradient(view)[part.block(i)]
        xs.append(x_next)
    return xs


def test_initial_views_equal_x0():
    obj = diagonal_quadratic([1, 2, 3])
    part = make_partition(3, 3)
    sim = init_run(obj, part, generate_schedule(3, 10, 2, "uniform-random"), [1.0, 2.0, 3.0], 0.1)
    for i in range(3):
        assert sim.local_view(i, np.zeros(3, dtype=int)).tolist() == [1.0, 2.0, 3.0]


def test_init_rejections():
    obj = diagonal_quadratic([1, 2])
    part = make_partition(2, 2)
    sched = generate_schedule(2, 4, 1, "synchronous")
    with pytest.raises(ValueError, match="positive"):
        init_run(obj, part, sched, [1, 1], 0.0)
    with pytest.raises(ValueError, match=r"\(3,\).*2"):
        init_run(obj, part, sched, [1, 1, 1], 0.1)
    with pytest.raises(ValueError, match="processors"):
        init_run(obj, part, generate_schedule(1, 4, 1, "synchronous"), [1, 1], 0.1)


def test_one_block_is_gradient_descent():
    sim = init_run(diagonal_quadratic([1.0]), make_partition(1, 1), generate_schedule(1, 5, 1, "synchronous"),
                   [1.0], 0.1)
    sim.step()
    assert sim.x.tolist() == [0.9]
    sim.step()
    assert sim.x[0] == pytest.approx(0.81, abs=1e-16)


def test_separable_synchronous_step():
    sim = init_run(diagonal_quadratic([1.0, 1.0]), make_partition(2, 2), generate_schedule(2, 3, 1, "synchronous"),
                   [1.0, 1.0], 0.5)
    sim.step()
    assert sim.x.tolist() == [0.5, 0.5]


def test_coupled_blocks_match_hand_rolled_reference():
    # f = 1/2 (x1 + x2)^2 with both processors reading the other block as of t - 1,
    # at activations t = 1, 3, 5, ...
    obj = least_squares([[1.0, 1.0]], [0.0])
    sched = generate_schedule(2, 10, 2, "adversarial-max")
    trace_x = [np.array([1.0, 1.0])]
    sim = init_run(obj, make_partition(2, 2), sched, [1.0, 1.0], 0.1)
    for _ in range(10):
        sim.step()
        trace_x.append(sim.x.copy())

    x1, x2 = {0: 1.0}, {0: 1.0}
    for t in range(10):
        a, b = x1[t], x2[t]
        if t % 2 == 1:
            stale_b, stale_a = x2[t - 1], x1[t - 1]
            a, b = a - 0.1 * (a + stale_b), b - 0.1 * (stale_a + b)
        x1[t + 1], x2[t + 1] = a, b
    for t in range(11):
        assert np.allclose(trace_x[t], [x1[t], x2[t]], rtol=0, atol=1e-15)


def test_pl_sine_single_block_respects_rate():
    trace = run(pl_sine(), make_partition(1, 1), generate_schedule(1, 2001, 1, "synchronous"), [3.0], 0.01)
    gap = trace.column("gap")
    assert gap[2000] <= (1 - 0.01 / 32) ** 2000 * gap[0]


def test_trace_replays_byte_for_byte(tmp_path):
    obj, part = diagonal_quadratic([1, 4]), make_partition(2, 2)
    for name in ("a", "b"):
        sched = generate_schedule(2, 60, 5, "uniform-random", seed=7)
        run(obj, part, sched, [1.0, -1.0], 0.05).to_csv(tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    head = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert head == ",".join(TRACE_COLUMNS)


def test_csv_round_trip_keeps_17_digits(tmp_path):
    trace = run(pl_sine(2), make_partition(2, 2), generate_schedule(2, 30, 3, "uniform-random", seed=1),
                [1.3, -2.1], 0.02)
    trace.to_csv(tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    assert np.array_equal(back["gap"], trace.column("gap"))
    assert np.array_equal(np.isnan(back["lemma2_lhs"]), np.isnan(trace.column("lemma2_lhs")))


def test_divergence_is_reported():
    sched = generate_schedule(2, 200, 5, "uniform-random", seed=3)
    with pytest.raises(DivergenceError, match="stepsize"):
        run(diagonal_quadratic([1, 4]), make_partition(2, 2), sched, [1.0, 1.0], 1e6)


def test_reads_older_than_the_bound_abort():
    active = np.ones((2, 8), dtype=bool)
    tau = np.broadcast_to(np.arange(8), (2, 2, 8)).copy()
    tau[0, 1, 6] = 0
    sched = AsyncSchedule.from_tables(active, tau, B=2)
    with pytest.raises(HistoryUnderflow):
        run(diagonal_quadratic([1, 2]), make_partition(2, 2), sched, [1.0, 1.0], 0.1)


OBJECTIVES = {
    "quadratic": lambda: diagonal_quadratic([0.5, 1.0, 2.0, 3.0, 4.0]),
    "pl-sine": lambda: pl_sine(5),
    "least-squares": lambda: random_least_squares(7, 5, 3, seed=2),
}


@given(st.sampled_from(sorted(OBJECTIVES)), st.sampled_from(MODES), st.integers(1, 5), st.integers(1, 6),
       st.integers(0, 10**6))
def test_simulator_matches_full_history_reference(name, mode, n, B, seed):
    obj = OBJECTIVES[name]()
    part = make_partition(obj.dim, n)
    sched = generate_schedule(n, 4 * B + 3, B, mode, seed, period=B if mode == "periodic" else None)
    x0 = np.random.default_rng(seed).uniform(-1, 1, obj.dim)
    gamma = 0.05
    trace = run(obj, part, sched, x0, gamma)
    ref = reference_run(obj, part, sched, x0, gamma, sched.horizon)
    assert np.array_equal(trace.final_x, ref[-1])
    assert np.array_equal(trace.column("f_true"), [obj.value(x) for x in ref[:-1]])
    # s(t) collects the block gradients of the active processors
    for t, rec in enumerate(trace.records):
        step = ref[t + 1] - ref[t]
        assert rec.s_norm_sq == pytest.approx(float(step @ step) / gamma**2, rel=1e-9, abs=1e-300)
        assert rec.max_staleness <= B - 1


def test_python_route_reproduces_simulator_gaps():
    obj, part = pl_sine(4), make_partition(4, 2)
    sched = generate_schedule(2, 120, 6, "uniform-random", seed=9)
    x0 = np.array([1.0, -2.0, 0.5, 3.0])
    trace = run(obj, part, sched, x0, 0.03)
    curve = run_until(obj, part, sched, x0, 0.03, max_steps=120, B=6)
    gaps = trace.column("gap")
    assert np.array_equal(curve.gaps[1:], [gaps[t] if t < 120 else obj.value(trace.final_x) for t in curve.times[1:]])
    assert np.array_equal(curve.final_x, trace.final_x)


def _logistic():
    return make_logistic(preprocess(generate_synthetic(80, 6, 1.5, seed=4)), 0.1)


COMPILED = {
    "quadratic": lambda: diagonal_quadratic([0.5, 1.0, 2.0, 3.0, 4.0, 6.0]),
    "least-squares": lambda: random_least_squares(9, 6, 4, seed=3),
    "logistic": _logistic,
}


@pytest.mark.parametrize("name", sorted(COMPILED))
@pytest.mark.parametrize("mode", MODES)
def test_compiled_route_agrees_with_simulator(name, mode):
    obj = COMPILED[name]()
    part = make_partition(6, 3)
    B = 4
    sched = generate_schedule(3, 200, B, mode, seed=5, period=3 if mode == "periodic" else None)
    x0 = np.linspace(-1, 1, 6)
    trace = run(obj, part, sched, x0, 0.05)
    curve = run_until(obj, part, sched, x0, 0.05, max_steps=200, B=B)
    assert np.allclose(curve.final_x, trace.final_x, rtol=1e-11, atol=1e-13)
    gaps = np.append(trace.column("gap"), obj.value(trace.final_x) - obj.f_star)
    assert np.allclose(curve.gaps, gaps[curve.times], rtol=1e-8, atol=1e-13)
    assert curve.events == sched.event_t.size


@given(st.integers(0, 500), st.sampled_from([1, 3, 17, 64]))
def test_sparse_recording_keeps_the_exact_hit(seed, every):
    obj = _logistic()
    part = make_partition(6, 3)
    kw = dict(max_steps=20000, B=7, stop_ratio=0.05)
    dense = run_until(obj, part, iter_event_chunks(3, 7, "uniform-random", seed), np.zeros(6), 0.5, **kw)
    sparse = run_until(obj, part, iter_event_chunks(3, 7, "uniform-random", seed), np.zeros(6), 0.5,
                       record_every=every, **kw)
    assert dense.hit is not None and sparse.hit == dense.hit
    assert np.array_equal(sparse.final_x, dense.final_x)
    # sparse samples are a subset of the dense curve
    lookup = dict(zip(dense.times.tolist(), dense.gaps.tolist()))
    assert all(lookup[t] == g for t, g in zip(sparse.times.tolist(), sparse.gaps.tolist()))


def test_hit_is_the_first_crossing():
    obj = diagonal_quadratic([1.0, 2.0])
    part = make_partition(2, 2)
    curve = run_until(obj, part, iter_event_chunks(2, 3, "uniform-random", 1), np.ones(2), 0.1,
                      max_steps=10**5, B=3, stop_ratio=1e-2)
    thr = 1e-2 * curve.gaps[0]
    assert curve.gaps[-1] <= thr and np.all(curve.gaps[:-1] > thr)
    assert curve.hit == curve.times[-1]


def test_run_until_divergence_and_argument_checks():
    obj, part = diagonal_quadratic([1.0, 2.0]), make_partition(2, 2)
    with pytest.raises(DivergenceError):
        run_until(obj, part, iter_event_chunks(2, 2, "synchronous"), np.ones(2), 1e4, max_steps=1000, B=2)
    with pytest.raises(ValueError, match="record_every"):
        run_until(obj, part, iter_event_chunks(2, 2, "synchronous"), np.ones(2), 0.1, max_steps=10, B=2,
                  record_every=0)
    with pytest.raises(ValueError, match="f\\*"):
        run_until(make_logistic(preprocess(generate_synthetic(10, 2, 1.0)), 0.0, estimate_f_star=False),
                  part, iter_event_chunks(2, 2, "synchronous"), np.ones(2), 0.1, max_steps=10, B=2)


def test_simulator_step_api():
    obj, part = diagonal_quadratic([1.0, 2.0]), make_partition(2, 2)
    sim = Simulator(obj, part, generate_schedule(2, 3, 1, "synchronous"), [1.0, 1.0], 0.1)
    for _ in range(3):
        sim.step()
    with pytest.raises(RuntimeError, match="exhausted"):
        sim.step()
