"""Logical-time simulation of asynchronous block coordinate descent.

Each processor ``i`` owns block ``i`` of the decision vector.  At an activation
time ``t`` it reads a possibly stale copy of the other blocks (block ``j`` as it
was at time ``tau[i, j](t)``), takes a gradient step on its own block, and the
new value becomes visible from ``t + 1`` on.  The true state ``x(t)`` is the
concatenation of the owners' blocks.

Two engines share this model:

* :class:`Simulator` steps through every time slot and records a full
  :class:`TraceRecord` per step, including the lemma diagnostics;
* :func:`run_until` jumps between activation events, keeps only the gap curve,
  and is meant for long horizons (large delay bounds).
"""

from __future__ import annotations

import bisect
import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .objective import ObjectiveInstance
from .partition import BlockPartition
from .schedule import AsyncSchedule

TRACE_COLUMNS = (
    "t", "f_true", "gap", "grad_norm_sq", "s_norm_sq", "max_staleness",
    "lemma1_lhs", "lemma1_rhs", "lemma2_lhs", "lemma2_rhs", "lemma3_lhs", "lemma3_rhs",
)


class HistoryUnderflow(RuntimeError):
    """A stale read referenced a block value older than the retained history."""


class DivergenceError(RuntimeError):
    pass


class BlockHistory:
    """Past values of each block, kept only as far back as a bounded delay can reach."""

    def __init__(self, partition: BlockPartition, x0: np.ndarray, B: int):
        self.B = B
        self.blocks = partition.blocks()
        self.times = [[0] for _ in self.blocks]
        self.values = [[x0[blk].copy()] for blk in self.blocks]

    def current(self, j: int) -> np.ndarray:
        return self.values[j][-1]

    def at(self, j: int, tau: int) -> np.ndarray:
        k = bisect.bisect_right(self.times[j], tau) - 1
        if k < 0:
            raise HistoryUnderflow(
                f"block {j} requested at time {tau}, oldest retained value is from {self.times[j][0]}"
            )
        return self.values[j][k]

    def index_at(self, j: int, tau: int) -> int:
        k = bisect.bisect_right(self.times[j], tau) - 1
        if k < 0:
            raise HistoryUnderflow(f"block {j} requested at time {tau}")
        return k

    def push(self, j: int, t: int, value: np.ndarray) -> None:
        self.times[j].append(t)
        self.values[j].append(value)

    def prune(self, t: int, *parallel: list) -> None:
        """Drop values superseded before ``t - B + 1``, the oldest stamp readable at ``t``.

        ``parallel`` are per-block lists aligned with the stored values; they are
        trimmed the same way.
        """
        oldest = t - self.B + 1
        for j, times in enumerate(self.times):
            k = 0
            while k + 1 < len(times) and times[k + 1] <= oldest:
                k += 1
            if k:
                del times[:k]
                del self.values[j][:k]
                for extra in parallel:
                    del extra[j][:k]

    def max_age(self, t: int) -> int:
        return max(t - times[0] for times in self.times)


@dataclass
class TraceRecord:
    t: int
    f_true: float
    gap: float | None
    grad_norm_sq: float
    s_norm_sq: float
    max_staleness: int
    lemma1_lhs: float
    lemma1_rhs: float
    lemma2_lhs: float | None = None
    lemma2_rhs: float | None = None
    lemma3_lhs: float | None = None
    lemma3_rhs: float | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class SimulationTrace:
    records: list[TraceRecord]
    final_x: np.ndarray
    B: int
    n: int
    gamma: float
    lipschitz: float | None
    f_star: float | None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if (v := getattr(r, name)) is None else v for r in self.records], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Load a trace CSV back as float columns (blank cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows]) for k in rows[0]}


class Simulator:
    """Stateful step-by-step engine; :func:`init_run` is the usual constructor."""

    def __init__(self, obj: ObjectiveInstance, partition: BlockPartition, schedule: AsyncSchedule,
                 x0, gamma: float, divergence: float = 1e12):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (obj.dim,):
            raise ValueError(f"x0 has dimension {x0.shape}, objective expects {obj.dim}")
        if partition.m != obj.dim:
            raise ValueError(f"partition covers {partition.m} coordinates, objective has {obj.dim}")
        if schedule.n != partition.n:
            raise ValueError(f"schedule has {schedule.n} processors, partition has {partition.n} blocks")
        if not gamma > 0:
            raise ValueError(f"stepsize must be positive, got {gamma}")
        self.obj, self.partition, self.schedule = obj, partition, schedule
        self.gamma = float(gamma)
        self.divergence = divergence
        self.t = 0
        self.x = x0.copy()
        self.history = BlockHistory(partition, x0, schedule.B)
        B = schedule.B
        # norms of s(t-B), .., s(t-1); zero before the run starts
        self._s_norm = deque([0.0] * B, maxlen=B)
        self._s_sq = deque([0.0] * (2 * B), maxlen=2 * B)
        self._f_hist: deque[float] = deque(maxlen=B)
        self.records: list[TraceRecord] = []

    def local_view(self, i: int, tau_row) -> np.ndarray:
        """Processor ``i``'s copy: own block current, block ``j`` as of ``tau_row[j]``."""
        parts = []
        for j in range(self.partition.n):
            parts.append(self.history.current(j) if j == i else self.history.at(j, int(tau_row[j])))
        return np.concatenate(parts)

    def step(self) -> TraceRecord:
        t, B, n, gamma = self.t, self.schedule.B, self.partition.n, self.gamma
        if t >= self.schedule.horizon:
            raise RuntimeError(f"schedule horizon {self.schedule.horizon} exhausted")
        self.history.prune(t)
        active, taus = self.schedule.events_at(t)

        updates = []
        lemma1_lhs = 0.0
        s_sq = 0.0
        max_stale = 0
        for r, i in enumerate(active):
            view = self.local_view(int(i), taus[r])
            g = self.obj.block_gradient(view, self.partition.block(int(i)))
            updates.append((int(i), g))
            s_sq += float(g @ g)
            lemma1_lhs = max(lemma1_lhs, float(np.linalg.norm(view - self.x)))
            if n > 1:
                max_stale = max(max_stale, int(t - np.min(taus[r])))

        f_t = self.obj.value(self.x)
        grad = self.obj.gradient(self.x)
        grad_sq = float(grad @ grad)
        gap = None if self.obj.f_star is None else f_t - self.obj.f_star
        if not math.isfinite(f_t) or abs(f_t if gap is None else gap) > self.divergence:
            raise DivergenceError(f"objective reached {f_t:.3e} at t={t}; the stepsize {gamma:g} is too large")

        prev_sum = sum(self._s_norm)
        prev_sq = list(self._s_sq)
        window_prev_sq = sum(prev_sq[B:])          # sum of ||s||^2 over [t-B, t-1]
        rec = TraceRecord(t, f_t, gap, grad_sq, s_sq, max_stale, lemma1_lhs, gamma * prev_sum)

        L = self.obj.lipschitz
        if L is not None:
            rec.lemma3_lhs = gamma**2 * s_sq
            rec.lemma3_rhs = ((n**2 * B * gamma**4 * L**2 + gamma**2 * L * n) * window_prev_sq
                              + (gamma**2 + gamma**4 * L * n * B) * grad_sq)
            if t >= B and t % B == 0:
                # window [t-B, t): compare f(x(t)) - f(x(t-B)) with the bound built from
                # s over [t-2B, t-B) and [t-B, t)
                older, newer = sum(prev_sq[:B]), window_prev_sq
                rec.lemma2_lhs = f_t - self._f_hist[0]
                rec.lemma2_rhs = (0.5 * L * gamma**2 * n * B * older
                                  + (gamma**2 * L * (B * (n + 1) / 2 + 1) - gamma) * newer)

        x_next = self.x.copy()
        for i, g in updates:
            blk = self.partition.block(i)
            x_next[blk] = self.x[blk] - gamma * g
            self.history.push(i, t + 1, x_next[blk].copy())
        self.x = x_next
        self._s_norm.append(math.sqrt(s_sq))
        self._s_sq.append(s_sq)
        self._f_hist.append(f_t)
        self.t = t + 1
        self.records.append(rec)
        return rec

    def trace(self) -> SimulationTrace:
        return SimulationTrace(self.records, self.x.copy(), self.schedule.B, self.partition.n, self.gamma,
                               self.obj.lipschitz, self.obj.f_star,
                               meta={"objective": self.obj.name, "mode": self.schedule.mode,
                                     "seed": self.schedule.seed})


def init_run(obj, partition, schedule, x0, gamma, divergence: float = 1e12) -> Simulator:
    return Simulator(obj, partition, schedule, x0, gamma, divergence)


def step(sim: Simulator) -> TraceRecord:
    return sim.step()


def run(obj, partition, schedule, x0, gamma, horizon: int | None = None,
        divergence: float = 1e12) -> SimulationTrace:
    sim = init_run(obj, partition, schedule, x0, gamma, divergence)
    horizon = schedule.horizon if horizon is None else horizon
    if horizon > schedule.horizon:
        raise ValueError(f"requested {horizon} steps, schedule covers {schedule.horizon}")
    for _ in range(horizon):
        sim.step()
    return sim.trace()


# -- event-driven engine -----------------------------------------------------


@dataclass
class GapCurve:
    """Gap ``f(x(t)) - f*`` at ``t = 0`` and at every time the true state changed."""

    times: np.ndarray
    gaps: np.ndarray
    hit: int | None            # first t with gap <= threshold, if a threshold was given
    steps: int                 # logical time reached
    events: int                # number of block updates performed
    final_x: np.ndarray

    def to_csv(self, path, run_id: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow((["run_id"] if run_id is not None else []) + ["t", "gap"])
            for t, g in zip(self.times, self.gaps):
                w.writerow(([run_id] if run_id is not None else []) + [int(t), _fmt(g)])


def _as_chunks(events):
    if isinstance(events, AsyncSchedule):
        return [(events.event_t, events.event_proc, events.event_tau)]
    return events


def run_until(obj: ObjectiveInstance, partition: BlockPartition, events, x0, gamma: float, *,
              max_steps: int, B: int, stop_ratio: float | None = None,
              divergence: float = 1e12, refresh: int = 1024, record_every: int = 1) -> GapCurve:
    """Run the asynchronous iteration over an event stream, skipping idle slots.

    ``events`` is an :class:`AsyncSchedule` or an iterable of
    ``(event_t, event_proc, event_tau)`` chunks such as
    :func:`~asyncbcd.schedule.iter_event_chunks`.  The run stops at ``max_steps``
    or at the first ``t`` with ``gap(t) <= stop_ratio * gap(0)``.  Objectives with
    a squared or logistic :class:`LinearStructure` run in a compiled loop that
    caches per-block products; the rest evaluate gradients on assembled views.

    The gap is recorded every ``record_every`` times at which the state changed.
    The threshold test is exact regardless: the compiled loop skips evaluations
    only where a convexity lower bound already exceeds the threshold.
    """
    if obj.f_star is None:
        raise ValueError(f"{obj.name}: the gap curve needs f*")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (obj.dim,) or partition.m != obj.dim:
        raise ValueError(f"x0/partition do not match objective dimension {obj.dim}")
    if not gamma > 0:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    if B < 1:
        raise ValueError(f"delay bound must be positive, got {B}")
    if record_every < 1:
        raise ValueError(f"record_every must be positive, got {record_every}")
    lin = obj.linear
    if lin is not None and lin.kind in _kernel.KINDS:
        return _run_compiled(obj, partition, _as_chunks(events), x, float(gamma), max_steps, B,
                             stop_ratio, divergence, refresh, record_every)
    return _run_python(obj, partition, _as_chunks(events), x, float(gamma), max_steps, B,
                       stop_ratio, divergence, record_every)


def _run_python(obj, partition, chunks, x, gamma, max_steps, B, stop_ratio, divergence,
                record_every) -> GapCurve:
    blocks = partition.blocks()
    n = partition.n
    hist = BlockHistory(partition, x, B)
    gap0 = obj.value(x) - obj.f_star
    threshold = -math.inf if stop_ratio is None else stop_ratio * gap0
    times, gaps = [0], [gap0]
    hit = 0 if gap0 <= threshold else None
    n_events = t_end = last_prune = n_times = 0
    for ev_t, ev_p, ev_tau in chunks:
        if hit is not None or (ev_t.size and ev_t[0] >= max_steps):
            break
        cuts = np.flatnonzero(np.diff(ev_t)) + 1
        for lo, hi in zip(np.concatenate(([0], cuts)), np.concatenate((cuts, [ev_t.size]))):
            t = int(ev_t[lo])
            if t >= max_steps:
                break
            if t - last_prune >= B:
                hist.prune(t)
                last_prune = t
            updates = []
            for k in range(lo, hi):
                i = int(ev_p[k])
                view = np.concatenate([hist.current(j) if j == i else hist.at(j, int(ev_tau[k, j]))
                                       for j in range(n)])
                updates.append((i, obj.block_gradient(view, blocks[i])))
            for i, g in updates:
                blk = blocks[i]
                x[blk] = x[blk] - gamma * g
                hist.push(i, t + 1, x[blk].copy())
            n_events += len(updates)
            n_times += 1
            t_end = t + 1
            g_now = obj.value(x) - obj.f_star
            if n_times % record_every == 0 or g_now <= threshold:
                times.append(t + 1)
                gaps.append(g_now)
            if not math.isfinite(g_now) or abs(g_now) > divergence:
                raise DivergenceError(f"gap reached {g_now:.3e} at t={t + 1}; the stepsize {gamma:g} is too large")
            if g_now <= threshold:
                hit = t + 1
                break
    return GapCurve(np.array(times), np.array(gaps), hit, t_end, n_events, x.copy())


def _run_compiled(obj, partition, chunks, x, gamma, max_steps, B, stop_ratio, divergence, refresh,
                  record_every) -> GapCurve:
    lin = obj.linear
    kind = _kernel.KINDS[lin.kind]
    target = np.ascontiguousarray(lin.target, dtype=float)
    ZT = np.ascontiguousarray(np.asarray(lin.design, dtype=float).T)
    n, N = partition.n, ZT.shape[1]
    starts = np.array(partition.offsets, dtype=np.int64)
    stops = starts + np.array(partition.sizes, dtype=np.int64)
    reg = float(lin.reg)

    cap, R = max(8 * n, 16), 8
    buf = np.empty((cap, N))
    for j in range(n):
        _kernel.contribution(ZT, starts[j], stops[j], x, buf[j])
    buf_free = np.zeros(cap, dtype=np.int64)
    buf_free[:cap - n] = np.arange(cap - 1, n - 1, -1)
    vt = np.zeros((n, R), dtype=np.int64)
    vs = np.zeros((n, R), dtype=np.int64)
    vs[:, 0] = np.arange(n)
    vlen = np.ones(n, dtype=np.int64)
    latest = np.zeros(n, dtype=np.int64)
    istate = np.zeros(6, dtype=np.int64)
    istate[_kernel.FREE_TOP] = cap - n
    margin = buf[:n].sum(axis=0)
    f0 = _kernel.linear_value(kind, margin, target, x, reg)
    fstate = np.array([f0])
    ga = np.empty_like(x)
    _kernel.anchor_gradient(kind, margin, target, ZT, x, reg, np.empty(N), ga)

    gap0 = f0 - obj.f_star
    threshold = -math.inf if stop_ratio is None else stop_ratio * gap0
    times, gaps = [np.array([0])], [np.array([gap0])]
    hit = 0 if gap0 <= threshold else None
    t_end = 0
    for ev_t, ev_p, ev_tau in chunks:
        if hit is not None:
            break
        ev_tau = np.ascontiguousarray(ev_tau, dtype=np.int64)
        ev_t = np.ascontiguousarray(ev_t, dtype=np.int64)
        ev_p = np.ascontiguousarray(ev_p, dtype=np.int64)
        out_t = np.empty(ev_t.size, dtype=np.int64)
        out_gap = np.empty(ev_t.size)
        istate[_kernel.N_OUT] = 0
        pos = 0
        while True:
            status, pos = _kernel.run_events(
                ev_t, ev_p, ev_tau, pos, max_steps, threshold, obj.f_star, divergence,
                kind, target, ZT, starts, stops, reg, gamma, B, refresh, record_every,
                x, margin, buf, buf_free, vt, vs, vlen, latest, istate, fstate, ga, out_t, out_gap)
            if status != _kernel.GROW:
                break
            if istate[_kernel.FREE_TOP] < n:
                old = buf.shape[0]
                buf = np.concatenate([buf, np.empty_like(buf)])
                buf_free = np.concatenate([buf_free, np.zeros(old, dtype=np.int64)])
                top = istate[_kernel.FREE_TOP]
                buf_free[top:top + old] = np.arange(2 * old - 1, old - 1, -1)
                istate[_kernel.FREE_TOP] = top + old
            if vlen.max() >= R:
                vt = np.concatenate([vt, np.zeros_like(vt)], axis=1)
                vs = np.concatenate([vs, np.zeros_like(vs)], axis=1)
                R *= 2
        k = int(istate[_kernel.N_OUT])
        times.append(out_t[:k])
        gaps.append(out_gap[:k])
        if status in (_kernel.CHUNK_DONE, _kernel.MAX_STEPS):
            done = ev_t[:pos]
            if done.size:
                t_end = int(done[-1]) + 1
        elif k:
            t_end = int(out_t[k - 1])
        if status == _kernel.UNDERFLOW:
            raise HistoryUnderflow(f"event {pos} reads a block value older than the delay bound allows")
        if status == _kernel.DIVERGED:
            raise DivergenceError(f"gap reached {out_gap[k - 1]:.3e} at t={t_end}; "
                                  f"the stepsize {gamma:g} is too large")
        if status == _kernel.HIT:
            hit = t_end
        if status in (_kernel.HIT, _kernel.MAX_STEPS):
            break
    return GapCurve(np.concatenate(times), np.concatenate(gaps), hit, t_end,
                    int(istate[_kernel.N_EVENTS]), x.copy())
