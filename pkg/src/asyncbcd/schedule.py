"""Activation sets and staleness maps under the bounded-delay model.

A schedule is stored as a list of activation events ``(t, i, tau_row)``: at time
``t`` processor ``i`` updates its block using, for every other block ``j``, the
value block ``j`` had at time ``tau_row[j]``.  Staleness is only materialized
where an update actually reads it.  The dense ``[n, n, horizon]`` table is
derived on demand with the fill rule of :meth:`AsyncSchedule.staleness_table`.

Generation is streaming (:func:`iter_event_chunks`) so that very long horizons
can be consumed without holding the whole schedule in memory;
:func:`generate_schedule` materializes a finite prefix of the same stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

MODES = ("synchronous", "periodic", "uniform-random", "adversarial-max")


def _check_params(n: int, B: int, mode: str, period: int | None) -> None:
    if n < 1:
        raise ValueError(f"processor count must be positive, got {n}")
    if B < 1:
        raise ValueError(f"delay bound B must be a positive integer, got {B}")
    if mode not in MODES:
        raise ValueError(f"unknown schedule mode {mode!r}; expected one of {MODES}")
    if mode == "periodic":
        if period is None or period < 1:
            raise ValueError("periodic mode needs a positive period p")
        if period > B:
            raise ValueError(f"period p={period} exceeds the delay bound B={B}")


_BATCH = 1024   # activations drawn per processor at a time (fixed, so results never depend on chunking)


class _RandomProcessor:
    """Activation stream of one processor in uniform-random mode, drawn in fixed batches."""

    def __init__(self, i: int, n: int, B: int, seed_seq: np.random.SeedSequence):
        self.i, self.n, self.B = i, n, B
        self.rng = np.random.default_rng(seed_seq)
        self.next_t = int(self.rng.integers(0, B))
        self.prev_row = np.zeros(n, dtype=np.int64)
        self.times = np.zeros(0, dtype=np.int64)
        self.rows = np.zeros((0, n), dtype=np.int64)

    def _draw(self) -> None:
        B, rng = self.B, self.rng
        gaps = rng.integers(1, B + 1, size=_BATCH)
        times = self.next_t + np.concatenate(([0], np.cumsum(gaps[:-1])))
        self.next_t = int(times[-1] + gaps[-1])
        lo = np.maximum(times - B + 1, 0)
        draws = rng.integers(lo[:, None], times[:, None] + 1, size=(_BATCH, self.n))
        # Running max enforces monotone stamps across consecutive activations.
        rows = np.maximum.accumulate(np.vstack([self.prev_row, draws]), axis=0)[1:]
        rows[:, self.i] = times
        self.prev_row = rows[-1].copy()
        self.times = np.concatenate([self.times, times])
        self.rows = np.vstack([self.rows, rows])

    def take(self, t_end: int) -> tuple[np.ndarray, np.ndarray]:
        """Activations with ``t < t_end`` not yet handed out."""
        while self.next_t < t_end:
            self._draw()
        k = int(np.searchsorted(self.times, t_end, side="left"))
        out = self.times[:k], self.rows[:k]
        self.times, self.rows = self.times[k:], self.rows[k:]
        return out


def iter_event_chunks(n: int, B: int, mode: str, seed: int = 0, period: int | None = None,
                      horizon: int | None = None, chunk: int = 65536
                      ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(event_t, event_proc, event_tau)`` arrays covering consecutive time ranges.

    Events are ordered by time, then processor.  ``event_tau[e, j]`` is the time
    stamp of block ``j`` in the view used by event ``e``; the own-block entry
    equals the event time.  The stream is the same for every ``chunk`` size.
    """
    _check_params(n, B, mode, period)
    if mode == "uniform-random":
        procs = [_RandomProcessor(i, n, B, ss) for i, ss in enumerate(np.random.SeedSequence(seed).spawn(n))]
    t0 = 0
    while horizon is None or t0 < horizon:
        t1 = t0 + chunk if horizon is None else min(t0 + chunk, horizon)
        ts = np.arange(t0, t1, dtype=np.int64)
        if mode == "synchronous":
            ev_t = np.repeat(ts, n)
            ev_p = np.tile(np.arange(n, dtype=np.int64), ts.size)
            ev_tau = np.repeat(ev_t[:, None], n, axis=1)
        elif mode == "adversarial-max":
            fire = ts[ts % B == B - 1]
            ev_t = np.repeat(fire, n)
            ev_p = np.tile(np.arange(n, dtype=np.int64), fire.size)
            ev_tau = np.repeat(np.maximum(ev_t - B + 1, 0)[:, None], n, axis=1)
            ev_tau[np.arange(ev_t.size), ev_p] = ev_t
        elif mode == "periodic":
            phase = np.arange(n, dtype=np.int64) % period
            ev_t_l, ev_p_l = [], []
            for i in range(n):
                first = t0 + ((phase[i] - t0) % period)
                acts = np.arange(first, t1, period, dtype=np.int64)
                ev_t_l.append(acts)
                ev_p_l.append(np.full(acts.size, i, dtype=np.int64))
            ev_t, ev_p = np.concatenate(ev_t_l), np.concatenate(ev_p_l)
            order = np.lexsort((ev_p, ev_t))
            ev_t, ev_p = ev_t[order], ev_p[order]
            # Latest activation of j at or before t; below 0 means the initial value.
            last = ev_t[:, None] - ((ev_t[:, None] - phase[None, :]) % period)
            ev_tau = np.maximum(np.maximum(last, ev_t[:, None] - B + 1), 0)
            ev_tau[np.arange(ev_t.size), ev_p] = ev_t
        else:
            parts = [p.take(t1) for p in procs]
            ev_t = np.concatenate([pt for pt, _ in parts])
            ev_p = np.concatenate([np.full(pt.size, i, dtype=np.int64) for i, (pt, _) in enumerate(parts)])
            ev_tau = np.vstack([pr for _, pr in parts])
            order = np.lexsort((ev_p, ev_t))
            ev_t, ev_p, ev_tau = ev_t[order], ev_p[order], ev_tau[order]
        yield ev_t, ev_p, ev_tau.astype(np.int64, copy=False)
        t0 = t1


def iter_events(n: int, B: int, mode: str, seed: int = 0, period: int | None = None,
                horizon: int | None = None) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(t, active, tau)`` for every time with at least one activation.

    ``active`` holds increasing processor indices and ``tau[r, j]`` is the time
    stamp of block ``j`` in the view of processor ``active[r]``.
    """
    for ev_t, ev_p, ev_tau in iter_event_chunks(n, B, mode, seed, period, horizon, chunk=4096):
        if ev_t.size == 0:
            continue
        cuts = np.flatnonzero(np.diff(ev_t)) + 1
        for lo, hi in zip(np.concatenate(([0], cuts)), np.concatenate((cuts, [ev_t.size]))):
            yield int(ev_t[lo]), ev_p[lo:hi], ev_tau[lo:hi]


@dataclass(frozen=True, eq=False)
class AsyncSchedule:
    n: int
    horizon: int
    B: int
    mode: str
    seed: int
    event_t: np.ndarray      # (E,) non-decreasing activation times
    event_proc: np.ndarray   # (E,) processor of each activation
    event_tau: np.ndarray    # (E, n) staleness rows
    period: int | None = None

    def __post_init__(self):
        starts = np.searchsorted(self.event_t, np.arange(self.horizon + 1), side="left")
        object.__setattr__(self, "_starts", starts)

    def events_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self._starts[t], self._starts[t + 1]
        return self.event_proc[lo:hi], self.event_tau[lo:hi]

    def __iter__(self):
        for t in np.unique(self.event_t):
            active, tau = self.events_at(int(t))
            yield int(t), active, tau

    def activations(self, i: int) -> np.ndarray:
        return self.event_t[self.event_proc == i]

    def active_table(self) -> np.ndarray:
        table = np.zeros((self.n, self.horizon), dtype=bool)
        table[self.event_proc, self.event_t] = True
        return table

    def staleness_table(self) -> np.ndarray:
        """Dense ``tau[i, j, t]``.

        Between activations of ``i`` the stamp is ``min(tau at the next activation, t)``
        and ``t`` after the last one.  This keeps the table monotone in ``t`` and inside
        ``(t - B, t]`` wherever the activation rows are.
        """
        ts = np.arange(self.horizon)
        table = np.empty((self.n, self.n, self.horizon), dtype=np.int64)
        for i in range(self.n):
            mask = self.event_proc == i
            acts, rows = self.event_t[mask], self.event_tau[mask]
            nxt = np.searchsorted(acts, ts, side="left")
            fill = np.broadcast_to(ts, (self.n, self.horizon)).copy()
            has_next = nxt < acts.size
            fill[:, has_next] = np.minimum(rows[nxt[has_next]].T, ts[has_next])
            fill[i] = ts
            table[i] = fill
        return table

    def max_staleness(self) -> int:
        if self.event_t.size == 0 or self.n == 1:
            return 0
        lag = self.event_t[:, None] - self.event_tau
        lag[np.arange(lag.shape[0]), self.event_proc] = 0
        return int(lag.max())

    @classmethod
    def from_tables(cls, active, staleness, B: int, mode: str = "custom", seed: int = 0) -> "AsyncSchedule":
        """Build a schedule from hand-written dense tables (``active[i, t]``, ``staleness[i, j, t]``).

        Only the staleness rows at active slots are kept; those are the ones the
        algorithm reads.
        """
        active = np.asarray(active, dtype=bool)
        staleness = np.asarray(staleness, dtype=np.int64)
        n, horizon = active.shape
        if staleness.shape != (n, n, horizon):
            raise ValueError(f"staleness table has shape {staleness.shape}, expected {(n, n, horizon)}")
        procs, times = np.nonzero(active)
        order = np.lexsort((procs, times))
        procs, times = procs[order], times[order]
        rows = staleness[procs, :, times].copy()
        rows[np.arange(procs.size), procs] = times
        return cls(n, horizon, B, mode, seed, times.astype(np.int64), procs.astype(np.int64), rows)

    def to_csv(self, path) -> None:
        """One row per ``(t, i)``: ``t, i, active, tau_0 .. tau_{n-1}``."""
        act = self.active_table()
        tab = self.staleness_table()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "i", "active"] + [f"tau_{j}" for j in range(self.n)])
            for t in range(self.horizon):
                for i in range(self.n):
                    w.writerow([t, i, int(act[i, t])] + tab[i, :, t].tolist())


def generate_schedule(n: int, horizon: int, B: int, mode: str, seed: int = 0,
                      period: int | None = None) -> AsyncSchedule:
    """Materialize the first ``horizon`` steps of the event stream."""
    _check_params(n, B, mode, period)
    if horizon < B:
        raise ValueError(f"horizon {horizon} is shorter than the delay bound B={B}")
    parts = list(iter_event_chunks(n, B, mode, seed, period, horizon))
    event_t = np.concatenate([p[0] for p in parts])
    event_proc = np.concatenate([p[1] for p in parts])
    event_tau = np.vstack([p[2] for p in parts])
    return AsyncSchedule(n, horizon, B, mode, int(seed), event_t, event_proc, event_tau, period)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    rule: str | None = None   # "window", "delay" or "monotone"
    i: int | None = None
    j: int | None = None
    t: int | None = None
    message: str = "schedule satisfies the bounded-delay assumptions"

    def __bool__(self):
        return self.ok


def validate_schedule(s: AsyncSchedule) -> ValidationReport:
    """Exhaustive check of the three schedule invariants.

    * window: every full window ``{t, .., t+B-1}`` inside the horizon contains an
      activation of every processor;
    * delay: ``t - B < tau[i, j](t) <= t`` (and ``>= 0``) at every activation;
    * monotone: stamps never decrease between consecutive activations of ``i``.

    Returns the earliest violation in time order, or a passing report.
    """
    found: list[tuple[int, int, int, int, str, str]] = []  # (t, order, i, j, rule, message)
    B, H = s.B, s.horizon
    for i in range(s.n):
        acts = s.activations(i)
        if H < B:
            break
        starts = []
        if acts.size == 0:
            starts.append(0)
        else:
            if acts[0] > B - 1:
                starts.append(0)
            gaps = np.flatnonzero(np.diff(acts) > B)
            if gaps.size:
                starts.append(int(acts[gaps[0]]) + 1)
            if acts[-1] < H - B:
                starts.append(int(acts[-1]) + 1)
        if starts:
            t0 = min(starts)
            found.append((t0, 0, i, i, "window",
                          f"processor {i} has no activation in the window {{{t0}, .., {t0 + B - 1}}}"))

    lag_ok = (s.event_tau <= s.event_t[:, None]) & (s.event_tau > s.event_t[:, None] - B) & (s.event_tau >= 0)
    lag_ok[np.arange(s.event_t.size), s.event_proc] = True
    bad = np.argwhere(~lag_ok)
    if bad.size:
        e, j = bad[0]
        t, i = int(s.event_t[e]), int(s.event_proc[e])
        found.append((t, 1, i, int(j), "delay",
                      f"tau[{i},{j}]({t}) = {int(s.event_tau[e, j])} is outside ({t - B}, {t}]"))

    for i in range(s.n):
        rows = s.event_tau[s.event_proc == i]
        times = s.event_t[s.event_proc == i]
        if rows.shape[0] < 2:
            continue
        drop = np.argwhere(np.diff(rows, axis=0) < 0)
        if drop.size:
            k, j = drop[0]
            t = int(times[k + 1])
            found.append((t, 2, i, int(j), "monotone",
                          f"tau[{i},{j}] decreases from {int(rows[k, j])} to {int(rows[k + 1, j])} at t={t}"))

    if not found:
        return ValidationReport(True)
    t, _, i, j, rule, msg = min(found)
    return ValidationReport(False, rule, i, j, t, msg)
