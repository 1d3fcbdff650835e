"""Constants of the linear-rate guarantee and checkers that hold traces against it.

Notation: ``mu`` PL constant, ``L`` gradient Lipschitz constant, ``n`` number of
blocks, ``B`` delay bound, ``gamma`` stepsize.  A trace is cut into windows of
``B`` steps; ``alpha(kB) = f(x(kB)) - f*`` and ``beta(kB) = gamma^2 * sum of
||s(tau)||^2 over [(k-1)B, kB)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .simulator import SimulationTrace


@dataclass(frozen=True)
class TheoremConstants:
    mu: float
    L: float
    n: int
    B: int
    gamma: float
    C1: float
    C2: float
    C3: float
    C4: float
    A1: float
    A2: float
    gamma0: float

    def as_dict(self) -> dict:
        return asdict(self)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def _a_constants(mu, L, n, B):
    A1 = 0.5 * L * n * B * (1 + 2 * L * (B * (n + 1) / 2 + 1))
    A2 = 2 * mu + A1 * (0.5 * L * n * B + 4 * L * n * B + 8)
    return A1, A2


def stepsize_bounds(mu: float, L: float, n: int, B: int) -> dict[str, float]:
    """Every upper bound on gamma used along the proof chain, keyed by origin."""
    _positive(mu=mu, L=L, n=n, B=B)
    A1, A2 = _a_constants(mu, L, n, B)
    return {
        "distance_lemma_n2B": (2 / L) / (L * n**2 * B + B + 1),
        "distance_lemma_sign": 1 / (L * (B / 2) * (n + 1) + L + (L / 2) * n * B),
        "rate_nB": (1 / (2 * L)) / (L * n * B + B + 1),
        "rate_A2": (mu / (A2 * L * n)) / ((1 + L * (B * (n + 1) + 2)) * (n * B * L**2 + L + B + 1)),
        "window_sum": 1 / (L * (B / 2) * (3 * n + 1) + L + mu + 1),
        "inverse_mu": 1 / mu,
        "unit": 1.0,
    }


def compute_gamma0(mu: float, L: float, n: int, B: int) -> float:
    """Stepsize threshold: the minimum of all bounds in :func:`stepsize_bounds`."""
    return min(stepsize_bounds(mu, L, n, B).values())


def compute_constants(mu: float, L: float, n: int, B: int, gamma: float) -> TheoremConstants:
    _positive(mu=mu, L=L, n=n, B=B, gamma=gamma)
    C1 = -mu * (gamma**4 * L**2 * n * B + gamma**2 * (L * B + L) - 2 * gamma)
    C2 = 0.5 * n**2 * B * gamma**4 * L**3 + 0.5 * gamma**2 * L * (L + 1) * n
    C3 = 0.5 * L * gamma**2 * n * B
    C4 = gamma - gamma**2 * L * (B * (n + 1) / 2 + 1)
    A1, A2 = _a_constants(mu, L, n, B)
    return TheoremConstants(mu, L, n, B, gamma, C1, C2, C3, C4, A1, A2, compute_gamma0(mu, L, n, B))


def beta_denominator(L: float, n: int, B: int, gamma: float) -> float:
    """``1/gamma - L(B(n+1)/2 + 1) - (L/2) n B``; must be positive for the beta recursion."""
    return 1 / gamma - L * (B * (n + 1) / 2 + 1) - 0.5 * L * n * B


# -- window series -----------------------------------------------------------


@dataclass
class WindowSeries:
    alpha: np.ndarray   # alpha(kB), k = 0..K
    beta: np.ndarray    # beta(kB), k = 0..K
    eta: float
    B: int
    gamma: float


def window_series(gap, s_norm_sq, B: int, gamma: float) -> WindowSeries:
    gap = np.asarray(gap, dtype=float)
    s_sq = np.asarray(s_norm_sq, dtype=float)
    K = (gap.size - 1) // B
    ks = np.arange(K + 1)
    alpha = gap[ks * B]
    beta = np.array([0.0] + [gamma**2 * float(np.sum(s_sq[(k - 1) * B:k * B])) for k in ks[1:]])
    eta = float(max(alpha[0], alpha[1], beta[0], beta[1]))
    return WindowSeries(alpha, beta, eta, B, gamma)


def estimate_eta(trace: SimulationTrace, constants: TheoremConstants | None = None) -> WindowSeries:
    """Series of complete windows with ``eta = max(alpha(0), alpha(B), beta(0), beta(B))``."""
    if trace.f_star is None:
        raise ValueError("f* is unknown; the window series needs the optimality gap")
    if len(trace) < 2 * trace.B:
        raise ValueError(f"trace has {len(trace)} steps, at least 2B = {2 * trace.B} are needed")
    return window_series(trace.column("gap"), trace.column("s_norm_sq"), trace.B, trace.gamma)


@dataclass
class BoundReport:
    passed: bool
    first_violation: tuple[int, str] | None
    slack: float                      # max over windows of lhs / bound
    windows: list[dict] = field(default_factory=list)


def check_theorem_bound(series: WindowSeries, mu: float, gamma: float, atol: float = 1e-12) -> BoundReport:
    """Check ``alpha(kB)`` and ``beta(kB)`` against ``(1 - gamma mu)^(k-1) eta`` for k >= 1."""
    if not gamma * mu < 1:
        raise ValueError(f"gamma*mu = {gamma * mu} must be below 1")
    rate = 1 - gamma * mu
    first = None
    slack = 0.0
    rows = []
    for k in range(1, series.alpha.size):
        bound = rate ** (k - 1) * series.eta
        a, b = float(series.alpha[k]), float(series.beta[k])
        ok_a, ok_b = a <= bound + atol, b <= bound + atol
        if first is None and not ok_a:
            first = (k, "alpha")
        if first is None and not ok_b:
            first = (k, "beta")
        ratio = max(a, b) / bound if bound > 0 else (0.0 if max(a, b) <= 0 else math.inf)
        slack = max(slack, ratio)
        rows.append({"k": k, "alpha": a, "beta": b, "bound": bound, "ratio": ratio})
    return BoundReport(first is None, first, slack, rows)


@dataclass(frozen=True)
class Contraction:
    rho: float        # fitted per-window factor
    residual: float   # RMS of log-fit errors
    windows: int


def fit_contraction(series: WindowSeries, floor: float = 1e-14) -> Contraction:
    """Least-squares slope of ``log alpha(kB)`` against ``k``."""
    alpha = np.asarray(series.alpha, dtype=float)
    ks = np.flatnonzero(alpha > floor)
    if ks.size < 5:
        raise ValueError(f"only {ks.size} windows with gap above {floor}; need at least 5")
    y = np.log(alpha[ks])
    slope, intercept = np.polyfit(ks.astype(float), y, 1)
    resid = y - (slope * ks + intercept)
    return Contraction(float(math.exp(slope)), float(np.sqrt(np.mean(resid**2))), int(ks.size))


# -- lemma checks ------------------------------------------------------------


@dataclass
class LemmaCheck:
    checked: int = 0
    violations: list[int] = field(default_factory=list)
    worst_excess: float = -math.inf   # max of lhs - rhs

    @property
    def passed(self) -> bool:
        return not self.violations

    def add(self, t: int, lhs: float, rhs: float, atol: float) -> None:
        self.checked += 1
        excess = lhs - rhs
        self.worst_excess = max(self.worst_excess, excess)
        if excess > atol:
            self.violations.append(t)


def _window_sum(arr: np.ndarray, lo: int, hi: int) -> float:
    lo = max(lo, 0)
    return float(np.sum(arr[lo:hi])) if hi > lo else 0.0


def check_lemmas(trace: SimulationTrace, atol: float = 1e-12) -> dict[str, LemmaCheck]:
    """Evaluate the staleness-distance, B-step-decrease and one-step-difference bounds.

    Lemma 1 and 3 use the per-step columns of the trace; the B-step decrease is
    checked for every starting time whose window lies inside the trace, not only
    at window boundaries.
    """
    if trace.lipschitz is None:
        raise ValueError("lemma checks need the Lipschitz constant of the gradient")
    L, n, B, g = trace.lipschitz, trace.n, trace.B, trace.gamma
    out = {name: LemmaCheck() for name in ("lemma1", "lemma2", "lemma3")}
    for r in trace.records:
        out["lemma1"].add(r.t, r.lemma1_lhs, r.lemma1_rhs, atol)
        out["lemma3"].add(r.t, r.lemma3_lhs, r.lemma3_rhs, atol)
    f = trace.column("f_true")
    s_sq = trace.column("s_norm_sq")
    coef_new = g**2 * L * (B * (n + 1) / 2 + 1) - g
    for t in range(0, len(f) - B):
        lhs = f[t + B] - f[t]
        rhs = 0.5 * L * g**2 * n * B * _window_sum(s_sq, t - B, t) + coef_new * _window_sum(s_sq, t, t + B)
        out["lemma2"].add(t, lhs, rhs, atol)
    return out


def check_distance_lemma(trace: SimulationTrace, constants: TheoremConstants, atol: float = 1e-12) -> LemmaCheck:
    """B-step distance-to-minimum bound, ``alpha(t+B) <= (1-C1) alpha(t) + (C2+C3) sum ||s||^2``."""
    if trace.f_star is None:
        raise ValueError("f* is unknown")
    gap = trace.column("gap")
    s_sq = trace.column("s_norm_sq")
    B, c = trace.B, constants
    chk = LemmaCheck()
    for t in range(0, len(gap) - B):
        rhs = (1 - c.C1) * gap[t] + (c.C2 + c.C3) * _window_sum(s_sq, t - B, t)
        chk.add(t, gap[t + B], rhs, atol)
    return chk
