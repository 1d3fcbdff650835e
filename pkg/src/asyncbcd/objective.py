"""Objective functions with block-gradient access and curvature certificates.

Every objective is an immutable :class:`ObjectiveInstance`.  Built-ins carry
analytic gradients and, where known, a PL constant, a gradient Lipschitz
constant and the optimal value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .partition import BlockPartition

PROVENANCES = ("analytic", "rc-derived", "estimated")
BUILTIN_KINDS = ("diagonal-quadratic", "pl-sine", "least-squares", "logistic-l2")


@dataclass(frozen=True)
class PLCertificate:
    mu: float
    provenance: str = "analytic"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"PL constant must be positive, got {self.mu}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class RCParameters:
    """Regularity-condition constants around a minimizer."""

    alpha: float
    beta: float
    minimizer: np.ndarray

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("RC constants alpha and beta must be positive")
        object.__setattr__(self, "minimizer", np.asarray(self.minimizer, dtype=float))


@dataclass(frozen=True)
class LinearStructure:
    """Marks objectives of the form ``loss(Z @ x) + reg/2 * ||x||^2``.

    The event-driven runner uses it to cache per-block products ``Z[:, blk] @ x_blk``
    instead of recomputing ``Z @ x`` for every stale view.
    """

    design: np.ndarray
    loss: Callable[[np.ndarray], float]
    loss_grad: Callable[[np.ndarray], np.ndarray]
    reg: float = 0.0
    # "squared" (loss = 1/2 ||r - target||^2) or "logistic" (labels in target);
    # None leaves the runner on the generic path.
    kind: str | None = None
    target: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ObjectiveInstance:
    name: str
    dim: int
    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    certificate: PLCertificate | None = None
    lipschitz: float | None = None
    f_star: float | None = None
    # Upper bound on |f_star - true minimum| when f_star is an estimate.
    f_star_residual: float = 0.0
    linear: LinearStructure | None = None
    params: dict = field(default_factory=dict)

    @property
    def mu(self) -> float | None:
        return None if self.certificate is None else self.certificate.mu

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(
                f"{self.name}: point has dimension {x.shape[0] if x.ndim == 1 else x.shape}, "
                f"objective expects {self.dim}"
            )
        return x

    def value(self, x) -> float:
        return float(self.value_fn(self._check(x)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.gradient_fn(self._check(x)), dtype=float)

    def block_gradient(self, x, block: slice) -> np.ndarray:
        # Same arithmetic path as the full gradient, so concatenated blocks match it bit for bit.
        return self.gradient(x)[block]

    def with_f_star(self, f_star: float, residual: float = 0.0) -> "ObjectiveInstance":
        return replace(self, f_star=float(f_star), f_star_residual=float(residual))


def eval_value(obj: ObjectiveInstance, x) -> float:
    return obj.value(x)


def eval_gradient(obj: ObjectiveInstance, x) -> np.ndarray:
    return obj.gradient(x)


def eval_block_gradient(obj: ObjectiveInstance, x, i: int, partition: BlockPartition) -> np.ndarray:
    if partition.m != obj.dim:
        raise ValueError(f"partition covers {partition.m} coordinates, objective has {obj.dim}")
    return obj.block_gradient(x, partition.block(i))


# -- built-ins ---------------------------------------------------------------


def diagonal_quadratic(diag) -> ObjectiveInstance:
    """``f(x) = 1/2 sum_k d_k x_k^2``; PL with the smallest and Lipschitz with the largest d_k."""
    d = np.asarray(diag, dtype=float)
    if d.ndim != 1 or d.size == 0 or np.any(d <= 0):
        raise ValueError("diagonal-quadratic needs a non-empty list of positive eigenvalues")
    root = np.sqrt(d)
    return ObjectiveInstance(
        name="diagonal-quadratic",
        dim=d.size,
        value_fn=lambda x: 0.5 * float(np.dot(d * x, x)),
        gradient_fn=lambda x: d * x,
        certificate=PLCertificate(float(d.min())),
        lipschitz=float(d.max()),
        f_star=0.0,
        linear=LinearStructure(
            design=np.diag(root),
            loss=lambda r: 0.5 * float(np.dot(r, r)),
            loss_grad=lambda r: r,
            kind="squared",
            target=np.zeros(d.size),
        ),
        params={"diag": d.tolist()},
    )


def pl_sine(dim: int = 1) -> ObjectiveInstance:
    """Separable sum of ``x^2 + 3 sin^2(x)``, non-convex but PL with mu = 1/32.

    The second derivative ``2 + 6 cos(2x)`` lies in [-4, 8], so the gradient is
    8-Lipschitz.  Summing over coordinates keeps both constants.
    """
    if dim < 1:
        raise ValueError("pl-sine dimension must be positive")
    return ObjectiveInstance(
        name="pl-sine",
        dim=int(dim),
        value_fn=lambda x: float(np.sum(x * x + 3.0 * np.sin(x) ** 2)),
        gradient_fn=lambda x: 2.0 * x + 3.0 * np.sin(2.0 * x),
        certificate=PLCertificate(1.0 / 32.0),
        lipschitz=8.0,
        f_star=0.0,
        params={"dim": int(dim)},
    )


def least_squares(A, b, certify: bool = True, rtol: float = 1e-10) -> ObjectiveInstance:
    """``f(x) = 1/2 ||Ax - b||^2``, possibly rank deficient.

    With ``b`` in range(A) the minimum is 0 and f is PL with the squared smallest
    non-zero singular value.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError(f"b has shape {b.shape}, A has {A.shape[0]} rows")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        raise ValueError("least-squares needs a non-zero matrix")
    tol = sv[0] * max(A.shape) * np.finfo(float).eps
    nonzero = sv[sv > tol]
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = A @ sol - b
    f_min = 0.5 * float(residual @ residual)
    in_range = np.linalg.norm(residual) <= rtol * max(1.0, np.linalg.norm(b))
    certificate = None
    if certify:
        if not in_range:
            raise ValueError(
                "b is outside range(A): the minimum value is not 0, so the analytic "
                "PL certificate does not apply (pass certify=False)"
            )
        certificate = PLCertificate(float(nonzero[-1] ** 2))
    return ObjectiveInstance(
        name="least-squares",
        dim=A.shape[1],
        value_fn=lambda x: 0.5 * float(np.sum((A @ x - b) ** 2)),
        gradient_fn=lambda x: A.T @ (A @ x - b),
        certificate=certificate,
        lipschitz=float(sv[0] ** 2),
        f_star=0.0 if in_range else f_min,
        linear=LinearStructure(
            design=A,
            loss=lambda r: 0.5 * float(np.sum((r - b) ** 2)),
            loss_grad=lambda r: r - b,
            kind="squared",
            target=b,
        ),
        params={"A": A.tolist(), "b": b.tolist()},
    )


def random_least_squares(rows: int, cols: int, rank: int, seed: int = 0) -> ObjectiveInstance:
    """Rank-deficient least squares with ``b`` drawn inside range(A)."""
    if not 1 <= rank <= min(rows, cols):
        raise ValueError(f"rank must be in [1, {min(rows, cols)}], got {rank}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols)) / np.sqrt(cols)
    b = A @ rng.standard_normal(cols)
    obj = least_squares(A, b)
    return replace(obj, params={**obj.params, "rows": rows, "cols": cols, "rank": rank, "seed": seed})


def make_builtin(kind: str, **params) -> ObjectiveInstance:
    if kind == "diagonal-quadratic":
        return diagonal_quadratic(params["diag"])
    if kind == "pl-sine":
        return pl_sine(int(params.get("dim", 1)))
    if kind == "least-squares":
        if "A" in params:
            return least_squares(params["A"], params["b"], certify=params.get("certify", True))
        return random_least_squares(
            int(params["rows"]), int(params["cols"]), int(params["rank"]), int(params.get("seed", 0))
        )
    if kind == "logistic-l2":
        from .logistic import make_logistic

        return make_logistic(params["dataset"], float(params.get("lam", params.get("lambda", 0.0))))
    raise ValueError(f"unknown objective kind {kind!r}; expected one of {BUILTIN_KINDS}")


# -- certificates ------------------------------------------------------------


def _as_points(obj: ObjectiveInstance, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if obj.dim == 1 else pts.reshape(1, -1)
    return pts


def rc_to_pl(rc: RCParameters, L: float) -> PLCertificate:
    """An RC(alpha, beta) function with L-Lipschitz gradient is 1/(beta^2 L)-PL."""
    if not L > 0:
        raise ValueError(f"Lipschitz constant must be positive, got {L}")
    return PLCertificate(1.0 / (rc.beta**2 * L), provenance="rc-derived")


@dataclass(frozen=True)
class PLReport:
    passed: bool
    worst_ratio: float
    worst_point: np.ndarray | None
    used: int
    mu: float


def check_pl_at(obj: ObjectiveInstance, cert: PLCertificate, points, atol: float = 1e-10,
                skip_gap: float = 1e-12) -> PLReport:
    """Sampled check of ``1/2 ||grad f(z)||^2 >= mu (f(z) - f*)``.

    Points whose gap is below ``skip_gap`` are excluded from the ratio (0/0
    at the minimizers) but still have to satisfy the inequality.
    """
    if obj.f_star is None:
        raise ValueError(f"{obj.name}: f* is unknown; estimate it before checking the PL inequality")
    pts = _as_points(obj, points)
    if pts.shape[0] == 0:
        raise ValueError("need at least one sample point")
    passed = True
    worst, worst_pt, used = np.inf, None, 0
    for z in pts:
        g = obj.gradient(z)
        half_sq = 0.5 * float(g @ g)
        gap = obj.value(z) - obj.f_star
        if half_sq < cert.mu * gap - atol:
            passed = False
        if gap < skip_gap:
            continue
        used += 1
        ratio = half_sq / gap
        if ratio < worst:
            worst, worst_pt = ratio, z.copy()
    return PLReport(passed, float(worst), worst_pt, used, cert.mu)


@dataclass(frozen=True)
class RCReport:
    passed: bool
    worst_margin: float
    gradient_bound_passed: bool


def check_rc_at(obj: ObjectiveInstance, rc: RCParameters, points, atol: float = 1e-10) -> RCReport:
    """Sampled check of the regularity condition and of its consequence
    ``||grad f(z)|| >= ||z - x*|| / beta``."""
    pts = _as_points(obj, points)
    worst = np.inf
    grad_ok = True
    for z in pts:
        g = obj.gradient(z)
        d = z - rc.minimizer
        lhs = float(g @ d)
        rhs = float(g @ g) / rc.alpha + float(d @ d) / rc.beta
        worst = min(worst, lhs - rhs)
        if np.linalg.norm(g) < np.linalg.norm(d) / rc.beta - atol:
            grad_ok = False
    return RCReport(worst >= -atol, float(worst), grad_ok)


def finite_difference_gradient(obj: ObjectiveInstance, x, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        step = h * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (obj.value(x + e) - obj.value(x - e)) / (2 * step)
    return g


def gradient_check(obj: ObjectiveInstance, points, h: float = 1e-6) -> float:
    """Worst relative error between the analytic gradient and central differences."""
    worst = 0.0
    for x in _as_points(obj, points):
        g = obj.gradient(x)
        fd = finite_difference_gradient(obj, x, h)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8)))
    return worst
