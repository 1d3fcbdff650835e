"""L2-regularized logistic regression over a :class:`~asyncbcd.data.Dataset`.

``E(x) = mean_i[softplus(z_i.x) - y_i z_i.x] + lam/(2N) ||x||^2``, which equals the
cross-entropy of the sigmoid hypothesis plus the ridge term.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .data import Dataset
from .objective import LinearStructure, ObjectiveInstance, PLCertificate


def sigmoid(a):
    """``1 / (1 + exp(-a))``; no overflow for any finite ``a``."""
    return expit(np.asarray(a, dtype=float))


def softplus(a):
    """``log(1 + exp(a))`` evaluated as ``logaddexp(0, a)``, exact for large ``|a|``."""
    return np.logaddexp(0.0, np.asarray(a, dtype=float))


def operator_norm_sq(Z, iters: int = 50, tol: float = 1e-8, seed: int = 0) -> float:
    """Largest eigenvalue of ``Z^T Z`` by power iteration.

    The iterate only approaches the eigenvalue from below, so the result is not
    a safe upper bound; :func:`make_logistic` uses the exact spectral norm.
    """
    Z = np.asarray(Z, dtype=float)
    if not Z.size:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(Z.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = Z.T @ (Z @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return lam


def newton_minimize(obj: ObjectiveInstance, Z: np.ndarray, reg: float, tol: float = 1e-10,
                    max_iter: int = 100) -> tuple[np.ndarray, float]:
    """Damped Newton on a logistic instance; returns the minimizer and its gradient norm."""
    N = Z.shape[0]
    x = np.zeros(obj.dim)
    g = obj.gradient(x)
    gnorm = float(np.linalg.norm(g))
    for _ in range(max_iter):
        if gnorm <= tol:
            break
        p = sigmoid(Z @ x)
        H = (Z.T * (p * (1 - p) / N)) @ Z + reg * np.eye(obj.dim)
        step = np.linalg.solve(H, g)
        f0, t = obj.value(x), 1.0
        # Near the optimum the decrease drops below rounding; allow that much slack.
        slack = 8 * np.finfo(float).eps * max(abs(f0), 1.0)
        while obj.value(x - t * step) > f0 - 0.25 * t * float(g @ step) + slack and t > 1e-12:
            t *= 0.5
        x = x - t * step
        g = obj.gradient(x)
        gnorm = float(np.linalg.norm(g))
    return x, gnorm


def make_logistic(d: Dataset, lam: float, estimate_f_star: bool = True) -> ObjectiveInstance:
    """Logistic objective with its Lipschitz bound and, for ``lam > 0``, a PL certificate.

    For ``lam > 0`` the optimal value is estimated by Newton's method; the
    certified bound ``||grad||^2 / (2 mu)`` on its error is kept as the residual.
    """
    if d.N == 0:
        raise ValueError("logistic objective needs a non-empty dataset")
    if lam < 0:
        raise ValueError(f"regularization weight must be nonnegative, got {lam}")
    Z = np.array(d.features, dtype=float)
    y = d.labels.astype(float)
    N = Z.shape[0]
    reg = lam / N

    def loss(margin):
        return float(np.mean(softplus(margin) - y * margin))

    def loss_grad(margin):
        return (sigmoid(margin) - y) / N

    def value(x):
        return loss(Z @ x) + 0.5 * reg * float(x @ x)

    def gradient(x):
        return loss_grad(Z @ x) @ Z + reg * x

    obj = ObjectiveInstance(
        name="logistic-l2",
        dim=Z.shape[1],
        value_fn=value,
        gradient_fn=gradient,
        certificate=PLCertificate(reg) if lam > 0 else None,
        # An underestimated L would void every bound built from it, hence the exact norm.
        lipschitz=(0.25 * float(np.linalg.norm(Z, 2)) ** 2 + lam) / N,
        linear=LinearStructure(design=Z, loss=loss, loss_grad=loss_grad, reg=reg, kind="logistic", target=y),
        params={"lambda": lam, "N": N, "m": Z.shape[1], "dataset": d.provenance},
    )
    if lam > 0 and estimate_f_star:
        x_star, gnorm = newton_minimize(obj, Z, reg)
        obj = obj.with_f_star(obj.value(x_star), gnorm**2 / (2 * reg))
    return obj
