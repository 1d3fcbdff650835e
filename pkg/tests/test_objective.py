import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asyncbcd.data import Dataset
from asyncbcd.logistic import make_logistic
from asyncbcd.objective import (
    PLCertificate, RCParameters, check_pl_at, check_rc_at, diagonal_quadratic, eval_block_gradient,
    eval_value, gradient_check, least_squares, make_builtin, pl_sine, random_least_squares, rc_to_pl,
)
from asyncbcd.partition import make_partition

# A fixed four-sample set; the frozen numbers below come from a 40-digit
# central-difference evaluation (step 1e-6) written independently of the package.
FOUR_Z = [[0.5, -1.0, 0.25], [1.5, 0.5, -0.5], [-1.0, 2.0, 1.0], [0.0, -0.5, 1.5]]
FOUR_Y = [1, 0, 1, 0]
FD_GRAD_AT_ZERO = [0.25, -0.125, -0.03125]
FD_GRAD_AT_X1 = [0.27753873718394828, -0.32473643882066602, 0.10764691860812777]
VALUE_AT_X1 = 0.98694126094365694203
X1 = [0.3, -0.7, 1.1]


def four_sample(lam=0.01, f_star=True):
    return make_logistic(Dataset(FOUR_Z, FOUR_Y), lam, estimate_f_star=f_star)


def test_values_at_simple_points():
    assert eval_value(diagonal_quadratic([1, 1]), [3, 4]) == 12.5
    assert eval_value(pl_sine(), [0.0]) == 0.0
    assert eval_value(four_sample(), np.zeros(3)) == pytest.approx(math.log(2), abs=1e-15)


def test_dimension_mismatch_names_both():
    with pytest.raises(ValueError, match="dimension 3.*expects 2"):
        eval_value(diagonal_quadratic([1, 1]), [1, 2, 3])


def test_block_gradients_of_quadratics():
    p = make_partition(2, sizes=(1, 1))
    assert eval_block_gradient(diagonal_quadratic([1, 1]), [3, 4], 1, p).tolist() == [4]
    assert eval_block_gradient(diagonal_quadratic([1, 4]), [1, 1], 1, p).tolist() == [4]
    with pytest.raises(IndexError):
        eval_block_gradient(diagonal_quadratic([1, 1]), [3, 4], 2, p)


def test_logistic_block_gradient_matches_fd_oracle():
    obj = four_sample()
    p = make_partition(3, sizes=(2, 1))
    got = np.concatenate([eval_block_gradient(obj, np.zeros(3), i, p) for i in range(2)])
    assert np.allclose(got, FD_GRAD_AT_ZERO, rtol=1e-9, atol=1e-12)
    got = np.concatenate([eval_block_gradient(obj, np.array(X1), i, p) for i in range(2)])
    assert np.allclose(got, FD_GRAD_AT_X1, rtol=1e-9)
    assert obj.value(np.array(X1)) == pytest.approx(VALUE_AT_X1, rel=1e-13)


def test_builtin_certificates():
    assert pl_sine().mu == 1 / 32
    q = make_builtin("diagonal-quadratic", diag=[1, 4])
    assert (q.mu, q.lipschitz, q.f_star) == (1.0, 4.0, 0.0)


def test_least_squares_certificate_against_grid_minimum():
    obj = least_squares([[1.0, 0.0], [0.0, 0.0]], [1.0, 0.0])
    assert obj.mu == pytest.approx(1.0)
    g = np.linspace(-3, 3, 200)
    ratios = []
    for a in g:
        for b in g:
            gap = 0.5 * (a - 1) ** 2          # written out by hand, not through the package
            if gap >= 1e-12:
                ratios.append(0.5 * (a - 1) ** 2 / gap)
    assert min(ratios) == pytest.approx(obj.mu, rel=1e-12)
    grid = np.array([(a, b) for a in g for b in g])
    rep = check_pl_at(obj, obj.certificate, grid)
    assert rep.passed and rep.worst_ratio == pytest.approx(min(ratios), rel=1e-9)


def test_least_squares_outside_range_refuses_certificate():
    with pytest.raises(ValueError, match="outside range"):
        least_squares([[1.0, 0.0], [0.0, 0.0]], [1.0, 1.0])
    obj = least_squares([[1.0, 0.0], [0.0, 0.0]], [1.0, 1.0], certify=False)
    assert obj.certificate is None and obj.f_star == pytest.approx(0.5)


def test_rc_to_pl_formula():
    assert rc_to_pl(RCParameters(1.0, 1.0, [0.0]), 1.0).mu == 1.0
    cert = rc_to_pl(RCParameters(1.0, 2.0, [0.0]), 0.5)
    assert cert.mu == 0.5 and cert.provenance == "rc-derived"
    with pytest.raises(ValueError):
        rc_to_pl(RCParameters(1.0, 1.0, [0.0]), 0.0)


def test_rc_derived_certificate_passes_pl_check():
    half = diagonal_quadratic([1.0, 1.0])
    cert = rc_to_pl(RCParameters(2.0, 1.0, np.zeros(2)), half.lipschitz)
    pts = np.random.default_rng(0).uniform(-5, 5, size=(1000, 2))
    assert cert.mu == 1.0
    assert check_pl_at(half, cert, pts).passed


def test_rc_two_two_holds_for_half_square_norm():
    # <x, x> >= |x|^2/2 + |x|^2/2 is an equality, so RC(2, 2) holds exactly.
    half = diagonal_quadratic([1.0, 1.0])
    pts = np.random.default_rng(1).uniform(-5, 5, size=(1000, 2))
    rep = check_rc_at(half, RCParameters(2.0, 2.0, np.zeros(2)), pts)
    assert rep.passed and rep.gradient_bound_passed


def test_pl_checks():
    pts = np.random.default_rng(2).uniform(-10, 10, size=(1000, 1))
    rep = check_pl_at(pl_sine(), PLCertificate(1 / 32), pts)
    assert rep.passed and rep.worst_ratio >= 1 / 32

    q = diagonal_quadratic([1, 4])
    pts = np.random.default_rng(3).uniform(-5, 5, size=(1000, 2))
    assert check_pl_at(q, PLCertificate(1.0), pts).passed
    bad = check_pl_at(q, PLCertificate(1.5), pts)
    assert not bad.passed
    # the worst sampled ratio sits near the x1 axis, the eigendirection of the smallest eigenvalue
    assert abs(bad.worst_point[1]) < 0.2 * abs(bad.worst_point[0])


def test_pl_check_on_logistic_ball():
    obj = four_sample()
    rng = np.random.default_rng(4)
    d = rng.standard_normal((500, 3))
    pts = d / np.linalg.norm(d, axis=1, keepdims=True) * 10 * rng.uniform(0, 1, (500, 1)) ** (1 / 3)
    rep = check_pl_at(obj, obj.certificate, pts, atol=1e-10 + obj.f_star_residual)
    assert obj.mu == 0.01 / 4
    assert rep.passed


def test_pl_check_needs_f_star():
    obj = four_sample(lam=0.0, f_star=False)
    with pytest.raises(ValueError, match="estimate it"):
        check_pl_at(obj, PLCertificate(1.0), np.zeros((1, 3)))


def test_pl_sine_is_not_convex():
    f = pl_sine()
    x, y = np.array([1.2]), np.array([2.2])
    assert f.value(0.5 * x + 0.5 * y) > 0.5 * f.value(x) + 0.5 * f.value(y)


BUILTINS = [
    diagonal_quadratic([1.0, 4.0]),
    diagonal_quadratic([0.3, 2.0, 7.0]),
    pl_sine(1),
    pl_sine(3),
    random_least_squares(7, 5, 2, seed=1),
    four_sample(),
]


@pytest.mark.parametrize("obj", BUILTINS, ids=lambda o: f"{o.name}-{o.dim}")
def test_gradients_match_finite_differences(obj):
    pts = np.random.default_rng(5).uniform(-3, 3, size=(100, obj.dim))
    assert gradient_check(obj, pts) <= 1e-5


@pytest.mark.parametrize("obj", BUILTINS, ids=lambda o: f"{o.name}-{o.dim}")
def test_value_never_below_f_star(obj):
    pts = np.random.default_rng(6).uniform(-20, 20, size=(500, obj.dim))
    assert min(obj.value(z) for z in pts) >= obj.f_star - obj.f_star_residual - 1e-12


@given(st.integers(0, len(BUILTINS) - 1), st.integers(0, 2**31), st.data())
def test_block_gradients_concatenate_to_full_gradient(k, seed, data):
    obj = BUILTINS[k]
    n = data.draw(st.integers(1, obj.dim))
    p = make_partition(obj.dim, n)
    x = np.random.default_rng(seed).uniform(-5, 5, obj.dim)
    blocks = np.concatenate([eval_block_gradient(obj, x, i, p) for i in range(n)])
    assert np.array_equal(blocks, obj.gradient(x))


@given(st.lists(st.floats(0.05, 20), min_size=1, max_size=4), st.integers(0, 2**31))
def test_quadratic_pl_ratio_bounded_by_eigenvalues(diag, seed):
    obj = diagonal_quadratic(diag)
    z = np.random.default_rng(seed).uniform(-5, 5, obj.dim)
    g = obj.gradient(z)
    gap = obj.value(z)
    if gap > 1e-12:
        ratio = 0.5 * g @ g / gap
        assert min(diag) * (1 - 1e-12) <= ratio <= max(diag) * (1 + 1e-12)
