import math

import numpy as np
import pytest

from driftguard.errors import DataError, EmptyNegativePool
from driftguard.objectives import (
    attraction_loss,
    centroid_pull_loss,
    contrastive_pair_loss,
    dsvdd_loss,
    median_heuristic_bandwidths,
    mmd_loss,
    moment_match_loss,
    total_loss,
    uda_loss,
)
from helpers import fd_gradient, max_rel_err

RNG = np.random.default_rng(42)


def check_grads(build, mats, roles, h=1e-5, tol=1e-4):
    out = build(mats)
    for role, i in roles.items():
        def scalar(m, i=i):
            pert = list(mats)
            pert[i] = m
            return build(pert).value
        num = fd_gradient(scalar, np.asarray(mats[i], dtype=np.float64), h=h)
        assert max_rel_err(out.grads[role], num, floor=1e-7) < tol, role


# --- dsvdd

def test_dsvdd_zero_at_center():
    c = np.array([1.0, -2.0])
    x = np.tile(c, (4, 1))
    out = dsvdd_loss(x, c)
    assert out.value == 0.0
    assert np.all(out.grads["source"] == 0.0)


def test_dsvdd_unit_offset_closed_form():
    c = np.zeros(3)
    x = np.zeros((5, 3))
    x[2, 0] = 1.0
    out = dsvdd_loss(x, c)
    assert out.value == pytest.approx(1.0 / 5)
    assert out.grads["source"][2, 0] == pytest.approx(2.0 / 5)


def test_dsvdd_matches_scalar_recomputation_and_fd():
    x = RNG.standard_normal((8, 4))
    c = RNG.standard_normal(4)
    out = dsvdd_loss(x, c)
    manual = sum(sum((x[i, j] - c[j]) ** 2 for j in range(4)) for i in range(8)) / 8
    assert abs(out.value - manual) < 1e-12
    check_grads(lambda m: dsvdd_loss(m[0], c), [x], {"source": 0})


def test_dsvdd_nonnegative():
    for seed in range(5):
        r = np.random.default_rng(seed)
        assert dsvdd_loss(r.standard_normal((6, 3)), r.standard_normal(3)).value >= 0.0


# --- contrastive pair

def test_pair_loss_two_term_closed_form():
    # sim(src,pos)=1, one negative with sim=-1, tau=1 -> -1 + log(e^-1) = -2
    src = np.array([1.0, 0.0])
    pos = np.array([2.0, 0.0])
    neg = np.array([[-3.0, 0.0]])
    out = contrastive_pair_loss(src, pos, neg, tau=1.0)
    assert out.value == pytest.approx(-2.0, abs=1e-12)


def test_pair_loss_negatives_identical_to_positive():
    src = np.array([1.0, 1.0, 0.0])
    pos = np.array([0.5, 2.0, 1.0])
    for m in (1, 4, 9):
        neg = np.tile(pos, (m, 1))
        out = contrastive_pair_loss(src, pos, neg, tau=1.0)
        assert out.value == pytest.approx(math.log(m), abs=1e-12)


def test_pair_loss_matches_naive_formula():
    src = RNG.standard_normal(3)
    pos = RNG.standard_normal(3)
    neg = RNG.standard_normal((4, 3))
    tau = 0.5
    out = contrastive_pair_loss(src, pos, neg, tau)

    def cos(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    naive = -math.log(math.exp(cos(src, pos) / tau)
                      / sum(math.exp(cos(src, n) / tau) for n in neg))
    assert abs(out.value - naive) < 1e-9


def test_pair_loss_gradients_vs_fd():
    src = RNG.standard_normal(3)
    pos = RNG.standard_normal(3)
    neg = RNG.standard_normal((4, 3))

    def build(mats):
        return contrastive_pair_loss(mats[0][0], mats[1][0], mats[2], 0.5)

    check_grads(build, [src[None], pos[None], neg], {"negatives": 2})
    out = build([src[None], pos[None], neg])
    num_src = fd_gradient(lambda m: contrastive_pair_loss(m[0], pos, neg, 0.5).value, src[None].copy())
    assert max_rel_err(out.grads["source"], num_src[0], floor=1e-7) < 1e-4


def test_pair_loss_scale_invariance():
    src = RNG.standard_normal(4)
    pos = RNG.standard_normal(4)
    neg = RNG.standard_normal((3, 4))
    base = contrastive_pair_loss(src, pos, neg, 0.2).value
    for c in (1e-3, 7.0, 1e3):
        assert abs(contrastive_pair_loss(c * src, pos, neg, 0.2).value - base) < 1e-9
        assert abs(contrastive_pair_loss(src, c * pos, neg, 0.2).value - base) < 1e-9


def test_pair_loss_small_tau_stable():
    src = np.array([1.0, 0.0])
    pos = np.array([1.0, 1e-8])
    neg = np.array([[-1.0, 0.0], [1.0, 1e-6]])
    out = contrastive_pair_loss(src, pos, neg, tau=0.01)
    assert np.isfinite(out.value)
    assert all(np.all(np.isfinite(g)) for g in out.grads.values())


def test_pair_loss_empty_pool():
    with pytest.raises(EmptyNegativePool):
        contrastive_pair_loss(np.ones(3), np.ones(3), np.zeros((0, 3)), 0.1)


# --- uda loss

def test_uda_single_pair_equals_pair_loss():
    src = RNG.standard_normal((1, 4))
    sel = RNG.standard_normal((1, 4))
    neg = RNG.standard_normal((5, 4))
    a = uda_loss(src, sel, neg, 0.3)
    b = contrastive_pair_loss(src[0], sel[0], neg, 0.3)
    assert a.value == pytest.approx(b.value, abs=1e-12)


def test_uda_mean_invariant_to_duplicated_source():
    src = RNG.standard_normal((3, 4))
    sel = RNG.standard_normal((2, 4))
    neg = RNG.standard_normal((4, 4))
    a = uda_loss(src, sel, neg, 0.2).value
    b = uda_loss(np.concatenate([src, src]), sel, neg, 0.2).value
    assert a == pytest.approx(b, abs=1e-10)


def test_uda_matches_double_loop_of_pair_losses():
    src = RNG.standard_normal((3, 5))
    sel = RNG.standard_normal((2, 5))
    neg = RNG.standard_normal((3, 5))
    got = uda_loss(src, sel, neg, 0.4)
    want = np.mean([[contrastive_pair_loss(src[i], sel[j], neg, 0.4).value
                     for j in range(2)] for i in range(3)])
    assert abs(got.value - want) < 1e-10


def test_uda_row_order_invariance():
    src = RNG.standard_normal((4, 3))
    sel = RNG.standard_normal((3, 3))
    neg = RNG.standard_normal((5, 3))
    base = uda_loss(src, sel, neg, 0.3).value
    r = np.random.default_rng(1)
    assert uda_loss(src[r.permutation(4)], sel, neg, 0.3).value == pytest.approx(base, abs=1e-12)
    assert uda_loss(src, sel[r.permutation(3)], neg, 0.3).value == pytest.approx(base, abs=1e-12)
    assert uda_loss(src, sel, neg[r.permutation(5)], 0.3).value == pytest.approx(base, abs=1e-12)


@pytest.mark.parametrize("include_positive", [False, True])
def test_uda_gradients_vs_fd(include_positive):
    src = RNG.standard_normal((3, 4))
    sel = RNG.standard_normal((2, 4))
    neg = RNG.standard_normal((5, 4))
    check_grads(lambda m: uda_loss(m[0], m[1], m[2], 0.5, include_positive=include_positive),
                [src, sel, neg], {"source": 0, "selected": 1, "negatives": 2})


def test_uda_empty_pool():
    with pytest.raises(EmptyNegativePool):
        uda_loss(np.ones((2, 3)), np.ones((2, 3)), np.zeros((0, 3)), 0.1)


# --- fallback alignments

def test_attraction_loss_value_and_grads():
    src = RNG.standard_normal((3, 4))
    sel = RNG.standard_normal((2, 4))
    out = attraction_loss(src, sel, 0.5)
    sims = [[src[i] @ sel[j] / (np.linalg.norm(src[i]) * np.linalg.norm(sel[j]))
             for j in range(2)] for i in range(3)]
    assert out.value == pytest.approx(-np.mean(sims) / 0.5, abs=1e-10)
    check_grads(lambda m: attraction_loss(m[0], m[1], 0.5), [src, sel],
                {"source": 0, "selected": 1})


def test_moment_match_loss_value_and_grads():
    src = RNG.standard_normal((4, 3))
    sel = RNG.standard_normal((5, 3))
    out = moment_match_loss(src, sel)
    diff = src.mean(axis=0) - sel.mean(axis=0)
    assert out.value == pytest.approx(float(diff @ diff), abs=1e-12)
    check_grads(lambda m: moment_match_loss(m[0], m[1]), [src, sel],
                {"source": 0, "selected": 1})


def test_centroid_pull_loss_value_and_grads():
    src = RNG.standard_normal((4, 3))
    sel = RNG.standard_normal((5, 3))
    out = centroid_pull_loss(src, sel)
    want = np.mean(np.sum((sel - src.mean(axis=0)) ** 2, axis=1))
    assert out.value == pytest.approx(want, abs=1e-12)
    check_grads(lambda m: centroid_pull_loss(m[0], m[1]), [src, sel],
                {"source": 0, "selected": 1})


# --- mmd

def test_mmd_identical_sets_near_zero():
    x = RNG.standard_normal((8, 3))
    out = mmd_loss(x, x.copy(), [1.0])
    assert abs(out.value) <= 1e-9


def test_mmd_separated_blobs_positive():
    a = RNG.standard_normal((20, 2)) * 0.1
    b = RNG.standard_normal((20, 2)) * 0.1 + 10.0
    assert mmd_loss(a, b, [1.0]).value > 0.5


@pytest.mark.parametrize("shape_b", [(4, 3), (5, 3)])
def test_mmd_gradients_vs_fd(shape_b):
    x = RNG.standard_normal((5, 3))
    y = RNG.standard_normal(shape_b)
    check_grads(lambda m: mmd_loss(m[0], m[1], [0.7, 1.5]), [x, y],
                {"source": 0, "target": 1})


def test_mmd_needs_two_rows():
    with pytest.raises(DataError):
        mmd_loss(np.ones((1, 2)), np.ones((3, 2)), [1.0])


def test_median_heuristic():
    x = np.array([[0.0], [1.0], [3.0]])
    bws = median_heuristic_bandwidths(x, scales=(1.0, 2.0))
    assert bws[0] == pytest.approx(2.0)  # median of {1, 2, 3}
    assert bws[1] == pytest.approx(4.0)
    degenerate = median_heuristic_bandwidths(np.zeros((4, 2)), scales=(1.0,))
    assert degenerate[0] == 1.0


# --- total

def test_total_loss_lambda_zero():
    src = RNG.standard_normal((3, 2))
    a = dsvdd_loss(src, np.zeros(2))
    b = uda_loss(src, RNG.standard_normal((2, 2)), RNG.standard_normal((3, 2)), 0.5)
    out = total_loss(a, b, lambda1=2.0, lambda2=0.0)
    assert out.value == pytest.approx(2.0 * a.value)
    assert np.allclose(out.grads["source"], 2.0 * a.grads["source"])


def test_total_loss_arithmetic():
    from driftguard.objectives import LossValue
    out = total_loss(LossValue(0.3, {}), LossValue(1.2, {}), 1.0, 1.0)
    assert out.value == pytest.approx(1.5)


def test_total_loss_gradient_linearity():
    x = RNG.standard_normal((3, 2))
    a = dsvdd_loss(x, np.zeros(2))
    b = uda_loss(x, RNG.standard_normal((2, 2)), RNG.standard_normal((4, 2)), 0.5)
    out = total_loss(a, b, 0.7, 1.3)
    assert np.allclose(out.grads["source"], 0.7 * a.grads["source"] + 1.3 * b.grads["source"])
    assert np.allclose(out.grads["selected"], 1.3 * b.grads["selected"])


def test_dsvdd_and_mmd_row_order_invariance():
    r = np.random.default_rng(3)
    x = r.standard_normal((6, 3))
    y = r.standard_normal((5, 3))
    c = r.standard_normal(3)
    perm_x, perm_y = r.permutation(6), r.permutation(5)
    assert dsvdd_loss(x[perm_x], c).value == pytest.approx(dsvdd_loss(x, c).value, abs=1e-12)
    base = mmd_loss(x, y, [0.9]).value
    assert mmd_loss(x[perm_x], y[perm_y], [0.9]).value == pytest.approx(base, abs=1e-12)
