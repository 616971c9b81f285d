import numpy as np
import pytest

from driftguard.kernels import _numpy as knp

try:
    from driftguard.kernels import _core as kcore
    BACKENDS = [knp, kcore]
except ImportError:
    BACKENDS = [knp]


@pytest.fixture(params=BACKENDS, ids=lambda b: b.BACKEND)
def backend(request):
    return request.param


def test_pairwise_sqdist_matches_loops(backend):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((23, 6))
    b = rng.standard_normal((11, 6))
    got = backend.pairwise_sqdist(a, b)
    want = np.array([[np.sum((ra - rb) ** 2) for rb in b] for ra in a])
    assert np.allclose(got, want, atol=1e-10)


def test_assign_nearest_ties_take_lowest_index(backend):
    x = np.array([[0.0, 0.0]])
    centroids = np.array([[1.0, 0.0], [-1.0, 0.0]])  # equidistant
    labels, dists = backend.assign_nearest(x, centroids)
    assert labels[0] == 0
    assert dists[0] == pytest.approx(1.0)


def test_assign_nearest_matches_argmin(backend):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((64, 5))
    c = rng.standard_normal((7, 5))
    labels, dists = backend.assign_nearest(x, c)
    d2 = backend.pairwise_sqdist(x, c)
    assert np.array_equal(labels, np.argmin(d2, axis=1))
    assert np.allclose(dists, d2.min(axis=1), atol=1e-12)


def test_knn_mean_dist_matches_exhaustive(backend):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((30, 4))
    for k in (1, 3, 7):
        got = backend.knn_mean_dist(x, k)
        want = np.empty(len(x))
        for i in range(len(x)):
            d = np.sqrt([np.sum((x[i] - x[j]) ** 2) for j in range(len(x)) if j != i])
            want[i] = np.sort(d)[:k].mean()
        assert np.allclose(got, want, atol=1e-10)


def test_meanshift_sweep_flat_kernel(backend):
    x = np.array([[0.0], [0.2], [5.0]])
    pts, moved = backend.meanshift_sweep(x.copy(), x, bandwidth=1.0)
    assert pts[0] == pytest.approx(0.1)
    assert pts[1] == pytest.approx(0.1)
    assert pts[2] == pytest.approx(5.0)
    assert moved == pytest.approx(0.1)


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend unavailable")
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 8))
    c = rng.standard_normal((6, 8))
    assert np.allclose(knp.pairwise_sqdist(x, c), kcore.pairwise_sqdist(x, c), atol=1e-10)
    l1, d1 = knp.assign_nearest(x, c)
    l2, d2 = kcore.assign_nearest(x, c)
    assert np.array_equal(l1, l2)
    assert np.allclose(d1, d2, atol=1e-12)
    assert np.allclose(knp.knn_mean_dist(x, 4), kcore.knn_mean_dist(x, 4), atol=1e-10)
    p1, m1 = knp.meanshift_sweep(x, x, 2.5)
    p2, m2 = kcore.meanshift_sweep(x, x, 2.5)
    assert np.allclose(p1, p2, atol=1e-10)
    assert m1 == pytest.approx(m2, abs=1e-10)
