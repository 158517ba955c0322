"""Backend equivalence: every numba kernel agrees with its numpy fallback."""

import numpy as np
import pytest

from labelattn import _kernels as K

pytestmark = pytest.mark.skipif(
    "numba" not in K.IMPLEMENTATIONS,
    reason="numba backend not available in this environment")

RNG = np.random.default_rng(42)


def both(name):
    return K.IMPLEMENTATIONS["numpy"][name], K.IMPLEMENTATIONS["numba"][name]


def test_active_backend_reported():
    assert K.BACKEND in ("numpy", "numba")
    assert K.BACKEND == ("numpy" if K.NUMBA_DISABLED or not K.HAVE_NUMBA else "numba")


@pytest.mark.parametrize("size", [1, 7, 1000])
def test_sigmoid(size):
    x = RNG.normal(size=size) * 20
    f_np, f_nb = both("sigmoid")
    np.testing.assert_allclose(f_nb(x), f_np(x), rtol=1e-14, atol=1e-300)


def test_softmax2d():
    z = RNG.normal(size=(50, 9)) * 30
    f_np, f_nb = both("softmax2d")
    np.testing.assert_allclose(f_nb(z), f_np(z), rtol=1e-13, atol=1e-300)


def test_binarize():
    y = RNG.uniform(0, 1, size=200)
    f_np, f_nb = both("binarize")
    np.testing.assert_allclose(f_nb(y, 50.0, 0.5), f_np(y, 50.0, 0.5), rtol=1e-14)


def test_bce_forward_and_grads():
    pred = RNG.uniform(0, 1, size=300)
    target = RNG.integers(0, 2, size=300).astype(np.float64)
    eps = 1e-7
    for name, tol in (("bce_forward", 1e-13), ("bce_grad_pred", 1e-12),
                      ("bce_grad_target", 1e-12)):
        f_np, f_nb = both(name)
        np.testing.assert_allclose(f_nb(pred, target, eps), f_np(pred, target, eps),
                                   rtol=tol)


def test_bce_clamp_boundary_agreement():
    pred = np.array([0.0, 1e-9, 0.5, 1 - 1e-9, 1.0])
    target = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
    for name in ("bce_forward", "bce_grad_pred", "bce_grad_target"):
        f_np, f_nb = both(name)
        np.testing.assert_allclose(f_nb(pred, target, 1e-7), f_np(pred, target, 1e-7),
                                   rtol=1e-12)


def test_adam_update():
    n = 257
    args = (RNG.normal(size=n), RNG.normal(size=n),
            RNG.normal(size=n) * 0.1, np.abs(RNG.normal(size=n)) * 0.1)
    f_np, f_nb = both("adam_update")
    out_np = f_np(*args, 3, 0.01, 0.9, 0.999, 1e-8)
    out_nb = f_nb(*args, 3, 0.01, 0.9, 0.999, 1e-8)
    for a, b in zip(out_np, out_nb):
        np.testing.assert_allclose(b, a, rtol=1e-13)


def test_weighted_label_kernels():
    w = RNG.uniform(0, 1, size=(8, 4))
    labels = RNG.integers(0, 2, size=(4, 8, 6)).astype(np.float64)
    g = RNG.normal(size=(8, 6))
    for name, args in (("weighted_label_fwd", (w, labels)),
                       ("weighted_label_grad", (g, labels))):
        f_np, f_nb = both(name)
        np.testing.assert_allclose(f_nb(*args), f_np(*args), rtol=1e-13)


def test_corrupt_draw():
    rows = RNG.dirichlet(np.ones(10), size=10)
    cum = np.ascontiguousarray(np.cumsum(rows, axis=1))
    clean = RNG.integers(0, 10, size=5000)
    u = RNG.uniform(0, 1, size=5000)
    f_np, f_nb = both("corrupt_draw")
    np.testing.assert_array_equal(f_nb(clean, cum, u), f_np(clean, cum, u))


def test_corrupt_draw_u_at_edges():
    cum = np.ascontiguousarray(np.cumsum(np.full((3, 3), 1 / 3), axis=1))
    clean = np.zeros(4, dtype=np.int64)
    u = np.array([0.0, 1.0 - 1e-16, np.nextafter(cum[0, 2], 0.0), 0.5])
    f_np, f_nb = both("corrupt_draw")
    out_np, out_nb = f_np(clean, cum, u), f_nb(clean, cum, u)
    np.testing.assert_array_equal(out_np, out_nb)
    assert np.all(out_np >= 0) and np.all(out_np <= 2)
