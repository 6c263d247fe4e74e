import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from febe import _kernels_py as kp
from febe import kernels

coord = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coord, coord).map(np.array)


def segment_distance(x, a, b):
    d = b - a
    s = np.clip(np.dot(x - a, d) / np.dot(d, d), 0.0, 1.0)
    return np.linalg.norm(x - (a + s * d))


def brute(x, a, b):
    d = b - a
    L = np.linalg.norm(d)
    n = np.array([d[1], -d[0]]) / L

    def y(s):
        return a + s / L * d

    F = integrate.quad(lambda s: np.log(np.linalg.norm(x - y(s))), 0, L, epsabs=1e-13, limit=200)[0]
    I0 = integrate.quad(lambda s: np.dot(y(s) - x, n) / np.linalg.norm(x - y(s)) ** 2, 0, L,
                        epsabs=1e-13, limit=200)[0]
    I1 = integrate.quad(lambda s: s * np.dot(y(s) - x, n) / np.linalg.norm(x - y(s)) ** 2, 0, L,
                        epsabs=1e-13, limit=200)[0]
    return F, I0, I1


@settings(max_examples=40, deadline=None)
@given(point, point, point)
def test_segment_integrals_match_brute_force_quadrature(x, a, b):
    assume(np.linalg.norm(b - a) > 0.05)
    assume(segment_distance(x, a, b) > 0.05)
    F, I0, I1 = brute(x, a, b)
    assert kp.slp_value(x, a, b) == pytest.approx(F, abs=1e-9)
    i0, i1 = kp.dlp_value(x, a, b)
    assert i0 == pytest.approx(I0, abs=1e-9)
    assert i1 == pytest.approx(I1, abs=1e-9)


def test_log_integral_on_the_segment_itself():
    # int_0^L log|xi - s| ds = xi log xi + (L - xi) log(L - xi) - L
    a, b = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    xi = 0.7
    expected = xi * np.log(xi) + (2 - xi) * np.log(2 - xi) - 2
    assert kp.slp_value(np.array([xi, 0.0]), a, b) == pytest.approx(expected, rel=1e-14)


def test_double_layer_solid_angle():
    # I0 is minus the angle under which the segment is seen
    a, b = np.array([-1.0, 0.0]), np.array([1.0, 0.0])
    i0, _ = kp.dlp_value(np.array([0.0, -1.0]), a, b)
    assert abs(i0) == pytest.approx(np.pi / 2, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(point, point, point)
def test_gradients_match_finite_differences(x, a, b):
    assume(np.linalg.norm(b - a) > 0.05)
    assume(segment_distance(x, a, b) > 0.05)
    h = 1e-6
    e = np.eye(2)
    g = kp.slp_gradient(x, a, b)
    g0, g1 = kp.dlp_gradient(x, a, b)
    for k in range(2):
        fd = (kp.slp_value(x + h * e[k], a, b) - kp.slp_value(x - h * e[k], a, b)) / (2 * h)
        assert g[k] == pytest.approx(fd, abs=1e-6)
        p0, p1 = kp.dlp_value(x + h * e[k], a, b)
        m0, m1 = kp.dlp_value(x - h * e[k], a, b)
        assert g0[k] == pytest.approx((p0 - m0) / (2 * h), abs=1e-5)
        assert g1[k] == pytest.approx((p1 - m1) / (2 * h), abs=1e-5)


def panel_data(n, order=4, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = 0.4 + 0.05 * rng.standard_normal(n)
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    a, b = pts, np.roll(pts, -1, axis=0)
    s = (np.arange(order) + 0.5) / order
    xq = (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    wq = np.repeat(np.linalg.norm(b - a, axis=1), order) / order
    owner = np.repeat(np.arange(n), order)
    return xq, wq, owner, a, b, rng.standard_normal(n), rng.standard_normal(n)


def test_backend_selected_at_import():
    assert kernels.BACKEND in kernels.backends()
    assert "numpy" in kernels.backends()


@pytest.mark.skipif("cython" not in kernels.backends(), reason="compiled kernels not built")
@pytest.mark.parametrize("n", [7, 64, 300])
def test_backends_agree(n):
    xq, wq, owner, a, b, d0, d1 = panel_data(n)
    cy = kernels.backends()["cython"]
    assert np.allclose(cy.slp_galerkin(xq, wq, owner, n, a, b), kp.slp_galerkin(xq, wq, owner, n, a, b),
                       rtol=1e-12, atol=1e-14)
    for c, p in zip(cy.dlp_galerkin(xq, wq, owner, n, a, b), kp.dlp_galerkin(xq, wq, owner, n, a, b)):
        assert np.allclose(c, p, rtol=1e-12, atol=1e-13)
    assert np.allclose(cy.slp_grad_apply(xq, owner, a, b, d0), kp.slp_grad_apply(xq, owner, a, b, d0),
                       rtol=1e-11, atol=1e-11)
    assert np.allclose(cy.dlp_grad_apply(xq, owner, a, b, d0, d1),
                       kp.dlp_grad_apply(xq, owner, a, b, d0, d1), rtol=1e-11, atol=1e-11)


def test_dense_kernels_equal_pointwise_sums():
    n = 9
    xq, wq, owner, a, b, d0, d1 = panel_data(n, order=2, seed=4)
    F = kernels.slp_galerkin(xq, wq, owner, n, a, b)
    ref = np.zeros((n, n))
    for q in range(len(xq)):
        ref[owner[q]] += wq[q] * kp.slp_value(xq[q], a, b)
    assert np.allclose(F, ref, rtol=1e-13)
    g = kernels.slp_grad_apply(xq, owner, a, b, d0)
    own = np.arange(n)[None, :] == owner[:, None]
    ref = np.einsum("kjd,j->kd", kp.slp_gradient(xq[:, None, :], a[None], b[None], own), d0)
    assert np.allclose(g, ref, rtol=1e-12)


def test_wrappers_accept_non_contiguous_input():
    n = 5
    xq, wq, owner, a, b, d0, _ = panel_data(n)
    F1 = kernels.slp_galerkin(xq, wq, owner.astype(np.int32), n, a, b)
    F2 = kernels.slp_galerkin(np.asfortranarray(xq), wq, owner, n, a, b)
    assert np.array_equal(F1, F2)
