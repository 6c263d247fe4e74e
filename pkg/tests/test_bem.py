import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, linalg

from febe import bem
from febe.mesh import BoundaryMesh, build_lshape

R = 0.4


def circle(n, radius=R):
    th = 2 * np.pi * np.arange(n) / n
    return BoundaryMesh.polygon(radius * np.stack([np.cos(th), np.sin(th)], axis=1)), th


@pytest.fixture(scope="module")
def circle256():
    bnd, th = circle(256)
    B = bem.assemble_layer_potentials(bnd)
    return bnd, th, B, bem.assemble_steklov_poincare(B)


def midpoint_angles(bnd):
    mid = 0.5 * (bnd.starts + bnd.ends)
    return np.arctan2(mid[:, 1], mid[:, 0])


def v_rayleigh(bnd, B, k):
    c = np.cos(k * midpoint_angles(bnd))
    return (c @ B.V @ c) / (c @ (bnd.lengths * c))


def s_rayleigh(bnd, th, S, k):
    c = np.cos(k * th)
    L = bnd.lengths
    # lumped P1 mass
    mass = 0.5 * (L + np.roll(L, 1))
    return (c @ S @ c) / (c @ (mass * c))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_circle_eigenvalues(circle256, k):
    bnd, th, B, S = circle256
    assert v_rayleigh(bnd, B, k) == pytest.approx(R / k, rel=0.02)
    assert s_rayleigh(bnd, th, S, k) == pytest.approx(k / R, rel=0.02)


def test_circle_v_eigenvalue_convergence_order():
    errs, ns = [], [16, 32, 64]
    for n in ns:
        bnd, _ = circle(n)
        errs.append(abs(v_rayleigh(bnd, bem.assemble_layer_potentials(bnd), 2) / (R / 2) - 1))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.5


def test_constant_density_single_layer(circle256):
    # V 1 = -2 R log R on the circle (kernel -(1/pi) log)
    bnd, _, B, _ = circle256
    c = np.ones(bnd.n_edges)
    assert (c @ B.V @ c) / bnd.lengths.sum() == pytest.approx(-2 * R * np.log(R), rel=1e-3)


def test_operator_identities(circle256):
    bnd, _, B, S = circle256
    assert np.abs(B.W @ np.ones(bnd.n_nodes)).max() < 1e-10
    # K 1 = -1/2 - 1/2 on the P0 test side: K applied to constants gives -length
    assert np.abs(B.K.sum(axis=1) + bnd.lengths).max() < 1e-12
    assert np.abs(B.V - B.V.T).max() < 1e-12
    linalg.cholesky(B.V)
    linalg.cholesky(S)


def test_single_layer_self_entry():
    a, b = np.array([0.0, 0.0]), np.array([0.3, 0.0])
    bnd = BoundaryMesh.polygon([a, b, [0.15, 0.4]])
    B = bem.assemble_layer_potentials(bnd)
    L = 0.3
    inner = lambda t: (t * np.log(t) + (L - t) * np.log(L - t) - L) if 0 < t < L else -L + L * np.log(L)
    ref = -integrate.quad(inner, 0, L, epsabs=1e-14)[0] / np.pi
    assert B.V[0, 0] == pytest.approx(ref, rel=1e-12)


def test_adjacent_entries_against_brute_force():
    bnd = build_lshape().boundary
    B = bem.assemble_layer_potentials(bnd)
    a0, b0 = bnd.starts[0], bnd.ends[0]
    a1, b1 = bnd.starts[1], bnd.ends[1]

    def kern(s, t):
        x = a0 + s * (b0 - a0)
        y = a1 + t * (b1 - a1)
        return np.log(np.linalg.norm(x - y))

    ref, _ = integrate.dblquad(kern, 0, 1, 0, 1, epsabs=1e-13)
    ref *= -bnd.lengths[0] * bnd.lengths[1] / np.pi
    assert B.V[0, 1] == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("levels", [0, 1, 2, 3])
def test_lshape_operators_spd(levels):
    bnd = build_lshape(levels).boundary
    B = bem.assemble_layer_potentials(bnd)
    assert B.scale == 1.0
    linalg.cholesky(B.V)
    S = bem.assemble_steklov_poincare(B)
    assert np.abs(S - S.T).max() < 1e-12
    linalg.cholesky(S)
    one = np.ones(bnd.n_nodes)
    assert one @ S @ one > 0
    ev = np.linalg.eigvalsh(B.W)
    assert ev.min() > -1e-12 * ev.max()
    assert np.sum(ev < 1e-10 * ev.max()) == 1


@pytest.fixture(scope="module")
def lshape_ops():
    bnd = build_lshape(1).boundary
    B = bem.assemble_layer_potentials(bnd)
    return bnd, B, bem.assemble_steklov_poincare(B)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_schur_term_is_positive(lshape_ops, seed):
    _, B, S = lshape_ops
    w = np.random.default_rng(seed).standard_normal(S.shape[0])
    assert w @ S @ w >= 0.5 * (w @ B.W @ w) - 1e-12 * abs(w @ S @ w)


def test_capacity_scale():
    assert bem.check_capacity_scale(build_lshape().boundary) == 1.0
    sq = BoundaryMesh.polygon([[0, 0], [4, 0], [4, 4], [0, 4]])
    s = bem.check_capacity_scale(sq)
    assert s * sq.diameter() == pytest.approx(0.5)
    B = bem.assemble_layer_potentials(sq)
    assert B.scale == s
    linalg.cholesky(B.V)


def test_unscaled_large_boundary_detected():
    # diameter 4: the unscaled single layer matrix is indefinite
    th = 2 * np.pi * np.arange(64) / 64
    bnd = BoundaryMesh.polygon(2.0 * np.stack([np.cos(th), np.sin(th)], axis=1))
    B = bem.assemble_layer_potentials(bnd, scale=1.0)
    with pytest.raises(bem.BemError):
        B.V_factor


def test_flux_vanishes_for_matching_trace(lshape_ops):
    bnd, B, _ = lshape_ops
    w = np.random.default_rng(2).standard_normal(bnd.n_nodes)
    assert np.abs(bem.recover_flux(B, w, w)).max() == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_circle_flux_is_exterior_normal_derivative(circle256, k):
    # trace - u0 = cos(k theta) extends as (R/r)^k cos(k theta): d/dr = -(k/R) cos(k theta)
    bnd, th, B, _ = circle256
    w = np.cos(k * th)
    phi = bem.recover_flux(B, w, np.zeros_like(w))
    exact = -(k / R) * np.cos(k * midpoint_angles(bnd))
    assert np.abs(phi - exact).max() <= 0.01 * k / R
    assert np.abs(bem.flux_residual(B, phi, w, np.zeros_like(w))).max() < 1e-12


def test_pointwise_traces_converge_on_circle():
    k = 2
    errs_dtn, errs_s = [], []
    for n in (64, 128, 256):
        bnd, th = circle(n)
        B = bem.assemble_layer_potentials(bnd)
        w = np.cos(k * th)
        phi = bem.recover_flux(B, w, np.zeros(n))
        tr = bem.evaluate_boundary_traces(B, phi, w)
        pts, _, _ = bem.boundary_quadrature(bnd)
        ang = np.arctan2(pts[..., 1], pts[..., 0])
        dtn = 0.5 * (tr.W_w + tr.Kt_phi - tr.phi)
        errs_dtn.append(np.abs(dtn - (k / R) * np.cos(k * ang)).max())
        errs_s.append(np.abs(tr.ds_V_phi + tr.ds_w - tr.ds_K_w).max())
    assert errs_dtn[-1] < 0.02 * k / R
    for e in (errs_dtn, errs_s):
        assert e[0] / e[1] > 1.8 and e[1] / e[2] > 1.8


def test_degenerate_edge_rejected():
    bnd = BoundaryMesh.polygon([[0, 0], [1, 0], [1, 0], [0, 1]])
    with pytest.raises(bem.BemError):
        bem.assemble_layer_potentials(bnd)
