"""Galerkin boundary element operators for the exterior Laplacian.

All operators use the kernel ``-(1/pi) log|x - y|``, which is twice the
fundamental solution.  With this normalisation

* ``V phi(x)  = -(1/pi) int phi(y) log|x - y| ds_y``
* ``K w(x)    = -(1/pi) int w(y) d/dn_y log|x - y| ds_y``
* ``K' phi(x) = -(1/pi) int phi(y) d/dn_x log|x - y| ds_y``
* ``W w       = -d/ds V d/ds w``

and the exterior Dirichlet-to-Neumann map is
``S = (W + (1 - K') V^{-1} (1 - K)) / 2``.

Discretisation: piecewise constants (one per boundary edge) for fluxes,
continuous piecewise linears (one per boundary node) for traces.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from . import kernels
from .quadrature import composite_segment_rule, gauss_legendre, geometric_segment_rule

# outer Gauss points per edge for well separated pairs
FAR_ORDER = 8
# pairs closer than NEAR_FACTOR * (longer edge length) use a composite rule
NEAR_FACTOR = 1.0
NEAR_PANELS = 4
# points per edge for pointwise evaluation in the estimator
EVAL_ORDER = 4


class BemError(RuntimeError):
    """Assembly or factorisation failure of the boundary operators."""


def check_capacity_scale(boundary):
    """Scale factor that makes the single layer operator positive definite.

    ``diam < 1`` bounds the logarithmic capacity by ``diam / 2 < 1``, so no
    scaling is needed.  Otherwise the geometry is shrunk to ``diam = 1/2``.
    Galerkin matrices of the Dirichlet-to-Neumann map are invariant under
    this scaling up to the discretisation of ``V^{-1}``, so ``S_h`` is used
    as assembled; fluxes and pointwise derivatives are mapped back with
    the factor returned here.
    """
    diam = boundary.diameter()
    if diam < 1.0:
        return 1.0
    return 0.5 / diam


@dataclass(frozen=True, eq=False)
class BemMatrices:
    """Dense Galerkin matrices on the (scaled) boundary polygon.

    Attributes
    ----------
    V : (E, E) single layer, P0 x P0
    K : (E, N) double layer, P0 test x P1 trial
    W : (N, N) hypersingular, P1 x P1
    M : (E, N) mass matrix pairing P0 with P1
    T : (E, N) arc-length derivative of the P1 hat functions per edge
    scale : factor applied to the geometry before assembly
    boundary : the scaled :class:`~febe.mesh.BoundaryMesh`
    """

    V: np.ndarray
    K: np.ndarray
    W: np.ndarray
    M: np.ndarray
    T: np.ndarray
    scale: float
    boundary: object

    @property
    def Kt(self):
        """Adjoint double layer ``K'`` as the Galerkin transpose of ``K``."""
        return self.K.T

    @cached_property
    def V_factor(self):
        try:
            return linalg.cho_factor(self.V, lower=True)
        except linalg.LinAlgError as exc:
            raise BemError("single layer matrix is not positive definite; "
                           "check the capacity scaling") from exc

    def solve_V(self, rhs):
        return linalg.cho_solve(self.V_factor, rhs)


def _edge_adjacency(bnd):
    """Boolean (E, E) mask of distinct edges sharing a node."""
    e = bnd.edges
    share = ((e[:, None, 0] == e[None, :, 0]) | (e[:, None, 0] == e[None, :, 1])
             | (e[:, None, 1] == e[None, :, 0]) | (e[:, None, 1] == e[None, :, 1]))
    np.fill_diagonal(share, False)
    return share


def _near_mask(bnd, adjacent):
    mid = 0.5 * (bnd.starts + bnd.ends)
    L = bnd.lengths
    gap = np.linalg.norm(mid[:, None] - mid[None], axis=2) - 0.5 * (L[:, None] + L[None])
    near = gap < NEAR_FACTOR * np.maximum(L[:, None], L[None])
    np.fill_diagonal(near, False)
    return near & ~adjacent


def _edge_points(bnd, rows, s):
    """Points at parameters ``s`` (shape (k, q)) on edges ``rows``."""
    a, b = bnd.starts[rows], bnd.ends[rows]
    return a[:, None, :] + s[..., None] * (b - a)[:, None, :]


def _pair_integrals(bnd, rows, cols, s, w):
    """Outer integrals over edge ``rows`` of ``F``, ``I0 - I1/L``, ``I1/L`` of ``cols``.

    ``s, w`` have shape (k, q) with ``w`` normalised to the unit interval.
    """
    x = _edge_points(bnd, rows, s)
    a = bnd.starts[cols][:, None, :]
    b = bnd.ends[cols][:, None, :]
    wl = w * bnd.lengths[rows][:, None]
    F = kernels.slp_value(x, a, b)
    i0, i1 = kernels.dlp_value(x, a, b)
    i1 = i1 / bnd.lengths[cols][:, None]
    return (wl * F).sum(1), (wl * (i0 - i1)).sum(1), (wl * i1).sum(1)


def _shared_vertex_param(bnd, rows, cols):
    """1 where the shared vertex of an adjacent pair is the end of ``rows``, else 0."""
    e = bnd.edges
    at_end = (e[rows, 1] == e[cols, 0]) | (e[rows, 1] == e[cols, 1])
    return at_end.astype(float)


def assemble_layer_potentials(boundary, scale=None):
    """Assemble :class:`BemMatrices` on ``boundary`` (a BoundaryMesh).

    The inner integrals over the source edge are analytic.  The outer
    integral uses an ``FAR_ORDER``-point Gauss rule, a geometrically
    graded rule for edges sharing a vertex, a composite rule for nearby
    edges and the closed form ``(1/pi) h^2 (3/2 - ln h)`` for the
    diagonal of ``V``.
    """
    if scale is None:
        scale = check_capacity_scale(boundary)
    bnd = boundary.scaled(scale) if scale != 1.0 else boundary
    L = bnd.lengths
    if np.any(L <= 0):
        raise BemError("degenerate boundary edge of zero length")
    E, N = bnd.n_edges, bnd.n_nodes
    edges = bnd.edges

    # regular part for every pair
    x, wg = gauss_legendre(FAR_ORDER)
    xq = (bnd.starts[:, None, :] + x[None, :, None] * (bnd.ends - bnd.starts)[:, None, :]).reshape(-1, 2)
    wq = (L[:, None] * wg[None, :]).ravel()
    owner = np.repeat(np.arange(E), FAR_ORDER)
    Fm = kernels.slp_galerkin(xq, wq, owner, E, bnd.starts, bnd.ends)
    k0, k1 = kernels.dlp_galerkin(xq, wq, owner, E, bnd.starts, bnd.ends)

    # adjacent pairs: rule graded towards the shared vertex
    adjacent = _edge_adjacency(bnd)
    ri, ci = np.nonzero(adjacent)
    if len(ri):
        gs, gw = geometric_segment_rule(FAR_ORDER)
        at_end = _shared_vertex_param(bnd, ri, ci)[:, None]
        s = np.abs(at_end - gs[None, :])
        w = np.broadcast_to(gw, s.shape)
        Fm[ri, ci], k0[ri, ci], k1[ri, ci] = _pair_integrals(bnd, ri, ci, s, w)

    # nearby pairs: composite rule
    ri, ci = np.nonzero(_near_mask(bnd, adjacent))
    if len(ri):
        cs, cw = composite_segment_rule(FAR_ORDER, NEAR_PANELS)
        s = np.broadcast_to(cs, (len(ri), len(cs)))
        w = np.broadcast_to(cw, s.shape)
        Fm[ri, ci], k0[ri, ci], k1[ri, ci] = _pair_integrals(bnd, ri, ci, s, w)

    V = -Fm / np.pi
    V[np.diag_indices(E)] = L ** 2 * (1.5 - np.log(L)) / np.pi
    V = 0.5 * (V + V.T)

    K = np.zeros((E, N))
    np.add.at(K.T, edges[:, 0], k0.T)
    np.add.at(K.T, edges[:, 1], k1.T)
    K *= -1.0 / np.pi

    M = np.zeros((E, N))
    rows = np.arange(E)
    np.add.at(M, (rows, edges[:, 0]), 0.5 * L)
    np.add.at(M, (rows, edges[:, 1]), 0.5 * L)

    T = np.zeros((E, N))
    np.add.at(T, (rows, edges[:, 0]), -1.0 / L)
    np.add.at(T, (rows, edges[:, 1]), 1.0 / L)

    W = T.T @ V @ T
    W = 0.5 * (W + W.T)
    return BemMatrices(V=V, K=K, W=W, M=M, T=T, scale=float(scale), boundary=bnd)


def assemble_steklov_poincare(bem):
    """``S_h = (W + (M - K)^T V^{-1} (M - K)) / 2`` (symmetric, dense)."""
    B = bem.M - bem.K
    S = 0.5 * (bem.W + B.T @ bem.solve_V(B))
    return 0.5 * (S + S.T)


def recover_flux(bem, trace, u0h):
    """Edge-wise flux ``phi = V^{-1} (M - K)(u0h - trace)`` in the original units.

    ``trace`` is the boundary value ``u_h|_{dOmega} + v_h`` at the boundary
    nodes and ``u0h`` the nodal interpolant of the Dirichlet jump data.
    """
    rhs = (bem.M - bem.K) @ (np.asarray(u0h, float) - np.asarray(trace, float))
    return bem.scale * bem.solve_V(rhs)


def flux_residual(bem, phi, trace, u0h):
    """Residual of the flux equation ``V phi + (M - K)(trace - u0h)`` (scaled units)."""
    return bem.V @ (np.asarray(phi) / bem.scale) + (bem.M - bem.K) @ (np.asarray(trace) - np.asarray(u0h))


def boundary_quadrature(boundary, order=EVAL_ORDER):
    """Gauss points on every boundary edge.

    Returns ``(points, weights, params)`` of shapes ``(E, q, 2)``,
    ``(E, q)`` (physical weights, length included) and ``(q,)``.
    """
    s, w = gauss_legendre(order)
    a, b = boundary.starts, boundary.ends
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    return pts, boundary.lengths[:, None] * w[None, :], s


@dataclass(frozen=True)
class BoundaryTraces:
    """Pointwise boundary quantities at the estimator quadrature points.

    All arrays have shape ``(E, q)`` and are expressed in original units.

    Attributes
    ----------
    ds_V_phi : tangential derivative of ``V phi``
    ds_w : tangential derivative of the P1 trace ``w`` (edgewise constant)
    ds_K_w : tangential derivative of ``K w``
    W_w : hypersingular operator applied to ``w``
    Kt_phi : adjoint double layer applied to ``phi``
    phi : the flux itself (edgewise constant)
    """

    ds_V_phi: np.ndarray
    ds_w: np.ndarray
    ds_K_w: np.ndarray
    W_w: np.ndarray
    Kt_phi: np.ndarray
    phi: np.ndarray


def evaluate_boundary_traces(bem, phi, w, order=EVAL_ORDER):
    """Evaluate the potentials entering the coupling residuals.

    Parameters
    ----------
    bem : BemMatrices
    phi : (E,) flux in original units
    w : (N,) nodal boundary values of a P1 trace
    order : Gauss points per edge

    Notes
    -----
    Derivatives are computed by differentiating the analytic segment
    integrals.  On the edge carrying the evaluation point the single layer
    contributes only its tangential derivative and the double layer
    nothing, which are the direct values on a straight edge.
    """
    bnd = bem.boundary
    s = bem.scale
    E = bnd.n_edges
    pts, _, _ = boundary_quadrature(bnd, order)
    q = pts.shape[1]
    x = pts.reshape(-1, 2)
    own = np.repeat(np.arange(E), q)
    t = np.repeat(bnd.tangents, q, axis=0)
    n = np.repeat(bnd.normals, q, axis=0)

    phi_s = np.asarray(phi, float) / s
    w = np.asarray(w, float)
    dsw = bem.T @ w
    a, b = bnd.starts, bnd.ends

    g_phi = kernels.slp_grad_apply(x, own, a, b, phi_s)
    g_dsw = kernels.slp_grad_apply(x, own, a, b, dsw)
    g_dlp = kernels.dlp_grad_apply(x, own, a, b, w[bnd.edges[:, 0]], w[bnd.edges[:, 1]])

    def tang(g):
        return np.einsum("kd,kd->k", g, t).reshape(E, q)

    def norm(g):
        return np.einsum("kd,kd->k", g, n).reshape(E, q)

    return BoundaryTraces(
        ds_V_phi=s * (-tang(g_phi) / np.pi),
        ds_w=s * np.repeat(dsw[:, None], q, axis=1),
        ds_K_w=s * (-tang(g_dlp) / np.pi),
        W_w=s * (tang(g_dsw) / np.pi),
        Kt_phi=s * (-norm(g_phi) / np.pi),
        phi=np.repeat(np.asarray(phi, float)[:, None], q, axis=1),
    )
