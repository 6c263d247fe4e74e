"""P1 finite element assembly for the nonlinear interior operator.

Nodal fields are plain float arrays indexed by mesh node.  Functions of
position (sources, exact solutions) take an array of points with shape
``(..., 2)`` and return values of shape ``(...)`` (or ``(..., 2)`` for
gradients).
"""
import numpy as np
import scipy.sparse as sp

from .material import GRAD_FLOOR, omega
from .quadrature import collapsed_gauss, rotate_to_vertex, strang_fix_7

# points per direction of the graded rule used at a singular vertex
SINGULAR_ORDER = 12
SINGULAR_GRADING = 3
# triangles with centroid closer than this many diameters to the singular
# point get a high-order conical product rule
NEAR_FACTOR = 3.0


def gradients(mesh, u):
    """(M, 2) constant gradient of the P1 field ``u`` on each triangle."""
    return np.einsum("mk,mkd->md", np.asarray(u)[mesh.triangles], mesh.basis_gradients)


def singular_triangles(mesh, point, tol=1e-12):
    """Triangles having ``point`` as a vertex, with the local vertex index."""
    if point is None:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    d = np.linalg.norm(mesh.corners - np.asarray(point, dtype=float), axis=2)
    tri, loc = np.nonzero(d < tol)
    return tri, loc


def element_quadrature(mesh, rule=None, singular_point=None):
    """Quadrature data grouped by rule.

    Returns a list of ``(tri, bary, weights, points)`` with ``tri`` the
    triangle indices of the group, ``bary`` of shape ``(k, nq, 3)``,
    physical ``weights`` (area included) of shape ``(k, nq)`` and
    ``points`` of shape ``(k, nq, 2)``.  Triangles touching
    ``singular_point`` get a rule graded towards that vertex, and those
    within ``NEAR_FACTOR`` diameters of it a high-order product rule.
    """
    rule = rule or strang_fix_7()
    sing, loc = singular_triangles(mesh, singular_point)
    regular = np.setdiff1d(np.arange(mesh.n_triangles), sing)
    near = np.empty(0, dtype=np.int64)
    if singular_point is not None:
        dist = np.linalg.norm(mesh.centroids[regular] - np.asarray(singular_point), axis=1)
        is_near = dist < NEAR_FACTOR * mesh.diameters[regular]
        near, regular = regular[is_near], regular[~is_near]
    groups = []
    for tri, r in ((regular, rule), (near, collapsed_gauss(SINGULAR_ORDER))):
        if len(tri):
            bary = np.broadcast_to(r.points, (len(tri),) + r.points.shape)
            w = mesh.areas[tri, None] * r.weights[None, :]
            groups.append((tri, bary, w, np.einsum("mqi,mid->mqd", bary, mesh.corners[tri])))
    if len(sing):
        base = collapsed_gauss(SINGULAR_ORDER, SINGULAR_GRADING)
        bary = np.stack([rotate_to_vertex(base, int(v)).points for v in loc])
        w = mesh.areas[sing, None] * base.weights[None, :]
        groups.append((sing, bary, w, np.einsum("mqi,mid->mqd", bary, mesh.corners[sing])))
    return groups


def stiffness_matrix(mesh, coeff=None):
    """P1 stiffness matrix, optionally weighted by a per-triangle coefficient."""
    g = mesh.basis_gradients
    local = np.einsum("mid,mjd->mij", g, g) * mesh.areas[:, None, None]
    if coeff is not None:
        local = local * np.asarray(coeff)[:, None, None]
    return _scatter_matrix(mesh, local)


def _scatter_matrix(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def load_vector(mesh, f, singular_point=None, rule=None):
    """``F_i = int f phi_i`` by element quadrature."""
    out = np.zeros(mesh.n_nodes)
    if f is None:
        return out
    for tri, bary, w, pts in element_quadrature(mesh, rule, singular_point):
        fv = f(pts) * w
        np.add.at(out, mesh.triangles[tri], np.einsum("mq,mqi->mi", fv, bary))
    return out


def assemble_energy(law, mesh, u, f=None, singular_point=None):
    """``G(u) = int q(|grad u|)``, minus ``int f u`` when ``f`` is given.

    ``|grad u|`` is constant per triangle, so the first part is exact.
    """
    t = np.linalg.norm(gradients(mesh, u), axis=1)
    energy = float(np.dot(mesh.areas, law.energy_density(t)))
    if f is not None:
        energy -= float(np.dot(load_vector(mesh, f, singular_point), u))
    return energy


def assemble_residual(law, mesh, u):
    """``r_i = int rho(|grad u|) grad u . grad phi_i`` (exact per triangle)."""
    g = gradients(mesh, u)
    t = np.linalg.norm(g, axis=1)
    flux = (law.rho(t) * mesh.areas)[:, None] * g
    local = np.einsum("md,mkd->mk", flux, mesh.basis_gradients)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles, local)
    return out


def assemble_jacobian(law, mesh, u):
    """Derivative of :func:`assemble_residual` as a sparse symmetric matrix.

    The rank-one term ``rho'(t)/t (grad u)(grad u)^T`` is dropped on
    triangles with ``t = |grad u| < GRAD_FLOOR``.
    """
    g = gradients(mesh, u)
    t = np.linalg.norm(g, axis=1)
    B = mesh.basis_gradients
    rho = law.rho(t)
    local = np.einsum("mid,mjd->mij", B, B) * rho[:, None, None]
    active = t >= GRAD_FLOOR
    if np.any(active):
        scale = np.zeros_like(t)
        scale[active] = law.drho(t[active]) / t[active]
        proj = np.einsum("mkd,md->mk", B, g)
        local += scale[:, None, None] * proj[:, :, None] * proj[:, None, :]
    return _scatter_matrix(mesh, local * mesh.areas[:, None, None])


def _error_fields(mesh, u_h, u_exact, grad_exact, singular_point, rule=None):
    gh = gradients(mesh, u_h)
    for tri, bary, w, pts in element_quadrature(mesh, rule, singular_point):
        uh_q = np.einsum("mqi,mi->mq", bary, np.asarray(u_h)[mesh.triangles[tri]])
        e = (u_exact(pts) - uh_q) if u_exact is not None else None
        ge = grad_exact(pts) - gh[tri][:, None, :]
        yield tri, w, e, np.linalg.norm(ge, axis=2), gh[tri]


def w1p_error(mesh, u_h, u_exact, grad_exact, p, singular_point=None, rule=None):
    """``(|u - u_h|_{1,p}, ||u - u_h||_p + |u - u_h|_{1,p})``."""
    lp = semi = 0.0
    for _, w, e, ge, _ in _error_fields(mesh, u_h, u_exact, grad_exact, singular_point, rule):
        lp += float(np.sum(w * np.abs(e) ** p))
        semi += float(np.sum(w * ge ** p))
    semi = semi ** (1.0 / p)
    return semi, lp ** (1.0 / p) + semi


def quasi_norm_error(law, mesh, u_h, grad_exact, singular_point=None, rule=None):
    """``(int omega(|grad u_h|, |grad e|)**(p-2) |grad e|**2)**(1/2)``, ``e = u - u_h``."""
    total = 0.0
    for _, w, _, ge, gh in _error_fields(mesh, u_h, None, grad_exact, singular_point, rule):
        a = np.linalg.norm(gh, axis=1)[:, None]
        total += float(np.sum(w * omega(a, ge, law.delta) ** (law.p - 2.0) * ge ** 2))
    return np.sqrt(total)


def quasi_norm(law, mesh, weight, v):
    """Discrete ``|v|_{(1,w,p)}`` for P1 fields ``w`` (weight) and ``v`` (exact)."""
    gw = np.linalg.norm(gradients(mesh, weight), axis=1)
    gv = np.linalg.norm(gradients(mesh, v), axis=1)
    return np.sqrt(np.dot(mesh.areas, omega(gw, gv, law.delta) ** (law.p - 2.0) * gv ** 2))


def seminorm_1p(mesh, v, p):
    gv = np.linalg.norm(gradients(mesh, v), axis=1)
    return np.dot(mesh.areas, gv ** p) ** (1.0 / p)
