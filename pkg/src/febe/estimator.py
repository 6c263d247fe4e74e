"""A posteriori error estimator based on gradient recovery.

The squared estimator is the sum of

* ``eta_gr^2 = sum_K int_K G_{p,delta}(|grad u_h|, |grad u_h - G_h u_h|)``
* ``eta_f^2  = sum_K int_K G_{p',1}(|grad u_h|^{p-1}, h_K |f - f_K|)``
* ``eta_S^2  = sum_l l ||d/ds (V phi + (1 - K) w)||^2_{L2(l)}``
* ``eta_d^2  = sum_l l ||-rho dn u_h + t0 - S(w, phi)||^2_{L2(l)}``
* ``eta_g^2  = sum_{l in Gamma_s} l ||rho dn u_h||^2_{L2(l)} + ||g||^2``

with ``w = u_h| + v_h - u0h`` and ``S(w, phi) = (W w + (K' - 1) phi) / 2``
the pointwise form of the discrete Dirichlet-to-Neumann map.
"""
from dataclasses import dataclass
import csv

import numpy as np

from .bem import boundary_quadrature, evaluate_boundary_traces, EVAL_ORDER
from .fem import gradients
from .material import g_pdelta
from .mesh import GAMMA_S
from .quadrature import strang_fix_7


@dataclass(frozen=True)
class RecoveredGradient:
    """Nodal values of the recovered gradient, shape ``(N, 2)``."""

    values: np.ndarray

    @property
    def x(self):
        return self.values[:, 0]

    @property
    def y(self):
        return self.values[:, 1]

    def at(self, mesh, bary, tri=None):
        """Evaluate on triangles ``tri`` at barycentric points ``bary`` (q, 3)."""
        t = mesh.triangles if tri is None else mesh.triangles[tri]
        return np.einsum("qi,mid->mqd", bary, self.values[t])


@dataclass
class IndicatorSet:
    """Estimator contributions (all squared).

    ``gr``, ``f`` are per triangle; ``S``, ``d``, ``g_local`` per boundary
    edge; ``g_global`` is the data term ``||g||^2`` on Gamma_s.
    """

    gr: np.ndarray
    f: np.ndarray
    S: np.ndarray
    d: np.ndarray
    g_local: np.ndarray
    g_global: float = 0.0

    @property
    def total_squared(self):
        return float(self.gr.sum() + self.f.sum() + self.S.sum() + self.d.sum()
                     + self.g_local.sum() + self.g_global)

    @property
    def eta(self):
        return float(np.sqrt(self.total_squared))

    def parts(self):
        """Square roots of the five contributions."""
        return {
            "eta_gr": float(np.sqrt(self.gr.sum())),
            "eta_f": float(np.sqrt(self.f.sum())),
            "eta_S": float(np.sqrt(self.S.sum())),
            "eta_d": float(np.sqrt(self.d.sum())),
            "eta_g": float(np.sqrt(self.g_local.sum() + self.g_global)),
        }


def recover_gradient(mesh, u_h):
    """Area-weighted nodal average of the elementwise gradients."""
    g = gradients(mesh, u_h) * mesh.areas[:, None]
    acc = np.zeros((mesh.n_nodes, 2))
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], g)
    return RecoveredGradient(acc / mesh.node_patch_area[:, None])


def eta_gradient_recovery(law, mesh, u_h, recovered=None, rule=None):
    """Per-triangle ``int_K G_{p,delta}(|grad u_h|, |grad u_h - G_h u_h|)``."""
    rule = rule or strang_fix_7()
    recovered = recovered if recovered is not None else recover_gradient(mesh, u_h)
    gh = gradients(mesh, u_h)
    diff = np.linalg.norm(gh[:, None, :] - recovered.at(mesh, rule.points), axis=2)
    a = np.linalg.norm(gh, axis=1)[:, None]
    vals = g_pdelta(a, diff, law.p, law.delta)
    return mesh.areas * (vals @ rule.weights)


def eta_data_oscillation(law, mesh, u_h, f, grad_f=None, rule=None):
    """Per-triangle ``int_K G_{p',1}(|grad u_h|^{p-1}, h_K |f - f_K|)``.

    ``f_K`` is the quadrature mean of ``f`` on ``K``; the same rule
    evaluates the integral, so a singular ``f`` gives a finite value that
    grows with the singularity.  With ``grad_f`` the second argument is
    ``h_K^2 |grad f|`` instead.
    """
    if f is None:
        return np.zeros(mesh.n_triangles)
    rule = rule or strang_fix_7()
    pts = rule.physical_points(mesh.corners)
    h = mesh.diameters[:, None]
    if grad_f is not None:
        y = h ** 2 * np.linalg.norm(grad_f(pts), axis=-1)
    else:
        fv = f(pts)
        y = h * np.abs(fv - (fv @ rule.weights)[:, None])
    x = np.linalg.norm(gradients(mesh, u_h), axis=1)[:, None] ** (law.p - 1.0)
    vals = g_pdelta(x, y, law.p_conjugate, 1.0)
    return mesh.areas * (vals @ rule.weights)


def conormal_flux(law, mesh, u_h):
    """``rho(|grad u_h|) grad u_h . n`` per boundary edge from the adjacent triangle."""
    g = gradients(mesh, u_h)[mesh.boundary_parent]
    t = np.linalg.norm(g, axis=1)
    return law.rho(t) * np.einsum("ed,ed->e", g, mesh.boundary.normals)


def eta_coupling_residuals(bem, mesh, law, u_h, v_h, phi, spec, fnodes=None, order=EVAL_ORDER):
    """Per-edge ``(eta_S^2, eta_d^2)``.

    Parameters
    ----------
    bem : BemMatrices of ``mesh.boundary``
    u_h : nodal values on the mesh
    v_h : jump values on the friction nodes ``fnodes`` (boundary-local indices)
    phi : edgewise flux from :func:`febe.bem.recover_flux`
    spec : ProblemSpec providing ``u0`` and ``t0``
    """
    bnd = mesh.boundary
    w = np.asarray(u_h, float)[mesh.boundary_nodes] - np.asarray(spec.u0(bnd.nodes), float)
    if fnodes is not None and len(fnodes):
        w[fnodes] += v_h
    tr = evaluate_boundary_traces(bem, phi, w, order)
    pts, wts, _ = boundary_quadrature(bnd, order)
    L = bnd.lengths

    res_S = tr.ds_V_phi + tr.ds_w - tr.ds_K_w
    nrm = np.broadcast_to(bnd.normals[:, None, :], pts.shape)
    t0 = spec.t0(pts, nrm)
    flux = conormal_flux(law, mesh, u_h)[:, None]
    res_d = -flux + t0 - 0.5 * (tr.W_w + tr.Kt_phi - tr.phi)
    eta_S = L * np.sum(wts * res_S ** 2, axis=1)
    eta_d = L * np.sum(wts * res_d ** 2, axis=1)
    return eta_S, eta_d


def eta_friction(mesh, law, u_h, g):
    """``(per-edge l^2 |rho dn u_h|^2 on Gamma_s, ||g||^2_{L2(Gamma_s)})``.

    The negative-order norm of ``g`` is replaced by its ``L2(Gamma_s)``
    norm; the value is mesh independent and excluded from marking.
    """
    bnd = mesh.boundary
    on_s = bnd.labels == GAMMA_S
    out = np.zeros(bnd.n_edges)
    if not np.any(on_s):
        return out, 0.0
    flux = conormal_flux(law, mesh, u_h)
    L = bnd.lengths
    out[on_s] = L[on_s] ** 2 * flux[on_s] ** 2
    g_glob = float(g) ** 2 * float(L[on_s].sum())
    return out, g_glob


def compute_indicators(system, u_h, v_h, phi):
    """All contributions for a solved :class:`~febe.solver.CoupledSystem`."""
    mesh, law, spec = system.mesh, system.law, system.spec
    rec = recover_gradient(mesh, u_h)
    gr = eta_gradient_recovery(law, mesh, u_h, rec)
    f = eta_data_oscillation(law, mesh, u_h, spec.f)
    eS, ed = eta_coupling_residuals(system.bem, mesh, law, u_h, v_h, phi, spec, system.fnodes)
    if spec.friction:
        g_loc, g_glob = eta_friction(mesh, law, u_h, spec.g)
    else:
        g_loc, g_glob = np.zeros(mesh.boundary.n_edges), 0.0
    return IndicatorSet(gr=gr, f=f, S=eS, d=ed, g_local=g_loc, g_global=g_glob)


def localize_for_marking(indicators, mesh):
    """Per-triangle values with boundary-edge terms attached to the adjacent triangle."""
    out = indicators.gr + indicators.f
    edge = indicators.S + indicators.d + indicators.g_local
    out = out.copy()
    np.add.at(out, mesh.boundary_parent, edge)
    return out


def dump_indicators(indicators, mesh, path):
    """CSV with one row per triangle: id, centroid, each contribution."""
    bnd = np.zeros((mesh.n_triangles, 3))
    np.add.at(bnd, mesh.boundary_parent,
              np.stack([indicators.S, indicators.d, indicators.g_local], axis=1))
    local = localize_for_marking(indicators, mesh)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["element", "cx", "cy", "eta_gr2", "eta_f2", "eta_S2", "eta_d2", "eta_g2", "local"])
        for k, (c, gr, f, b, loc) in enumerate(zip(mesh.centroids, indicators.gr, indicators.f,
                                                   bnd, local)):
            wr.writerow([k, f"{c[0]:.10g}", f"{c[1]:.10g}", f"{gr:.10g}", f"{f:.10g}",
                         f"{b[0]:.10g}", f"{b[1]:.10g}", f"{b[2]:.10g}", f"{loc:.10g}"])
