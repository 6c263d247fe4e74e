"""Problem data for the L-shaped model problems.

Polar coordinates are centred at the reentrant corner ``(0, 0)`` with the
angle taken in ``[pi/2, 2 pi]``, so that ``r**(2/3) sin(2/3 (phi - pi/2))``
vanishes on both edges bounding the removed quadrant.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .fem import element_quadrature
from .material import MaterialLaw
from .mesh import build_lshape
from .quadrature import gauss_legendre, graded_segment_rule

ALPHA = 2.0 / 3.0
CORNER = (0.0, 0.0)
# Gauss points per edge for boundary loads away from the corner
BOUNDARY_ORDER = 8


def polar(pts):
    """``(r, phi)`` with ``phi`` in ``[pi/2, 2 pi]`` on the L-shape."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    phi = np.where(phi < 0.5 * np.pi - 1e-14, phi + 2.0 * np.pi, phi)
    return r, phi


def singular_u(pts):
    r, phi = polar(pts)
    return r ** ALPHA * np.sin(ALPHA * (phi - 0.5 * np.pi))


def singular_grad(pts):
    r, phi = polar(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = ALPHA * r ** (ALPHA - 1.0)
    arg = ALPHA * (phi - 0.5 * np.pi) - phi
    return np.stack([amp * np.sin(arg), amp * np.cos(arg)], axis=-1)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of one transmission problem.

    ``f(pts)``, ``u0(pts)`` and ``t0(pts, normals)`` take arrays of points
    with a trailing axis of length 2.  ``exact_u``/``exact_grad`` are the
    interior solution when known.
    """

    name: str
    law: MaterialLaw
    f: Optional[Callable]
    u0: Callable
    t0: Callable
    g: float = 0.0
    friction: bool = False
    exact_u: Optional[Callable] = None
    exact_grad: Optional[Callable] = None
    singular_point: Optional[Tuple[float, float]] = CORNER
    uzawa_rho: float = 25.0
    radiation_constant: float = 0.0
    meta: dict = field(default_factory=dict)

    def initial_mesh(self, levels=0):
        return build_lshape(levels, friction=self.friction)


def example1_spec(p=3.0, epsilon=1e-5, g=0.5, uzawa_rho=25.0, delta=1.0):
    """Friction problem: ``f = 0``, ``u0`` the corner singularity, ``t0 = du0/dn``."""
    law = MaterialLaw(p=p, delta=delta, epsilon=epsilon)

    def t0(pts, normals):
        return np.einsum("...d,...d->...", singular_grad(pts), normals)

    return ProblemSpec(name="example1", law=law, f=None, u0=singular_u, t0=t0,
                       g=g, friction=True, uzawa_rho=uzawa_rho)


def example2_spec(p=3.0, epsilon=1e-5, delta=1.0):
    """Smooth-exterior problem with known solution ``u1 = r^{2/3} sin(2/3 (phi - pi/2))``.

    ``u2 = 0``, hence ``u0 = u1`` on the boundary and ``t0`` is the
    conormal derivative of ``u1``.  Since ``u1`` is harmonic,
    ``f = -grad rho(|grad u1|) . grad u1``; for ``p = 3`` this is
    ``(4/27) r^{-5/3} sin(2/3 (phi - pi/2))``.
    """
    law = MaterialLaw(p=p, delta=delta, epsilon=epsilon)

    def f(pts):
        r, phi = polar(pts)
        s = np.sin(ALPHA * (phi - 0.5 * np.pi))
        t = ALPHA * r ** (ALPHA - 1.0)
        # d/dr rho(|grad u|) times du/dr, with d|grad u|/dr = (ALPHA - 1) t / r
        return -law.drho(t) * (ALPHA - 1.0) * t / r * ALPHA * r ** (ALPHA - 1.0) * s

    def t0(pts, normals):
        g = singular_grad(pts)
        t = np.linalg.norm(g, axis=-1)
        return law.rho(t) * np.einsum("...d,...d->...", g, normals)

    return ProblemSpec(name="example2", law=law, f=f, u0=singular_u, t0=t0, g=0.0,
                       friction=False, exact_u=singular_u, exact_grad=singular_grad)


def boundary_load(spec, mesh):
    """``b_k = int_{dOmega} t0 psi_k`` for the boundary hat functions ``psi_k``.

    Edges ending at the singular point use a rule graded towards it.
    """
    bnd = mesh.boundary
    out = np.zeros(bnd.n_nodes)
    a, b = bnd.starts, bnd.ends
    s, w = gauss_legendre(BOUNDARY_ORDER)
    sg, wg = graded_segment_rule(2 * BOUNDARY_ORDER, 3)
    S = np.broadcast_to(s, (bnd.n_edges, len(s))).copy()
    Wt = np.broadcast_to(w, S.shape).copy()
    if spec.singular_point is not None:
        c = np.asarray(spec.singular_point)
        at_a = np.linalg.norm(a - c, axis=1) < 1e-12
        at_b = np.linalg.norm(b - c, axis=1) < 1e-12
        special = np.flatnonzero(at_a | at_b)
    else:
        special = np.empty(0, dtype=int)
    regular = np.setdiff1d(np.arange(bnd.n_edges), special)
    groups = [(regular, S[regular], Wt[regular])]
    if len(special):
        ss = np.where(at_a[special, None], sg[None, :], 1.0 - sg[None, :])
        groups.append((special, ss, np.broadcast_to(wg, ss.shape)))
    for idx, ss, ww in groups:
        if len(idx) == 0:
            continue
        pts = a[idx, None, :] + ss[..., None] * (b - a)[idx, None, :]
        nrm = np.broadcast_to(bnd.normals[idx, None, :], pts.shape)
        val = spec.t0(pts, nrm) * ww * bnd.lengths[idx, None]
        np.add.at(out, bnd.edges[idx, 0], np.sum(val * (1.0 - ss), axis=1))
        np.add.at(out, bnd.edges[idx, 1], np.sum(val * ss, axis=1))
    return out


def compatibility_defect(spec, mesh=None):
    """``int_Omega f + int_{dOmega} t0`` by quadrature (zero for consistent data)."""
    mesh = mesh if mesh is not None else spec.initial_mesh(2)
    total = float(boundary_load(spec, mesh).sum())
    if spec.f is not None:
        for _, _, w, pts in element_quadrature(mesh, singular_point=spec.singular_point):
            total += float(np.sum(spec.f(pts) * w))
    return total


def check_compatibility(spec, tol=1e-6, mesh=None):
    """Raise ``ValueError`` when a spec with exact solution violates the data identity."""
    if spec.exact_u is None:
        return 0.0
    d = compatibility_defect(spec, mesh)
    if abs(d) > tol:
        raise ValueError(f"{spec.name}: data incompatible, int f + <t0, 1> = {d:.3e}")
    return d
