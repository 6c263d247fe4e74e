"""Newton and Uzawa solvers for the coupled interior/boundary system.

Unknowns are the nodal values ``u`` on all mesh nodes followed by the
jump ``v`` on the friction nodes (boundary nodes interior to the closure
of Gamma_s).  For a fixed multiplier ``sigma`` the discrete problem is
the minimisation of

    G(u) + 1/2 <S w, w> - <b_t + S u0h, w> - int f u + int_{Gamma_s} g sigma v

over ``(u, v)`` with the boundary trace ``w = u|_{dOmega} + v``.
"""
from dataclasses import dataclass, field
import logging
import time

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from . import fem
from .bem import assemble_layer_potentials, assemble_steklov_poincare, recover_flux
from .mesh import GAMMA_S
from .problems import boundary_load

log = logging.getLogger(__name__)

# MINRES restarts on the true residual in the iterative backend
ITERATIVE_PASSES = 4


class SolverError(RuntimeError):
    """Non-convergence of a Newton, Uzawa or linear solve.

    ``state`` carries the last iterate (or whatever partial result exists).
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class SolverConfig:
    newton_tol: float = 1e-10
    newton_max: int = 50
    line_search: str = "fallback"
    max_halvings: int = 10
    linear_backend: str = "direct"
    linear_tol: float = 1e-10
    uzawa_rho: float = 25.0
    uzawa_tol: float = 1e-10
    uzawa_max: int = 50


@dataclass
class FrictionState:
    """Nodal multiplier on the friction nodes, with the damping used to update it."""

    sigma: np.ndarray
    rho: float = 25.0
    iterations: int = 0

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)


@dataclass
class SolveReport:
    uzawa_iterations: int = 0
    newton_iterations: list = field(default_factory=list)
    residual: float = np.nan
    sigma_change: float = np.nan
    line_search_steps: int = 0
    fallback_used: bool = False
    time_s: float = 0.0
    energy: float = np.nan
    # value of J_h + int g |v| after each Uzawa step
    energy_history: list = field(default_factory=list)


def project_multiplier(sigma_raw):
    """Nodewise projection onto ``[-1, 1]``."""
    return np.clip(np.asarray(sigma_raw, dtype=float), -1.0, 1.0)


def linear_solve(A, b, tol=1e-10, backend="direct"):
    """Solve the symmetric system ``A x = b``.

    ``backend="direct"`` uses a sparse LU factorisation; ``"iterative"``
    runs MINRES with a diagonal (Jacobi) preconditioner.  Raises
    :class:`SolverError` if the relative residual exceeds ``tol`` by more
    than a factor 10 (iterative) or the factorisation fails.
    """
    b = np.asarray(b, dtype=float)
    if sp.issparse(A):
        A = A.tocsc()
    else:
        A = sp.csc_matrix(np.asarray(A, dtype=float))
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b)
    if backend == "direct":
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct factorisation failed: {exc}") from exc
    elif backend == "iterative":
        d = np.abs(A.diagonal())
        d[d == 0] = 1.0
        Minv = spla.LinearOperator(A.shape, matvec=lambda y: y / d, dtype=float)
        # MINRES monitors the preconditioned residual; restart with a
        # tighter request until the true residual meets the tolerance
        x = None
        rtol = tol
        for _ in range(ITERATIVE_PASSES):
            x, info = spla.minres(A, b, x0=x, rtol=rtol, M=Minv, maxiter=20 * A.shape[0])
            res = np.linalg.norm(A @ x - b) / bnorm
            if res <= tol or info != 0:
                break
            rtol = max(rtol * tol / res, 1e-16)
        if info != 0 or res > 10 * tol:
            raise SolverError(f"MINRES stopped with relative residual {res:.2e} (info={info})", x)
    else:
        raise ValueError(f"unknown linear backend {backend!r}")
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    return x


def _boundary_mass(boundary, edge_mask):
    """Consistent P1 mass matrix on the boundary edges selected by ``edge_mask``."""
    n = boundary.n_nodes
    e = boundary.edges[edge_mask]
    L = boundary.lengths[edge_mask]
    rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 0], e[:, 1], e[:, 1], e[:, 0]])
    vals = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


class CoupledSystem:
    """Discrete coupled problem on one mesh.

    Parameters
    ----------
    spec : ProblemSpec
    mesh : Mesh
    bem : BemMatrices, optional
        Assembled on demand.
    """

    def __init__(self, spec, mesh, bem=None):
        self.spec = spec
        self.law = spec.law
        self.mesh = mesh
        self.bem = bem if bem is not None else assemble_layer_potentials(mesh.boundary)
        self.S = assemble_steklov_poincare(self.bem)
        bnd = mesh.boundary
        self.boundary = bnd
        self.n = mesh.n_nodes
        self.bnodes = mesh.boundary_nodes
        self.nb = len(self.bnodes)
        self.fnodes = mesh.friction_nodes if spec.friction else np.empty(0, dtype=np.int64)
        self.nf = len(self.fnodes)
        self.u0h = np.asarray(spec.u0(bnd.nodes), dtype=float)
        self.b_t = boundary_load(spec, mesh)
        self.F = fem.load_vector(mesh, spec.f, spec.singular_point)
        self.rhs_w = self.b_t + self.S @ self.u0h
        M_s = _boundary_mass(bnd, bnd.labels == GAMMA_S)
        self.M_f = M_s[self.fnodes][:, self.fnodes].tocsr()
        # trace operator x -> w
        nb, n, nf = self.nb, self.n, self.nf
        Bu = sp.csr_matrix((np.ones(nb), (np.arange(nb), self.bnodes)), shape=(nb, n))
        Bv = sp.csr_matrix((np.ones(nf), (self.fnodes, np.arange(nf))), shape=(nb, nf))
        self.B = sp.hstack([Bu, Bv]).tocsr()
        self._coupling = (self.B.T @ sp.csr_matrix(self.S) @ self.B).tocsr()

    @property
    def size(self):
        return self.n + self.nf

    @property
    def dof(self):
        return self.size

    def split(self, x):
        return x[: self.n], x[self.n:]

    def trace(self, x):
        return self.B @ x

    def friction_vector(self, sigma):
        out = np.zeros(self.size)
        if self.nf:
            out[self.n:] = self.spec.g * (self.M_f @ sigma)
        return out

    def residual(self, x, sigma=None):
        u, _ = self.split(x)
        r = self.B.T @ (self.S @ self.trace(x) - self.rhs_w)
        r[: self.n] += fem.assemble_residual(self.law, self.mesh, u) - self.F
        if sigma is not None and self.nf:
            r += self.friction_vector(sigma)
        return r

    def jacobian(self, x):
        u, _ = self.split(x)
        J = fem.assemble_jacobian(self.law, self.mesh, u)
        J = sp.block_diag([J, sp.csr_matrix((self.nf, self.nf))], format="csr")
        return (J + self._coupling).tocsr()

    def energy(self, x, sigma=None):
        """``J_h(u, v)``, plus ``int g sigma v`` when ``sigma`` is given."""
        u, v = self.split(x)
        w = self.trace(x)
        val = fem.assemble_energy(self.law, self.mesh, u)
        val += 0.5 * w @ (self.S @ w) - self.rhs_w @ w - self.F @ u
        if sigma is not None and self.nf:
            val += self.spec.g * v @ (self.M_f @ sigma)
        return float(val)

    def friction_functional(self, x):
        """``int_{Gamma_s} g |v|`` for the piecewise-linear jump ``v``."""
        if not self.nf:
            return 0.0
        _, v = self.split(x)
        full = np.zeros(self.nb)
        full[self.fnodes] = v
        e = self.boundary.edges[self.boundary.labels == GAMMA_S]
        L = self.boundary.lengths[self.boundary.labels == GAMMA_S]
        a, b = full[e[:, 0]], full[e[:, 1]]
        # exact integral of |linear| over an edge
        same = a * b >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = (a * a + b * b) / (2.0 * (np.abs(a) + np.abs(b)))
        per_edge = np.where(same, 0.5 * np.abs(a + b), np.nan_to_num(cross))
        return float(self.spec.g * np.dot(L, per_edge))

    def flux(self, x):
        return recover_flux(self.bem, self.trace(x), self.u0h)


def newton_solve_inner(system, sigma=None, x0=None, config=None):
    """Newton iteration for the inner problem with fixed multiplier ``sigma``.

    Returns ``(x, iterations, info)``; ``info`` holds the final residual
    norm, the number of step halvings and whether the backtracking pass
    was used.  Iteration stops once the Euclidean norm of the residual is
    at most ``config.newton_tol``.

    ``config.line_search`` selects the globalisation:

    ``"fallback"`` (default)
        Full Newton steps; if they fail (no convergence within
        ``newton_max`` steps or non-finite values) the solve is restarted
        from ``x0`` with residual-norm backtracking.
    ``"always"``
        Backtracking from the first step.
    ``"never"``
        Full steps only.

    Starting from ``u = 0`` the first full step is of size ``1/epsilon``
    and each following step roughly halves it, so the residual grows
    once before decreasing monotonically; backtracking would shortcut
    that phase and change the iteration counts.
    """
    cfg = config or SolverConfig()
    mode = cfg.line_search
    if mode not in ("fallback", "always", "never"):
        raise ValueError(f"unknown line_search mode {mode!r}")
    if mode != "always":
        try:
            x, its, info = _newton(system, sigma, x0, cfg, backtrack=False)
            info["fallback"] = False
            return x, its, info
        except SolverError:
            if mode == "never":
                raise
            log.info("full-step Newton failed; retrying with backtracking")
    x, its, info = _newton(system, sigma, x0, cfg, backtrack=True)
    info["fallback"] = mode == "fallback"
    return x, its, info


def _newton(system, sigma, x0, cfg, backtrack):
    x = np.zeros(system.size) if x0 is None else np.array(x0, dtype=float)
    r = system.residual(x, sigma)
    rn = np.linalg.norm(r)
    halvings = 0
    for it in range(cfg.newton_max + 1):
        if rn <= cfg.newton_tol:
            return x, it, {"residual": rn, "halvings": halvings}
        if it == cfg.newton_max:
            break
        dx = linear_solve(system.jacobian(x), -r, cfg.linear_tol, cfg.linear_backend)
        step = 1.0
        with np.errstate(over="ignore", invalid="ignore"):
            x_new = x + dx
            r_new = system.residual(x_new, sigma)
            rn_new = np.linalg.norm(r_new)
            k = 0
            while backtrack and k < cfg.max_halvings and not rn_new <= (1.0 - 1e-4 * step) * rn:
                step *= 0.5
                k += 1
                x_new = x + step * dx
                r_new = system.residual(x_new, sigma)
                rn_new = np.linalg.norm(r_new)
        halvings += k
        if not np.isfinite(rn_new):
            break
        x, r, rn = x_new, r_new, rn_new
        log.debug("newton %d: |r| = %.3e (step %g)", it + 1, rn, step)
    raise SolverError(f"Newton did not converge in {cfg.newton_max} steps (|r| = {rn:.3e})",
                      {"x": x, "residual": rn})


def uzawa_solve(system, config=None, sigma0=None):
    """Uzawa iteration ``sigma <- P(sigma + rho g v)`` around Newton solves.

    Each outer step solves the inner problem warm-started from the
    previous iterate.  Stops when ``max|sigma_new - sigma| <= uzawa_tol``;
    the iteration count is the number of inner solves performed.  Without
    friction nodes one inner solve is done.

    Returns ``(u, v, FrictionState, phi, SolveReport)``.
    """
    cfg = config or SolverConfig()
    t_start = time.perf_counter()
    report = SolveReport()
    state = FrictionState(np.zeros(system.nf) if sigma0 is None else project_multiplier(sigma0),
                          rho=cfg.uzawa_rho)
    x = np.zeros(system.size)
    g = system.spec.g
    converged = False
    for _ in range(max(cfg.uzawa_max, 1)):
        x, its, info = newton_solve_inner(system, state.sigma if system.nf else None, x, cfg)
        report.newton_iterations.append(its)
        report.line_search_steps += info["halvings"]
        report.fallback_used = report.fallback_used or info["fallback"]
        report.residual = info["residual"]
        state.iterations += 1
        report.energy_history.append(system.energy(x) + system.friction_functional(x))
        if system.nf == 0:
            converged = True
            break
        _, v = system.split(x)
        new = project_multiplier(state.sigma + state.rho * g * v)
        change = float(np.max(np.abs(new - state.sigma))) if len(new) else 0.0
        state.sigma = new
        report.sigma_change = change
        if change <= cfg.uzawa_tol:
            converged = True
            break
    report.uzawa_iterations = state.iterations
    report.time_s = time.perf_counter() - t_start
    report.energy = system.energy(x)
    if not converged:
        raise SolverError(f"Uzawa did not converge in {cfg.uzawa_max} steps "
                          f"(last change {report.sigma_change:.3e})",
                          {"x": x, "state": state, "report": report})
    u, v = system.split(x)
    return u, v, state, system.flux(x), report


def compute_energy_J(system, u, v):
    """``J_h = G(u) + 1/2 <S w, w> - lambda_h(u, v)`` with ``w = u| + v``."""
    return system.energy(np.concatenate([u, v]))
