"""Scalar material laws ``rho(t)`` and the weight functions built on them."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import binom

# Jacobian assembly clamps |grad u| from below at this value
GRAD_FLOOR = 1e-14


@dataclass(frozen=True)
class MaterialLaw:
    """Nonlinearity of the interior operator ``-div(rho(|grad u|) grad u)``.

    ``law="power"`` gives ``rho(t) = (epsilon + t)**(p - 2)``.  With
    ``law="custom"`` the callables ``rho_fn`` and ``drho_fn`` are used and
    the energy density is integrated numerically unless ``q_fn`` is given.
    ``delta`` only enters the weight ``omega`` and ``G_{p,delta}``.
    """

    p: float = 2.0
    delta: float = 1.0
    epsilon: float = 0.0
    law: str = "power"
    rho_fn: Optional[Callable] = None
    drho_fn: Optional[Callable] = None
    q_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.law not in ("power", "custom"):
            raise ValueError(f"unknown law {self.law!r}")
        if self.law == "custom" and (self.rho_fn is None or self.drho_fn is None):
            raise ValueError("custom law needs rho_fn and drho_fn")

    @property
    def p_conjugate(self):
        return self.p / (self.p - 1.0)

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        if self.law == "custom":
            return np.asarray(self.rho_fn(t), dtype=float)
        if self.p == 2:
            return np.ones_like(t)
        return (self.epsilon + t) ** (self.p - 2.0)

    def drho(self, t):
        t = np.asarray(t, dtype=float)
        if self.law == "custom":
            return np.asarray(self.drho_fn(t), dtype=float)
        if self.p == 2:
            return np.zeros_like(t)
        return (self.p - 2.0) * (self.epsilon + t) ** (self.p - 3.0)

    def energy_density(self, t):
        """``q(t) = int_0^t s rho(s) ds``."""
        t = np.asarray(t, dtype=float)
        if self.law == "custom":
            if self.q_fn is not None:
                return np.asarray(self.q_fn(t), dtype=float)
            f = np.vectorize(lambda x: integrate.quad(lambda s: s * float(self.rho_fn(s)), 0.0, x)[0])
            return f(t)
        return power_law_energy(t, self.p, self.epsilon)

    def omega(self, x, y):
        return omega(x, y, self.delta)

    def g_pdelta(self, x, y):
        return g_pdelta(x, y, self.p, self.delta)


def power_law_energy(t, p, eps):
    """Closed form of ``int_0^t s (eps + s)**(p-2) ds``."""
    t = np.asarray(t, dtype=float)
    if p == 2:
        return 0.5 * t * t
    if p == 3:
        return t ** 3 / 3.0 + 0.5 * eps * t * t
    a = eps + t
    closed = (a ** (p - 1) * (t * (p - 1) - eps) + eps ** p) / (p * (p - 1))
    if eps == 0:
        return closed
    # cancellation for t << eps: binomial series in t / eps instead
    x = t / eps
    series = sum(binom(p - 2, k) * x ** k / (k + 2) for k in range(6))
    return np.where(t < 1e-3 * eps, eps ** (p - 2) * t ** 2 * series, closed)


def omega(x, y, delta):
    """``(x + y)**delta * (1 + x + y)**(1 - delta)`` for ``x, y >= 0``."""
    s = np.abs(x) + np.abs(y)
    return s ** delta * (1.0 + s) ** (1.0 - delta)


def g_pdelta(x, y, p, delta):
    """``|y|**2 * omega(x, y)**(p - 2)``, zero where ``|x| + |y| = 0``."""
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    s = x + y
    pos = s > 0
    w = np.where(pos, omega(x, y, delta), 1.0)
    return np.where(pos, y * y * w ** (p - 2.0), 0.0)


def young_quasi_bound(lam, mu, a, eps, p):
    """Whether ``lam*mu <= C(eps) (a**(p-1)+lam)**(p'-2) lam**2 + eps (a+mu)**(p-2) mu**2``.

    ``C(eps) = max(1/eps, eps**(1/(1-p)))``; vectorised over the arguments.
    Terms of the form ``0**negative * 0`` are taken as zero.
    """
    lam, mu, a, eps = (np.asarray(v, dtype=float) for v in (lam, mu, a, eps))
    pc = p / (p - 1.0)
    c = np.maximum(1.0 / eps, eps ** (1.0 / (1.0 - p)))
    base = a ** (p - 1.0) + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(lam > 0, c * base ** (pc - 2.0) * lam ** 2, 0.0)
    second = eps * (a + mu) ** (p - 2.0) * mu ** 2
    lhs = lam * mu
    rhs = first + second
    return lhs <= rhs
