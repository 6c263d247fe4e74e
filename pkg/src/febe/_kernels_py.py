"""NumPy implementation of the boundary-integral kernels.

All integrals are over a straight segment ``[a, b]`` of length ``L`` with
unit tangent ``t`` and normal ``n = (t_y, -t_x)``.  In the local frame a
point ``x`` has coordinates ``xi = (x - a).t`` and ``eta = (x - a).n``.

* ``F(x)  = int_0^L log|x - y(s)| ds``                (single layer, P0)
* ``I0(x) = int_0^L (y - x).n / |x - y|^2 ds``        (double layer, P0)
* ``I1(x) = int_0^L s (y - x).n / |x - y|^2 ds``      (double layer, linear moment)

Kernel normalisation constants (``-1/pi``) are applied by the caller.
"""
import numpy as np

_TINY = 1e-300
# rows of the dense kernels evaluated per block
_CHUNK = 256


def _frame(x, a, b):
    d = b - a
    L = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)
    tx, ty = d[..., 0] / L, d[..., 1] / L
    rx, ry = x[..., 0] - a[..., 0], x[..., 1] - a[..., 1]
    xi = rx * tx + ry * ty
    eta = rx * ty - ry * tx
    return L, tx, ty, xi, eta


def _logs(L, xi, eta):
    ra2 = xi * xi + eta * eta
    rb2 = (L - xi) ** 2 + eta * eta
    la = np.log(np.maximum(ra2, _TINY))
    lb = np.log(np.maximum(rb2, _TINY))
    theta = np.arctan2(eta * L, eta * eta - xi * (L - xi))
    return ra2, rb2, la, lb, theta


def slp_value(x, a, b):
    """``F`` evaluated elementwise (broadcasting ``x`` against ``a, b``)."""
    L, _, _, xi, eta = _frame(x, a, b)
    _, _, la, lb, theta = _logs(L, xi, eta)
    return 0.5 * ((L - xi) * lb + xi * la) - L + eta * theta


def slp_gradient(x, a, b, own=None):
    """``grad_x F``; where ``own`` is true the normal part is the direct value 0."""
    L, tx, ty, xi, eta = _frame(x, a, b)
    _, _, la, lb, theta = _logs(L, xi, eta)
    dxi = 0.5 * (la - lb)
    deta = theta if own is None else np.where(own, 0.0, theta)
    return np.stack([dxi * tx + deta * ty, dxi * ty - deta * tx], axis=-1)


def dlp_value(x, a, b):
    """``(I0, I1)`` elementwise."""
    L, _, _, xi, eta = _frame(x, a, b)
    _, _, la, lb, theta = _logs(L, xi, eta)
    i0 = -theta
    i1 = -0.5 * eta * (lb - la) + xi * i0
    return i0, i1


def dlp_gradient(x, a, b):
    """``(grad I0, grad I1)``, each with a trailing axis of length 2."""
    L, tx, ty, xi, eta = _frame(x, a, b)
    ra2, rb2, la, lb, theta = _logs(L, xi, eta)
    ra2 = np.maximum(ra2, _TINY)
    rb2 = np.maximum(rb2, _TINY)
    i0 = -theta
    d0_xi = eta / rb2 - eta / ra2
    d0_eta = (L - xi) / rb2 + xi / ra2
    d1_xi = eta * d0_eta + i0 + xi * d0_xi
    d1_eta = -0.5 * (lb - la) - eta * eta / rb2 + eta * eta / ra2 + xi * d0_eta
    g0 = np.stack([d0_xi * tx + d0_eta * ty, d0_xi * ty - d0_eta * tx], axis=-1)
    g1 = np.stack([d1_xi * tx + d1_eta * ty, d1_xi * ty - d1_eta * tx], axis=-1)
    return g0, g1


def _reduce_rows(vals, owner, nrows):
    out = np.zeros((nrows, vals.shape[1]))
    np.add.at(out, owner, vals)
    return out


def slp_galerkin(xq, wq, owner, nrows, a, b):
    """``out[i, j] = sum_{q: owner[q]=i} wq[q] F(xq[q]; a_j, b_j)``."""
    out = np.zeros((nrows, len(a)))
    for s in range(0, len(xq), _CHUNK):
        sl = slice(s, s + _CHUNK)
        vals = slp_value(xq[sl, None, :], a[None], b[None]) * wq[sl, None]
        out += _reduce_rows(vals, owner[sl], nrows)
    return out


def dlp_galerkin(xq, wq, owner, nrows, a, b):
    """Weighted sums of ``I0 - I1/L`` and ``I1/L`` per row, segment ``owner`` skipped.

    Returns ``(k_start, k_end)``: the contributions of the hat functions
    at the start and end node of each segment.
    """
    L = np.linalg.norm(b - a, axis=1)
    k0 = np.zeros((nrows, len(a)))
    k1 = np.zeros((nrows, len(a)))
    cols = np.arange(len(a))
    for s in range(0, len(xq), _CHUNK):
        sl = slice(s, s + _CHUNK)
        i0, i1 = dlp_value(xq[sl, None, :], a[None], b[None])
        keep = (cols[None, :] != owner[sl, None]) * wq[sl, None]
        i1 = i1 / L[None, :]
        k0 += _reduce_rows((i0 - i1) * keep, owner[sl], nrows)
        k1 += _reduce_rows(i1 * keep, owner[sl], nrows)
    return k0, k1


def slp_grad_apply(x, own, a, b, dens):
    """``sum_j dens[j] grad F(x_k; a_j, b_j)`` for every point ``x_k``."""
    out = np.zeros((len(x), 2))
    cols = np.arange(len(a))
    for s in range(0, len(x), _CHUNK):
        sl = slice(s, s + _CHUNK)
        is_own = cols[None, :] == own[sl, None]
        g = slp_gradient(x[sl, None, :], a[None], b[None], is_own)
        out[sl] = np.einsum("kjd,j->kd", g, dens)
    return out


def dlp_grad_apply(x, own, a, b, d_start, d_end):
    """Gradient of the double layer with linear density, own segment skipped.

    The density on segment ``j`` runs linearly from ``d_start[j]`` to
    ``d_end[j]``.
    """
    L = np.linalg.norm(b - a, axis=1)
    out = np.zeros((len(x), 2))
    cols = np.arange(len(a))
    c1 = (d_end - d_start) / L
    for s in range(0, len(x), _CHUNK):
        sl = slice(s, s + _CHUNK)
        g0, g1 = dlp_gradient(x[sl, None, :], a[None], b[None])
        keep = (cols[None, :] != own[sl, None]).astype(float)
        g = g0 * (keep * d_start[None, :])[..., None] + g1 * (keep * c1[None, :])[..., None]
        out[sl] = g.sum(axis=1)
    return out
