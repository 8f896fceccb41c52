"""Pure numpy implementations of the hot kernels (fallback backend)."""
import numpy as np


def triangle_geometry(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    with np.errstate(divide="ignore"):
        inv = np.where(det == 0.0, 0.0, 1.0 / np.where(det == 0.0, 1.0, det))
    x, y = p[..., 0], p[..., 1]
    grads = np.empty((len(triangles), 3, 2))
    grads[:, 0, 0] = y[:, 1] - y[:, 2]
    grads[:, 0, 1] = x[:, 2] - x[:, 1]
    grads[:, 1, 0] = y[:, 2] - y[:, 0]
    grads[:, 1, 1] = x[:, 0] - x[:, 2]
    grads[:, 2, 0] = y[:, 0] - y[:, 1]
    grads[:, 2, 1] = x[:, 1] - x[:, 0]
    grads *= inv[:, None, None]
    return grads, 0.5 * det


def nodal_gradients(grads, triangles, field):
    # (grad v)_{al} = sum_i v_{i,a} d_l phi_i
    return np.einsum("tia,til->tal", field[triangles], grads)


def elasticity_blocks(grads, area, lam, mu):
    nt = len(area)
    dot = np.einsum("til,tjl->tij", grads, grads)
    K = np.einsum("t,tia,tjb->tiajb", lam, grads, grads)
    K += np.einsum("t,tib,tja->tiajb", mu, grads, grads)
    eye = np.eye(2)
    K += np.einsum("t,tij,ab->tiajb", mu, dot, eye)
    return (K * area[:, None, None, None, None]).reshape(nt, 6, 6)


def penalty_blocks(grads, area, vgrad, bound, nu):
    nt = len(area)
    s = np.einsum("tal,tal->t", vgrad, vgrad) - bound * bound
    active = s > 0.0
    c = np.where(active, nu * area, 0.0)
    sp = np.where(active, s, 0.0)
    gv = np.einsum("tal,til->tia", vgrad, grads).reshape(nt, 6)
    res = (c * sp)[:, None] * gv
    jac = 2.0 * c[:, None, None] * gv[:, :, None] * gv[:, None, :]
    dot = np.einsum("til,tjl->tij", grads, grads)
    iso = np.einsum("tij,ab->tiajb", dot, np.eye(2)).reshape(nt, 6, 6)
    jac += (c * sp)[:, None, None] * iso
    return res, jac, active


def block_jacobi(indptr, indices, data, dinv, x, rhs, omega, sweeps):
    import scipy.sparse as sp

    n = len(x)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    for _ in range(sweeps):
        r = (rhs - A @ x).reshape(-1, 2)
        x += omega * np.einsum("kab,kb->ka", dinv, r).ravel()
    return x
