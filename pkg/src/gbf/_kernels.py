"""Jitted inner loops: packed network evaluation, closed-loop right-hand side,
fixed-step RK4 and central-difference Jacobians.

Plant and wiring functions are numba-jitted callables passed as arguments:
``plant_rhs(xp, w, y_nn, params) -> dxp`` and ``nn_input(xp, w, params) -> u_nn``.
``kind`` selects the controller: 0 none, 1 FNN, 2 continuous RNN, 3 discrete RNN.
"""

import numpy as np
from numba import njit

NONE, FNN, RNN_CONTINUOUS, RNN_DISCRETE = 0, 1, 2, 3


@njit(cache=True)
def fnn_packed(flat, meta, u):
    v = u
    for l in range(meta.shape[0]):
        n_in = meta[l, 0]
        n_out = meta[l, 1]
        act = meta[l, 2]
        wo = meta[l, 3]
        bo = meta[l, 4]
        out = np.empty(n_out)
        for j in range(n_out):
            s = flat[bo + j]
            for i in range(n_in):
                s += flat[wo + i * n_out + j] * v[i]
            if act == 1:
                s = np.tanh(s)
            elif act == 2:
                s = 1.0 / (1.0 + np.exp(-s))
            out[j] = s
        v = out
    return v


@njit
def no_input(xp, w, params):
    return np.empty(0)


@njit
def closed_loop_rhs(x, w, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2):
    dx = np.zeros(x.shape[0])
    xp = x[:n]
    if kind == FNN:
        y = fnn_packed(f1, m1, nn_input(xp, w, params))
    elif kind == RNN_CONTINUOUS or kind == RNN_DISCRETE:
        xnn = x[n:]
        y = fnn_packed(f2, m2, xnn)
        if kind == RNN_CONTINUOUS:
            u = nn_input(xp, w, params)
            b = xnn.shape[0]
            z = np.empty(b + u.shape[0])
            z[:b] = xnn
            z[b:] = u
            dx[n:] = fnn_packed(f1, m1, z)
    else:
        y = np.empty(0)
    dx[:n] = plant_rhs(xp, w, y, params)
    return dx


@njit
def discrete_update(x, w, nn_input, params, n, f1, m1):
    xnn = x[n:]
    u = nn_input(x[:n], w, params)
    b = xnn.shape[0]
    z = np.empty(b + u.shape[0])
    z[:b] = xnn
    z[b:] = u
    return fnn_packed(f1, m1, z)


@njit
def rk4_simulate(x0, wn, h, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2):
    """Integrate over ``wn.shape[0]`` nodes; returns (states, index of first non-finite state or -1)."""
    N = wn.shape[0]
    X = np.empty((N, x0.shape[0]))
    X[0] = x0
    x = x0.copy()
    for k in range(N - 1):
        w0 = wn[k]
        w1 = wn[k + 1]
        wm = 0.5 * (w0 + w1)
        k1 = closed_loop_rhs(x, w0, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        k2 = closed_loop_rhs(x + 0.5 * h * k1, wm, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        k3 = closed_loop_rhs(x + 0.5 * h * k2, wm, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        k4 = closed_loop_rhs(x + h * k3, w1, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if kind == RNN_DISCRETE:
            xn[n:] = discrete_update(x, w0, nn_input, params, n, f1, m1)
        for i in range(xn.shape[0]):
            if not np.isfinite(xn[i]):
                X[k + 1] = xn
                return X, k + 1
        X[k + 1] = xn
        x = xn
    return X, -1


@njit
def fd_jacobian(x, w, eps0, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2):
    """Central differences with per-coordinate step ``eps0 * (1 + |v_j|)``."""
    d = x.shape[0]
    m = w.shape[0]
    A = np.empty((d, d))
    B = np.empty((d, m))
    for j in range(d):
        e = eps0 * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += e
        xm[j] -= e
        # use the realised step to cancel representation error in x +- e
        A[:, j] = (
            closed_loop_rhs(xp, w, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
            - closed_loop_rhs(xm, w, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        ) / (xp[j] - xm[j])
    for j in range(m):
        e = eps0 * (1.0 + abs(w[j]))
        wp = w.copy()
        wm = w.copy()
        wp[j] += e
        wm[j] -= e
        B[:, j] = (
            closed_loop_rhs(x, wp, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
            - closed_loop_rhs(x, wm, plant_rhs, nn_input, params, n, kind, f1, m1, f2, m2)
        ) / (wp[j] - wm[j])
    return A, B


@njit(cache=True)
def costate_rk4(A_nodes, A_mid, terminal, h):
    """Backward RK4 for ``lam' = -A(t).T lam`` from the last node to the first.

    ``A_nodes[k]`` is A at node k, ``A_mid[k]`` at the midpoint of [t_k, t_{k+1}].
    """
    K = A_nodes.shape[0]
    d = terminal.shape[0]
    lam = np.empty((K, d))
    lam[K - 1] = terminal
    v = terminal.copy()
    for k in range(K - 1, 0, -1):
        # in reversed time s = t* - t: dlam/ds = A(t).T lam
        a0 = A_nodes[k].T
        am = A_mid[k - 1].T
        a1 = A_nodes[k - 1].T
        k1 = a0 @ v
        k2 = am @ (v + 0.5 * h * k1)
        k3 = am @ (v + 0.5 * h * k2)
        k4 = a1 @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        lam[k - 1] = v
    return lam
