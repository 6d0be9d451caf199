"""Hot numerical kernels.

Everything here operates on raw ``float64`` arrays and dispatches on an
integer family code, so the whole call tree (metric evaluation, canonical
spray, geodesic integration, shooting) stays inside compiled code.  With
``FINSLERKIT_DISABLE_NUMBA=1`` the same source runs as plain numpy (see
:mod:`finslerkit._njit`).

Family codes and parameter-vector layout::

    0  euclidean               params: []
    1  minkowski quartic       params: [c]
    2  riemannian bump         params: [amp, width, center_1..center_n]
    3  randers                 params: [kappa, beta_1..beta_n]
    4  hyperbolic half-plane   params: []
    5  round sphere patch      params: [chart_radius]

Families 0, 2, 4 and 5 are conformally flat, ``F = lam(x) * |y|`` with

    lam = 1,
    lam = 1 + amp * exp(-|x - center|^2 / (2 width^2)),
    lam = 1 / x_n,
    lam = 2 / (1 + |x|^2).

The minkowski family is the quartically perturbed norm
``F = ((|y|^2)^2 + c * sum y_i^4) ** (1/4)`` and the randers family is
``F = |y| + b(x) . y`` with ``b_i(x) = beta_i + kappa * sin(x_{(i+1) mod n})``.
"""
from __future__ import annotations

import numpy as np

from ._njit import njit

EUCLIDEAN = 0
MINKOWSKI = 1
BUMP = 2
RANDERS = 3
HYPERBOLIC = 4
SPHERE = 5

# Integrator status codes.
OK = 0
PATCH_EXIT = 1
STIFF = 2
MAX_STEPS = 3

# Shooting status codes.
SHOOT_OK = 0
SHOOT_STALLED = 1
SHOOT_MAX_ITER = 2
SHOOT_BAD_START = 3
SHOOT_SINGULAR = 4


@njit(cache=True)
def in_patch(code, params, x):
    """True when x lies strictly inside the family's chart domain."""
    if code == HYPERBOLIC:
        return x[x.shape[0] - 1] > 0.0
    if code == SPHERE:
        s = 0.0
        for i in range(x.shape[0]):
            s += x[i] * x[i]
        return s < params[0] * params[0]
    return True


@njit(cache=True)
def conformal_factor(code, params, x):
    """Conformal factor lam(x) and its gradient for families 0, 2, 4, 5."""
    n = x.shape[0]
    dlam = np.zeros(n)
    if code == BUMP:
        amp = params[0]
        width = params[1]
        u = 0.0
        for i in range(n):
            d = x[i] - params[2 + i]
            u += d * d
        e = amp * np.exp(-u / (2.0 * width * width))
        lam = 1.0 + e
        for i in range(n):
            dlam[i] = -e * (x[i] - params[2 + i]) / (width * width)
        return lam, dlam
    if code == HYPERBOLIC:
        xn = x[n - 1]
        lam = 1.0 / xn
        dlam[n - 1] = -1.0 / (xn * xn)
        return lam, dlam
    if code == SPHERE:
        s = 0.0
        for i in range(n):
            s += x[i] * x[i]
        lam = 2.0 / (1.0 + s)
        for i in range(n):
            dlam[i] = -lam * lam * x[i]
        return lam, dlam
    return 1.0, dlam


@njit(cache=True)
def randers_drift(params, x):
    """Drift covector b(x) for the randers family."""
    n = x.shape[0]
    kappa = params[0]
    b = np.empty(n)
    for i in range(n):
        b[i] = params[1 + i] + kappa * np.sin(x[(i + 1) % n])
    return b


@njit(cache=True)
def randers_drift_jac(params, x):
    """Jacobian B[i, k] = d b_i / d x_k of the randers drift."""
    n = x.shape[0]
    kappa = params[0]
    B = np.zeros((n, n))
    if kappa != 0.0:
        for i in range(n):
            k = (i + 1) % n
            B[i, k] = kappa * np.cos(x[k])
    return B


@njit(cache=True)
def finsler_F(code, params, x, y):
    """Finsler function F(x, y).  Returns 0 at y = 0, NaN outside the patch."""
    n = y.shape[0]
    if not in_patch(code, params, x):
        return np.nan
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    norm = np.sqrt(yy)
    if code == MINKOWSKI:
        q4 = 0.0
        for i in range(n):
            q4 += y[i] ** 4
        return (yy * yy + params[0] * q4) ** 0.25
    if code == RANDERS:
        b = randers_drift(params, x)
        by = 0.0
        for i in range(n):
            by += b[i] * y[i]
        return norm + by
    lam, _ = conformal_factor(code, params, x)
    return lam * norm


@njit(cache=True)
def fundamental(code, params, x, y):
    """Fundamental tensor g_ij(x, y) = (1/2) d^2 F^2 / dy_i dy_j.

    Closed form per family; undefined at y = 0 (caller must guard).
    """
    n = y.shape[0]
    g = np.zeros((n, n))
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    if code == EUCLIDEAN or code == BUMP or code == HYPERBOLIC or code == SPHERE:
        lam, _ = conformal_factor(code, params, x)
        l2 = lam * lam
        for i in range(n):
            g[i, i] = l2
        return g
    if code == MINKOWSKI:
        c = params[0]
        q4 = 0.0
        for i in range(n):
            q4 += y[i] ** 4
        Q = yy * yy + c * q4
        sq = np.sqrt(Q)
        # Q_i = dQ/dy_i, Q_ij = d2Q/dy_i dy_j; g = Q_ij/(4 sqrt(Q))
        # - Q_i Q_j / (8 Q^{3/2}).
        Qi = np.empty(n)
        for i in range(n):
            Qi[i] = 4.0 * yy * y[i] + 4.0 * c * y[i] ** 3
        for i in range(n):
            for j in range(n):
                Qij = 8.0 * y[i] * y[j]
                if i == j:
                    Qij += 4.0 * yy + 12.0 * c * y[i] * y[i]
                g[i, j] = Qij / (4.0 * sq) - Qi[i] * Qi[j] / (8.0 * Q * sq)
        return g
    # randers
    u = np.sqrt(yy)
    b = randers_drift(params, x)
    by = 0.0
    for i in range(n):
        by += b[i] * y[i]
    F = u + by
    for i in range(n):
        li = y[i] / u
        for j in range(n):
            lj = y[j] / u
            v = (F / u) * (-li * lj) + (li + b[i]) * (lj + b[j])
            if i == j:
                v += F / u
            g[i, j] = v
    return g


@njit(cache=True)
def denergy_dx(code, params, x, y):
    """Gradient of the energy E = F^2 / 2 with respect to x."""
    n = x.shape[0]
    out = np.zeros(n)
    if code == EUCLIDEAN or code == MINKOWSKI:
        return out
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    if code == RANDERS:
        F = finsler_F(code, params, x, y)
        B = randers_drift_jac(params, x)
        for k in range(n):
            s = 0.0
            for j in range(n):
                s += B[j, k] * y[j]
            out[k] = F * s
        return out
    lam, dlam = conformal_factor(code, params, x)
    for i in range(n):
        out[i] = lam * dlam[i] * yy
    return out


@njit(cache=True)
def spray_rhs(code, params, x, y):
    """Right-hand side (1/2)(y^k d^2E/dx^k dy - dE/dx) of the spray system."""
    n = x.shape[0]
    out = np.zeros(n)
    if code == EUCLIDEAN or code == MINKOWSKI:
        return out
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    if code == RANDERS:
        u = np.sqrt(yy)
        b = randers_drift(params, x)
        B = randers_drift_jac(params, x)
        by = 0.0
        for i in range(n):
            by += b[i] * y[i]
        F = u + by
        # c1 = y^T B y, c2_i = (B y)_i, c3_i = (B^T y)_i
        c1 = 0.0
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += B[j, k] * y[k]
            c1 += y[j] * s
        for i in range(n):
            c2 = 0.0
            c3 = 0.0
            for k in range(n):
                c2 += B[i, k] * y[k]
                c3 += B[k, i] * y[k]
            li = y[i] / u
            mixed = (li + b[i]) * c1 + F * c2
            out[i] = 0.5 * (mixed - F * c3)
        return out
    lam, dlam = conformal_factor(code, params, x)
    dly = 0.0
    for i in range(n):
        dly += dlam[i] * y[i]
    for i in range(n):
        out[i] = lam * (dly * y[i] - 0.5 * dlam[i] * yy)
    return out


@njit(cache=True)
def chol_solve(a, b):
    """Solve a @ x = b for symmetric positive definite a via Cholesky.

    Returns (x, ok); ok is False when a pivot is not positive.
    """
    n = a.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0 or not np.isfinite(s):
                    return np.full(n, np.nan), False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    w = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * w[k]
        w[i] = s / L[i, i]
    out = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = w[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]
    return out, True


@njit(cache=True)
def spray_G(code, params, x, y):
    """Canonical spray coefficients G(x, y) solving g G = spray_rhs.

    Returns zeros at y = 0 (the spray's continuous extension) and NaNs when
    the point is outside the patch or the solve fails.
    """
    n = x.shape[0]
    if not in_patch(code, params, x):
        return np.full(n, np.nan)
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    if yy == 0.0:
        return np.zeros(n)
    g = fundamental(code, params, x, y)
    rhs = spray_rhs(code, params, x, y)
    G, ok = chol_solve(g, rhs)
    if not ok:
        return np.full(n, np.nan)
    return G


@njit(cache=True)
def geodesic_rhs(code, params, z, out):
    """State derivative of (x, v) -> (v, -2 G(x, v)).

    Returns (ok, outside); on failure out is left partially written and
    must be ignored.
    """
    n = z.shape[0] // 2
    x = z[:n]
    v = z[n:]
    if not in_patch(code, params, x):
        return False, True
    G = spray_G(code, params, x, v)
    for i in range(n):
        if not np.isfinite(G[i]):
            return False, False
        out[i] = v[i]
        out[n + i] = -2.0 * G[i]
    return True, False


# Dormand-Prince 5(4) tableau, error weights and dense-output matrix.
RK_C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0])
RK_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ],
    ]
)
RK_B = np.array(
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ]
)
RK_E = np.array(
    [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ]
)
RK_P = np.array(
    [
        [
            1.0,
            -8048581381.0 / 2820520608.0,
            8663915743.0 / 2820520608.0,
            -12715105075.0 / 11282082432.0,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200.0 / 32700410799.0,
            -68118460800.0 / 10900136933.0,
            87487479700.0 / 32700410799.0,
        ],
        [
            0.0,
            -1754552775.0 / 470086768.0,
            14199869525.0 / 1410260304.0,
            -10690763975.0 / 1880347072.0,
        ],
        [
            0.0,
            127303824393.0 / 49829197408.0,
            -318862633887.0 / 49829197408.0,
            701980252875.0 / 199316789632.0,
        ],
        [
            0.0,
            -282668133.0 / 205662961.0,
            2019193451.0 / 616988883.0,
            -1453857185.0 / 822651844.0,
        ],
        [
            0.0,
            40617522.0 / 29380423.0,
            -110615467.0 / 29380423.0,
            69997945.0 / 29380423.0,
        ],
    ]
)


@njit(cache=True)
def _error_norm(err, z_old, z_new, rtol, atol):
    m = err.shape[0]
    s = 0.0
    for i in range(m):
        a = abs(z_old[i])
        bmag = abs(z_new[i])
        scale = atol + rtol * (a if a > bmag else bmag)
        e = err[i] / scale
        s += e * e
    return np.sqrt(s / m)


@njit(cache=True)
def _initial_step(code, params, z0, f0, t_span, rtol, atol):
    m = z0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(m):
        scale = atol + rtol * abs(z0[i])
        d0 += (z0[i] / scale) ** 2
        d1 += (f0[i] / scale) ** 2
    d0 = np.sqrt(d0 / m)
    d1 = np.sqrt(d1 / m)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    if h0 > t_span:
        h0 = t_span
    z1 = np.empty(m)
    f1 = np.empty(m)
    for i in range(m):
        z1[i] = z0[i] + h0 * f0[i]
    ok, _ = geodesic_rhs(code, params, z1, f1)
    if not ok:
        return min(h0 * 1e-2, t_span)
    d2 = 0.0
    for i in range(m):
        scale = atol + rtol * abs(z0[i])
        d2 += ((f1[i] - f0[i]) / scale) ** 2
    d2 = np.sqrt(d2 / m) / h0
    dm = d1 if d1 > d2 else d2
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    h = min(100.0 * h0, h1)
    if h > t_span:
        h = t_span
    return max(h, 1e-12)


@njit(cache=True)
def rk45_integrate(code, params, z0, t_end, rtol, atol, max_steps, want_dense):
    """Adaptive Dormand-Prince 5(4) for the geodesic system from t=0 to t_end.

    t_end may be negative (backward integration).  Returns

        (status, t_reached, z_final, n_accept, n_reject,
         ts, zs, hs, qs, n_rec)

    where status is OK / PATCH_EXIT / STIFF / MAX_STEPS.  On PATCH_EXIT the
    trajectory is truncated at the last accepted state.  When want_dense,
    ts[:n_rec+1] and zs[:n_rec+1] hold the accepted nodes and (hs[k], qs[k])
    the scaled interpolation coefficients on [ts[k], ts[k+1]]:

        z(ts[k] + theta * hs[k]) = zs[k] + hs[k] * qs[k] @ (theta, theta^2,
                                                            theta^3, theta^4)
    """
    m = z0.shape[0]
    cap = max_steps if want_dense else 1
    ts = np.zeros(cap + 1)
    zs = np.zeros((cap + 1, m))
    hs = np.zeros(cap)
    qs = np.zeros((cap, m, 4))
    z = z0.copy()
    zs[0] = z

    if t_end == 0.0:
        return OK, 0.0, z, 0, 0, ts, zs, hs, qs, 0

    f0 = np.empty(m)
    ok, outside = geodesic_rhs(code, params, z, f0)
    if not ok:
        status = PATCH_EXIT if outside else STIFF
        return status, 0.0, z, 0, 0, ts, zs, hs, qs, 0

    direction = 1.0 if t_end > 0.0 else -1.0
    span = abs(t_end)
    h = _initial_step(code, params, z, f0, span, rtol, atol)

    K = np.empty((7, m))
    K[0] = f0
    t = 0.0
    n_accept = 0
    n_reject = 0
    n_rec = 0
    h_floor = 1e-14 * max(1.0, span)
    z_new = np.empty(m)
    err = np.empty(m)
    stage = np.empty(m)

    for _ in range(max_steps):
        if abs(t - t_end) <= 1e-15 * max(1.0, span):
            return OK, t_end, z, n_accept, n_reject, ts, zs, hs, qs, n_rec
        if h > abs(t_end - t):
            h = abs(t_end - t)
        hd = h * direction

        failed = False
        saw_outside = False
        for s in range(1, 7):
            for i in range(m):
                acc = 0.0
                for j in range(s):
                    acc += RK_A[s, j] * K[j, i]
                stage[i] = z[i] + hd * acc
            ok, outside = geodesic_rhs(code, params, stage, K[s])
            if not ok:
                failed = True
                saw_outside = saw_outside or outside
                break

        if failed:
            n_reject += 1
            h *= 0.5
            if h < h_floor:
                status = PATCH_EXIT if saw_outside else STIFF
                return status, t, z, n_accept, n_reject, ts, zs, hs, qs, n_rec
            continue

        for i in range(m):
            acc = 0.0
            eacc = 0.0
            for j in range(7):
                acc += RK_B[j] * K[j, i]
                eacc += RK_E[j] * K[j, i]
            z_new[i] = z[i] + hd * acc
            err[i] = hd * eacc

        en = _error_norm(err, z, z_new, rtol, atol)
        if en <= 1.0:
            if want_dense and n_rec < cap:
                ts[n_rec] = t
                hs[n_rec] = hd
                for i in range(m):
                    for j in range(4):
                        acc = 0.0
                        for s in range(7):
                            acc += K[s, i] * RK_P[s, j]
                        qs[n_rec, i, j] = acc
                zs[n_rec + 1] = z_new
                ts[n_rec + 1] = t + hd
                n_rec += 1
            t = t + hd
            for i in range(m):
                z[i] = z_new[i]
                K[0, i] = K[6, i]
            n_accept += 1
            if en == 0.0:
                factor = 10.0
            else:
                factor = 0.9 * en ** -0.2
                if factor > 10.0:
                    factor = 10.0
                if factor < 0.2:
                    factor = 0.2
            h *= factor
        else:
            n_reject += 1
            factor = 0.9 * en ** -0.2
            if factor < 0.2:
                factor = 0.2
            h *= factor
            if h < h_floor:
                return STIFF, t, z, n_accept, n_reject, ts, zs, hs, qs, n_rec

    if abs(t - t_end) <= 1e-15 * max(1.0, span):
        return OK, t_end, z, n_accept, n_reject, ts, zs, hs, qs, n_rec
    return MAX_STEPS, t, z, n_accept, n_reject, ts, zs, hs, qs, n_rec


@njit(cache=True)
def exp_final(code, params, p, v, t, rtol, atol, max_steps):
    """Endpoint-only geodesic flow: state (x, v) at time t from (p, v).

    Returns (status, t_reached, x, v_out).
    """
    n = p.shape[0]
    z0 = np.empty(2 * n)
    for i in range(n):
        z0[i] = p[i]
        z0[n + i] = v[i]
    status, t_reached, z, _, _, _, _, _, _, _ = rk45_integrate(
        code, params, z0, t, rtol, atol, max_steps, False
    )
    return status, t_reached, z[:n].copy(), z[n:].copy()


@njit(cache=True)
def _lin_solve(a, b):
    """Gaussian elimination with partial pivoting; returns (x, ok)."""
    n = a.shape[0]
    M = a.copy()
    rhs = b.copy()
    for col in range(n):
        piv = col
        big = abs(M[col, col])
        for r in range(col + 1, n):
            if abs(M[r, col]) > big:
                big = abs(M[r, col])
                piv = r
        if big < 1e-300:
            return np.full(n, np.nan), False
        if piv != col:
            for c in range(n):
                tmp = M[col, c]
                M[col, c] = M[piv, c]
                M[piv, c] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        for r in range(col + 1, n):
            f = M[r, col] / M[col, col]
            for c in range(col, n):
                M[r, c] -= f * M[col, c]
            rhs[r] -= f * rhs[col]
    out = np.empty(n)
    for r in range(n - 1, -1, -1):
        s = rhs[r]
        for c in range(r + 1, n):
            s -= M[r, c] * out[c]
        out[r] = s / M[r, r]
    return out, True


@njit(cache=True)
def _exp_residual(code, params, p, q, v, rtol, atol, max_steps):
    """exp_p(v) - q; returns (residual, ok)."""
    n = p.shape[0]
    status, _, x, _ = exp_final(code, params, p, v, 1.0, rtol, atol, max_steps)
    if status != OK:
        return np.full(n, np.nan), False
    return x - q, True


@njit(cache=True)
def shoot(code, params, p, q, v_init, tol, max_iter, rtol, atol, max_steps):
    """Newton shooting for v with exp_p(v) = q.

    The starting point walks the guess v_init down a deterministic halving
    ladder and keeps the scale with the smallest residual; this tames the
    exponential overshoot of chart-difference guesses in curved families.
    Then full Newton with finite-difference Jacobian and backtracking line
    search.  Returns (v, iterations, residual_norm, status).
    """
    n = p.shape[0]
    v = v_init.copy()
    scale_v = v_init.copy()
    R = np.zeros(n)
    rnorm = np.inf
    found = False
    # Over-long integrations abort early during the walk; scales that deep
    # are never useful starting points.
    walk_steps = max_steps // 25 + 50
    for _ in range(13):
        R_k, ok = _exp_residual(code, params, p, q, scale_v, rtol, atol, walk_steps)
        if ok:
            rn_k = 0.0
            for i in range(n):
                rn_k += R_k[i] * R_k[i]
            rn_k = np.sqrt(rn_k)
            if rn_k < rnorm:
                rnorm = rn_k
                R = R_k
                for i in range(n):
                    v[i] = scale_v[i]
                found = True
            elif found:
                break
        for i in range(n):
            scale_v[i] *= 0.5
    if not found:
        return v, 0, np.inf, SHOOT_BAD_START

    J = np.empty((n, n))
    for it in range(max_iter):
        if rnorm < tol:
            return v, it, rnorm, SHOOT_OK
        # FD Jacobian, central differences with one-sided fallback.
        for j in range(n):
            dh = 1e-7 * (1.0 + abs(v[j]))
            vp = v.copy()
            vm = v.copy()
            vp[j] += dh
            vm[j] -= dh
            Rp, okp = _exp_residual(code, params, p, q, vp, rtol, atol, max_steps)
            Rm, okm = _exp_residual(code, params, p, q, vm, rtol, atol, max_steps)
            if okp and okm:
                for i in range(n):
                    J[i, j] = (Rp[i] - Rm[i]) / (2.0 * dh)
            elif okp:
                for i in range(n):
                    J[i, j] = (Rp[i] - R[i]) / dh
            elif okm:
                for i in range(n):
                    J[i, j] = (R[i] - Rm[i]) / dh
            else:
                return v, it, rnorm, SHOOT_SINGULAR
        step, ok = _lin_solve(J, -R)
        if not ok:
            return v, it, rnorm, SHOOT_SINGULAR

        alpha = 1.0
        improved = False
        for _ in range(30):
            v_try = v.copy()
            for i in range(n):
                v_try[i] += alpha * step[i]
            R_try, ok_try = _exp_residual(
                code, params, p, q, v_try, rtol, atol, max_steps
            )
            if ok_try:
                rn_try = 0.0
                for i in range(n):
                    rn_try += R_try[i] * R_try[i]
                rn_try = np.sqrt(rn_try)
                if rn_try < rnorm * (1.0 - 1e-4 * alpha) or rn_try < tol:
                    v = v_try
                    R = R_try
                    rnorm = rn_try
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            return v, it + 1, rnorm, SHOOT_STALLED
    if rnorm < tol:
        return v, max_iter, rnorm, SHOOT_OK
    return v, max_iter, rnorm, SHOOT_MAX_ITER


@njit(cache=True)
def bench_spray(code, params, X, Y, out):
    """Benchmark loop: spray coefficients for rows of X, Y into out."""
    for k in range(X.shape[0]):
        G = spray_G(code, params, X[k], Y[k])
        for i in range(G.shape[0]):
            out[k, i] = G[i]


@njit(cache=True)
def bench_exp(code, params, P, V, t, rtol, atol, max_steps, out):
    """Benchmark loop: geodesic endpoints for rows of initial conditions."""
    for k in range(P.shape[0]):
        status, _, x, _ = exp_final(
            code, params, P[k], V[k], t, rtol, atol, max_steps
        )
        for i in range(x.shape[0]):
            out[k, i] = x[i] if status == OK else np.nan


@njit(cache=True)
def bench_shoot(code, params, P, Q, tol, max_iter, rtol, atol, max_steps, out):
    """Benchmark loop: shooting solves for rows of endpoint pairs."""
    n = P.shape[1]
    for k in range(P.shape[0]):
        v0 = np.empty(n)
        for i in range(n):
            v0[i] = Q[k, i] - P[k, i]
        v, _, _, status = shoot(
            code, params, P[k], Q[k], v0, tol, max_iter, rtol, atol, max_steps
        )
        for i in range(n):
            out[k, i] = v[i] if status == SHOOT_OK else np.nan
