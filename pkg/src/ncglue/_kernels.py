"""Compiled inner loops: N-centre field, DOP853 stepping and event location.

State layout used throughout: ``[x, y, vx, vy, L]`` where ``L`` accumulates
the Jacobi length ``sqrt(2) * (V - 1) dt``.  With ``nv == 9`` the state is
extended by one tangent vector ``[dx, dy, dvx, dvy]`` of the variational
equation.  Only the first five components enter the error norm.
"""

import numpy as np
import numba as nb
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = 12
A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
B = np.ascontiguousarray(_dop.B)
C = np.ascontiguousarray(_dop.C[:N_STAGES])
E3 = np.ascontiguousarray(_dop.E3)
E5 = np.ascontiguousarray(_dop.E5)

SQRT2 = np.sqrt(2.0)

# propagate() status codes
REACHED_TMAX = 0
EVENT = 1
COLLISION = 2
HILL = 3
MAX_STEPS = 4
ENERGY = 5
STEP_UNDERFLOW = 6


@nb.njit(cache=True)
def potential(x, y, cx, cy, m):
    v = 0.0
    for i in range(m.shape[0]):
        dx = x - cx[i]
        dy = y - cy[i]
        v += m[i] / np.sqrt(dx * dx + dy * dy)
    return v


@nb.njit(cache=True)
def gradient(x, y, cx, cy, m):
    gx = 0.0
    gy = 0.0
    for i in range(m.shape[0]):
        dx = x - cx[i]
        dy = y - cy[i]
        r2 = dx * dx + dy * dy
        r3 = r2 * np.sqrt(r2)
        gx -= m[i] * dx / r3
        gy -= m[i] * dy / r3
    return gx, gy


@nb.njit(cache=True)
def hessian(x, y, cx, cy, m):
    hxx = 0.0
    hxy = 0.0
    hyy = 0.0
    for i in range(m.shape[0]):
        dx = x - cx[i]
        dy = y - cy[i]
        r2 = dx * dx + dy * dy
        r = np.sqrt(r2)
        r3 = r2 * r
        r5 = r3 * r2
        hxx += m[i] * (3.0 * dx * dx / r5 - 1.0 / r3)
        hxy += m[i] * (3.0 * dx * dy / r5)
        hyy += m[i] * (3.0 * dy * dy / r5 - 1.0 / r3)
    return hxx, hxy, hyy


@nb.njit(cache=True)
def min_distance(x, y, cx, cy):
    d = np.inf
    for i in range(cx.shape[0]):
        dx = x - cx[i]
        dy = y - cy[i]
        r = np.sqrt(dx * dx + dy * dy)
        if r < d:
            d = r
    return d


@nb.njit(cache=True)
def deriv(s, out, cx, cy, m, nv):
    x = s[0]
    y = s[1]
    out[0] = s[2]
    out[1] = s[3]
    gx, gy = gradient(x, y, cx, cy, m)
    out[2] = gx
    out[3] = gy
    out[4] = SQRT2 * (potential(x, y, cx, cy, m) - 1.0)
    if nv == 9:
        hxx, hxy, hyy = hessian(x, y, cx, cy, m)
        out[5] = s[7]
        out[6] = s[8]
        out[7] = hxx * s[5] + hxy * s[6]
        out[8] = hxy * s[5] + hyy * s[6]


@nb.njit(cache=True)
def rk_step(s, f0, h, K, tmp, s_new, f_new, cx, cy, m, nv):
    for j in range(nv):
        K[0, j] = f0[j]
    for st in range(1, N_STAGES):
        for j in range(nv):
            acc = 0.0
            for q in range(st):
                acc += A[st, q] * K[q, j]
            tmp[j] = s[j] + h * acc
        deriv(tmp, K[st], cx, cy, m, nv)
    for j in range(nv):
        acc = 0.0
        for q in range(N_STAGES):
            acc += B[q] * K[q, j]
        s_new[j] = s[j] + h * acc
    deriv(s_new, f_new, cx, cy, m, nv)
    for j in range(nv):
        K[N_STAGES, j] = f_new[j]


@nb.njit(cache=True)
def error_norm(K, h, s, s_new, rtol, atol):
    e5 = 0.0
    e3 = 0.0
    for j in range(5):
        sc = atol + max(abs(s[j]), abs(s_new[j])) * rtol
        a5 = 0.0
        a3 = 0.0
        for q in range(N_STAGES + 1):
            a5 += K[q, j] * E5[q]
            a3 += K[q, j] * E3[q]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    denom = e5 + 0.01 * e3
    return abs(h) * e5 / np.sqrt(denom * 5.0)


@nb.njit(cache=True)
def energy_residual(s, cx, cy, m):
    return 0.5 * (s[2] * s[2] + s[3] * s[3]) - potential(s[0], s[1], cx, cy, m) + 1.0


@nb.njit(cache=True)
def advance(s, tau, cx, cy, m, nv):
    """One DOP853 step of size ``tau`` (``tau`` may be split if large)."""
    K = np.empty((N_STAGES + 1, nv))
    tmp = np.empty(nv)
    f0 = np.empty(nv)
    out = np.empty(nv)
    f1 = np.empty(nv)
    deriv(s, f0, cx, cy, m, nv)
    rk_step(s, f0, tau, K, tmp, out, f1, cx, cy, m, nv)
    return out


@nb.njit(cache=True)
def _radial_gap(s, radius):
    return np.sqrt(s[0] * s[0] + s[1] * s[1]) - radius


@nb.njit(cache=True)
def propagate(s0, t_max, cx, cy, m, nv, rtol, atol, etol, radius, direction,
              coll_r, v_min, max_steps, store):
    """Adaptive DOP853 integration with an optional circle-crossing event.

    ``direction`` is +1 for an outward crossing of ``radius``, -1 for inward,
    0 for no event.  Returns ``(status, t, state, ts, states, n)``; the stored
    arrays are filled only when ``store`` is true.
    """
    cap = max_steps + 2 if store else 1
    ts = np.empty(cap)
    states = np.empty((cap, nv))
    s = s0.copy()
    t = 0.0
    n = 0
    if store:
        ts[0] = 0.0
        states[0, :] = s
        n = 1
    K = np.empty((N_STAGES + 1, nv))
    tmp = np.empty(nv)
    f = np.empty(nv)
    s_new = np.empty(nv)
    f_new = np.empty(nv)
    deriv(s, f, cx, cy, m, nv)
    speed = np.sqrt(s[2] * s[2] + s[3] * s[3])
    acc = np.sqrt(f[2] * f[2] + f[3] * f[3])
    h = min(1e-3, 0.01 * max(speed, 1e-3) / max(acc, 1e-12), t_max)
    g_prev = _radial_gap(s, radius) if direction != 0 else 0.0
    steps = 0
    while t < t_max:
        if steps >= max_steps:
            return MAX_STEPS, t, s, ts, states, n
        h = min(h, t_max - t)
        if h < 1e-15 * max(1.0, t):
            return STEP_UNDERFLOW, t, s, ts, states, n
        rk_step(s, f, h, K, tmp, s_new, f_new, cx, cy, m, nv)
        err = error_norm(K, h, s, s_new, rtol, atol)
        e_res = abs(energy_residual(s_new, cx, cy, m))
        if err > 1.0 or e_res > etol:
            fac = 0.2
            if err > 1.0:
                fac = max(0.2, 0.9 * err ** (-1.0 / 8.0))
            h *= fac
            continue
        steps += 1
        if direction != 0:
            g_new = _radial_gap(s_new, radius)
            hit = False
            if direction > 0 and g_prev < 0.0 and g_new >= 0.0:
                hit = True
            if direction < 0 and g_prev > 0.0 and g_new <= 0.0:
                hit = True
            if hit:
                # Illinois regula falsi on single steps from s
                a = 0.0
                b = h
                ga = g_prev
                gb = g_new
                side = 0
                tau = h
                for _ in range(100):
                    tau = (a * gb - b * ga) / (gb - ga)
                    if not (tau > a and tau < b):
                        tau = 0.5 * (a + b)
                    rk_step(s, f, tau, K, tmp, s_new, f_new, cx, cy, m, nv)
                    gt = _radial_gap(s_new, radius)
                    if abs(gt) <= 1e-14 or (b - a) <= 1e-16 * max(1.0, t):
                        break
                    if (gt > 0.0) == (gb > 0.0):
                        b = tau
                        gb = gt
                        if side == 1:
                            ga *= 0.5
                        side = 1
                    else:
                        a = tau
                        ga = gt
                        if side == -1:
                            gb *= 0.5
                        side = -1
                t += tau
                for j in range(nv):
                    s[j] = s_new[j]
                if store:
                    ts[n] = t
                    states[n, :] = s
                    n += 1
                return EVENT, t, s, ts, states, n
            g_prev = g_new
        t += h
        for j in range(nv):
            s[j] = s_new[j]
            f[j] = f_new[j]
        if store:
            ts[n] = t
            states[n, :] = s
            n += 1
        x = s[0]
        y = s[1]
        if coll_r > 0.0 and min_distance(x, y, cx, cy) < coll_r:
            return COLLISION, t, s, ts, states, n
        if potential(x, y, cx, cy, m) <= v_min:
            return HILL, t, s, ts, states, n
        fac = 10.0 if err == 0.0 else min(10.0, max(0.2, 0.9 * err ** (-1.0 / 8.0)))
        h *= fac
    return REACHED_TMAX, t, s, ts, states, n


@nb.njit(cache=True)
def densify(ts, states, cx, cy, m, tol):
    """Insert exact sub-step samples so chords deviate from the path by <= 10*tol."""
    n = ts.shape[0]
    nv = states.shape[1]
    counts = np.empty(n - 1, dtype=np.int64)
    total = 1
    for k in range(n - 1):
        h = ts[k + 1] - ts[k]
        amax = 0.0
        for q in (k, k + 1):
            gx, gy = gradient(states[q, 0], states[q, 1], cx, cy, m)
            amax = max(amax, np.sqrt(gx * gx + gy * gy))
        c = int(np.ceil(h * np.sqrt(amax / (80.0 * tol)))) if amax > 0 else 1
        c = max(c, 1)
        counts[k] = c
        total += c
    out_t = np.empty(total)
    out_s = np.empty((total, nv))
    out_t[0] = ts[0]
    out_s[0, :] = states[0]
    i = 1
    for k in range(n - 1):
        c = counts[k]
        h = ts[k + 1] - ts[k]
        for j in range(1, c):
            tau = h * j / c
            out_t[i] = ts[k] + tau
            out_s[i, :] = advance(states[k], tau, cx, cy, m, nv)
            i += 1
        out_t[i] = ts[k + 1]
        out_s[i, :] = states[k + 1]
        i += 1
    return out_t, out_s
