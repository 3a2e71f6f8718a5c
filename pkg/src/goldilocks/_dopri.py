"""Dormand-Prince 5(4) kernel for the four-state impulsive system.

Compiled with numba; the public wrapper lives in ``integrator``.
Status codes returned by :func:`integrate_impulsive`:

    0  success
    1  step size underflow
    2  state went negative beyond the clamp band
    3  step budget exhausted
"""

import numpy as np
from numba import njit

OK, STEP_UNDERFLOW, NEGATIVE_STATE, TOO_MANY_STEPS = 0, 1, 2, 3
KIND_SAMPLE, KIND_PRE_JUMP, KIND_POST_JUMP = 0, 1, 2

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# fifth-order minus embedded fourth-order weights
E1, E3, E4, E5, E6, E7 = (
    -71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40,
)

# Shampine's free fourth-order interpolant, rows = stages, cols = theta^1..theta^4
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0
CLAMP_REL = 1e-9


@njit(cache=True)
def rhs(y, params, out):
    beta, delta, p, c, delta_d, ec50, eta_max = (
        params[0], params[1], params[2], params[3], params[4], params[5], params[6],
    )
    d = y[3]
    eta = d / (d + ec50)
    if eta > eta_max:
        eta = eta_max
    infection = beta * (1.0 - eta) * y[0] * y[2]
    out[0] = -infection
    out[1] = infection - delta * y[1]
    out[2] = p * y[1] - c * y[2]
    out[3] = -delta_d * d


@njit(cache=True)
def _rms(x, y, rtol, atol):
    acc = 0.0
    for i in range(x.shape[0]):
        sc = atol + rtol * abs(y[i])
        acc += (x[i] / sc) ** 2
    return np.sqrt(acc / x.shape[0])


@njit(cache=True)
def _initial_step(t, y, f0, params, rtol, atol, span):
    d0 = _rms(y, y, rtol, atol)
    d1 = _rms(f0, y, rtol, atol)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y + h0 * f0
    f1 = np.empty_like(y)
    rhs(y1, params, f1)
    d2 = _rms(f1 - f0, y, rtol, atol) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span)


@njit(cache=True)
def _dense(y, h, K, theta, out):
    q1 = theta
    q2 = q1 * theta
    q3 = q2 * theta
    q4 = q3 * theta
    for i in range(y.shape[0]):
        acc = 0.0
        for s in range(7):
            acc += K[s, i] * (P[s, 0] * q1 + P[s, 1] * q2 + P[s, 2] * q3 + P[s, 3] * q4)
        v = y[i] + h * acc
        out[i] = v if v > 0.0 else 0.0


@njit(cache=True)
def _advance(t, b, y, params, rtol, atol, scale, out_t, out_kind, out_y, j, max_steps, counters):
    """Integrate ``y`` in place from ``t`` to exactly ``b``; emits samples.

    Returns (status, t_reached, next output index).
    """
    n = y.shape[0]
    n_out = out_t.shape[0]
    K = np.empty((7, n))
    y_new = np.empty(n)
    tmp = np.empty(n)
    err = np.empty(n)

    rhs(y, params, K[0])
    h = _initial_step(t, y, K[0], params, rtol, atol, b - t)
    while t < b:
        if counters[0] >= max_steps:
            return TOO_MANY_STEPS, t, j
        last = False
        if t + h >= b or (b - (t + h)) < 1e-12 * max(1.0, abs(b)):
            h = b - t
            last = True
        if h <= 1e-13 * max(1.0, abs(t)):
            return STEP_UNDERFLOW, t, j

        for i in range(n):
            tmp[i] = y[i] + h * A21 * K[0, i]
        rhs(tmp, params, K[1])
        for i in range(n):
            tmp[i] = y[i] + h * (A31 * K[0, i] + A32 * K[1, i])
        rhs(tmp, params, K[2])
        for i in range(n):
            tmp[i] = y[i] + h * (A41 * K[0, i] + A42 * K[1, i] + A43 * K[2, i])
        rhs(tmp, params, K[3])
        for i in range(n):
            tmp[i] = y[i] + h * (A51 * K[0, i] + A52 * K[1, i] + A53 * K[2, i] + A54 * K[3, i])
        rhs(tmp, params, K[4])
        for i in range(n):
            tmp[i] = y[i] + h * (A61 * K[0, i] + A62 * K[1, i] + A63 * K[2, i]
                                 + A64 * K[3, i] + A65 * K[4, i])
        rhs(tmp, params, K[5])
        for i in range(n):
            y_new[i] = y[i] + h * (B1 * K[0, i] + B3 * K[2, i] + B4 * K[3, i]
                                   + B5 * K[4, i] + B6 * K[5, i])
        rhs(y_new, params, K[6])
        for i in range(n):
            err[i] = h * (E1 * K[0, i] + E3 * K[2, i] + E4 * K[3, i]
                          + E5 * K[4, i] + E6 * K[5, i] + E7 * K[6, i])

        acc = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            acc += (err[i] / sc) ** 2
        err_norm = np.sqrt(acc / n)
        counters[0] += 1

        if err_norm > 1.0:
            counters[1] += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            continue

        t_new = b if last else t + h
        for i in range(n):
            if y_new[i] < 0.0:
                if y_new[i] >= -(CLAMP_REL * scale[i] + atol):
                    y_new[i] = 0.0
                else:
                    return NEGATIVE_STATE, t_new, j
            if y_new[i] > scale[i]:
                scale[i] = y_new[i]

        while j < n_out and out_kind[j] == KIND_SAMPLE and out_t[j] <= t_new:
            if out_t[j] >= t_new:
                out_y[j, :] = y_new
            else:
                _dense(y, h, K, (out_t[j] - t) / h, out_y[j])
            j += 1

        for i in range(n):
            y[i] = y_new[i]
            K[0, i] = K[6, i]
        t = t_new
        if err_norm == 0.0:
            factor = MAX_FACTOR
        else:
            factor = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err_norm ** -0.2))
        h *= factor
    return OK, t, j


@njit(cache=True)
def integrate_impulsive(y, t0, t_end, imp_t, imp_u, params, rtol, atol,
                        out_t, out_kind, out_y, max_steps, counters):
    """Integrate from ``t0`` to ``t_end`` with jumps ``D += imp_u[k]`` at ``imp_t[k]``.

    ``y`` is updated in place to the terminal state. ``out_t``/``out_kind``
    list the requested samples in time order; pre- and post-jump rows are
    emitted at impulse instants. Returns (status, time).
    """
    n_out = out_t.shape[0]
    scale = np.empty(y.shape[0])
    for i in range(y.shape[0]):
        scale[i] = abs(y[i])
    j = 0
    while j < n_out and out_kind[j] == KIND_SAMPLE and out_t[j] <= t0:
        out_y[j, :] = y
        j += 1

    t = t0
    for k in range(imp_t.shape[0]):
        tk = imp_t[k]
        if tk > t:
            status, t, j = _advance(t, tk, y, params, rtol, atol, scale,
                                    out_t, out_kind, out_y, j, max_steps, counters)
            if status != OK:
                return status, t
        if j < n_out and out_kind[j] == KIND_PRE_JUMP:
            out_y[j, :] = y
            j += 1
        y[3] += imp_u[k]
        if y[3] > scale[3]:
            scale[3] = y[3]
        if j < n_out and out_kind[j] == KIND_POST_JUMP:
            out_y[j, :] = y
            j += 1
    if t_end > t:
        status, t, j = _advance(t, t_end, y, params, rtol, atol, scale,
                                out_t, out_kind, out_y, j, max_steps, counters)
        if status != OK:
            return status, t
    return OK, t
