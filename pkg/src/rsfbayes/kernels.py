"""Scalar hot loops: the RSF right-hand side and the two time steppers.

Everything here works on flat float arrays so the same source runs under
numba or plain CPython. Parameters travel as

    pv = [mu0, v0, a_coef, b_coef, d_c, k_prime, k_dprime]
    fv = [kind, baseline, amplitude, decay_time, oscillation_time,
          v_before, v_after, step_time]

and every kernel that can fail returns an integer status instead of raising.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import jit

OK = 0
V_OVERFLOW = 1
THETA_NONPOSITIVE = 2
STEP_UNDERFLOW = 3
MAX_STEPS = 4

LITERAL = 0
CONSISTENT = 1

FORCING_SINE = 0
FORCING_STEP = 1

# exp() overflows just above 709
_MAX_EXP_ARG = 700.0


@jit
def load_point(t, fv):
    if fv[0] == FORCING_SINE:
        amp = fv[2]
        decay = fv[3]
        osc = fv[4]
        env = math.exp(-t / decay)
        s = math.sin(t / osc)
        c = math.cos(t / osc)
        return fv[1] + amp * env * s, -amp / decay * env * s + amp / osc * env * c
    if t < fv[7]:
        return fv[5], 0.0
    return fv[6], 0.0


@jit
def slip_rate(mu, theta, pv):
    """Slip rate from friction and state; returns -1.0 on overflow."""
    arg = (mu - pv[0] - pv[3] * math.log(pv[1] * theta / pv[4])) / pv[2]
    if not arg < _MAX_EXP_ARG:
        return -1.0
    return pv[1] * math.exp(arg)


@jit
def rhs(t, y, pv, fv, mode, out):
    mu0 = pv[0]
    v0 = pv[1]
    a = pv[2]
    b = pv[3]
    dc = pv[4]
    kp = pv[5]
    kdp = pv[6]
    theta = y[1]
    if not theta > 0.0:
        return THETA_NONPOSITIVE
    arg = (y[0] - mu0 - b * math.log(v0 * theta / dc)) / a
    if not arg < _MAX_EXP_ARG:
        return V_OVERFLOW
    v = v0 * math.exp(arg)
    vl, dvl = load_point(t, fv)
    dtheta = 1.0 - theta * v / dc

    if mode == LITERAL:
        # order and reuse of provisional values follow the reference listing
        ddtheta = -dtheta * v / dc
        dmu = kp * vl - kp * v
        dv = v / a * (dmu - b / theta * dtheta)
        ddmu = kp * dvl - kp * dv
        da = dv / a * (dmu - b / theta * dtheta) + v / a * (
            ddmu - b / theta * ddtheta + b / theta * dtheta / theta
        )
        dmu = dmu - kdp * dv
        dv = v / a * (dmu - b / theta * dtheta)
        ddmu = ddmu - kdp * da
        da = dv / a * (dmu - b / theta * dtheta) + v / a * (
            ddmu - b / theta * ddtheta + b / theta * dtheta / theta
        )
    else:
        # implicit damping solved exactly, full chain rule for second derivatives
        gain = 1.0 + kdp * v / a
        dv = v / a * (kp * (vl - v) - b / theta * dtheta) / gain
        dmu = kp * (vl - v) - kdp * dv
        ddtheta = -(dtheta * v + theta * dv) / dc
        drive = dmu - b / theta * dtheta
        da = (
            dv / a * drive
            + v / a * (kp * (dvl - dv) - b / theta * ddtheta + b * dtheta * dtheta / (theta * theta))
        ) / gain

    out[0] = dmu
    out[1] = dtheta
    out[2] = dv
    out[3] = da
    return OK


@jit
def _hermite(s, h, y0, f0, y1, f1, out):
    # cubic Hermite on [0, 1] in the scaled coordinate s
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    for i in range(y0.shape[0]):
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]


@jit
def _rms_norm(x, y_ref, atol, rtol):
    acc = 0.0
    for i in range(x.shape[0]):
        sc = atol + rtol * abs(y_ref[i])
        acc += (x[i] / sc) ** 2
    return math.sqrt(acc / x.shape[0])


@jit
def _initial_step(t0, y0, f0, pv, fv, mode, rtol, atol, max_step, work, fwork):
    d0 = _rms_norm(y0, y0, atol, rtol)
    d1 = _rms_norm(f0, y0, atol, rtol)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, max_step)
    for i in range(y0.shape[0]):
        work[i] = y0[i] + h0 * f0[i]
    if rhs(t0 + h0, work, pv, fv, mode, fwork) != OK:
        return h0
    for i in range(y0.shape[0]):
        work[i] = fwork[i] - f0[i]
    d2 = _rms_norm(work, y0, atol, rtol) / h0
    dmax = max(d1, d2)
    if dmax <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dmax) ** 0.2
    return min(100.0 * h0, h1, max_step)


@jit(nogil=True)
def dopri5(y0, t0, t1, t_out, pv, fv, mode, rtol, atol, max_step, max_steps, states, stats):
    """Dormand-Prince 5(4) with PI step control and Hermite dense output.

    ``t_out`` must be sorted and lie in [t0, t1]; row j of ``states`` receives
    the solution at ``t_out[j]``. ``stats`` accumulates [steps, rejected,
    rhs evaluations]. Returns ``(status, t_reached)``.
    """
    n = y0.shape[0]
    y = y0.copy()
    ynew = np.empty(n)
    work = np.empty(n)
    err = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    row = np.empty(n)

    j = 0
    while j < t_out.shape[0] and t_out[j] <= t0:
        states[j, :] = y0
        j += 1

    t = t0
    status = rhs(t, y, pv, fv, mode, k1)
    stats[2] += 1
    if status != OK:
        return status, t
    if t1 <= t0:
        return OK, t

    h = _initial_step(t, y, k1, pv, fv, mode, rtol, atol, max_step, work, k2)
    stats[2] += 1

    safe = 0.9
    beta = 0.04
    expo1 = 0.2 - 0.75 * beta
    fac_min = 0.2
    fac_max = 10.0
    facold = 1e-4
    last_fail = STEP_UNDERFLOW
    nsteps = 0

    while t < t1:
        if nsteps >= max_steps:
            return MAX_STEPS, t
        hmin = 16.0 * 2.220446049250313e-16 * max(abs(t), 1.0)
        if h < hmin:
            return last_fail, t
        if t + h >= t1:
            h = t1 - t
        nsteps += 1

        for i in range(n):
            work[i] = y[i] + h * (0.2 * k1[i])
        st = rhs(t + 0.2 * h, work, pv, fv, mode, k2)
        stage_ok = st == OK
        if stage_ok:
            for i in range(n):
                work[i] = y[i] + h * (3.0 / 40.0 * k1[i] + 9.0 / 40.0 * k2[i])
            st = rhs(t + 0.3 * h, work, pv, fv, mode, k3)
            stage_ok = st == OK
        if stage_ok:
            for i in range(n):
                work[i] = y[i] + h * (44.0 / 45.0 * k1[i] - 56.0 / 15.0 * k2[i] + 32.0 / 9.0 * k3[i])
            st = rhs(t + 0.8 * h, work, pv, fv, mode, k4)
            stage_ok = st == OK
        if stage_ok:
            for i in range(n):
                work[i] = y[i] + h * (
                    19372.0 / 6561.0 * k1[i]
                    - 25360.0 / 2187.0 * k2[i]
                    + 64448.0 / 6561.0 * k3[i]
                    - 212.0 / 729.0 * k4[i]
                )
            st = rhs(t + 8.0 / 9.0 * h, work, pv, fv, mode, k5)
            stage_ok = st == OK
        if stage_ok:
            for i in range(n):
                work[i] = y[i] + h * (
                    9017.0 / 3168.0 * k1[i]
                    - 355.0 / 33.0 * k2[i]
                    + 46732.0 / 5247.0 * k3[i]
                    + 49.0 / 176.0 * k4[i]
                    - 5103.0 / 18656.0 * k5[i]
                )
            st = rhs(t + h, work, pv, fv, mode, k6)
            stage_ok = st == OK
        if stage_ok:
            for i in range(n):
                ynew[i] = y[i] + h * (
                    35.0 / 384.0 * k1[i]
                    + 500.0 / 1113.0 * k3[i]
                    + 125.0 / 192.0 * k4[i]
                    - 2187.0 / 6784.0 * k5[i]
                    + 11.0 / 84.0 * k6[i]
                )
            st = rhs(t + h, ynew, pv, fv, mode, k7)
            stage_ok = st == OK
        stats[2] += 6

        if not stage_ok:
            # a trial stage left the model domain: shrink and retry
            last_fail = st
            stats[1] += 1
            h *= 0.25
            facold = 1e-4
            continue

        for i in range(n):
            err[i] = h * (
                71.0 / 57600.0 * k1[i]
                - 71.0 / 16695.0 * k3[i]
                + 71.0 / 1920.0 * k4[i]
                - 17253.0 / 339200.0 * k5[i]
                + 22.0 / 525.0 * k6[i]
                - 1.0 / 40.0 * k7[i]
            )
            work[i] = max(abs(y[i]), abs(ynew[i]))
        errn = _rms_norm(err, work, atol, rtol)

        fac11 = errn ** expo1
        fac = fac11 / facold ** beta
        fac = max(1.0 / fac_max, min(1.0 / fac_min, fac / safe))
        hnew = h / fac

        if errn <= 1.0:
            facold = max(errn, 1e-4)
            tnew = t + h
            if tnew > t1:
                tnew = t1
            while j < t_out.shape[0] and t_out[j] <= tnew:
                if t_out[j] == tnew:
                    states[j, :] = ynew
                else:
                    _hermite((t_out[j] - t) / h, h, y, k1, ynew, k7, row)
                    states[j, :] = row
                j += 1
            t = tnew
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            stats[0] += 1
            h = min(hnew, max_step)
        else:
            stats[1] += 1
            h = h / min(1.0 / fac_min, fac11 / safe)
            last_fail = STEP_UNDERFLOW

    while j < t_out.shape[0]:
        states[j, :] = y
        j += 1
    return OK, t


@jit(nogil=True)
def rk4(y0, t0, t1, dt, t_out, pv, fv, mode, states, stats):
    """Classical fixed-step RK4 with Hermite dense output.

    The step is ``(t1 - t0) / m`` with ``m`` the smallest step count whose
    step does not exceed ``dt`` (so the segment end is hit exactly).
    """
    n = y0.shape[0]
    y = y0.copy()
    ynew = np.empty(n)
    work = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    fnew = np.empty(n)
    row = np.empty(n)

    j = 0
    while j < t_out.shape[0] and t_out[j] <= t0:
        states[j, :] = y0
        j += 1

    status = rhs(t0, y, pv, fv, mode, k1)
    stats[2] += 1
    if status != OK:
        return status, t0
    if t1 <= t0:
        return OK, t0

    span = t1 - t0
    m = int(math.ceil(span / dt - 1e-9))
    if m < 1:
        m = 1
    h = span / m
    t = t0
    for step in range(m):
        for i in range(n):
            work[i] = y[i] + 0.5 * h * k1[i]
        st = rhs(t + 0.5 * h, work, pv, fv, mode, k2)
        if st != OK:
            return st, t
        for i in range(n):
            work[i] = y[i] + 0.5 * h * k2[i]
        st = rhs(t + 0.5 * h, work, pv, fv, mode, k3)
        if st != OK:
            return st, t
        for i in range(n):
            work[i] = y[i] + h * k3[i]
        st = rhs(t + h, work, pv, fv, mode, k4)
        if st != OK:
            return st, t
        for i in range(n):
            ynew[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        tnew = t0 + (step + 1) * h
        if step == m - 1:
            tnew = t1
        st = rhs(tnew, ynew, pv, fv, mode, fnew)
        stats[2] += 4
        if st != OK:
            return st, t
        while j < t_out.shape[0] and t_out[j] <= tnew:
            if t_out[j] == tnew:
                states[j, :] = ynew
            else:
                _hermite((t_out[j] - t) / (tnew - t), tnew - t, y, k1, ynew, fnew, row)
                states[j, :] = row
            j += 1
        t = tnew
        for i in range(n):
            y[i] = ynew[i]
            k1[i] = fnew[i]
        stats[0] += 1

    while j < t_out.shape[0]:
        states[j, :] = y
        j += 1
    return OK, t
