# Compiled inner loops for the bound trajectories. Everything here works on floats and
# flat arrays; the typed wrappers live in dynamics.py.
import numpy as np
from numba import njit

_EVENT_TOL = 1e-9


@njit(cache=True)
def bound_accel(v, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim):
    u_lo = v + vw_lo
    u_hi = v + vw_hi
    if upper:
        if u_lo <= 0.0 <= u_hi:
            u2 = 0.0
        else:
            u2 = min(u_lo * u_lo, u_hi * u_hi)
    else:
        u2 = max(u_lo * u_lo, u_hi * u_hi)
    drag = -kd * u2
    phys = a_dec + inc + drag
    if cut_mode == 0:
        amin = phys
    elif cut_mode == 1:
        amin = cut_lim
    elif upper:
        amin = max(phys, cut_lim)
    else:
        amin = min(phys, cut_lim)
    amax = a_acc + inc + drag
    a = a_cmd
    if a < amin:
        a = amin
    elif a > amax:
        a = amax
    return a + w


@njit(cache=True)
def _rk4(s, v, h, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim):
    k1 = bound_accel(v, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    v2 = v + 0.5 * h * k1
    k2 = bound_accel(v2, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    v3 = v + 0.5 * h * k2
    k3 = bound_accel(v3, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    v4 = v + h * k3
    k4 = bound_accel(v4, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    s_new = s + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
    v_new = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s_new, v_new


@njit(cache=True)
def _substep(s, v, h, v_max, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim):
    acc0 = bound_accel(v, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    if v <= 0.0 and acc0 <= 0.0:
        return s, 0.0
    if v >= v_max and acc0 >= 0.0:
        return s + v_max * h, v_max
    s1, v1 = _rk4(s, v, h, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    if 0.0 <= v1 <= v_max:
        return s1, v1
    # clamp event inside the substep: bisect the crossing time
    lo = 0.0
    hi = h
    target = 0.0 if v1 < 0.0 else v_max
    while hi - lo > _EVENT_TOL:
        mid = 0.5 * (lo + hi)
        _, vm = _rk4(s, v, mid, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
        if (vm < 0.0) if target == 0.0 else (vm > v_max):
            hi = mid
        else:
            lo = mid
    tau = 0.5 * (lo + hi)
    s_tau, _ = _rk4(s, v, tau, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, cut_mode, cut_lim)
    if target == 0.0:
        return s_tau, 0.0
    return s_tau + v_max * (h - tau), v_max


@njit(cache=True)
def integrate_bound(s0, v0, inputs, dt_p, n_sub, cap, a_dec, a_acc, v_max, inc, kd,
                    vw_lo, vw_hi, upper, w, cut_lim, cut_time):
    """Grid positions of a bound trajectory.

    Returns (positions, stopped_at, closed); positions has stopped_at + 1 entries when
    closed, otherwise cap + 1 entries.
    """
    out = np.empty(cap + 1)
    n_in = inputs.shape[0]
    h = dt_p / n_sub
    s = s0
    v = v0
    for k in range(cap + 1):
        out[k] = s
        held = k >= n_in - 1
        a_cmd = inputs[n_in - 1] if held else inputs[k]
        if held and v <= 0.0:
            t_now = k * dt_p
            stays = bound_accel(0.0, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, 0, cut_lim) <= 0.0
            if stays and t_now < cut_time:
                stays = bound_accel(0.0, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, 1,
                                    cut_lim) <= 0.0
            if stays:
                return out[:k + 1], k, True
        if k == cap:
            break
        for j in range(n_sub):
            t0 = k * dt_p + j * h
            if cut_time <= t0:
                mode = 0
            elif t0 + h <= cut_time:
                mode = 1
            else:
                mode = 2
            s, v = _substep(s, v, h, v_max, a_cmd, a_dec, a_acc, inc, kd, vw_lo, vw_hi, upper, w, mode, cut_lim)
    return out, cap, False
