"""Numerical kernels for the three-level Lindblad engine.

Everything here operates on the column-major vectorization of the density
matrix, vec(rho)[i + 3j] = rho[i, j], for which

    vec(A X B) = (B^T kron A) vec(X).

The master equation then reads d vec(rho)/dt = L vec(rho) with a constant
9x9 Liouvillian L, so one right-hand-side evaluation is a single matrix-
vector product. Kernels are numba-compiled unless CPTKIT_NO_NUMBA is set
(see ``cptkit._accel``).
"""

import numpy as np

from ._accel import maybe_njit

# Dormand-Prince 5(4) tableau; E is the difference between the 5th- and
# 4th-order weights, used for the embedded error estimate. Stage 7 equals
# the new solution point (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
        [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    ]
)
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_E = np.array(
    [
        71 / 57600,
        0.0,
        -71 / 16695,
        71 / 1920,
        -17253 / 339200,
        22 / 525,
        -1 / 40,
    ]
)

# Integrator status codes (returned, mapped to exceptions by callers).
STATUS_OK = 0
STATUS_TRACE_DRIFT = 2
STATUS_STEP_UNDERFLOW = 3
STATUS_MAX_STEPS = 4


@maybe_njit
def hamiltonian_matrix(omega_c, omega_d, delta_c, delta_d):
    """Three-level lambda Hamiltonian (units of rad/s, hbar factored out)."""
    h = np.zeros((3, 3), dtype=np.complex128)
    h[0, 2] = 0.5 * omega_c
    h[2, 0] = 0.5 * omega_c
    h[1, 2] = 0.5 * omega_d
    h[2, 1] = 0.5 * omega_d
    h[1, 1] = delta_c - delta_d
    h[2, 2] = delta_c
    return h


@maybe_njit
def jump_stack(gamma_plus, gamma_minus, gamma_c, gamma_d_opt, gamma_deph):
    """Stack the five jump operators S_ij = sqrt(gamma_ij)|j><i|.

    Order: S12 (1->2, gamma_plus), S21 (2->1, gamma_minus),
    S31 (3->1, gamma_c), S32 (3->2, gamma_d_opt), S22 (dephasing).
    """
    s = np.zeros((5, 3, 3), dtype=np.complex128)
    s[0, 1, 0] = np.sqrt(gamma_plus)
    s[1, 0, 1] = np.sqrt(gamma_minus)
    s[2, 0, 2] = np.sqrt(gamma_c)
    s[3, 1, 2] = np.sqrt(gamma_d_opt)
    s[4, 1, 1] = np.sqrt(gamma_deph)
    return s


@maybe_njit
def _kron3(a, b):
    """Kronecker product of two 3x3 complex matrices (numba-safe)."""
    out = np.empty((9, 9), dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    out[3 * i + k, 3 * j + l] = a[i, j] * b[k, l]
    return out


@maybe_njit
def build_liouvillian(ham, jumps):
    """9x9 Liouvillian for d vec(rho)/dt = L vec(rho), column-major vec.

    L = -i[(I kron H) - (H^T kron I)]
        + sum_k [ conj(S_k) kron S_k
                  - 1/2 (I kron S_k^dag S_k) - 1/2 ((S_k^dag S_k)^T kron I) ]
    """
    eye = np.zeros((3, 3), dtype=np.complex128)
    for i in range(3):
        eye[i, i] = 1.0
    liou = -1j * (_kron3(eye, ham) - _kron3(ham.T.copy(), eye))
    for k in range(jumps.shape[0]):
        s = jumps[k]
        sds = np.dot(np.conj(s.T), s)
        liou += _kron3(np.conj(s), s)
        liou -= 0.5 * _kron3(eye, sds)
        liou -= 0.5 * _kron3(sds.T.copy(), eye)
    return liou


@maybe_njit
def steady_state_solve(liou):
    """Steady state of L x = 0 with trace(x) = 1 via row replacement.

    Trace preservation makes rows 0, 4, 8 of L sum to zero, so row 8 is
    redundant and can be replaced by the trace constraint. Returns the
    9-vector solution and the relative residual max|L x| / max|L| used by
    callers to detect a degenerate (multi-dimensional) null space.
    """
    a = liou.copy()
    for j in range(9):
        a[8, j] = 0.0
    a[8, 0] = 1.0
    a[8, 4] = 1.0
    a[8, 8] = 1.0
    rhs = np.zeros(9, dtype=np.complex128)
    rhs[8] = 1.0
    x = np.linalg.solve(a, rhs)
    res = 0.0
    scale = 0.0
    for i in range(9):
        acc = 0.0 + 0.0j
        for j in range(9):
            acc += liou[i, j] * x[j]
            m = abs(liou[i, j])
            if m > scale:
                scale = m
        if abs(acc) > res:
            res = abs(acc)
    if scale == 0.0:
        scale = 1.0
    return x, res / scale


@maybe_njit
def _error_norm(err, x, y, atol, rtol):
    acc = 0.0
    for i in range(9):
        big = abs(x[i])
        alt = abs(y[i])
        if alt > big:
            big = alt
        sc = atol + rtol * big
        q = abs(err[i]) / sc
        acc += q * q
    return np.sqrt(acc / 9.0)


@maybe_njit
def _initial_step(liou, x0, f0, t_span, atol, rtol):
    """Hairer-style starting step estimate for the linear system."""
    d0 = 0.0
    d1 = 0.0
    for i in range(9):
        sc = atol + rtol * abs(x0[i])
        q0 = abs(x0[i]) / sc
        q1 = abs(f0[i]) / sc
        d0 += q0 * q0
        d1 += q1 * q1
    d0 = np.sqrt(d0 / 9.0)
    d1 = np.sqrt(d1 / 9.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6 * t_span
    else:
        h0 = 0.01 * d0 / d1
    y1 = x0 + h0 * f0
    f1 = np.dot(liou, y1)
    d2 = 0.0
    for i in range(9):
        sc = atol + rtol * abs(x0[i])
        q = abs(f1[i] - f0[i]) / sc
        d2 += q * q
    d2 = np.sqrt(d2 / 9.0) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6 * t_span, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    h = min(100.0 * h0, h1)
    return min(h, t_span)


@maybe_njit
def integrate_liouvillian(liou, x0, t0, checkpoints, rtol, atol, max_steps, trace_tol):
    """Adaptive Dormand-Prince 5(4) integration of x' = L x.

    Lands exactly on each checkpoint time and records the state there.
    The trace (x[0]+x[4]+x[8]) is a linear invariant of L; its drift is
    monitored and integration aborts if it exceeds ``trace_tol``.

    Returns (states, status, n_steps, max_trace_drift).
    """
    n_out = checkpoints.shape[0]
    out = np.empty((n_out, 9), dtype=np.complex128)
    x = x0.copy()
    t = t0
    k = np.empty((7, 9), dtype=np.complex128)
    k[0] = np.dot(liou, x)
    t_end = checkpoints[n_out - 1]
    span = t_end - t0
    h = _initial_step(liou, x, k[0], span, atol, rtol)
    max_drift = 0.0
    n_steps = 0
    i_out = 0
    while i_out < n_out and checkpoints[i_out] <= t:
        out[i_out] = x
        i_out += 1
    rejected = False
    while i_out < n_out:
        t_target = checkpoints[i_out]
        h_full = h
        hit = False
        if t + h >= t_target:
            h = t_target - t
            hit = True
        if h <= 0.0 or t + h == t:
            return out, STATUS_STEP_UNDERFLOW, n_steps, max_drift
        for s in range(1, 6):
            yt = x.copy()
            for j in range(s):
                a = _DP_A[s, j]
                if a != 0.0:
                    yt += (h * a) * k[j]
            k[s] = np.dot(liou, yt)
        y_new = x.copy()
        for j in range(6):
            b = _DP_B[j]
            if b != 0.0:
                y_new += (h * b) * k[j]
        k[6] = np.dot(liou, y_new)
        err = np.zeros(9, dtype=np.complex128)
        for j in range(7):
            e = _DP_E[j]
            if e != 0.0:
                err += (h * e) * k[j]
        enorm = _error_norm(err, x, y_new, atol, rtol)
        n_steps += 1
        if n_steps > max_steps:
            return out, STATUS_MAX_STEPS, n_steps, max_drift
        if not np.isfinite(enorm):
            h = 0.2 * h
            rejected = True
            continue
        if enorm <= 1.0:
            # land exactly on the checkpoint; t + h can round short of it
            t_new = t_target if hit else t + h
            x = y_new
            k[0] = k[6]
            tr = x[0] + x[4] + x[8]
            drift = abs(tr - 1.0)
            if drift > max_drift:
                max_drift = drift
            if drift > trace_tol:
                return out, STATUS_TRACE_DRIFT, n_steps, max_drift
            t = t_new
            if enorm == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * enorm ** -0.2
                if fac > 10.0:
                    fac = 10.0
                elif fac < 0.2:
                    fac = 0.2
            if rejected and fac > 1.0:
                fac = 1.0
            rejected = False
            h = max(h, h_full) * fac
            while i_out < n_out and t >= checkpoints[i_out]:
                out[i_out] = x
                i_out += 1
        else:
            fac = 0.9 * enorm ** -0.2
            if fac < 0.2:
                fac = 0.2
            h = h * fac
            rejected = True
    return out, STATUS_OK, n_steps, max_drift


@maybe_njit
def cpt_rho33_direct(
    omega_c,
    omega_d,
    gamma_plus,
    gamma_minus,
    gamma_c,
    gamma_d_opt,
    gamma_deph,
    delta_c,
    detunings_rad,
):
    """Steady excited-state population over a D-detuning grid (direct solve).

    This is the hot inner loop of the CPT fit objective: one Liouvillian
    build plus one 9x9 solve per grid point. Returns the rho_33 array and
    the worst relative solve residual across the grid.
    """
    jumps = jump_stack(gamma_plus, gamma_minus, gamma_c, gamma_d_opt, gamma_deph)
    n = detunings_rad.shape[0]
    out = np.empty(n, dtype=np.float64)
    worst = 0.0
    for i in range(n):
        ham = hamiltonian_matrix(omega_c, omega_d, delta_c, detunings_rad[i])
        liou = build_liouvillian(ham, jumps)
        x, res = steady_state_solve(liou)
        if res > worst:
            worst = res
        out[i] = x[8].real
    return out, worst
