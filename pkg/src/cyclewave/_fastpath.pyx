# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled travelling-frame propagator.

Implements the Dormand-Prince 8(5,3) stepper (the DOP853 scheme of Hairer,
Norsett and Wanner) for the cyclic-competition travelling frame, in plain or
logarithmic coordinates, optionally carrying first-variation columns so a
single pass yields segment monodromies and parameter sensitivities.  The
tableau is supplied by the caller (taken from scipy's published coefficient
tables) so nothing here is hand-transcribed.

The Python-level fallback with identical semantics lives in
cyclewave.integrate; this module only exists to make Newton-in-continuation
loops cheap.
"""

from libc.math cimport exp, fabs, fmax, fmin, isfinite, sqrt
from libc.stdlib cimport free, malloc

import numpy as np

cdef int N_STAGES = 12


cdef void _rhs(int n, double* Bm, double gamma, bint logc, int mcols,
               bint gcol, double* y, double* out, double* xw, double* bx) noexcept nogil:
    """Field + first-variation columns.

    Layout of y: state [X(n), U(n)] followed by mcols columns of length 2n.
    If gcol, the final column also picks up d(field)/d(gamma).
    """
    cdef int j, k, c, base
    cdef double acc, uj
    if logc:
        for k in range(n):
            xw[k] = exp(y[k])
    else:
        for k in range(n):
            xw[k] = y[k]
    for j in range(n):
        acc = 0.0
        for k in range(n):
            acc += Bm[j * n + k] * xw[k]
        bx[j] = acc
    if logc:
        for j in range(n):
            uj = y[n + j]
            out[j] = uj
            out[n + j] = gamma * uj - uj * uj - 1.0 - bx[j]
    else:
        for j in range(n):
            uj = y[n + j]
            out[j] = uj
            out[n + j] = gamma * uj - xw[j] * (1.0 + bx[j])
    for c in range(mcols):
        base = 2 * n + c * 2 * n
        for j in range(n):
            out[base + j] = y[base + n + j]
        if logc:
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += Bm[j * n + k] * xw[k] * y[base + k]
                out[base + n + j] = -acc + (gamma - 2.0 * y[n + j]) * y[base + n + j]
        else:
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += Bm[j * n + k] * y[base + k]
                out[base + n + j] = (
                    -((1.0 + bx[j]) * y[base + j] + xw[j] * acc)
                    + gamma * y[base + n + j]
                )
        if gcol and c == mcols - 1:
            for j in range(n):
                out[base + n + j] += y[n + j]


def integrate(double[:, ::1] B, double gamma, bint log_coords,
              double[::1] y0, double z0, double z1,
              double rtol, double atol,
              double[:, ::1] tab_a, double[::1] tab_b,
              double[::1] tab_e3, double[::1] tab_e5,
              int mcols, bint gamma_col,
              double[::1] sample_z, double[:, ::1] sample_out,
              double max_step, long max_steps):
    """Advance y0 from z0 to z1.  Returns (y_end, status, nsteps, nrhs).

    status: 0 ok, 1 step underflow, 2 step budget exhausted, 3 state not finite.
    sample_z must be sorted along the direction of integration; states at those
    abscissae are written to sample_out (hit exactly by step clipping).
    """
    cdef int n = B.shape[0]
    cdef int dim = y0.shape[0]
    cdef int nsamp = 0 if sample_z is None else sample_z.shape[0]
    cdef double direction = 1.0 if z1 >= z0 else -1.0
    cdef double* work = <double*> malloc(sizeof(double) * (dim * (N_STAGES + 5) + 2 * n))
    if work is NULL:
        raise MemoryError
    cdef double* y = work
    cdef double* ynew = y + dim
    cdef double* ystage = ynew + dim
    cdef double* fnew = ystage + dim
    cdef double* K = fnew + dim          # N_STAGES+1 rows of length dim
    cdef double* xw = K + dim * (N_STAGES + 1)
    cdef double* bx = xw + n
    cdef double* Bp = &B[0, 0]
    cdef int i, j, s
    cdef long nsteps = 0, nrhs = 0
    cdef int status = 0
    cdef int isamp = 0
    cdef double t = z0, h_abs, h, t_new, t_limit
    cdef double err5, err3, e5n, e3n, denom, error_norm, sc, factor
    cdef double d0, d1, d2, h0, h1, acc
    cdef bint rejected = False
    cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 10.0
    cdef double EXP = -1.0 / 8.0
    cdef double min_step = 1e-13 * fmax(fabs(z0), fabs(z1)) + 1e-290

    for i in range(dim):
        y[i] = y0[i]

    out = np.empty(dim)
    cdef double[::1] yview = out

    if t == z1:
        for i in range(dim):
            yview[i] = y[i]
        while isamp < nsamp:
            for i in range(dim):
                sample_out[isamp, i] = y[i]
            isamp += 1
        free(work)
        return np.asarray(out), 0, 0, 0

    while isamp < nsamp and sample_z[isamp] == t:
        for i in range(dim):
            sample_out[isamp, i] = y[i]
        isamp += 1

    with nogil:
        _rhs(n, Bp, gamma, log_coords, mcols, gamma_col, y, K, xw, bx)
        nrhs += 1

        # Hairer-style initial step guess on the state part.
        d0 = 0.0
        d1 = 0.0
        for i in range(dim):
            sc = atol + rtol * fabs(y[i])
            d0 += (y[i] / sc) * (y[i] / sc)
            d1 += (K[i] / sc) * (K[i] / sc)
        d0 = sqrt(d0 / dim)
        d1 = sqrt(d1 / dim)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        h0 = fmin(h0, fabs(z1 - z0))
        for i in range(dim):
            ystage[i] = y[i] + h0 * direction * K[i]
        _rhs(n, Bp, gamma, log_coords, mcols, gamma_col, ystage, fnew, xw, bx)
        nrhs += 1
        d2 = 0.0
        for i in range(dim):
            sc = atol + rtol * fabs(y[i])
            d2 += ((fnew[i] - K[i]) / sc) * ((fnew[i] - K[i]) / sc)
        d2 = sqrt(d2 / dim) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = fmax(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / fmax(d1, d2)) ** (1.0 / 8.0)
        h_abs = fmin(100.0 * h0, h1)
        h_abs = fmin(h_abs, max_step)

        while status == 0:
            if nsteps >= max_steps:
                status = 2
                break
            if h_abs < min_step:
                status = 1
                break
            h_abs = fmin(h_abs, max_step)
            t_limit = z1
            if isamp < nsamp:
                t_limit = sample_z[isamp]
            t_new = t + direction * h_abs
            if direction * (t_new - t_limit) > 0.0:
                t_new = t_limit
            h = t_new - t

            # 12 stages
            for s in range(1, N_STAGES):
                for i in range(dim):
                    acc = 0.0
                    for j in range(s):
                        acc += tab_a[s, j] * K[j * dim + i]
                    ystage[i] = y[i] + h * acc
                _rhs(n, Bp, gamma, log_coords, mcols, gamma_col, ystage,
                     K + s * dim, xw, bx)
            for i in range(dim):
                acc = 0.0
                for j in range(N_STAGES):
                    acc += tab_b[j] * K[j * dim + i]
                ynew[i] = y[i] + h * acc
            _rhs(n, Bp, gamma, log_coords, mcols, gamma_col, ynew, fnew, xw, bx)
            for i in range(dim):
                K[N_STAGES * dim + i] = fnew[i]
            nrhs += N_STAGES
            nsteps += 1

            # 5th/3rd order error blend, RMS-normalised (Hairer's measure)
            e5n = 0.0
            e3n = 0.0
            for i in range(dim):
                sc = atol + rtol * fmax(fabs(y[i]), fabs(ynew[i]))
                err5 = 0.0
                err3 = 0.0
                for j in range(N_STAGES + 1):
                    err5 += tab_e5[j] * K[j * dim + i]
                    err3 += tab_e3[j] * K[j * dim + i]
                err5 /= sc
                err3 /= sc
                e5n += err5 * err5
                e3n += err3 * err3
            if e5n == 0.0 and e3n == 0.0:
                error_norm = 0.0
            else:
                denom = e5n + 0.01 * e3n
                error_norm = fabs(h) * e5n / sqrt(denom * dim)

            if not isfinite(error_norm):
                h_abs *= MIN_FACTOR
                rejected = True
                continue
            if error_norm < 1.0:
                if error_norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = fmin(MAX_FACTOR, SAFETY * error_norm ** EXP)
                if rejected:
                    factor = fmin(1.0, factor)
                rejected = False
                t = t_new
                for i in range(dim):
                    y[i] = ynew[i]
                    K[i] = fnew[i]
                while isamp < nsamp and t == sample_z[isamp]:
                    for i in range(dim):
                        sample_out[isamp, i] = y[i]
                    isamp += 1
                h_abs = fabs(h) * factor
                if t == z1:
                    break
                for i in range(dim):
                    if not isfinite(y[i]):
                        status = 3
                        break
            else:
                h_abs = fabs(h) * fmax(MIN_FACTOR, SAFETY * error_norm ** EXP)
                rejected = True

    for i in range(dim):
        yview[i] = y[i]
    free(work)
    return np.asarray(out), status, nsteps, nrhs
