# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gibbs sweep kernel for the AR(1) spike-and-slab sampler.

Mirror of ``_gibbs_py.run_chain`` with the identical BLAS/LAPACK call
sequence on the same pregenerated random streams; retained draws are
bit-for-bit equal to the pure-Python kernel.  Keep numerical changes in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport ddot, dgemv, dtrsv
from scipy.linalg.cython_lapack cimport dpotrf

from scipy.special import betaincinv

cnp.import_array()

KERNEL_NAME = "compiled"


def run_chain(
    cnp.ndarray[double, ndim=2, mode="c"] G0,
    cnp.ndarray[double, ndim=1, mode="c"] Zy,
    cnp.ndarray[double, ndim=1, mode="c"] ZL,
    double yy,
    double yL,
    double LL,
    int icpt,
    double tau2,
    double vtau2,
    double a1,
    double b1,
    double b2_ig,
    cnp.ndarray[double, ndim=2, mode="c"] norm_beta,
    cnp.ndarray[double, ndim=2, mode="c"] unif_gamma,
    cnp.ndarray[double, ndim=1, mode="c"] u_p,
    cnp.ndarray[double, ndim=1, mode="c"] gam_sigma,
    cnp.ndarray[double, ndim=1, mode="c"] norm_rho,
    int iters,
    int burnin,
    int thin,
    init_b=None,
    init_gamma=None,
    double init_p=-1.0,
    double init_sig2=1.0,
    double init_rho=0.0,
):
    cdef int p_dim = G0.shape[0]
    cdef int m_test = p_dim - icpt
    cdef int n_keep = (iters - burnin) // thin

    cdef double c_log = 0.5 * log(vtau2 / tau2)
    cdef double c_prec = 0.5 * (1.0 / vtau2 - 1.0 / tau2)
    cdef double slab_prec = 1.0 / tau2
    cdef double spike_prec = 1.0 / vtau2

    cdef cnp.ndarray[double, ndim=1, mode="c"] b = (
        np.zeros(p_dim) if init_b is None else np.asarray(init_b, dtype=float).copy()
    )
    cdef cnp.ndarray[long, ndim=1, mode="c"] gam = (
        np.ones(m_test, dtype=np.int64)
        if init_gamma is None
        else np.asarray(init_gamma, dtype=np.int64).copy()
    )
    cdef double p_cur = a1 / (a1 + b1) if init_p < 0.0 else init_p
    cdef double logit_p = log(p_cur) - log(1.0 - p_cur)
    cdef double sig2 = init_sig2
    cdef double inv_s2 = 1.0 / sig2
    cdef double rho = init_rho

    cdef cnp.ndarray[double, ndim=2, mode="c"] beta_out = np.empty((n_keep, p_dim))
    cdef cnp.ndarray[long, ndim=2, mode="c"] gamma_out = np.empty((n_keep, m_test), dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] p_out = np.empty(n_keep)
    cdef cnp.ndarray[double, ndim=1, mode="c"] sig2_out = np.empty(n_keep)
    cdef cnp.ndarray[double, ndim=1, mode="c"] rho_out = np.empty(n_keep)
    cdef int n_jitter = 0

    cdef cnp.ndarray[double, ndim=1, mode="c"] prec_vec = np.empty(p_dim)
    cdef cnp.ndarray[double, ndim=2, mode="c"] A = np.empty((p_dim, p_dim))
    cdef cnp.ndarray[double, ndim=2, mode="c"] chol = np.empty((p_dim, p_dim))
    cdef cnp.ndarray[double, ndim=1, mode="c"] rhs = np.empty(p_dim)
    cdef cnp.ndarray[double, ndim=1, mode="c"] half = np.empty(p_dim)
    cdef cnp.ndarray[double, ndim=1, mode="c"] mu = np.empty(p_dim)
    cdef cnp.ndarray[double, ndim=1, mode="c"] zb = np.empty(p_dim)
    cdef cnp.ndarray[double, ndim=1, mode="c"] Gb = np.empty(p_dim)

    cdef double *a_ptr = &A[0, 0]
    cdef double *chol_ptr = &chol[0, 0]
    cdef double *g0_ptr = &G0[0, 0]
    cdef double *b_ptr = &b[0]
    cdef double *gb_ptr = &Gb[0]
    cdef double *zy_ptr = &Zy[0]
    cdef double *zl_ptr = &ZL[0]

    cdef char lo_c = b'L'
    cdef char no_c = b'N'
    cdef char tr_c = b'T'
    cdef int one = 1
    cdef double d_one = 1.0
    cdef double d_zero = 0.0
    cdef int info = 0

    cdef int it, i, k, attempt, k_on, keep
    cdef double bi, logodds, prob, e, quad, bZy, bZL, ssr
    cdef double prec_rho, mean_rho, sd_rho, tr, jit

    for it in range(iters):
        # --- coefficient block: N(A^-1 r, A^-1), A = G0/sig2 + prior precision
        if icpt:
            prec_vec[0] = slab_prec
        for i in range(m_test):
            prec_vec[icpt + i] = slab_prec if gam[i] else spike_prec
        for i in range(p_dim):
            for k in range(p_dim):
                A[i, k] = G0[i, k] * inv_s2
        for k in range(p_dim):
            A[k, k] = A[k, k] + prec_vec[k]

        # factor with diagonal jitter on failure; C buffer read column-major
        # by LAPACK is A transposed, equal to A since A is exactly symmetric
        tr = 0.0
        for k in range(p_dim):
            tr += A[k, k]
        jit = 1e-10 * tr / p_dim
        for attempt in range(4):
            memcpy(chol_ptr, a_ptr, p_dim * p_dim * sizeof(double))
            dpotrf(&lo_c, &p_dim, chol_ptr, &p_dim, &info)
            if info == 0:
                break
            if attempt == 3:
                raise RuntimeError(
                    "conditional covariance not positive definite after 3 jitter retries"
                )
            n_jitter += 1
            for k in range(p_dim):
                A[k, k] = A[k, k] + jit
            jit *= 100.0

        for i in range(p_dim):
            rhs[i] = (Zy[i] - rho * ZL[i]) * inv_s2
            half[i] = rhs[i]
        dtrsv(&lo_c, &no_c, &no_c, &p_dim, chol_ptr, &p_dim, &half[0], &one)
        for i in range(p_dim):
            mu[i] = half[i]
        dtrsv(&lo_c, &tr_c, &no_c, &p_dim, chol_ptr, &p_dim, &mu[0], &one)
        for i in range(p_dim):
            zb[i] = norm_beta[it, i]
        dtrsv(&lo_c, &tr_c, &no_c, &p_dim, chol_ptr, &p_dim, &zb[0], &one)
        for i in range(p_dim):
            b[i] = mu[i] + zb[i]

        # --- inclusion indicators given the drawn coefficients
        for i in range(m_test):
            bi = b[icpt + i]
            logodds = logit_p + c_log + bi * bi * c_prec
            if logodds >= 0.0:
                prob = 1.0 / (1.0 + exp(-logodds))
            else:
                e = exp(logodds)
                prob = e / (1.0 + e)
            gam[i] = 1 if unif_gamma[it, i] < prob else 0

        # --- mixing weight via the inverse Beta CDF (shape changes per sweep)
        k_on = 0
        for i in range(m_test):
            k_on += gam[i]
        p_cur = <double> betaincinv(a1 + k_on, b1 + (m_test - k_on), u_p[it])
        logit_p = log(p_cur) - log(1.0 - p_cur)

        # --- innovation variance: inverse gamma with constant shape
        dgemv(&no_c, &p_dim, &p_dim, &d_one, g0_ptr, &p_dim, b_ptr, &one, &d_zero, gb_ptr, &one)
        quad = ddot(&p_dim, b_ptr, &one, gb_ptr, &one)
        bZy = ddot(&p_dim, b_ptr, &one, zy_ptr, &one)
        bZL = ddot(&p_dim, b_ptr, &one, zl_ptr, &one)
        ssr = yy + rho * rho * LL + quad - 2.0 * rho * yL - 2.0 * bZy + 2.0 * rho * bZL
        sig2 = (b2_ig + 0.5 * ssr) / gam_sigma[it]
        inv_s2 = 1.0 / sig2

        # --- autoregressive coefficient: conjugate normal, unconstrained
        prec_rho = LL * inv_s2 + 1.0
        mean_rho = (yL - bZL) * inv_s2 / prec_rho
        sd_rho = 1.0 / sqrt(prec_rho)
        rho = mean_rho + norm_rho[it] * sd_rho

        if it >= burnin and (it - burnin) % thin == 0:
            keep = (it - burnin) // thin
            if keep < n_keep:
                for i in range(p_dim):
                    beta_out[keep, i] = b[i]
                for i in range(m_test):
                    gamma_out[keep, i] = gam[i]
                p_out[keep] = p_cur
                sig2_out[keep] = sig2
                rho_out[keep] = rho

    return beta_out, gamma_out, p_out, sig2_out, rho_out, n_jitter
