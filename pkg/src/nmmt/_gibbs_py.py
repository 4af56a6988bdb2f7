"""Pure-Python Gibbs sweep kernel for the AR(1) spike-and-slab sampler.

Reference implementation of the compiled kernel in ``_gibbs.pyx``.  Both
kernels consume the same pregenerated random streams and issue the identical
BLAS/LAPACK call sequence (dpotrf / dtrsv / dgemv / ddot), so retained draws
are bit-for-bit equal between them; keep any numerical change mirrored in the
.pyx file.

State layout: coefficient vector b of length p (column 0 is the always-active
intercept when ``icpt`` is 1, spike-and-slab columns follow), inclusion vector
gamma over the tested columns, mixing weight p, innovation variance sigma^2,
autoregressive coefficient rho (prior N(0,1), unconstrained).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg.blas import ddot, dgemv, dtrsv
from scipy.linalg.lapack import dpotrf
from scipy.special import betaincinv

KERNEL_NAME = "python"


def run_chain(
    G0,
    Zy,
    ZL,
    yy: float,
    yL: float,
    LL: float,
    icpt: int,
    tau2: float,
    vtau2: float,
    a1: float,
    b1: float,
    b2_ig: float,
    norm_beta,
    unif_gamma,
    u_p,
    gam_sigma,
    norm_rho,
    iters: int,
    burnin: int,
    thin: int,
    init_b=None,
    init_gamma=None,
    init_p: float = -1.0,
    init_sig2: float = 1.0,
    init_rho: float = 0.0,
):
    """Run the systematic scan beta -> gamma -> p -> sigma^2 -> rho.

    Returns (beta_draws, gamma_draws, p_draws, sigma2_draws, rho_draws,
    n_jitter) with one row per retained (post-burnin, thinned) sweep.
    """
    p_dim = G0.shape[0]
    m_test = p_dim - icpt
    n_keep = (iters - burnin) // thin
    G0_f = np.asfortranarray(G0)

    c_log = 0.5 * math.log(vtau2 / tau2)
    c_prec = 0.5 * (1.0 / vtau2 - 1.0 / tau2)
    slab_prec = 1.0 / tau2
    spike_prec = 1.0 / vtau2

    b = np.zeros(p_dim) if init_b is None else np.asarray(init_b, dtype=float).copy()
    gam = (
        np.ones(m_test, dtype=np.int64)
        if init_gamma is None
        else np.asarray(init_gamma, dtype=np.int64).copy()
    )
    p_cur = a1 / (a1 + b1) if init_p < 0.0 else float(init_p)
    logit_p = math.log(p_cur) - math.log(1.0 - p_cur)
    sig2 = float(init_sig2)
    inv_s2 = 1.0 / sig2
    rho = float(init_rho)

    beta_out = np.empty((n_keep, p_dim))
    gamma_out = np.empty((n_keep, m_test), dtype=np.int64)
    p_out = np.empty(n_keep)
    sig2_out = np.empty(n_keep)
    rho_out = np.empty(n_keep)
    n_jitter = 0

    prec_vec = np.empty(p_dim)
    for it in range(iters):
        # --- coefficient block: N(A^-1 r, A^-1), A = G0/sig2 + prior precision
        if icpt:
            prec_vec[0] = slab_prec
        for i in range(m_test):
            prec_vec[icpt + i] = slab_prec if gam[i] else spike_prec
        A = G0 * inv_s2
        for k in range(p_dim):
            A[k, k] = A[k, k] + prec_vec[k]
        chol, n_jitter = _factor_with_jitter(A, n_jitter)
        rhs = (Zy - rho * ZL) * inv_s2
        half = dtrsv(chol, rhs, lower=1, trans=0)
        mu = dtrsv(chol, half, lower=1, trans=1)
        zb = dtrsv(chol, norm_beta[it], lower=1, trans=1)
        b = mu + zb

        # --- inclusion indicators given the drawn coefficients
        for i in range(m_test):
            bi = b[icpt + i]
            logodds = logit_p + c_log + bi * bi * c_prec
            if logodds >= 0.0:
                prob = 1.0 / (1.0 + math.exp(-logodds))
            else:
                e = math.exp(logodds)
                prob = e / (1.0 + e)
            gam[i] = 1 if unif_gamma[it, i] < prob else 0

        # --- mixing weight via the inverse Beta CDF (shape changes per sweep)
        k_on = int(gam.sum())
        p_cur = float(betaincinv(a1 + k_on, b1 + (m_test - k_on), u_p[it]))
        logit_p = math.log(p_cur) - math.log(1.0 - p_cur)

        # --- innovation variance: inverse gamma with constant shape
        Gb = dgemv(1.0, G0_f, b)
        quad = ddot(b, Gb)
        bZy = ddot(b, Zy)
        bZL = ddot(b, ZL)
        ssr = yy + rho * rho * LL + quad - 2.0 * rho * yL - 2.0 * bZy + 2.0 * rho * bZL
        sig2 = (b2_ig + 0.5 * ssr) / gam_sigma[it]
        inv_s2 = 1.0 / sig2

        # --- autoregressive coefficient: conjugate normal, unconstrained
        prec_rho = LL * inv_s2 + 1.0
        mean_rho = (yL - bZL) * inv_s2 / prec_rho
        sd_rho = 1.0 / math.sqrt(prec_rho)
        rho = mean_rho + norm_rho[it] * sd_rho

        if it >= burnin and (it - burnin) % thin == 0:
            k = (it - burnin) // thin
            if k < n_keep:
                beta_out[k] = b
                gamma_out[k] = gam
                p_out[k] = p_cur
                sig2_out[k] = sig2
                rho_out[k] = rho

    return beta_out, gamma_out, p_out, sig2_out, rho_out, n_jitter


def _factor_with_jitter(A, n_jitter: int):
    """Cholesky factor of A, adding exponentially growing diagonal jitter on failure."""
    p_dim = A.shape[0]
    tr = 0.0
    for k in range(p_dim):
        tr += A[k, k]
    jit = 1e-10 * tr / p_dim
    for attempt in range(4):
        chol, info = dpotrf(np.asfortranarray(A), lower=1)
        if info == 0:
            return chol, n_jitter
        if attempt == 3:
            break
        n_jitter += 1
        for k in range(p_dim):
            A[k, k] = A[k, k] + jit
        jit *= 100.0
    raise RuntimeError("conditional covariance not positive definite after 3 jitter retries")
