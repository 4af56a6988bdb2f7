import math

import numpy as np
import pytest
from scipy import stats

from nmmt.ar1 import (
    Ar1TrueParams,
    SpikeSlabPrior,
    beta_hyperparams_for_mode,
    form_groups,
    gen_covariates,
    gen_data,
    log_likelihood_ratio,
    map_hypotheses,
    posterior_predictive,
    posterior_sample,
    refit_posterior,
    refit_selected,
    solve_ig_hyperparams,
    true_decision,
)
from nmmt.core import DecisionConfig

TEST_PRIOR = SpikeSlabPrior(tau=2.0, v_spike=0.01, a1=2.0, b1=4.0, a2=3.0, b2=4.0)


def small_params(m=4, rho0=-0.5, signals=(0, 3), value=1.0, lam=None):
    beta0 = np.zeros(m)
    beta0[list(signals)] = value
    return Ar1TrueParams(
        rho0=rho0, beta0=beta0, sigma0_sq=1.0, Lambda=np.eye(m) if lam is None else lam
    )


class TestHyperparameterSolvers:
    def test_ig_mode_and_variance(self):
        a, b = solve_ig_hyperparams(1.0, 100.0)
        assert b / (a + 1.0) == pytest.approx(1.0, rel=1e-9)
        assert b * b / ((a - 1.0) ** 2 * (a - 2.0)) == pytest.approx(100.0, rel=1e-6)

    def test_beta_mode(self):
        a1, b1 = beta_hyperparams_for_mode(0.1)
        assert (a1 - 1.0) / (a1 + b1 - 2.0) == pytest.approx(0.1)
        assert (a1, b1) == (2.0, 10.0)

    def test_default_prior_uses_solved_values(self):
        prior = SpikeSlabPrior()
        assert prior.b2 / (prior.a2 + 1.0) == pytest.approx(1.0, rel=1e-9)


class TestGenerators:
    def test_identity_lambda_covariance(self):
        Z = gen_covariates(20_000, np.eye(3), 0)
        cov = np.cov(Z.T)
        assert np.allclose(cov, np.eye(3), atol=0.05)

    def test_correlated_lambda_covariance(self):
        lam = np.array([[1.0, 0.5], [0.5, 1.0]])
        Z = gen_covariates(10_000, lam, 1)
        assert abs(np.cov(Z.T)[0, 1] - 0.5) < 0.05

    def test_covariates_reproducible(self):
        lam = np.eye(2)
        assert np.array_equal(gen_covariates(50, lam, 7), gen_covariates(50, lam, 7))

    def test_non_pd_lambda_rejected(self):
        with pytest.raises(np.linalg.LinAlgError):
            gen_covariates(10, np.array([[1.0, 2.0], [2.0, 1.0]]), 0)

    def test_white_noise_special_case(self):
        params = Ar1TrueParams(rho0=0.0, beta0=np.zeros(2), sigma0_sq=1.0, Lambda=np.eye(2))
        Z = gen_covariates(20_000, params.Lambda, 2)
        x = gen_data(Z, params, 3)
        assert abs(x.mean()) < 0.03
        assert abs(x.var() - 1.0) < 0.05
        r1 = np.corrcoef(x[1:], x[:-1])[0, 1]
        assert abs(r1) < 0.03

    def test_lag_one_autocorrelation(self):
        params = Ar1TrueParams(rho0=-0.5, beta0=np.zeros(3), sigma0_sq=1.0, Lambda=np.eye(3))
        Z = gen_covariates(5000, params.Lambda, 4)
        x = gen_data(Z, params, 5)
        r1 = np.corrcoef(x[1:], x[:-1])[0, 1]
        assert abs(r1 - (-0.5)) < 0.05

    def test_noise_free_recursion_base(self):
        params = Ar1TrueParams(
            rho0=-0.5, beta0=np.array([1.0, 2.0]), sigma0_sq=1e-12, Lambda=np.eye(2)
        )
        Z = gen_covariates(5, params.Lambda, 6)
        x = gen_data(Z, params, 7)
        assert x[0] == pytest.approx(float(Z[0] @ params.beta0), abs=1e-4)

    def test_dimension_mismatch(self):
        params = small_params(m=4)
        with pytest.raises(ValueError):
            gen_data(np.zeros((10, 3)), params, 0)

    def test_stationary_second_moment(self):
        lam = np.eye(2)
        params = Ar1TrueParams(
            rho0=-0.5, beta0=np.array([0.8, -0.4]), sigma0_sq=1.0, Lambda=lam
        )
        Z = gen_covariates(100_000, lam, 8)
        x = gen_data(Z, params, 9)
        quad = float(params.beta0 @ lam @ params.beta0)
        target = (1.0 + quad) / (1.0 - 0.25)
        assert abs(x @ x / x.size - target) / target < 0.05


class TestHypothesisMapping:
    def test_layout(self):
        hyps = map_hypotheses(3)
        assert hyps.m == 4
        assert not hyps.regions[0].closed_null  # stationarity null is open
        assert hyps.regions[1].closed_null

    def test_rho_inside_region(self):
        hyps = map_hypotheses(1)
        assert not hyps.regions[0].in_alt(0.99)
        assert hyps.regions[0].in_alt(1.0)

    def test_coefficient_boundary(self):
        hyps = map_hypotheses(1)
        assert hyps.regions[1].in_alt(0.31)
        assert not hyps.regions[1].in_alt(0.3)

    def test_true_decision(self):
        params = small_params(m=4, signals=(1,), value=0.9)
        assert true_decision(params).bits == (0, 0, 1, 0, 0)


class TestGroupFormation:
    def test_diagonal_gives_singletons(self):
        gs = form_groups(np.eye(5), 0.95)
        assert gs.all_singletons()

    def test_strong_pair_grouped(self):
        # hand-checked precision matrix: only the (0,1) pair is strongly tied
        lam = np.array([[1.0, 0.8, 0.0], [0.8, 1.0, 0.0], [0.0, 0.0, 1.0]])
        gs = form_groups(lam, 0.5)
        assert gs.groups[1] == (1, 2)  # hypotheses shift by one for rho
        assert gs.groups[2] == (1, 2)
        assert gs.groups[3] == (3,)

    def test_rho_hypothesis_singleton(self):
        gs = form_groups(np.eye(4), 0.9)
        assert gs.groups[0] == (0,)

    def test_reflexive_and_symmetric(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(6, 6))
        lam = A @ A.T + 6 * np.eye(6)
        gs = form_groups(lam, 0.8)
        for i in range(gs.m):
            assert i in gs.groups[i]
            for j in gs.groups[i]:
                assert i in gs.groups[j]

    def test_raw_mode_switch(self):
        # precision matrix whose largest raw off-diagonal is not the largest
        # partial correlation (big diagonal deflates it after normalization)
        prec = np.array([[100.0, 4.0, 0.0], [4.0, 1.0, 0.8], [0.0, 0.8, 1.0]])
        lam = np.linalg.inv(prec)
        norm = form_groups(lam, 0.9, normalize=True)
        raw = form_groups(lam, 0.9, normalize=False)
        assert norm.groups[2] == (2, 3) and norm.groups[3] == (2, 3)
        assert raw.groups[1] == (1, 2) and raw.groups[2] == (1, 2)
        assert norm.groups != raw.groups


class TestLikelihoodRatio:
    def test_zero_at_truth(self):
        params = small_params()
        Z = gen_covariates(200, params.Lambda, 0)
        x = gen_data(Z, params, 1)
        val = log_likelihood_ratio(params.rho0, params.beta0, params.sigma0_sq, x, Z, params)
        assert val == 0.0

    def test_inflated_variance_decreases_ratio(self):
        params = small_params()
        Z = gen_covariates(200, params.Lambda, 2)
        x = gen_data(Z, params, 3)
        val = log_likelihood_ratio(params.rho0, params.beta0, 4.0, x, Z, params)
        assert val < 0.0

    def test_wrong_coefficients_decrease_ratio(self):
        params = small_params()
        Z = gen_covariates(500, params.Lambda, 4)
        x = gen_data(Z, params, 5)
        beta = params.beta0 + 0.5
        assert log_likelihood_ratio(params.rho0, beta, params.sigma0_sq, x, Z, params) < 0.0


@pytest.fixture(scope="module")
def sweeps():
        m, n, runs = 3, 30, 10_000
        params = small_params(m=m, signals=(0,), value=1.0)
        Z = gen_covariates(n, params.Lambda, 10)
        x = gen_data(Z, params, 11)
        prior = TEST_PRIOR
        init = {"gamma": np.ones(m, dtype=np.int64), "p": 0.3, "sigma_sq": 1.5, "rho": 0.2}
        draws = []
        for r in range(runs):
            post = posterior_sample(
                x, Z, prior, iters=1, burnin=0, thin=1, seed=r, intercept=False, init=init
            )
            draws.append(
                (post.beta[0], post.gamma[0], float(post.p[0]), float(post.sigma_sq[0]), float(post.rho[0]))
            )
        return params, Z, x, prior, init, draws


class TestSamplerConditionals:
    """Each full conditional against its analytic law, other blocks frozen at the init."""

    @staticmethod
    def _ks_ok(values, cdf):
        # goodness of fit with the documented retry policy
        values = np.asarray(values)
        thirds = np.array_split(values, 3)
        trials = [values] + thirds
        for t in trials:
            if stats.kstest(t, cdf).pvalue > 0.001:
                return True
        return False

    def test_coefficient_block(self, sweeps):
        params, Z, x, prior, init, draws = sweeps
        n, m = Z.shape
        lag = np.concatenate([[0.0], x[:-1]])
        tau2 = prior.tau**2
        prec = Z.T @ Z / init["sigma_sq"] + np.eye(m) / tau2
        mean = np.linalg.solve(prec, Z.T @ (x - init["rho"] * lag) / init["sigma_sq"])
        chol = np.linalg.cholesky(prec)
        zs = np.array([chol.T @ (b - mean) for b, *_ in draws])
        for j in range(m):
            assert self._ks_ok(zs[:, j], "norm")

    def test_inclusion_indicators(self, sweeps):
        params, Z, x, prior, init, draws = sweeps
        tau2 = prior.tau**2
        vtau2 = prior.v_spike * tau2
        logit_p = math.log(init["p"]) - math.log(1 - init["p"])
        z_tot, var_tot = 0.0, 0.0
        for b, gam, *_ in draws:
            for j in range(len(b)):
                lo = logit_p + 0.5 * math.log(prior.v_spike) + b[j] ** 2 * 0.5 * (1 / vtau2 - 1 / tau2)
                pr = 1.0 / (1.0 + math.exp(-lo)) if lo >= 0 else math.exp(lo) / (1 + math.exp(lo))
                z_tot += gam[j] - pr
                var_tot += pr * (1 - pr)
        assert abs(z_tot) / math.sqrt(var_tot) < 4.0

    def test_mixing_weight(self, sweeps):
        params, Z, x, prior, init, draws = sweeps
        m = Z.shape[1]
        pit = []
        for b, gam, p, *_ in draws:
            k = int(gam.sum())
            pit.append(stats.beta.cdf(p, prior.a1 + k, prior.b1 + m - k))
        assert self._ks_ok(pit, "uniform")

    def test_innovation_variance(self, sweeps):
        params, Z, x, prior, init, draws = sweeps
        lag = np.concatenate([[0.0], x[:-1]])
        n = x.size
        pit = []
        for b, gam, p, sig2, rho in draws:
            resid = x - init["rho"] * lag - Z @ b  # rho update happens after sigma^2
            ssr = float(resid @ resid)
            g = (prior.b2 + 0.5 * ssr) / sig2
            pit.append(stats.gamma.cdf(g, prior.a2 + 0.5 * n))
        assert self._ks_ok(pit, "uniform")

    def test_autoregressive_coefficient(self, sweeps):
        params, Z, x, prior, init, draws = sweeps
        lag = np.concatenate([[0.0], x[:-1]])
        zs = []
        for b, gam, p, sig2, rho in draws:
            prec = float(lag @ lag) / sig2 + 1.0
            mean = float(lag @ (x - Z @ b)) / sig2 / prec
            zs.append((rho - mean) * math.sqrt(prec))
        assert self._ks_ok(zs, "norm")


class TestJointCalibration:
    def test_successive_conditional_matches_prior(self):
        # Geweke-style: the data-regeneration chain must leave the prior invariant
        m, n = 3, 20
        prior = TEST_PRIOR
        lam = np.eye(m)
        steps, thin = 6000, 3
        rng = np.random.default_rng(99)

        def draw_prior(k):
            p = rng.beta(prior.a1, prior.b1)
            gam = (rng.random(m) < p).astype(np.int64)
            sd = np.where(gam == 1, prior.tau, math.sqrt(prior.v_spike) * prior.tau)
            b = rng.normal(0.0, sd)
            sig2 = prior.b2 / rng.gamma(prior.a2)
            rho = rng.normal()
            return b, gam, p, sig2, rho

        forward = [draw_prior(k) for k in range(4000)]

        state = {"b": np.zeros(m), "gamma": np.ones(m, dtype=np.int64), "p": 0.3,
                 "sigma_sq": 1.0, "rho": 0.0}
        chain = []
        for t in range(steps):
            Z = gen_covariates(n, lam, rng)
            drive = Z @ state["b"] + math.sqrt(state["sigma_sq"]) * rng.standard_normal(n)
            x = np.empty(n)
            prev = 0.0
            for i in range(n):
                prev = state["rho"] * prev + drive[i]
                x[i] = prev
            post = posterior_sample(
                x, Z, prior, iters=1, burnin=0, thin=1, seed=rng.integers(2**63),
                intercept=False, init=state,
            )
            state = {"b": post.beta[0], "gamma": post.gamma[0], "p": float(post.p[0]),
                     "sigma_sq": float(post.sigma_sq[0]), "rho": float(post.rho[0])}
            if t % thin == 0:
                chain.append((state["b"][0], state["sigma_sq"], state["rho"]))

        chain = np.asarray(chain)
        fwd = np.asarray([(b[0], s, r) for b, g, p, s, r in forward])
        for col, name in ((0, "beta1"), (2, "rho")):
            diff = chain[:, col].mean() - fwd[:, col].mean()
            se = math.sqrt(
                _batch_se(chain[:, col]) ** 2 + fwd[:, col].std(ddof=1) ** 2 / fwd.shape[0]
            )
            assert abs(diff) < 3.0 * se, f"{name}: diff {diff:.4f} vs se {se:.4f}"
        # sigma^2 is heavy tailed: compare on the log scale
        diff = np.log(chain[:, 1]).mean() - np.log(fwd[:, 1]).mean()
        se = math.sqrt(
            _batch_se(np.log(chain[:, 1])) ** 2 + np.log(fwd[:, 1]).std(ddof=1) ** 2 / fwd.shape[0]
        )
        assert abs(diff) < 3.0 * se, f"log sigma_sq: diff {diff:.4f} vs se {se:.4f}"


def _batch_se(series, n_batches=40):
    batches = np.array_split(np.asarray(series), n_batches)
    means = np.array([b.mean() for b in batches])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


class TestPosteriorSampleSurface:
    def test_recovers_truth(self):
        params = small_params(m=5, signals=(0, 4), value=1.2)
        Z = gen_covariates(400, params.Lambda, 20)
        x = gen_data(Z, params, 21)
        post = posterior_sample(x, Z, SpikeSlabPrior(), iters=2000, burnin=500, thin=3, seed=22)
        assert np.all(np.abs(post.beta.mean(axis=0) - params.beta0) < 0.2)
        assert abs(post.rho.mean() - params.rho0) < 0.1
        assert abs(post.sigma_sq.mean() - 1.0) < 0.3

    def test_same_seed_identical(self):
        params = small_params()
        Z = gen_covariates(100, params.Lambda, 23)
        x = gen_data(Z, params, 24)
        a = posterior_sample(x, Z, SpikeSlabPrior(), iters=300, burnin=100, thin=2, seed=7)
        b = posterior_sample(x, Z, SpikeSlabPrior(), iters=300, burnin=100, thin=2, seed=7)
        assert np.array_equal(a.beta, b.beta) and np.array_equal(a.rho, b.rho)

    def test_sample_set_layout(self):
        params = small_params()
        Z = gen_covariates(80, params.Lambda, 25)
        x = gen_data(Z, params, 26)
        post = posterior_sample(x, Z, SpikeSlabPrior(), iters=200, burnin=100, thin=1, seed=8)
        ss = post.sample_set()
        assert ss.m == params.m + 1
        assert np.array_equal(ss.coords(0), post.rho)
        assert np.array_equal(ss.coords(2), post.beta[:, 1])

    def test_thin_must_divide(self):
        params = small_params()
        Z = gen_covariates(50, params.Lambda, 27)
        x = gen_data(Z, params, 28)
        with pytest.raises(ValueError):
            posterior_sample(x, Z, SpikeSlabPrior(), iters=301, burnin=100, thin=2)


class TestPredictive:
    def _degenerate_posterior(self, params, size=10_000):
        from nmmt.ar1 import Ar1Posterior

        m = params.m
        return Ar1Posterior(
            beta=np.tile(params.beta0, (size, 1)),
            gamma=np.ones((size, m), dtype=np.int64),
            p=np.full(size, 0.5),
            sigma_sq=np.full(size, params.sigma0_sq),
            rho=np.full(size, params.rho0),
            intercept=None,
            provenance="degenerate",
        )

    def test_degenerate_matches_true_predictive(self):
        from nmmt.harness import ks_distance
        from scipy.special import ndtr

        params = small_params()
        post = self._degenerate_posterior(params)
        z_next = np.array([0.5, -0.2, 0.1, 0.4])
        x_n = 1.3
        mu = params.rho0 * x_n + float(z_next @ params.beta0)
        pred = posterior_predictive(post, z_next, x_n, seed=0)
        ks = ks_distance(pred, lambda q: ndtr((q - mu) / math.sqrt(params.sigma0_sq)))
        assert ks < 0.02

    def test_point_mass_limit(self):
        from nmmt.ar1 import Ar1Posterior

        post = Ar1Posterior(
            beta=np.array([[1.0]]), gamma=np.ones((1, 1), dtype=np.int64), p=np.array([0.5]),
            sigma_sq=np.array([1e-20]), rho=np.array([0.5]), intercept=None, provenance="one",
        )
        pred = posterior_predictive(post, np.array([2.0]), 1.0, seed=1)
        assert pred[0] == pytest.approx(0.5 * 1.0 + 2.0, abs=1e-8)

    def test_end_to_end_predictive_close_to_truth(self):
        # full chain at n=1000, m=8: refit predictive within KS 0.1 of the true law
        from nmmt.harness import ks_distance
        from scipy.special import ndtr

        m = 8
        beta0 = np.zeros(m)
        beta0[[0, 3, 6]] = 1.0
        params = Ar1TrueParams(rho0=-0.5, beta0=beta0, sigma0_sq=1.0, Lambda=np.eye(m))
        Z = gen_covariates(1000, params.Lambda, 60)
        x = gen_data(Z, params, 61)
        d = true_decision(params)
        post = refit_posterior(d, x, Z, tau=10.0, prior=TEST_PRIOR, iters=3000, seed=62)
        z_next = gen_covariates(1, params.Lambda, 63)[0]
        pred = posterior_predictive(post, z_next, float(x[-1]), seed=64)
        mu = params.rho0 * x[-1] + float(z_next @ params.beta0)
        ks = ks_distance(pred, lambda q: ndtr((q - mu) / math.sqrt(params.sigma0_sq)))
        assert ks < 0.1


class TestRefit:
    def test_empty_selection_gives_ar_only_fit(self):
        params = small_params(m=3, signals=(), value=0.0)
        Z = gen_covariates(300, params.Lambda, 30)
        x = gen_data(Z, params, 31)
        d = DecisionConfig((0, 0, 0, 0))
        res = refit_selected(d, x, Z, tau=10.0, prior=TEST_PRIOR, seed=5, intercept=False)
        assert np.array_equal(res.beta_hat, np.zeros(3))
        lag = np.concatenate([[0.0], x[:-1]])
        ols = float(lag @ x) / float(lag @ lag)
        assert res.rho_hat == pytest.approx(ols, abs=0.05)

    def test_true_support_estimates_shrink_with_n(self):
        params = small_params(m=4, signals=(0, 3), value=1.0)
        d = true_decision(params)
        mean_errs = []
        for n in (100, 1600):
            errs = []
            for rep in range(6):
                Z = gen_covariates(n, params.Lambda, 1000 * n + rep)
                x = gen_data(Z, params, 2000 * n + rep)
                res = refit_selected(d, x, Z, tau=10.0, prior=TEST_PRIOR, seed=rep, intercept=False)
                errs.append(
                    math.sqrt(
                        float((res.beta_hat - params.beta0) @ (res.beta_hat - params.beta0))
                        + (res.rho_hat - params.rho0) ** 2
                    )
                )
            mean_errs.append(np.mean(errs))
        assert mean_errs[1] < mean_errs[0]
        assert mean_errs[1] < 0.1

    def test_deterministic(self):
        params = small_params()
        Z = gen_covariates(150, params.Lambda, 50)
        x = gen_data(Z, params, 51)
        d = true_decision(params)
        r1 = refit_selected(d, x, Z, tau=10.0, seed=9)
        r2 = refit_selected(d, x, Z, tau=10.0, seed=9)
        assert np.array_equal(r1.beta_hat, r2.beta_hat) and r1.rho_hat == r2.rho_hat

    def test_refit_posterior_zero_pads_inactive(self):
        params = small_params(m=3, signals=(1,), value=1.0)
        Z = gen_covariates(100, params.Lambda, 52)
        x = gen_data(Z, params, 53)
        d = DecisionConfig((0, 0, 1, 0))
        post = refit_posterior(d, x, Z, tau=10.0, seed=3)
        assert np.all(post.beta[:, 0] == 0.0) and np.all(post.beta[:, 2] == 0.0)
        assert np.any(post.beta[:, 1] != 0.0)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        params = small_params(m=3, signals=(0,), value=1.0)
        Z = gen_covariates(40, params.Lambda, 70)
        x = gen_data(Z, params, 71)
        from nmmt.ar1 import load_dataset, save_dataset

        path = tmp_path / "data.csv"
        save_dataset(path, x, Z)
        header = path.read_text().splitlines()[0]
        assert header == "t,x,z_1,z_2,z_3"
        x2, Z2 = load_dataset(path)
        assert np.array_equal(x, x2)
        assert np.array_equal(Z, Z2)

    def test_dimension_check(self, tmp_path):
        from nmmt.ar1 import save_dataset

        with pytest.raises(ValueError):
            save_dataset(tmp_path / "bad.csv", np.zeros(3), np.zeros((4, 2)))
