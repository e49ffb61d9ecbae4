import numpy as np
import pytest
from scipy.special import expit

from tvcate.dgp import (
    ChainResponseForm,
    DiscreteDGP,
    get_dgp,
    make_d1,
    make_d2,
    make_d3,
    make_linear_chain,
    make_mini_discrete,
    oracle_cate,
    oracle_history_adjustment,
    oracle_propensity,
    oracle_response,
    benchmark_pair,
    simulate_panel,
    derive_rng,
)
from tvcate.panel import HistoryView, InterventionPair, Trajectory, validate_panel


def history(x_vals, a_vals=(), y_vals=(), pad_to=5):
    """HistoryView at t = len(x_vals) inside a horizon-pad_to trajectory."""
    t = len(x_vals)
    X = np.zeros(pad_to)
    X[:t] = x_vals
    A = np.zeros(pad_to, dtype=int)
    A[: t - 1] = a_vals
    Y = np.zeros(pad_to)
    Y[: t - 1] = y_vals
    return HistoryView(Trajectory(X, A, Y), t)


class TestFactories:
    def test_d1_logit_and_propensity_at_origin(self):
        dgp = make_d1()
        logit = dgp.f_a(np.array([0.0]), np.array([0.0]), np.array([0.0]))[0]
        assert logit == pytest.approx(4 * np.cos(0.25))
        assert logit == pytest.approx(3.875649686842579)
        assert expit(logit) == pytest.approx(0.9796805837041865, abs=1e-12)

    def test_d2_logit_at_origin_prev_treated(self):
        dgp = make_d2()
        logit = dgp.f_a(np.array([0.0]), np.array([1.0]), np.array([0.0]))[0]
        assert logit == pytest.approx(-0.25)

    def test_d3_zero_gamma_gives_half_propensity(self):
        dgp = make_d3(0.0)
        rng = np.random.default_rng(0)
        x, a, y = rng.normal(size=(3, 8))
        np.testing.assert_allclose(expit(dgp.f_a(x, a, y)), 0.5)

    def test_d3_negative_gamma_errors(self):
        with pytest.raises(ValueError, match="gamma"):
            make_d3(-1.0)

    def test_default_training_sizes(self):
        assert make_d1().default_n_train == 5000
        assert make_d2().default_n_train == 10000
        assert make_d3(2.0).default_n_train == 5000

    def test_noise_scales_read_as_standard_deviations_with_variance_toggle(self):
        d1 = make_d1()
        assert d1.x_sd == 0.5 and d1.y_sd == 0.3
        from dataclasses import replace
        alt = replace(d1, noise_as_variance=True)
        assert alt.x_sd == pytest.approx(np.sqrt(0.5))
        assert alt.y_sd == pytest.approx(np.sqrt(0.3))


class TestRegistry:
    def test_known_names(self):
        assert get_dgp("d1").name == "d1"
        assert get_dgp("d2").name == "d2"
        assert get_dgp("d3:gamma=4").name == "d3:gamma=4"
        assert get_dgp("mini-discrete").name == "mini-discrete"
        assert get_dgp("linear-chain").name == "linear-chain"

    def test_gamma_is_parsed(self):
        dgp = get_dgp("d3:gamma=8")
        logit = dgp.f_a(np.array([1.0]), np.array([0.0]), np.array([0.0]))[0]
        assert logit == pytest.approx(8 * (0.5 + 0.25))

    def test_unknown_name_errors(self):
        with pytest.raises(ValueError, match="unknown DGP"):
            get_dgp("d9")

    def test_d3_without_gamma_errors(self):
        with pytest.raises(ValueError, match="bad parameters"):
            get_dgp("d3")


class TestSimulatePanel:
    def test_shapes_and_validity(self):
        panel = simulate_panel(make_d1(), 50, seed=0)
        assert panel.n == 50
        assert validate_panel(panel) == []
        assert all(tr.length == 5 for tr in panel.trajectories)

    def test_same_seed_bit_identical(self):
        p1 = simulate_panel(make_d2(), 40, seed=123)
        p2 = simulate_panel(make_d2(), 40, seed=123)
        for t1, t2 in zip(p1.trajectories, p2.trajectories):
            np.testing.assert_array_equal(t1.covariates, t2.covariates)
            np.testing.assert_array_equal(t1.treatments, t2.treatments)
            np.testing.assert_array_equal(t1.outcomes, t2.outcomes)

    def test_different_seed_differs(self):
        p1 = simulate_panel(make_d1(), 10, seed=1)
        p2 = simulate_panel(make_d1(), 10, seed=2)
        assert not np.array_equal(p1.trajectories[0].covariates,
                                  p2.trajectories[0].covariates)

    def test_d1_first_step_treatment_rate_matches_quadrature(self):
        # E[sigmoid(4 cos(0.5 X_1 + 0.25))], X_1 ~ N(0,1), by Gauss-Hermite
        nodes, weights = np.polynomial.hermite.hermgauss(201)
        target = np.sum(weights * expit(4 * np.cos(0.5 * np.sqrt(2) * nodes + 0.25)))
        target /= np.sqrt(np.pi)
        assert target == pytest.approx(0.9558373901636644, abs=1e-12)
        n = 10 ** 5
        panel = simulate_panel(make_d1(), n, seed=7)
        a1 = np.array([tr.treatments[0] for tr in panel.trajectories])
        se = np.sqrt(target * (1 - target) / n)
        assert abs(a1.mean() - target) <= 3 * se


class TestOraclePropensity:
    def test_d1_at_origin(self):
        h = history([0.0])
        assert oracle_propensity(make_d1(), h) == pytest.approx(0.9796805837041865)

    def test_complement_sums_to_one(self):
        h = history([0.4, -0.2], [1], [0.3])
        dgp = make_d2()
        assert oracle_propensity(dgp, h, 1) + oracle_propensity(dgp, h, 0) == pytest.approx(1.0)

    def test_d3_gamma0_half_everywhere(self):
        dgp = make_d3(0.0)
        for hv in (history([0.5]), history([1.0, -2.0], [1], [0.7])):
            assert oracle_propensity(dgp, hv) == 0.5

    def test_strictly_inside_unit_interval(self):
        dgp = make_d1()
        rng = np.random.default_rng(5)
        for _ in range(25):
            h = history([float(rng.normal())])
            p = oracle_propensity(dgp, h)
            assert 0.0 < p < 1.0


class TestOracleResponse:
    def test_terminal_level_is_exact(self):
        # tau=0 at X_t=0, arm 1: cos(0) + 0.5*(1-0.5) = 1.25, no rollout
        est = oracle_response(make_d1(), history([0.0]), (1,))
        assert est.value == pytest.approx(1.25)
        assert est.se == 0.0 and est.n_mc == 0

    def test_mc_matches_closed_form_on_d1(self):
        dgp = make_d1()
        for x, suffix, seed in [(0.3, (0, 1), 1), (-1.2, (1, 0, 1), 2), (0.0, (0, 0), 3)]:
            h = history([x])
            est = oracle_response(dgp, h, suffix, n_mc=200000, seed=seed)
            exact = dgp.response_form.capo(x, len(suffix) - 1, suffix[-1], dgp.x_sd)
            assert abs(est.value - float(exact)) <= 3 * est.se + 1e-12

    def test_mc_matches_closed_form_on_d2(self):
        dgp = make_d2()
        h = history([0.7])
        est = oracle_response(dgp, h, (1, 0), n_mc=400000, seed=4)
        exact = dgp.response_form.capo(0.7, 1, 0, dgp.x_sd)
        assert abs(est.value - float(exact)) <= 3 * est.se + 1e-12

    def test_discrete_mc_matches_enumeration(self):
        mini = make_mini_discrete()
        for x1 in (0.0, 1.0):
            for suffix in [(0, 1), (1, 0), (1, 1)]:
                exact = mini.enumerate_response(suffix, level=0)[x1]
                est = mini.mc_response(x1, suffix, n_mc=40000, seed=9)
                assert abs(est.value - exact) <= 0.01

    def test_suffix_past_horizon_errors(self):
        with pytest.raises(ValueError, match="horizon"):
            oracle_response(make_d1(), history([0.0] * 5, [0] * 4, [0.0] * 4), (1, 1))

    def test_bad_n_mc_errors(self):
        with pytest.raises(ValueError, match="n_mc"):
            oracle_response(make_d1(), history([0.0]), (1, 1), n_mc=0)


class TestOracleCate:
    def test_equal_arms_give_zero(self):
        est = oracle_cate(make_d1(), history([0.2]), InterventionPair((1, 1), (1, 1)),
                          n_mc=500, seed=0)
        assert est.value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("tau", [0, 1, 2])
    def test_d1_benchmark_pairs_give_half(self, tau):
        est = oracle_cate(make_d1(), history([0.4]), benchmark_pair(tau), n_mc=4000, seed=tau)
        assert abs(est.value - 0.5) <= max(3 * est.se, 1e-12)

    def test_d2_tau1_gives_half(self):
        est = oracle_cate(make_d2(), history([-0.3]), benchmark_pair(1), n_mc=4000, seed=5)
        assert abs(est.value - 0.5) <= max(3 * est.se, 1e-12)

    def test_constant_across_random_histories(self):
        dgp = make_d1()
        rng = np.random.default_rng(11)
        for _ in range(20):
            t = int(rng.integers(1, 4))
            h = history(rng.normal(size=t), rng.integers(0, 2, max(t - 1, 0)),
                        rng.normal(size=max(t - 1, 0)))
            est = oracle_cate(dgp, h, benchmark_pair(1), n_mc=2000, seed=int(rng.integers(1e6)))
            assert abs(est.value - 0.5) <= max(3 * est.se, 1e-12)

    def test_common_random_numbers_reduce_variance(self):
        dgp = make_d1()
        h = history([0.1])
        pair = benchmark_pair(1)
        crn, indep = [], []
        for rep in range(30):
            crn.append(oracle_cate(dgp, h, pair, n_mc=200, seed=rep).value)
            ya = oracle_response(dgp, h, pair.a_seq, n_mc=200, seed=1000 + rep).value
            yb = oracle_response(dgp, h, pair.b_seq, n_mc=200, seed=2000 + rep).value
            indep.append(ya - yb)
        assert np.var(crn) < np.var(indep)


class TestOracleHistoryAdjustment:
    def test_matches_independent_quadrature_on_linear_chain(self):
        # E[Y_{t+1} | X_t=x, observed arms (a0,a1)] = x + a1 + E[eps*w]/E[w],
        # w(eps) = P(A_{t+1}=a1 | X_t + eps); frozen via adaptive quadrature
        dgp = make_linear_chain()
        cases = {
            (0.3, (1, 1)): 1.3441430324712134,
            (0.3, (1, 0)): 0.24511247629681576,
            (-0.8, (0, 1)): 0.2548875237031842,
        }
        for (x, path), truth in cases.items():
            h = history([x])
            est = oracle_history_adjustment(dgp, h, path, n_mc=400000, seed=3)
            assert abs(est.value - truth) <= 4 * est.se

    def test_unmatchable_path_errors(self):
        dgp = make_linear_chain(logit_scale=0.0, logit_intercept=30.0)  # A always 1
        with pytest.raises(ValueError, match="no rollouts matched"):
            oracle_history_adjustment(dgp, history([0.0]), (0, 0), n_mc=2000, seed=0)


class TestChainResponseForm:
    def test_d1_terminal_surface(self):
        form = make_d1().response_form
        assert form.capo(0.0, 0, 1, 0.5) == pytest.approx(1.25)
        assert form.capo(0.0, 0, 0, 0.5) == pytest.approx(0.75)

    def test_cate_constant_half_for_benchmark_pairs(self):
        form = make_d1().response_form
        for tau in (0, 1, 2):
            assert form.cate(benchmark_pair(tau)) == pytest.approx(0.5)

    def test_one_step_gaussian_smoothing(self):
        # E[cos(Z)], Z ~ N(0.5*x, 0.25): cos(0.5x) * exp(-0.125)
        form = ChainResponseForm(x_coef=0.5, outcome_kind="cos", omega=1.0)
        val = form.capo(1.0, 1, 1, 0.5)
        assert val == pytest.approx(np.cos(0.5) * np.exp(-0.125) + 0.25)

    def test_linear_chain_form_is_identity_plus_arm(self):
        form = make_linear_chain().response_form
        np.testing.assert_allclose(form.capo(np.array([0.2, -1.0]), 2, 1, 0.5),
                                   [1.2, 0.0])


class TestDiscreteDGP:
    def test_simulation_is_valid_and_deterministic(self):
        mini = make_mini_discrete()
        p1 = mini.simulate(300, seed=1)
        p2 = mini.simulate(300, seed=1)
        assert validate_panel(p1) == []
        for t1, t2 in zip(p1.trajectories, p2.trajectories):
            np.testing.assert_array_equal(t1.covariates, t2.covariates)
        X, A, Y = p1.dense()
        assert set(np.unique(X)) <= {0.0, 1.0}
        np.testing.assert_array_equal(Y[:, 0], 0.0)
        np.testing.assert_allclose(Y[:, 1], mini.y2(X[:, 1, 0], A[:, 1]))

    def test_enumeration_tables(self):
        mini = make_mini_discrete()
        lvl1 = mini.enumerate_response((0, 1), level=1)
        assert lvl1[0.0] == pytest.approx(0.35) and lvl1[1.0] == pytest.approx(0.95)
        lvl0 = mini.enumerate_response((0, 1), level=0)
        # x1=0, a1=0: P(x2=1)=0.3 -> 0.7*0.35 + 0.3*0.95
        assert lvl0[0.0] == pytest.approx(0.7 * 0.35 + 0.3 * 0.95)
        assert lvl0[1.0] == pytest.approx(0.3 * 0.35 + 0.7 * 0.95)


class TestDeriveRng:
    def test_deterministic_and_tag_sensitive(self):
        a = derive_rng(7, "fit", 3).normal(size=4)
        b = derive_rng(7, "fit", 3).normal(size=4)
        c = derive_rng(7, "fit", 4).normal(size=4)
        d = derive_rng(7, "eval", 3).normal(size=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)
