import numpy as np
import pytest

from oracles import cd_lasso_oracle, finite_difference_grad, ridge_gd_oracle
from zslembed.data import HyperParams
from zslembed.errors import DataError
from zslembed.regressors import (
    MtlModel,
    StlModel,
    gomtl_fit,
    gomtl_objective,
    gomtl_s_rows,
    latent_project,
    load_model,
    mte_fit,
    mte_objective,
    predict,
    ridge_fit,
    ridge_objective,
    rmtl_fit,
    rmtl_objective,
    rmtl_pattern,
    save_model,
    update_combination,
    update_latent_codes,
    update_latent_regressors,
)


def random_problem(d_x, d_z, n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d_x, n)), rng.standard_normal((d_z, n))


class TestRidge:
    def test_identity_design_zero_lambda(self):
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((3, 5))
        model = ridge_fit(np.eye(5), Z, 0.0)
        assert np.allclose(model.W, Z, atol=1e-12)

    def test_zero_targets_give_zero_map(self):
        X, _ = random_problem(4, 2, 10, 1)
        model = ridge_fit(X, np.zeros((2, 10)), 0.5)
        assert np.abs(model.W).max() < 1e-14

    def test_matches_gradient_descent_oracle(self):
        X, Z = random_problem(4, 2, 20, 2)
        model = ridge_fit(X, Z, 0.1)
        oracle = ridge_gd_oracle(X, Z, 0.1)
        assert np.abs(model.W - oracle).max() <= 1e-8

    def test_residual_gradient_vanishes(self):
        X, Z = random_problem(6, 3, 30, 3)
        lam = 0.07
        model = ridge_fit(X, Z, lam)
        grad = 2 * (model.W @ X - Z) @ X.T / 30 + 2 * lam * model.W
        assert np.abs(grad).max() <= 1e-8

    def test_unit_weights_match_unweighted(self):
        X, Z = random_problem(3, 2, 12, 4)
        plain = ridge_fit(X, Z, 0.2)
        weighted = ridge_fit(X, Z, 0.2, weights=np.ones(12))
        assert np.array_equal(plain.W, weighted.W)

    def test_integer_weight_equals_duplication(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            d_x, d_z = int(rng.integers(2, 8)), int(rng.integers(1, 5))
            n = int(rng.integers(5, 30))
            X, Z = rng.standard_normal((d_x, n)), rng.standard_normal((d_z, n))
            i, k = int(rng.integers(n)), int(rng.integers(2, 6))
            w = np.ones(n)
            w[i] = k
            weighted = ridge_fit(X, Z, 0.1, weights=w)
            X_dup = np.hstack([X, np.tile(X[:, [i]], (1, k - 1))])
            Z_dup = np.hstack([Z, np.tile(Z[:, [i]], (1, k - 1))])
            duplicated = ridge_fit(X_dup, Z_dup, 0.1)
            assert np.abs(weighted.W - duplicated.W).max() <= 1e-8

    def test_singular_without_regularisation(self):
        X = np.zeros((4, 3))
        Z = np.zeros((2, 3))
        with pytest.raises(DataError, match="positive lam"):
            ridge_fit(X, Z, 0.0)

    def test_negative_weight_rejected(self):
        X, Z = random_problem(2, 2, 5, 6)
        with pytest.raises(DataError, match="negative"):
            ridge_fit(X, Z, 0.1, weights=[-1, 1, 1, 1, 1])


class TestRmtl:
    def test_pattern_shape(self):
        S = rmtl_pattern(3)
        assert np.array_equal(S, [[1, 1, 0, 0], [1, 0, 1, 0], [1, 0, 0, 1]])

    def test_huge_task_penalty_collapses_to_shared_regressor(self):
        X, Z = random_problem(3, 4, 20, 7)
        hyper = HyperParams(lambda_a=0.05, gamma_task=1e10, latent_t=2)
        model = rmtl_fit(X, Z, hyper)
        assert np.abs(model.A[1:]).max() < 1e-6
        W = model.effective_w()
        assert np.allclose(W, np.tile(W[0], (4, 1)), atol=1e-8)

    def test_huge_shared_penalty_recovers_single_task(self):
        X, Z = random_problem(3, 4, 20, 8)
        hyper = HyperParams(lambda_a=0.05, gamma_shared=1e10, latent_t=2)
        model = rmtl_fit(X, Z, hyper)
        stl = ridge_fit(X, Z, 0.05)
        assert np.abs(model.effective_w() - stl.W).max() < 1e-6

    def test_beats_embedded_single_task_solution(self):
        X, Z = random_problem(3, 2, 10, 1)
        gamma = 0.05
        hyper = HyperParams(lambda_a=gamma, latent_t=2)
        model = rmtl_fit(X, Z, hyper)
        embedded = np.vstack([np.zeros((1, 3)), ridge_fit(X, Z, gamma).W])
        ours = rmtl_objective(model.A, X, Z, gamma, gamma)
        theirs = rmtl_objective(embedded, X, Z, gamma, gamma)
        assert ours <= theirs + 1e-12
        assert model.report.objective_trace[-1] <= model.report.objective_trace[0]

    def test_solution_is_stationary(self):
        X, Z = random_problem(4, 3, 15, 9)
        gamma = 0.1
        model = rmtl_fit(X, Z, HyperParams(lambda_a=gamma, latent_t=2))

        def objective(A):
            return rmtl_objective(A, X, Z, gamma, gamma)

        grad = finite_difference_grad(objective, model.A)
        assert np.abs(grad).max() < 1e-6

    def test_zero_penalty_rejected(self):
        X, Z = random_problem(3, 2, 10, 10)
        with pytest.raises(DataError, match="lambda_a"):
            rmtl_fit(X, Z, HyperParams(lambda_a=0.0, latent_t=2))


class TestGomtl:
    def test_large_sparsity_penalty_kills_predictions(self):
        X, Z = random_problem(3, 4, 20, 11)
        hyper = HyperParams(lambda_s=1e4, lambda_a=0.01, latent_t=2, max_iters=50)
        model = gomtl_fit(X, Z, hyper)
        assert np.abs(model.S).max() < 1e-8
        assert np.abs(predict(model, X)).max() < 1e-8

    def test_exact_stl_embedding_objective_does_not_increase(self):
        X, Z = random_problem(3, 4, 20, 12)
        ridge = ridge_fit(X, Z, 1e-8)
        hyper = HyperParams(
            lambda_ridge=1e-8, lambda_s=0.0, lambda_a=0.0, latent_t=4, max_iters=20
        )
        init = (np.eye(4), ridge.W)
        model = gomtl_fit(X, Z, hyper, init=init)
        start = gomtl_objective(np.eye(4), ridge.W, X, Z, 0.0, 0.0)
        resid = ridge_objective(ridge.W, X, Z, 0.0)
        assert abs(start - resid) < 1e-12
        trace = np.array(model.report.objective_trace)
        assert trace[0] == pytest.approx(resid)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_s_step_matches_coordinate_descent(self):
        X, Z = random_problem(3, 4, 20, 13)
        hyper = HyperParams(lambda_s=0.05, lambda_a=0.01, latent_t=2, max_iters=5)
        model = gomtl_fit(X, Z, hyper)
        S = gomtl_s_rows(model.A, X, Z, 0.05)
        B = (model.A @ X).T
        for t in range(4):
            oracle = cd_lasso_oracle(B, Z[t], 0.05)
            assert np.abs(S[t] - oracle).max() <= 1e-6

    def test_trace_non_increasing_and_convergence_flag(self):
        X, Z = random_problem(4, 3, 25, 14)
        hyper = HyperParams(lambda_s=0.02, lambda_a=0.01, latent_t=2, max_iters=200)
        model = gomtl_fit(X, Z, hyper)
        trace = np.array(model.report.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert model.report.converged

    def test_non_convergence_still_returns_model(self):
        X, Z = random_problem(4, 3, 25, 15)
        hyper = HyperParams(
            lambda_s=0.02, lambda_a=0.01, latent_t=2, max_iters=1, rel_tol=1e-300
        )
        model = gomtl_fit(X, Z, hyper)
        assert not model.report.converged
        assert np.isfinite(model.S).all() and np.isfinite(model.A).all()

    def test_overcomplete_basis_warns(self):
        X, Z = random_problem(3, 2, 10, 16)
        hyper = HyperParams(lambda_s=0.01, lambda_a=0.01, latent_t=5, max_iters=5)
        with pytest.warns(UserWarning, match="over-complete"):
            gomtl_fit(X, Z, hyper)


class TestMte:
    def test_zero_targets_fixed_point(self):
        X, _ = random_problem(4, 3, 12, 17)
        hyper = HyperParams(lambda_s=0.1, lambda_a=0.1, lambda_l=0.1, latent_t=2)
        model, L, report = mte_fit(X, np.zeros((3, 12)), hyper)
        assert np.abs(model.S).max() < 1e-12
        assert np.abs(L).max() < 1e-12
        assert report.objective_trace[-1] == pytest.approx(0.0, abs=1e-20)

    def test_block_updates_are_stationary(self):
        X, Z = random_problem(4, 3, 15, 18)
        hyper = HyperParams(
            lambda_s=0.01, lambda_a=0.01, lambda_l=0.01, latent_t=2, max_iters=3
        )
        model, L, _ = mte_fit(X, Z, hyper)
        n = 15
        S, A = model.S, model.A

        L_new = update_latent_codes(S, A, X, Z, hyper.lambda_l, n)
        grad_l = finite_difference_grad(
            lambda M: mte_objective(S, A, M, X, Z, hyper), L_new
        )
        assert np.abs(grad_l).max() <= 1e-6

        S_new = update_combination(Z, L_new, hyper.lambda_s, n)
        grad_s = finite_difference_grad(
            lambda M: mte_objective(M, A, L_new, X, Z, hyper), S_new
        )
        assert np.abs(grad_s).max() <= 1e-6

        A_new = update_latent_regressors(X, L_new, hyper.lambda_a, n)
        grad_a = finite_difference_grad(
            lambda M: mte_objective(S_new, M, L_new, X, Z, hyper), A_new
        )
        assert np.abs(grad_a).max() <= 1e-6

    def test_trace_non_increasing_and_converges(self):
        X, Z = random_problem(4, 3, 15, 19)
        hyper = HyperParams(
            lambda_s=0.01, lambda_a=0.01, lambda_l=0.01, latent_t=2,
            max_iters=500, rel_tol=1e-8,
        )
        model, _, report = mte_fit(X, Z, hyper)
        trace = np.array(report.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)
        assert report.converged
        assert report.iterations <= 500

    def test_weighted_fit_runs(self):
        X, Z = random_problem(4, 3, 15, 20)
        hyper = HyperParams(latent_t=2)
        w = np.random.default_rng(0).uniform(0.5, 2.0, 15)
        model, L, report = mte_fit(X, Z, hyper, weights=w / w.mean())
        assert np.isfinite(model.effective_w()).all()

    def test_singular_blocks_rejected(self):
        # T > n with no regularisation makes the combination solve singular
        X, Z = random_problem(3, 2, 2, 21)
        hyper = HyperParams(lambda_s=0.0, lambda_a=0.0, lambda_l=0.0, latent_t=3)
        with pytest.warns(UserWarning, match="over-complete"):
            with pytest.raises(DataError, match="positive regularisers"):
                mte_fit(X, Z, hyper)


class TestPredictProject:
    def test_identity_stl(self):
        X, _ = random_problem(3, 3, 7, 22)
        model = StlModel(W=np.eye(3), lam=0.0)
        assert np.array_equal(predict(model, X), X)

    def test_mtl_factorisation_identity(self):
        X, Z = random_problem(3, 2, 9, 23)
        stl = ridge_fit(X, Z, 0.1)
        mtl = MtlModel(
            S=np.eye(2), A=stl.W, variant="gomtl", hyper=HyperParams(latent_t=2)
        )
        assert np.allclose(predict(mtl, X), predict(stl, X), atol=1e-14)

    def test_zero_features(self):
        model = StlModel(W=np.ones((2, 3)), lam=0.0)
        assert np.abs(predict(model, np.zeros((3, 4)))).max() == 0.0

    def test_dimension_mismatch(self):
        model = StlModel(W=np.ones((2, 3)), lam=0.0)
        with pytest.raises(DataError, match="features"):
            predict(model, np.ones((4, 2)))

    def test_latent_projection(self):
        X, _ = random_problem(3, 2, 6, 24)
        model = MtlModel(
            S=np.ones((2, 3)), A=np.eye(3), variant="mte",
            hyper=HyperParams(latent_t=3),
        )
        L = latent_project(model, X)
        assert np.array_equal(L, X)
        assert L.shape[0] == model.hyper.latent_t
        assert np.allclose(model.S @ L, predict(model, X))

    def test_latent_projection_needs_mtl(self):
        with pytest.raises(DataError, match="multi-task"):
            latent_project(StlModel(W=np.eye(2), lam=0.0), np.ones((2, 2)))


class TestSerialisation:
    def test_stl_round_trip(self, tmp_path):
        X, Z = random_problem(3, 2, 8, 25)
        model = ridge_fit(X, Z, 0.3)
        save_model(model, tmp_path, stem="m", seed=42)
        loaded = load_model(tmp_path, stem="m")
        assert isinstance(loaded, StlModel)
        assert np.array_equal(loaded.W, model.W)
        assert loaded.lam == 0.3

    def test_mtl_round_trip(self, tmp_path):
        X, Z = random_problem(3, 2, 10, 26)
        hyper = HyperParams(lambda_s=0.02, lambda_a=0.03, latent_t=2, max_iters=10)
        model = gomtl_fit(X, Z, hyper)
        save_model(model, tmp_path, stem="g")
        loaded = load_model(tmp_path, stem="g")
        assert loaded.variant == "gomtl"
        assert np.array_equal(loaded.S, model.S)
        assert np.array_equal(loaded.A, model.A)
        assert loaded.hyper.lambda_s == 0.02
