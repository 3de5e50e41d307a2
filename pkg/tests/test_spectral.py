import math

import numpy as np
import pytest
import scipy.optimize

from fklab.chain import dirichlet_energy
from fklab.feynman_kac import fk_generator
from fklab.instances import (identity_instances, random_perturbation,
                             random_reversible_model)
from fklab.measures import JumpFunction, Perturbation, SmoothMeasure
from fklab.spectral import (default_t_grid, independence_verdict,
                            lambda2_eigen, lambda2_variational,
                            lambda_inf_mc, lambda_p_fit, lambda_p_fixed,
                            log_lp_norm, lp_norm, rayleigh_minimize,
                            variational_form_matrix)


def instance(seed, n=5):
    model = random_reversible_model(np.random.default_rng(seed), n)
    pert = random_perturbation(np.random.default_rng(seed + 777), model.n)
    return model, pert


def quadratic_form_oracle(model, pert, f):
    """Q(f) assembled term by term from the definitions."""
    val = dirichlet_energy(model, f)
    val += dirichlet_energy(model, pert.u, f * f)
    val -= float(np.sum(f * f * pert.mu.density * model.m))
    val -= float(f @ (np.expm1(pert.F.F) * model.J) @ f)
    return val


def test_variational_matrix_matches_form():
    for seed in range(8):
        model, pert = instance(seed)
        Q = variational_form_matrix(model, pert)
        rng = np.random.default_rng(seed + 31)
        for _ in range(10):
            f = rng.normal(size=model.n)
            assert float(f @ Q @ f) == pytest.approx(
                quadratic_form_oracle(model, pert, f), abs=1e-10)


def test_three_lambda2_routes_agree():
    for idx, (model, pert) in enumerate(identity_instances(3, count=30)):
        rep = independence_verdict(model, pert, t_grid=[1.0, 2.0])
        vals = [rep.lambda2_eigen, rep.lambda2_variational, rep.lambda2_reduced]
        for a in vals:
            for b in vals:
                assert abs(a - b) <= 1e-8, f"instance {idx}: {vals}"


def test_rayleigh_descent_reaches_eigen_minimum():
    model, pert = instance(1)
    Q = variational_form_matrix(model, pert)
    target = lambda2_variational(model, pert)
    val, f = rayleigh_minimize(Q, model.m, seed=5)
    assert val == pytest.approx(target, abs=1e-8)
    # returned minimizer reproduces the value as a Rayleigh quotient
    quot = float(f @ Q @ f) / float(np.sum(f * f * model.m))
    assert quot == pytest.approx(target, abs=1e-7)


def brute_force_p_norm(B, p, seed=0):
    """Maximize ||Bx||_p / ||x||_p by multi-start optimization."""
    n = B.shape[0]
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(12):
        x0 = rng.uniform(0.1, 1.0, size=n) if k else np.ones(n)

        def neg(x):
            nx = np.sum(np.abs(x) ** p) ** (1.0 / p)
            y = B @ x
            return -(np.sum(np.abs(y) ** p) ** (1.0 / p)) / nx

        res = scipy.optimize.minimize(neg, x0, method="Nelder-Mead",
                                      options={"xatol": 1e-12, "fatol": 1e-13,
                                               "maxiter": 20000})
        best = max(best, -res.fun)
    return best


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_lp_norm_matches_multistart_optimizer(p):
    model, pert = instance(2, n=4)
    op = fk_generator(model, pert)
    t = 0.8
    K = op.kernel(t)
    w = model.m ** (1.0 / p)
    B = w[:, None] * K / w[None, :]
    assert lp_norm(op, t, p) == pytest.approx(brute_force_p_norm(B, p), rel=1e-7)


def test_log_norm_closed_forms():
    model, pert = instance(4)
    op = fk_generator(model, pert)
    t = 1.3
    K = op.kernel(t)
    m = model.m
    # L^1: max over columns of the m-weighted column mass
    n1 = float(((m @ K) / m).max())
    # L^inf: max row sum
    ninf = float(K.sum(axis=1).max())
    assert log_lp_norm(op, t, 1.0) == pytest.approx(math.log(n1), abs=1e-10)
    assert log_lp_norm(op, t, math.inf) == pytest.approx(math.log(ninf), abs=1e-10)
    # L^2: top modulus eigenvalue of the symmetrized kernel
    S = np.sqrt(m)[:, None] * K / np.sqrt(m)[None, :]
    n2 = float(np.abs(np.linalg.eigvalsh(0.5 * (S + S.T))).max())
    assert log_lp_norm(op, t, 2.0) == pytest.approx(math.log(n2), abs=1e-9)


def test_duality_of_extreme_norms():
    for seed in range(10):
        model, pert = instance(seed + 20)
        op = fk_generator(model, pert)
        for t in (0.5, 20.0):
            gap = abs(log_lp_norm(op, t, 1.0) - log_lp_norm(op, t, math.inf))
            assert gap <= 1e-12 * max(1.0, abs(log_lp_norm(op, t, 1.0)))


def test_riesz_thorin_bracket():
    model, pert = instance(6)
    op = fk_generator(model, pert)
    t = 2.0
    log_n2 = log_lp_norm(op, t, 2.0)
    log_n1 = log_lp_norm(op, t, 1.0)
    for p in (1.25, 1.5, 4.0, 8.0):
        val = log_lp_norm(op, t, p)
        theta = 2.0 / p if p > 2 else 2.0 - 2.0 / p
        upper = theta * log_n2 + (1.0 - theta) * log_n1
        assert log_n2 - 1e-9 <= val <= upper + 1e-9


def test_fixed_time_ordering():
    for idx, (model, pert) in enumerate(identity_instances(8, count=20)):
        op = fk_generator(model, pert)
        lam2 = lambda2_eigen(op)
        vals = {p: lambda_p_fixed(op, 20.0, p) for p in (1.0, 1.5, 2.0, 4.0, math.inf)}
        for p, v in vals.items():
            assert vals[math.inf] <= v + 1e-10, f"instance {idx} p={p}"
            assert v <= lam2 + 1e-10, f"instance {idx} p={p}"


def test_l2_fit_is_exact():
    # ||T_t||_2 = exp(-lambda_2 t) exactly, so the fitted slope is exact on
    # any grid and the residual stderr is at rounding level
    model, pert = instance(9)
    op = fk_generator(model, pert)
    est, err = lambda_p_fit(op, 2.0, t_grid=[0.5, 1.0, 1.5, 2.0])
    assert est == pytest.approx(lambda2_eigen(op), abs=1e-9)
    assert err <= 1e-9


def test_fit_grid_scales_with_gap():
    model, pert = instance(10)
    op = fk_generator(model, pert)
    grid = default_t_grid(op)
    assert grid.shape == (4,)
    assert grid[0] >= 20.0
    assert np.allclose(grid / grid[0], [1, 2, 3, 4])


def test_inf_fit_and_fixed_time_bias():
    # the fixed-t rate sits below the fitted rate by log(C)/t for the
    # Perron constant C >= 1; the fit removes the constant exactly
    model, pert = instance(11)
    op = fk_generator(model, pert)
    est, err = lambda_p_fit(op, math.inf)
    assert est == pytest.approx(lambda2_eigen(op), abs=max(1e-8, 3 * err))
    assert lambda_p_fixed(op, 20.0, math.inf) <= est + 1e-10


def test_lambda_inf_mc_tracks_exact_grid_slope():
    model, pert = instance(12, n=4)
    op = fk_generator(model, pert)
    grid = [0.4, 0.8, 1.2, 1.6]
    ys = [-log_lp_norm(op, t, math.inf) for t in grid]
    tb = np.asarray(grid) - np.mean(grid)
    exact_slope = float(np.sum(tb * (ys - np.mean(ys))) / np.sum(tb * tb))
    est, err = lambda_inf_mc(model, pert, grid, n_paths=8000, seed=3)
    assert err > 0
    assert abs(est - exact_slope) <= 3.5 * err


def conservative_model_with_mu(sign, seed=0):
    model = random_reversible_model(np.random.default_rng(seed), 5, kill="never")
    pert = Perturbation(np.zeros(5), SmoothMeasure(sign * 0.3 * np.ones(5)),
                        JumpFunction.zero(5))
    return model, pert


def test_verdict_zero_perturbation_independent():
    model = random_reversible_model(np.random.default_rng(13), 5, kill="never")
    rep = independence_verdict(model, Perturbation.zero(5))
    assert rep.lambda2_eigen == pytest.approx(0.0, abs=1e-12)
    assert rep.verdict == "independent"
    assert rep.ordering_ok and rep.lower_bound_ok and rep.p_independent_ok


def test_verdict_negative_lambda2_independent():
    # mu_hat > 0 pushes lambda_2 below zero; all rates then agree
    model, pert = conservative_model_with_mu(+1.0)
    rep = independence_verdict(model, pert)
    assert rep.lambda2_eigen < 0
    assert rep.verdict == "independent"


def test_verdict_positive_lambda2_needs_truncation_evidence():
    model, pert = conservative_model_with_mu(-1.0)
    rep = independence_verdict(model, pert)
    assert rep.lambda2_eigen > 0
    assert rep.verdict == "inconclusive"
    rep2 = independence_verdict(model, pert, truncation_trend="stable-positive")
    assert rep2.verdict == "dependent-expected"
    rep3 = independence_verdict(model, pert, truncation_trend="rising-to-zero")
    assert rep3.verdict == "inconclusive"


def test_verdict_killed_positive_lambda2_inconclusive():
    model = random_reversible_model(np.random.default_rng(14), 5, kill="always")
    rep = independence_verdict(model, Perturbation.zero(5))
    assert rep.lambda2_eigen > 0
    assert rep.verdict == "inconclusive"
    assert "killing" in rep.explanation


def test_report_serialization_shape():
    model, pert = instance(15)
    rep = independence_verdict(model, pert, t_grid=[1.0, 2.0])
    d = rep.to_json_dict()
    assert set(d["lambda2"]) == {"eigen", "variational", "reduced"}
    assert set(d["lambda_p_fixed"]) == {"1.0", "1.5", "2.0", "4.0", "inf"}
    assert set(d["flags"]) == {"ordering_ok", "lower_bound_ok", "p_independent_ok"}
    rows = rep.csv_rows()
    assert rows[0] == ("p", "lambda_fixed_t", "lambda_fit", "fit_stderr")
    assert [r[0] for r in rows[1:]] == ["1.0", "1.5", "2.0", "4.0", "inf"]


def test_norms_reject_bad_arguments():
    model, pert = instance(16)
    op = fk_generator(model, pert)
    with pytest.raises(ValueError):
        log_lp_norm(op, 0.0, 2.0)
    with pytest.raises(ValueError):
        log_lp_norm(op, 1.0, 0.5)
