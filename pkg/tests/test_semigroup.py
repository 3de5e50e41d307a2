import math

import numpy as np
import pytest
import scipy.linalg

from fklab.chain import generator, tilt_model
from fklab.feynman_kac import (fk_apply_exact, fk_apply_mc, fk_generator,
                               girsanov_mc_check, reduce_via_girsanov)
from fklab.instances import random_reversible_model, random_perturbation
from fklab.measures import JumpFunction, Perturbation, SmoothMeasure
from fklab.paths import nu_measure


def instance(seed, n=5, **kw):
    model = random_reversible_model(np.random.default_rng(seed), n, **kw)
    pert = random_perturbation(np.random.default_rng(seed + 1000), model.n)
    return model, pert


def dense_generator_oracle(model, pert):
    """Matrix of the perturbed generator assembled from first principles."""
    n = model.n
    A = model.N * np.exp(pert.F.F)
    np.fill_diagonal(A, 0.0)
    Lu = generator(model) @ pert.u
    diag = -(model.N.sum(axis=1) + model.kappa) + pert.mu.density + Lu
    A[np.arange(n), np.arange(n)] = diag
    return A


def test_fk_generator_matrix():
    model, pert = instance(0)
    op = fk_generator(model, pert)
    assert np.allclose(op.matrix, dense_generator_oracle(model, pert), atol=1e-12)


def test_zero_perturbation_recovers_markov_generator():
    model, _ = instance(1)
    op = fk_generator(model, Perturbation.zero(model.n))
    assert np.allclose(op.matrix, generator(model), atol=1e-14)


def test_fk_apply_exact_matches_scipy_expm():
    for seed in range(5):
        model, pert = instance(seed)
        op = fk_generator(model, pert)
        A = dense_generator_oracle(model, pert)
        f = np.random.default_rng(seed + 50).normal(size=model.n)
        for t in (0.1, 1.0, 5.0):
            ours = fk_apply_exact(op, t, f)
            oracle = scipy.linalg.expm(t * A) @ f
            assert np.allclose(ours, oracle, atol=1e-9 * max(1, np.abs(oracle).max()))


def test_kernel_symmetric_in_weighted_space():
    model, pert = instance(2)
    op = fk_generator(model, pert)
    K = op.kernel(0.9)
    W = model.m[:, None] * K
    assert np.allclose(W, W.T, atol=1e-12)


def test_reduction_identity_exact():
    from fklab.instances import identity_instances

    worst = 0.0
    for idx, (model, pert) in enumerate(identity_instances(7, count=30)):
        f = np.random.default_rng(idx + 99).uniform(-1, 1, size=model.n)
        for t in (0.1, 1.0, 10.0):
            res = reduce_via_girsanov(model, pert, t, f)
            worst = max(worst, res.residual)
    assert worst <= 1e-10


def test_reduction_identity_relative_at_large_amplitude():
    # unconstrained instances make exp(tA) huge; the identity still holds
    # to machine precision relative to the solution scale
    for seed in range(10):
        model, pert = instance(seed)
        f = np.random.default_rng(seed + 99).uniform(-1, 1, size=model.n)
        res = reduce_via_girsanov(model, pert, 10.0, f)
        scale = max(1.0, float(np.abs(res.lhs).max()))
        assert res.residual <= 1e-12 * scale


def test_reduction_structure():
    model, pert = instance(3)
    f = np.ones(model.n)
    res = reduce_via_girsanov(model, pert, 1.0, f)
    # reduced perturbation has no tilt component and shifted smooth part
    assert np.array_equal(res.reduced_pert.u, np.zeros(model.n))
    expected_mu = pert.mu.density - nu_measure(model, pert.u).density
    assert np.allclose(res.reduced_pert.mu.density, expected_mu, atol=1e-14)
    assert np.array_equal(res.reduced_pert.F.F, pert.F.F)
    # tilted model really is the Girsanov transform of the original
    tilted = tilt_model(model, pert.u)
    assert np.allclose(res.tilted_model.N, tilted.N, atol=1e-14)


def test_corrupting_nu_breaks_reduction():
    model, pert = instance(4)
    f = np.ones(model.n)
    clean = reduce_via_girsanov(model, pert, 1.0, f)
    broken = reduce_via_girsanov(model, pert, 1.0, f, nu_shift=0.05)
    assert clean.residual <= 1e-12
    assert broken.residual > 1e-4


def test_mc_matches_exact_within_3_sigma():
    model, pert = instance(5, n=4)
    op = fk_generator(model, pert)
    t = 0.6
    f = np.random.default_rng(60).uniform(0.5, 1.5, size=model.n)
    exact = fk_apply_exact(op, t, f)
    mean, err = fk_apply_mc(model, pert, t, f, n_paths=20000, seed=123)
    assert np.all(err > 0)
    assert np.all(np.abs(mean - exact) <= 3.0 * err)


def test_mc_thread_count_is_bitwise_irrelevant():
    model, pert = instance(6, n=4)
    f = np.linspace(0.5, 1.5, model.n)
    ref = fk_apply_mc(model, pert, 0.5, f, n_paths=6000, seed=9, threads=1)
    for threads in (2, 3, 8):
        got = fk_apply_mc(model, pert, 0.5, f, n_paths=6000, seed=9, threads=threads)
        assert np.array_equal(ref[0], got[0])
        assert np.array_equal(ref[1], got[1])


def test_mc_seed_changes_output():
    model, pert = instance(7, n=4)
    f = np.ones(model.n)
    a = fk_apply_mc(model, pert, 0.5, f, n_paths=2000, seed=1)
    b = fk_apply_mc(model, pert, 0.5, f, n_paths=2000, seed=2)
    assert not np.array_equal(a[0], b[0])


def test_mc_start_state_subset():
    # streams are keyed by position in the start list, so a subset run is a
    # fresh deterministic draw, not a slice of the full run
    model, pert = instance(8, n=5)
    f = np.ones(model.n)
    full, full_err = fk_apply_mc(model, pert, 0.4, f, n_paths=6000, seed=4)
    sub, sub_err = fk_apply_mc(model, pert, 0.4, f, n_paths=6000, seed=4,
                               start_states=[2, 3])
    again, _ = fk_apply_mc(model, pert, 0.4, f, n_paths=6000, seed=4,
                           start_states=[2, 3])
    assert sub.shape == (2,)
    assert np.array_equal(sub, again)
    gap = np.abs(sub - full[[2, 3]])
    assert np.all(gap <= 3.0 * (sub_err + full_err[[2, 3]]))


def test_girsanov_mc_check_martingale_and_transfer():
    model = random_reversible_model(np.random.default_rng(10), 4)
    u = np.random.default_rng(11).uniform(-0.7, 0.7, size=4)
    f = np.random.default_rng(12).uniform(0.5, 1.5, size=4)
    out = girsanov_mc_check(model, u, 1.0, f, n_paths=30000, seed=77)
    assert np.all(np.abs(out["mean_Z"] - 1.0) <= 3.0 * out["stderr_Z"])
    assert np.all(np.abs(out["mean_Zf"] - out["exact_Zf"]) <= 3.0 * out["stderr_Zf"])


def test_lambda_max_and_gap_exposed():
    model, pert = instance(9)
    op = fk_generator(model, pert)
    w = np.linalg.eigvalsh(
        np.sqrt(model.m)[:, None] * op.matrix / np.sqrt(model.m)[None, :])
    assert op.lambda_max == pytest.approx(w[-1], abs=1e-10)
    assert op.gap == pytest.approx(w[-1] - w[-2], abs=1e-10)
