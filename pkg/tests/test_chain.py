import json

import numpy as np
import pytest
import scipy.linalg

from fklab.chain import (ReversibleModel, StateSpace, alpha_subprocess,
                         build_model, dirichlet_energy, generator,
                         green_density, model_from_json, model_to_json,
                         resolvent, tilt_model, transition_semigroup)
from fklab.errors import DetailedBalanceViolation, NotIrreducible, SingularOperator


def two_state():
    space = StateSpace(np.array([1.0, 1.0]))
    N = np.array([[0.0, 1.0], [1.0, 0.0]])
    return build_model(space, N)


def ring5(seed=0):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0.5, 2.0, size=5)
    J = np.zeros((5, 5))
    for i in range(5):
        J[i, (i + 1) % 5] = J[(i + 1) % 5, i] = rng.uniform(0.3, 1.0)
    return build_model(StateSpace(m), J / m[:, None], rng.uniform(0.0, 0.4, size=5))


def test_state_space_validation():
    with pytest.raises(ValueError):
        StateSpace(np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        StateSpace(np.array([1.0, 0.0]))
    space = StateSpace(np.array([1.0, 2.0]), positions=np.array([0.0, 1.0]))
    assert space.n == 2
    assert space.positions.shape == (2, 1)


def test_detailed_balance_enforced():
    space = StateSpace(np.array([1.0, 2.0]))
    N = np.array([[0.0, 1.0], [1.0, 0.0]])  # J01 = 1 but J10 = 2
    with pytest.raises(DetailedBalanceViolation):
        build_model(space, N)


def test_irreducibility_enforced():
    space = StateSpace(np.ones(4))
    N = np.zeros((4, 4))
    N[0, 1] = N[1, 0] = 1.0
    N[2, 3] = N[3, 2] = 1.0
    with pytest.raises(NotIrreducible):
        build_model(space, N)


def test_generator_structure():
    model = ring5(3)
    L = generator(model)
    # off-diagonal rates, diagonal balances jumps plus killing
    assert np.allclose(L[np.eye(5) == 0], model.N[np.eye(5) == 0])
    assert np.allclose(np.diag(L), -(model.N.sum(axis=1) + model.kappa))
    f = np.random.default_rng(5).normal(size=5)
    assert np.allclose(L @ f, model.apply_L(f))


def test_dirichlet_energy_is_generator_quadratic_form():
    model = ring5(7)
    rng = np.random.default_rng(8)
    for _ in range(10):
        f = rng.normal(size=5)
        g = rng.normal(size=5)
        # E(f, g) = -(f, Lg)_m for reversible models
        lhs = dirichlet_energy(model, f, g)
        rhs = -np.sum(f * model.apply_L(g) * model.m)
        assert lhs == pytest.approx(rhs, abs=1e-12)
    assert dirichlet_energy(model, np.ones(5)) == pytest.approx(
        np.sum(model.kappa * model.m), abs=1e-14)


def test_semigroup_matches_expm_oracle():
    model = ring5(1)
    L = generator(model)
    for t in (0.1, 1.0, 4.0):
        P = transition_semigroup(model, t)
        assert np.allclose(P, scipy.linalg.expm(t * L), atol=1e-11)
        # symmetry in L^2(m): m_x P(x,y) = m_y P(y,x)
        W = model.m[:, None] * P
        assert np.allclose(W, W.T, atol=1e-12)
        assert np.all(P >= -1e-13)


def test_semigroup_strong_continuity():
    model = ring5(2)
    f = np.random.default_rng(3).normal(size=5)
    for t in (1e-3, 1e-5, 1e-7):
        drift = np.max(np.abs(transition_semigroup(model, t) @ f - f))
        assert drift <= 10.0 * t * np.max(np.abs(generator(model) @ f))


def test_conservative_flag_and_mass():
    space = StateSpace(np.ones(2))
    model = build_model(space, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert model.is_conservative
    assert np.allclose(transition_semigroup(model, 2.0).sum(axis=1), 1.0)
    killed = two_state_killed()
    assert not killed.is_conservative
    assert np.all(transition_semigroup(killed, 2.0).sum(axis=1) < 1.0)


def two_state_killed():
    space = StateSpace(np.array([1.0, 1.0]))
    return build_model(space, np.array([[0.0, 1.0], [1.0, 0.0]]),
                       np.array([0.5, 0.2]))


def test_resolvent_identity_and_green():
    model = two_state_killed()
    for a in (0.5, 1.0):
        G = resolvent(model, a)
        assert np.allclose((a * np.eye(2) - generator(model)) @ G, np.eye(2))
    # resolvent equation: G_a - G_b = (b - a) G_a G_b
    Ga, Gb = resolvent(model, 0.5), resolvent(model, 2.0)
    assert np.allclose(Ga - Gb, 1.5 * Ga @ Gb, atol=1e-12)


def test_green_of_symmetric_walk_plus_unit_rate():
    # (I - L)^{-1} for the conservative two-state walk: exact 1/3 [[2,1],[1,2]]
    model = two_state()
    G1 = resolvent(model, 1.0)
    assert np.allclose(G1, np.array([[2.0, 1.0], [1.0, 2.0]]) / 3.0, atol=1e-14)


def test_green_density_symmetry():
    model = ring5(9)
    g = green_density(model, 1.2)
    assert np.allclose(g, g.T, atol=1e-12)


def test_resolvent_errors():
    model = two_state()
    with pytest.raises(ValueError):
        resolvent(model, -1.0)
    with pytest.raises(SingularOperator):
        resolvent(model, 0.0)
    # killed chains have a proper Green operator
    G = resolvent(two_state_killed(), 0.0)
    assert np.all(G > 0)


def test_alpha_subprocess_shifts_resolvent():
    model = two_state_killed()
    sub = alpha_subprocess(model, 0.7)
    assert np.allclose(sub.kappa, model.kappa + 0.7)
    assert np.allclose(resolvent(model, 0.7), resolvent(sub, 0.0), atol=1e-12)


def test_tilt_model_similarity_and_involution():
    model = ring5(4)
    u = np.random.default_rng(6).uniform(-1, 1, size=5)
    tilted = tilt_model(model, u)
    # tilted reference measure and rates
    assert np.allclose(tilted.m, np.exp(-2 * u) * model.m)
    assert np.allclose(tilted.kappa, np.exp(u) * model.kappa)
    back = tilt_model(tilted, -u)
    assert np.allclose(back.N, model.N, atol=1e-12)
    assert np.allclose(back.m, model.m, atol=1e-12)


def test_json_round_trip_exact():
    model = ring5(11)
    text = model_to_json(model)
    clone = model_from_json(text)
    assert np.array_equal(clone.m, model.m)
    assert np.array_equal(clone.N, model.N)
    assert np.array_equal(clone.kappa, model.kappa)
    payload = json.loads(text)
    assert payload["format"] == "fklab-model"


def test_positions_round_trip():
    space = StateSpace(np.array([0.5, 0.5, 1.0]),
                       positions=np.array([-1.0, 0.0, 1.0]))
    N = np.array([[0.0, 1.0, 0.2], [1.0, 0.0, 0.5],
                  [0.1, 0.25, 0.0]])
    model = build_model(space, N)
    clone = model_from_json(model_to_json(model))
    assert np.array_equal(clone.space.positions, model.space.positions)
