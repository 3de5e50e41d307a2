"""Random model/perturbation generators for the identity suites.

Everything is derived from a seeded numpy Generator so a suite is pinned by
(seed, count, size) alone. Perturbations are kept inside the regime where
the domination inequality applies (sup|u| <= 1 by default).
"""

from __future__ import annotations

import numpy as np

from .chain import StateSpace, build_model
from .measures import JumpFunction, Perturbation, SmoothMeasure


def random_reversible_model(rng, n=5, *, kill="maybe", density=0.7,
                            m_range=(0.3, 2.0), ring_range=(0.2, 1.5),
                            extra_range=(0.1, 1.2)):
    """Draw a connected reversible model with n states.

    Symmetry is imposed on J = m N, then N is recovered as J / m, so
    detailed balance holds by construction. kill is "always", "never",
    or "maybe" (Bernoulli 1/2 per draw).
    """
    m = rng.uniform(*m_range, size=n)
    # ring backbone keeps the chain irreducible whatever the mask does
    J = np.zeros((n, n))
    for i in range(n):
        j = (i + 1) % n
        J[i, j] = J[j, i] = rng.uniform(*ring_range)
    extra = rng.uniform(*extra_range, size=(n, n))
    mask = rng.random((n, n)) < density
    upper = np.triu(extra * mask, k=1)
    J += upper + upper.T
    N = J / m[:, None]
    np.fill_diagonal(N, 0.0)

    if kill == "always":
        killed = True
    elif kill == "never":
        killed = False
    else:
        killed = bool(rng.random() < 0.5)
    kappa = rng.uniform(0.05, 0.6, size=n) if killed else np.zeros(n)
    return build_model(StateSpace(m), N, kappa)


def random_perturbation(rng, n, *, u_scale=1.0, mu_scale=1.0, f_scale=0.8):
    """Draw (u, mu, F) with sup norms bounded by the given scales."""
    u = rng.uniform(-u_scale, u_scale, size=n)
    mu = SmoothMeasure(rng.uniform(-mu_scale, mu_scale, size=n))
    raw = rng.uniform(-f_scale, f_scale, size=(n, n))
    F = 0.5 * (raw + raw.T)
    np.fill_diagonal(F, 0.0)
    return Perturbation(u, mu, JumpFunction(F))


def identity_instances(seed, count=100, n=5):
    """The pinned (model, perturbation) list used by the identity suite.

    Rates and potentials are tempered so that exp(t A) stays below ~1e3
    out to t = 10. The reduction identity is checked in max norm with an
    absolute tolerance; letting the semigroup blow up to 1e20 would drown
    that tolerance in float64 scale noise without testing anything more.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        model = random_reversible_model(
            rng, n, m_range=(0.6, 1.6), ring_range=(0.15, 0.7),
            extra_range=(0.05, 0.45))
        u = rng.uniform(-0.8, 0.8, size=model.n)
        mu = SmoothMeasure(rng.uniform(-1.0, 0.1, size=model.n))
        raw = rng.uniform(-0.6, 0.1, size=(model.n, model.n))
        F = 0.5 * (raw + raw.T)
        np.fill_diagonal(F, 0.0)
        out.append((model, Perturbation(u, mu, JumpFunction(F))))
    return out
