"""Kato-class certification for measures against a reversible jump model.

The checks revolve around two functionals of a (positive) measure mu:

  * the modulus sup_x int_0^t (P_s |mu|)(x) ds, whose decay as t -> 0
    characterizes the Kato class K;
  * Green potentials ||G(1_{K^c or B} |mu|)||_inf with a packing budget
    |mu|(B) < delta, which characterize the classes K_inf and K_1.

On a finite space every finite measure is trivially in K_inf once K may be
the whole space, so the geometric checks support confining the candidate
sets K to balls strictly inside the domain; that restriction is what makes
the verdicts informative on lattice truncations of unbounded spaces.

Exact packing suprema are computed by meet-in-the-middle enumeration when
the candidate set carries few atoms; otherwise a fractional-knapsack upper
bound (always valid) and a feasible greedy lower bound bracket the supremum
and the certificate records which side the verdict rests on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import alpha_subprocess, dirichlet_energy, resolvent
from .errors import NotApplicable, NotTransient
from .measures import SmoothMeasure


def _coerce_measure(mu):
    return mu if isinstance(mu, SmoothMeasure) else SmoothMeasure(np.asarray(mu, dtype=float))


def _green_operator(model, alpha):
    alpha = 0.0 if alpha is None else float(alpha)
    if alpha == 0.0 and model.is_conservative:
        raise NotTransient(
            "conservative model has no alpha = 0 Green operator; pass alpha > 0")
    return resolvent(model, alpha)


def kato_modulus(model, mu, t, *, tol=1e-10, max_depth=40):
    """sup_x int_0^t (P_s |mu|)(x) ds via adaptive Simpson quadrature.

    The integrand is the semigroup applied to the total-variation density,
    integrated componentwise; the sup over states is taken last.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    dens = _coerce_measure(mu).absolute.density
    fac = model.factor

    def f(s):
        return fac.expm_apply(s, dens)

    def rec(a, b, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (a + b)
        f1, f2 = f(0.5 * (a + mid)), f(0.5 * (mid + b))
        left = ((mid - a) / 6.0) * (fa + 4.0 * f1 + fm)
        right = ((b - mid) / 6.0) * (fm + 4.0 * f2 + fb)
        err = np.abs(left + right - whole).max()
        if err <= 15.0 * eps or depth >= max_depth:
            return left + right + (left + right - whole) / 15.0
        half = 0.5 * eps
        return (rec(a, mid, fa, f1, fm, left, half, depth + 1)
                + rec(mid, b, fm, f2, fb, right, half, depth + 1))

    a, b = 0.0, float(t)
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb)
    integral = rec(a, b, fa, fm, fb, whole, tol, 0)
    return float(integral.max())


def jclass_density(model, F):
    """Density of the measure controlling a jump perturbation F:
    sum_y |F(x, y)| N(x, y)."""
    Fm = np.abs(getattr(F, "F", F))
    return SmoothMeasure(np.sum(Fm * model.N, axis=1))


def _enumerate_half(cols, weights):
    # Subset sums of up to ~2^10 column vectors by doubling.
    k = len(weights)
    n = cols.shape[0] if k else 0
    V = np.zeros((1 << k, n))
    W = np.zeros(1 << k)
    for i in range(k):
        lo, hi = 1 << i, 1 << (i + 1)
        V[lo:hi] = V[:lo] + cols[:, i]
        W[lo:hi] = W[:lo] + weights[i]
    return V, W


def _exact_pack_max(base, g_cols, w, budget):
    """max over feasible atom subsets B of sup_x [base + sum_B g_y](x),
    exact, by meet-in-the-middle (sup_x and sup_B commute)."""
    k = len(w)
    k1 = k // 2
    V1, W1 = _enumerate_half(g_cols[:, :k1], w[:k1])
    V2, W2 = _enumerate_half(g_cols[:, k1:], w[k1:])
    order = np.argsort(W2, kind="stable")
    W2s = W2[order]
    V2max = np.maximum.accumulate(V2[order], axis=0)
    best = np.full(base.shape, -np.inf)
    for s1 in range(V1.shape[0]):
        rem = budget - W1[s1]
        if rem < 0:
            continue
        idx = int(np.searchsorted(W2s, rem, side="right")) - 1
        if idx >= 0:
            np.maximum(best, V1[s1] + V2max[idx], out=best)
    return float((base + best).max())


def _greedy_pack_bounds(base, g_cols, w, budget):
    """(lower, upper) bracket of the packing supremum.

    Upper: sup-norms of the atom potentials filled fractionally into the
    budget, added to the worst base point. Lower: one feasible greedy
    subset evaluated exactly.
    """
    caps = g_cols.max(axis=0)
    order = np.argsort(-caps / np.maximum(w, 1e-300), kind="stable")
    ub = 0.0
    remaining = budget
    chosen = np.zeros(base.shape)
    for i in order:
        if w[i] <= remaining:
            ub += caps[i]
            chosen += g_cols[:, i]
            remaining -= w[i]
        else:
            ub += caps[i] * (remaining / w[i])
            break
    lower = float((base + chosen).max())
    upper = float(base.max()) + ub
    return lower, upper


def _pack_bounds(base, g_cols, w, budget, exact_limit):
    k = len(w)
    if k == 0 or budget < (w.min() if k else 0.0):
        v = float(base.max())
        return v, v, "exact"
    if k <= exact_limit:
        v = _exact_pack_max(base, g_cols, w, budget)
        return v, v, "exact"
    lo, hi = _greedy_pack_bounds(base, g_cols, w, budget)
    return lo, hi, "greedy"


@dataclass
class KatoCertificate:
    """Outcome of a class-membership check, with the evidence recorded."""

    kind: str
    passed: bool
    status: str          # pass | heuristic-pass | fail | fail-uncertified
    threshold: float
    achieved: float      # upper bound actually compared to the threshold
    lower: float         # certified lower bound on the supremum
    method: str
    delta: float | None = None
    region: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    witness: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "kind": self.kind,
            "passed": self.passed,
            "status": self.status,
            "threshold": self.threshold,
            "achieved": self.achieved,
            "lower": self.lower,
            "method": self.method,
            "delta": self.delta,
            "region": self.region,
            "protocol": self.protocol,
            "witness": self.witness,
        }


def _candidate_sets(model, max_radius_frac, n_candidates=6):
    if max_radius_frac is None or model.space.positions is None:
        return [("all-states", np.ones(model.n, dtype=bool), None)]
    radii = model.space.radii()
    rmax = radii.max()
    out = []
    for frac in np.geomspace(0.08, max_radius_frac, n_candidates):
        R = frac * rmax
        mask = radii <= R
        if mask.any() and (not out or mask.sum() > out[-1][1].sum()):
            out.append((f"ball(R={R:.6g})", mask, float(R)))
    return out


def kinf_check(model, mu, eps, *, alpha=None, delta=None, max_radius_frac=None,
               exact_limit=20):
    """Certify or refute membership of |mu| in the class K_inf at level eps.

    Searches candidate compact sets K (balls when the space has geometry
    and ``max_radius_frac`` confines them; otherwise the whole space) and
    packing budgets delta for a witness of

        sup_{B: |mu|(B) < delta} || G(1_{K^c} |mu|) + G(1_B |mu|) ||_inf < eps.

    A fail is certified when every candidate already violates the bound
    with B empty; otherwise an unresolved search is reported as
    ``fail-uncertified`` with the bracketing evidence.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    G = _green_operator(model, alpha)
    absd = _coerce_measure(mu).absolute.density
    w_all = absd * model.m
    positive = w_all > 0

    if delta is None:
        smallest = w_all[positive].min() if positive.any() else 1.0
        deltas = [0.5 * smallest]
    elif np.isscalar(delta):
        deltas = [float(delta)]
    else:
        deltas = sorted((float(d) for d in delta), reverse=True)

    protocol = {
        "alpha": 0.0 if alpha is None else float(alpha),
        "max_radius_frac": max_radius_frac,
        "deltas": deltas,
        "exact_limit": exact_limit,
    }

    witness = []
    all_failed_certified = True
    for label, mask, radius in _candidate_sets(model, max_radius_frac):
        base = G @ (absd * ~mask)
        base_max = float(base.max())
        entry = {"K": label, "radius": radius, "n_states": int(mask.sum()),
                 "base": base_max}
        if base_max >= eps:
            entry["verdict"] = "fail (empty packing already exceeds eps)"
            witness.append(entry)
            continue
        # base < eps: a small enough budget would pass, so a fail at the
        # requested deltas cannot be certified for this K
        all_failed_certified = False
        atoms = np.flatnonzero(mask & positive)
        g_cols = G[:, atoms] * absd[atoms][None, :]
        w = w_all[atoms]
        for d in deltas:
            lo, hi, method = _pack_bounds(base, g_cols, w, d * (1.0 - 1e-12),
                                          exact_limit)
            if hi < eps:
                status = "pass" if method == "exact" else "heuristic-pass"
                return KatoCertificate(
                    kind="K_inf", passed=True, status=status, threshold=eps,
                    achieved=hi, lower=lo, method=method, delta=d,
                    region={"K": label, "radius": radius, "n_states": int(mask.sum())},
                    protocol=protocol, witness=witness)
            entry.setdefault("bounds", []).append(
                {"delta": d, "lower": lo, "upper": hi, "method": method})
        entry["verdict"] = "no admissible packing found"
        witness.append(entry)

    status = "fail" if all_failed_certified else "fail-uncertified"
    best_lower = min((e["base"] for e in witness), default=np.inf)
    return KatoCertificate(
        kind="K_inf", passed=False, status=status, threshold=eps,
        achieved=best_lower, lower=best_lower, method="empty-packing",
        delta=deltas[0], region={}, protocol=protocol, witness=witness)


def k1_beta(model, mu, K, delta, *, alpha=None, exact_limit=20):
    """beta_1 bound for an explicit candidate set K and budget delta.

    beta_1 = sup over packings B (|mu|(B) < delta) of
    ||G(1_{K^c} |mu|) + G(1_B |mu|)||_inf; membership in K_1 needs
    beta_1 < 1 strictly.
    """
    G = _green_operator(model, alpha)
    absd = _coerce_measure(mu).absolute.density
    mask = np.zeros(model.n, dtype=bool)
    mask[np.asarray(K, dtype=int)] = True
    base = G @ (absd * ~mask)
    atoms = np.flatnonzero(mask & (absd * model.m > 0))
    g_cols = G[:, atoms] * absd[atoms][None, :]
    w = (absd * model.m)[atoms]
    lo, hi, method = _pack_bounds(base, g_cols, w, float(delta) * (1.0 - 1e-12),
                                  exact_limit)
    if hi < 1.0:
        passed, status = True, "pass" if method == "exact" else "heuristic-pass"
    elif lo >= 1.0:
        passed, status = False, "fail"
    else:
        passed, status = False, "fail-uncertified"
    return KatoCertificate(
        kind="K_1", passed=passed, status=status, threshold=1.0,
        achieved=hi, lower=lo, method=method, delta=float(delta),
        region={"n_states": int(mask.sum())},
        protocol={"alpha": 0.0 if alpha is None else float(alpha),
                  "exact_limit": exact_limit},
        witness=[])


def stable_kato_criterion(model, mu, *, alpha, d, r_grid=None, R_grid=None,
                          decay_ratio=0.5, eps_tail=None):
    """Scaling checks for jump kernels comparable to |x-y|^{-(d+alpha)}.

    Requires alpha < d (otherwise the |x-y|^{alpha-d} moments carry no
    small-scale information and NotApplicable is raised). Evaluates

        S1(r) = sup_x sum_{0 < |x-y| <= r} |x-y|^{alpha-d} |mu|(dy)
        S2(R) = sup_x sum_{|y| > R}        |x-y|^{alpha-d} |mu|(dy)

    on the given grids. Small-scale membership needs S1 to decay visibly
    from r_max to r_min; the tail check compares S2 at the largest window
    radius against ``eps_tail`` when given, else against the same ratio.
    """
    if model.space.positions is None:
        raise ValueError("criterion needs state positions")
    if alpha >= d:
        raise NotApplicable(f"scaling criterion needs alpha < d, got alpha={alpha}, d={d}")
    pos = model.space.positions
    radii = model.space.radii()
    rmax = radii.max()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    w = _coerce_measure(mu).absolute.density * model.m
    off = dist > 0
    kern = np.zeros_like(dist)
    kern[off] = dist[off] ** (alpha - d)
    kw = kern * w[None, :]

    if r_grid is None:
        h = dist[off].min()
        r_grid = np.geomspace(1.5 * h, rmax / 4.0, 6)
    if R_grid is None:
        R_grid = np.geomspace(rmax / 8.0, 0.75 * rmax, 6)
    r_grid = np.asarray(r_grid, dtype=float)
    R_grid = np.asarray(R_grid, dtype=float)

    S1 = np.array([(kw * (off & (dist <= r))).sum(axis=1).max() for r in r_grid])
    S2 = np.array([(kw[:, radii > R] * off[:, radii > R]).sum(axis=1).max()
                   for R in R_grid])

    small_ok = bool(S1[-1] == 0.0 or S1[0] <= decay_ratio * S1[-1])
    if eps_tail is not None:
        tail_ok = bool(S2[-1] < eps_tail)
    else:
        tail_ok = bool(S2[0] == 0.0 or S2[-1] <= decay_ratio * S2[0])

    def _slope(xs, ys):
        keep = ys > 0
        if keep.sum() < 2:
            return None
        lx, ly = np.log(xs[keep]), np.log(ys[keep])
        lx = lx - lx.mean()
        return float(np.sum(lx * (ly - ly.mean())) / np.sum(lx * lx))

    return {
        "alpha": float(alpha),
        "d": int(d),
        "r_grid": r_grid.tolist(),
        "S1": S1.tolist(),
        "R_grid": R_grid.tolist(),
        "S2": S2.tolist(),
        "small_scale_slope": _slope(r_grid, S1),
        "tail_slope": _slope(R_grid, S2),
        "decay_ratio": decay_ratio,
        "eps_tail": eps_tail,
        "in_kato": small_ok,
        "in_kato_inf": bool(small_ok and tail_ok),
        "tail_ok": tail_ok,
    }


def stollmann_voigt_check(model, mu, *, alpha=None, n_trials=100, seed=0):
    """Test int u^2 dmu <= ||G_alpha mu||_inf E_alpha(u, u) on random u.

    mu must be a positive measure. Returns the worst signed violation
    (negative means the inequality held with margin everywhere) together
    with the bound norm ||G_alpha mu||_inf.
    """
    mu = _coerce_measure(mu)
    if np.any(mu.density < 0):
        raise ValueError("inequality applies to positive measures")
    G = _green_operator(model, alpha)
    gmu = G @ mu.density
    norm = float(gmu.max())
    sub = alpha_subprocess(model, 0.0 if alpha is None else float(alpha))
    rng = np.random.default_rng(seed)
    worst = -np.inf
    scale = 0.0
    for _ in range(n_trials):
        u = rng.standard_normal(model.n)
        lhs = float(np.sum(u * u * mu.density * model.m))
        rhs = norm * dirichlet_energy(sub, u)
        worst = max(worst, lhs - rhs)
        scale = max(scale, abs(rhs))
    return {"max_violation": worst, "green_norm": norm, "scale": scale,
            "n_trials": n_trials}
