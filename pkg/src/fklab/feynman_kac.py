"""Generalized Feynman-Kac semigroups of reversible jump models.

The semigroup weights paths by

    exp( N^u_t + A^mu_t + sum_{0<s<=t} F(X_{s-}, X_s) ) f(X_t) 1_{t < zeta}

and acts as exp(tA) with A(x, y) = N(x, y) e^{F(x, y)} off the diagonal and
A(x, x) = -q(x) + mu_hat(x) + (Lu)(x). Since F is symmetric, A stays
symmetric in L^2(m) and everything reduces to one dense symmetric
eigenproblem. Three routes to the same object live here: exact kernels,
per-path Monte Carlo, and the change-of-measure reduction that trades the
u-part for a tilted model and the compensator measure nu.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .chain import SpectralFactor, tilt_model
from .measures import Perturbation, SmoothMeasure
from .paths import nu_measure, path_stream

_CHUNK = 2048  # paths per accumulation block; fixed so threading cannot reorder sums


class PerturbedOperator:
    """exp(tA) machinery for a perturbed generator A, symmetric in L^2(m)."""

    def __init__(self, model, pert, matrix):
        self.model = model
        self.pert = pert
        matrix = np.asarray(matrix, dtype=float)
        matrix.setflags(write=False)
        self.matrix = matrix

    @cached_property
    def factor(self):
        return SpectralFactor(self.matrix, self.model.m)

    @property
    def n(self):
        return self.model.n

    @property
    def lambda_max(self):
        return self.factor.top

    @property
    def gap(self):
        return self.factor.gap

    def kernel(self, t):
        return self.factor.expm(t)

    def apply(self, t, f):
        return self.factor.expm_apply(t, f)

    def __repr__(self):
        return f"PerturbedOperator(n={self.n}, lambda_max={self.lambda_max:.6g})"


def fk_generator(model, pert):
    """Assemble the perturbed generator for a (u, mu, F) triple."""
    if pert.n != model.n:
        raise ValueError("perturbation size does not match the model")
    A = model.N * np.exp(pert.F.F)
    np.fill_diagonal(A, 0.0)
    diag = -model.total_rate + pert.mu.density + model.apply_L(pert.u)
    A[np.arange(model.n), np.arange(model.n)] = diag
    return PerturbedOperator(model, pert, A)


def fk_apply_exact(op, t, f):
    """Exact semigroup action exp(tA) f via the eigenfactorization."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    return op.apply(float(t), np.asarray(f, dtype=float))


def _sim_tables(model):
    q = np.asarray(model.total_rate, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.cumsum(model.N, axis=1) / q[:, None]
    return q, np.where(np.isfinite(cdf), cdf, 0.0)


def _fk_path_value(x0, t, q, cdf, c, F, f, rng):
    # One path of the weighted estimator; draw order matches PathSampler.
    x = int(x0)
    s = 0.0
    log_w = 0.0
    while True:
        rate = q[x]
        if rate <= 0.0 or s + (dt := rng.exponential(1.0 / rate)) > t:
            log_w += (t - s) * c[x]
            return np.exp(log_w) * f[x]
        log_w += dt * c[x]
        s += dt
        row = cdf[x]
        u01 = rng.random()
        if u01 > row[-1]:
            return 0.0  # killed before t
        y = int(np.searchsorted(row, u01, side="right"))
        log_w += F[x, y]
        x = y


def _girsanov_path_values(x0, t, q, cdf, c, u, f, rng):
    # Returns (Z_t, Z_t f(X_t) 1_{t < zeta}); Z freezes at death.
    x = int(x0)
    s = 0.0
    log_w = u[x]
    while True:
        rate = q[x]
        if rate <= 0.0 or s + (dt := rng.exponential(1.0 / rate)) > t:
            log_w += (t - s) * c[x]
            z = np.exp(log_w - u[x])
            return z, z * f[x]
        log_w += dt * c[x]
        s += dt
        row = cdf[x]
        u01 = rng.random()
        if u01 > row[-1]:
            return np.exp(log_w), 0.0
        x = int(np.searchsorted(row, u01, side="right"))


def _mc_sums(path_value, n_paths, seed, base_index, n_out, threads):
    """Chunked accumulation of path values and their squares.

    Chunk boundaries are fixed, chunks are reduced in index order, and each
    path owns a counter-based stream, so the result is bit-identical for
    any thread count.
    """
    chunks = [(lo, min(lo + _CHUNK, n_paths)) for lo in range(0, n_paths, _CHUNK)]

    def run_chunk(bounds):
        lo, hi = bounds
        acc = np.zeros(n_out)
        acc2 = np.zeros(n_out)
        for i in range(lo, hi):
            vals = path_value(path_stream(seed, base_index + i))
            for k in range(n_out):
                acc[k] += vals[k]
                acc2[k] += vals[k] * vals[k]
        return acc, acc2

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(b) for b in chunks]
    total = np.zeros(n_out)
    total2 = np.zeros(n_out)
    for acc, acc2 in results:
        total += acc
        total2 += acc2
    return total, total2


def _mean_stderr(total, total2, n):
    mean = total / n
    var = np.maximum(total2 / n - mean * mean, 0.0) * (n / max(n - 1, 1))
    return mean, np.sqrt(var / n)


def fk_apply_mc(model, pert, t, f, *, n_paths, seed, threads=1, start_states=None):
    """Monte Carlo estimate of the semigroup action, state by state.

    Returns (mean, stderr) arrays over the requested start states. Paths
    are weighted by the exponential of the continuous functional of
    mu_hat + Lu plus the jump sums of F; killed paths contribute zero.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if n_paths < 2:
        raise ValueError("need at least 2 paths for a standard error")
    starts = list(range(model.n)) if start_states is None else list(start_states)
    q, cdf = _sim_tables(model)
    c = pert.mu.density + model.apply_L(pert.u)
    F = pert.F.F
    f = np.asarray(f, dtype=float)
    t = float(t)

    means = np.zeros(len(starts))
    errs = np.zeros_like(means)
    for pos, x0 in enumerate(starts):
        def one(rng, x0=x0):
            return (_fk_path_value(x0, t, q, cdf, c, F, f, rng),)

        total, total2 = _mc_sums(one, n_paths, seed, pos * n_paths, 1, threads)
        mean, err = _mean_stderr(total, total2, n_paths)
        means[pos], errs[pos] = mean[0], err[0]
    return means, errs


def girsanov_mc_check(model, u, t, f, *, n_paths, seed, threads=1):
    """Sample the tilt weight Z_t and compare against the tilted semigroup.

    Returns a dict with the per-state estimates of E_x[Z_t] (target 1, the
    martingale property), E_x[Z_t f(X_t); t < zeta], and the exact value of
    the latter computed as exp(t L~) f under the tilted model.
    """
    u = np.asarray(u, dtype=float)
    q, cdf = _sim_tables(model)
    c = model.apply_L(u) + nu_measure(model, u).density
    f = np.asarray(f, dtype=float)
    t = float(t)

    mean_z = np.zeros(model.n)
    err_z = np.zeros(model.n)
    mean_zf = np.zeros(model.n)
    err_zf = np.zeros(model.n)
    for x0 in range(model.n):
        def one(rng, x0=x0):
            return _girsanov_path_values(x0, t, q, cdf, c, u, f, rng)

        total, total2 = _mc_sums(one, n_paths, seed, x0 * n_paths, 2, threads)
        mean, err = _mean_stderr(total, total2, n_paths)
        mean_z[x0], mean_zf[x0] = mean
        err_z[x0], err_zf[x0] = err

    tilted = tilt_model(model, u)
    exact = tilted.factor.expm_apply(t, f)
    return {
        "mean_Z": mean_z, "stderr_Z": err_z,
        "mean_Zf": mean_zf, "stderr_Zf": err_zf,
        "exact_Zf": exact,
    }


@dataclass(frozen=True)
class ReductionResult:
    """Both sides of the change-of-measure identity and their residual."""

    lhs: np.ndarray
    rhs: np.ndarray
    residual: float
    tilted_model: object
    reduced_pert: Perturbation


def reduce_via_girsanov(model, pert, t, f, *, nu_shift=0.0):
    """Evaluate the semigroup directly and through the tilted model.

    The identity: the (u, mu, F) semigroup of the base model equals
    e^{-u} times the (0, mu - nu, F) semigroup of the tilted model applied
    to e^{u} f. ``nu_shift`` adds a constant to the compensator density and
    exists so that callers can verify the residual actually detects a
    broken reduction.
    """
    f = np.asarray(f, dtype=float)
    u = pert.u
    lhs = fk_apply_exact(fk_generator(model, pert), t, f)

    tilted = tilt_model(model, u)
    reduced_density = pert.mu.density - nu_measure(model, u).density + nu_shift
    reduced = Perturbation(np.zeros(model.n), SmoothMeasure(reduced_density), pert.F)
    rhs = np.exp(-u) * fk_apply_exact(fk_generator(tilted, reduced), t, np.exp(u) * f)

    residual = float(np.abs(lhs - rhs).max())
    return ReductionResult(lhs, rhs, residual, tilted, reduced)
