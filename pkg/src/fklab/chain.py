"""Reversible Markov jump models on finite state spaces.

A model is a triple (m, N, kappa): a positive reference measure m on the
states, nonnegative off-diagonal jump rates N(x, y) with m(x)N(x, y)
symmetric, and a nonnegative killing rate kappa. The associated Dirichlet
form is

    E(f, g) = 1/2 sum_{x,y} (f(x)-f(y))(g(x)-g(y)) J(x,y) + sum_x f g kappa m

with J(x, y) = m(x) N(x, y), and the generator acts by

    (L f)(x) = sum_y N(x, y)(f(y) - f(x)) - kappa(x) f(x).

On a finite space every function is bounded and quasi-continuity collapses
to plain pointwise evaluation, so none of the usual capacity caveats apply.
"""

from __future__ import annotations

import json
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DetailedBalanceViolation, EigenFailure, NotIrreducible, SingularOperator

SERIAL_FORMAT = "fklab-model"
SERIAL_VERSION = 1


def _readonly(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class StateSpace:
    """Finite state space with reference measure and optional geometry.

    Parameters
    ----------
    m : array_like
        Strictly positive masses of the reference measure, one per state.
    labels : sequence of str, optional
        State names; defaults to stringified indices.
    positions : array_like, optional
        Coordinates of shape (n,) or (n, d) used by geometric builders and
        ball-based certificates.
    """

    def __init__(self, m, labels=None, positions=None):
        self.m = _readonly(m)
        if self.m.ndim != 1 or self.m.size == 0:
            raise ValueError("m must be a nonempty vector")
        if not np.all(np.isfinite(self.m)) or np.any(self.m <= 0):
            raise ValueError("reference measure must be finite and strictly positive")
        n = self.m.size
        if labels is None:
            labels = [str(i) for i in range(n)]
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} states")
        self.labels = tuple(str(s) for s in labels)
        if positions is not None:
            positions = np.atleast_1d(np.asarray(positions, dtype=float))
            if positions.ndim == 1:
                positions = positions[:, None]
            if positions.shape[0] != n:
                raise ValueError("positions must have one row per state")
            positions = _readonly(positions)
        self.positions = positions

    @property
    def n(self):
        return self.m.size

    def radii(self):
        """Euclidean distance of each state from the origin."""
        if self.positions is None:
            raise ValueError("state space carries no positions")
        return np.linalg.norm(self.positions, axis=1)

    def __repr__(self):
        return f"StateSpace(n={self.n}, geometric={self.positions is not None})"


class SpectralFactor:
    """Eigenfactorization of a matrix A that is symmetric in L^2(m).

    Stores the eigensystem of S = D^{1/2} A D^{-1/2} (D = diag(m), S
    symmetric) and evaluates exp(tA) and related quantities from it. All
    semigroup kernels in the package go through this single code path.
    """

    def __init__(self, mat, m):
        self.m = np.asarray(m, dtype=float)
        self.sqrt_m = np.sqrt(self.m)
        sym = self.sqrt_m[:, None] * np.asarray(mat, dtype=float) / self.sqrt_m[None, :]
        sym = 0.5 * (sym + sym.T)  # strip rounding asymmetry
        try:
            self.w, self.U = np.linalg.eigh(sym)
        except np.linalg.LinAlgError as err:
            raise EigenFailure(f"symmetric eigensolve failed: {err}") from err

    @property
    def top(self):
        """Largest eigenvalue of A."""
        return float(self.w[-1])

    @property
    def gap(self):
        """Distance from the top eigenvalue to the rest of the spectrum."""
        if self.w.size < 2:
            return np.inf
        return float(self.w[-1] - self.w[-2])

    def expm(self, t, shift=0.0):
        """Dense kernel of exp(t (A - shift I)); entrywise nonnegative."""
        E = self.U * np.exp(t * (self.w - shift))[None, :]
        K = (E @ self.U.T) * (self.sqrt_m[None, :] / self.sqrt_m[:, None])
        # exp(tA) has nonnegative entries; clip eigensolve noise
        np.clip(K, 0.0, None, out=K)
        return K

    def expm_apply(self, t, f, shift=0.0):
        """exp(t (A - shift I)) f without forming the kernel."""
        g = self.U.T @ (self.sqrt_m * np.asarray(f, dtype=float))
        return (self.U @ (np.exp(t * (self.w - shift)) * g)) / self.sqrt_m

    def sym_expm(self, t, shift=0.0):
        """exp(t (S - shift I)) for the symmetrized matrix."""
        return (self.U * np.exp(t * (self.w - shift))[None, :]) @ self.U.T


class ReversibleModel:
    """Validated reversible jump model. Construct via :func:`build_model`.

    Instances are immutable by convention: all arrays are read-only and the
    derived operators are cached.
    """

    def __init__(self, space, N, kappa):
        self.space = space
        self.N = _readonly(N)
        self.kappa = _readonly(kappa)

    @property
    def n(self):
        return self.space.n

    @property
    def m(self):
        return self.space.m

    @cached_property
    def J(self):
        """Symmetric jump measure J(x, y) = m(x) N(x, y)."""
        return _readonly(self.m[:, None] * self.N)

    @cached_property
    def total_rate(self):
        """q(x) = sum_y N(x, y) + kappa(x), the exponential holding rate."""
        return _readonly(self.N.sum(axis=1) + self.kappa)

    @property
    def is_conservative(self):
        return not self.kappa.any()

    @cached_property
    def L(self):
        """Generator matrix: off-diagonal N, diagonal -sum_y N - kappa."""
        L = np.array(self.N, dtype=float)
        np.fill_diagonal(L, 0.0)
        np.fill_diagonal(L, -(L.sum(axis=1) + self.kappa))
        return _readonly(L)

    @cached_property
    def factor(self):
        return SpectralFactor(self.L, self.m)

    def apply_L(self, f):
        return self.L @ np.asarray(f, dtype=float)

    def __repr__(self):
        kind = "conservative" if self.is_conservative else "killed"
        return f"ReversibleModel(n={self.n}, {kind})"


def build_model(space, N, kappa=None, *, rtol=1e-12):
    """Validate (m, N, kappa) and assemble a :class:`ReversibleModel`.

    Checks: shapes, nonnegativity, zero diagonal of N, detailed balance of
    J = diag(m) N against transposition (relative tolerance ``rtol``), and
    irreducibility of the jump graph.
    """
    N = np.array(N, dtype=float, copy=True)
    n = space.n
    if N.shape != (n, n):
        raise ValueError(f"N must be {n}x{n}, got {N.shape}")
    if not np.all(np.isfinite(N)):
        raise ValueError("jump rates must be finite")
    if np.any(N < 0):
        raise ValueError("jump rates must be nonnegative")
    if np.any(np.diag(N) != 0):
        raise ValueError("N must have zero diagonal")
    if kappa is None:
        kappa = np.zeros(n)
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (n,):
        raise ValueError("kappa must be a vector over states")
    if not np.all(np.isfinite(kappa)) or np.any(kappa < 0):
        raise ValueError("killing rates must be finite and nonnegative")

    J = space.m[:, None] * N
    scale = max(J.max(), 1e-300)
    imbalance = np.abs(J - J.T)
    worst = np.unravel_index(np.argmax(imbalance), imbalance.shape)
    if imbalance[worst] > rtol * scale:
        x, y = worst
        raise DetailedBalanceViolation(
            f"m(x)N(x,y) asymmetric at ({x},{y}): "
            f"{J[x, y]!r} vs {J[y, x]!r} (tolerance {rtol * scale:.3e})"
        )

    if n > 1:
        graph = csr_matrix((N > 0).astype(np.int8))
        ncomp, _ = connected_components(graph, directed=True, connection="strong")
        if ncomp != 1:
            raise NotIrreducible(f"jump graph splits into {ncomp} communicating classes")

    return ReversibleModel(space, N, kappa)


def generator(model):
    """Generator matrix L of the (possibly killed) jump process."""
    return model.L


def dirichlet_energy(model, f, g=None):
    """Dirichlet form E(f, g); g defaults to f.

    Computed from the symmetric jump measure and the killing term, not from
    the generator, so tests can cross-check E(f, f) = <-Lf, f>_m.
    """
    f = np.asarray(f, dtype=float)
    g = f if g is None else np.asarray(g, dtype=float)
    df = f[:, None] - f[None, :]
    dg = g[:, None] - g[None, :]
    jump = 0.5 * float(np.sum(df * dg * model.J))
    kill = float(np.sum(f * g * model.kappa * model.m))
    return jump + kill


def transition_semigroup(model, t):
    """Transition kernel P_t = exp(tL) as a dense matrix."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    return model.factor.expm(float(t))


def resolvent(model, alpha):
    """Operator kernel of G_alpha = (alpha - L)^{-1}.

    alpha = 0 is allowed only when some killing is present (the model is
    then transient and L itself is invertible).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0 and model.is_conservative:
        raise SingularOperator("alpha = 0 resolvent of a conservative model")
    A = alpha * np.eye(model.n) - model.L
    return np.linalg.solve(A, np.eye(model.n))


def green_density(model, alpha=0.0):
    """Green kernel density g(x, y) = G_alpha(x, y) / m(y)."""
    return resolvent(model, alpha) / model.m[None, :]


def alpha_subprocess(model, alpha):
    """Model of the subprocess killed at additional constant rate alpha."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return ReversibleModel(model.space, model.N, model.kappa + alpha)


def tilt_model(model, u):
    """Girsanov-tilted model: m e^{-2u}, N(x,y) e^{u(x)-u(y)}, kappa e^{u}.

    The tilted triple satisfies detailed balance by construction; it is
    revalidated through :func:`build_model` anyway.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n,):
        raise ValueError("u must be a vector over states")
    eu = np.exp(u)
    space = StateSpace(model.m * np.exp(-2.0 * u), labels=model.space.labels,
                       positions=model.space.positions)
    N = model.N * (eu[:, None] / eu[None, :])
    return build_model(space, N, model.kappa * eu, rtol=1e-9)


def model_to_json(model):
    """Serialize a model to JSON text with exact float round-trip."""
    N = model.N
    rows, cols = np.nonzero(N)
    payload = {
        "format": SERIAL_FORMAT,
        "version": SERIAL_VERSION,
        "states": list(model.space.labels),
        "m": model.m.tolist(),
        "kappa": model.kappa.tolist(),
        "positions": None if model.space.positions is None else model.space.positions.tolist(),
        "jumps": [[int(i), int(j), N[i, j]] for i, j in zip(rows, cols)],
    }
    return json.dumps(payload, sort_keys=True)


def model_from_json(text):
    """Rebuild a model from :func:`model_to_json` output, revalidating it."""
    payload = json.loads(text)
    if payload.get("format") != SERIAL_FORMAT:
        raise ValueError("not a serialized model")
    if payload.get("version") != SERIAL_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')}")
    space = StateSpace(payload["m"], labels=payload["states"], positions=payload["positions"])
    n = space.n
    N = np.zeros((n, n))
    for i, j, rate in payload["jumps"]:
        N[i, j] = rate
    return build_model(space, N, np.asarray(payload["kappa"], dtype=float))
