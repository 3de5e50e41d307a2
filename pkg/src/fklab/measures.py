"""Signed measures and symmetric jump functions used as perturbation data."""

from __future__ import annotations

import numpy as np


class SmoothMeasure:
    """Signed measure given by its density against the reference measure m.

    The stored vector is the Radon-Nikodym density, so the mass of state x
    is density[x] * m[x]. The positive/negative parts give the canonical
    decomposition mu = mu_plus - mu_minus.
    """

    def __init__(self, density):
        density = np.array(density, dtype=float, copy=True)
        if density.ndim != 1:
            raise ValueError("density must be a vector")
        if not np.all(np.isfinite(density)):
            raise ValueError("density must be finite")
        density.setflags(write=False)
        self.density = density

    @property
    def n(self):
        return self.density.size

    @property
    def positive_part(self):
        return SmoothMeasure(np.maximum(self.density, 0.0))

    @property
    def negative_part(self):
        return SmoothMeasure(np.maximum(-self.density, 0.0))

    @property
    def absolute(self):
        return SmoothMeasure(np.abs(self.density))

    @property
    def sup_norm(self):
        return float(np.abs(self.density).max())

    def masses(self, m):
        """Atom masses against the reference measure m."""
        return self.density * np.asarray(m, dtype=float)

    def __add__(self, other):
        return SmoothMeasure(self.density + other.density)

    def __sub__(self, other):
        return SmoothMeasure(self.density - other.density)

    def __neg__(self):
        return SmoothMeasure(-self.density)

    def __mul__(self, scalar):
        return SmoothMeasure(self.density * float(scalar))

    __rmul__ = __mul__

    def __repr__(self):
        return f"SmoothMeasure(n={self.n}, sup={self.sup_norm:.4g})"


class JumpFunction:
    """Symmetric function F(x, y) on pairs of states, zero on the diagonal."""

    def __init__(self, F, *, rtol=1e-12):
        F = np.array(F, dtype=float, copy=True)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError("F must be a square matrix")
        if not np.all(np.isfinite(F)):
            raise ValueError("F must be finite")
        scale = max(np.abs(F).max(), 1.0)
        if np.abs(F - F.T).max() > rtol * scale:
            raise ValueError("F must be symmetric")
        if np.any(np.diag(F) != 0):
            raise ValueError("F must vanish on the diagonal")
        F.setflags(write=False)
        self.F = F

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, n)))

    @property
    def n(self):
        return self.F.shape[0]

    @property
    def sup_norm(self):
        return float(np.abs(self.F).max())

    @property
    def is_zero(self):
        return not self.F.any()

    def __repr__(self):
        return f"JumpFunction(n={self.n}, sup={self.sup_norm:.4g})"


class Perturbation:
    """Triple (u, mu, F) defining a generalized Feynman-Kac weight.

    u enters through its zero-energy additive functional, mu through the
    continuous additive functional of its density, and F through the sum
    over jumps of F(X_{s-}, X_s).
    """

    def __init__(self, u, mu, F):
        u = np.array(u, dtype=float, copy=True)
        if u.ndim != 1:
            raise ValueError("u must be a vector")
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")
        u.setflags(write=False)
        if not isinstance(mu, SmoothMeasure):
            mu = SmoothMeasure(mu)
        if not isinstance(F, JumpFunction):
            F = JumpFunction(F)
        if not (u.size == mu.n == F.n):
            raise ValueError("u, mu, F must share the state count")
        self.u = u
        self.mu = mu
        self.F = F

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n), SmoothMeasure(np.zeros(n)), JumpFunction.zero(n))

    @property
    def n(self):
        return self.u.size

    @property
    def is_zero(self):
        return not (self.u.any() or self.mu.density.any() or self.F.F.any())

    def __repr__(self):
        return (f"Perturbation(|u|={np.abs(self.u).max():.3g}, "
                f"|mu|={self.mu.sup_norm:.3g}, |F|={self.F.sup_norm:.3g})")
