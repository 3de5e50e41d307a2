"""Config dialect shared by the CLI and the HTTP service.

A request names a model (inline matrices, a lattice builder, or a JSON file
reference), a perturbation (vectors, position expressions, or structured
bump/gamma specs), and command parameters. Validation is strict: unknown
fields are rejected so typos surface as 422s with a path to the field.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import lattice
from .chain import StateSpace, build_model, model_from_json
from .exprs import compile_expr, eval_on_pairs, eval_on_positions
from .measures import JumpFunction, Perturbation, SmoothMeasure


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExplicitModelSpec(_Strict):
    kind: Literal["explicit"] = "explicit"
    file: Optional[str] = None
    m: Optional[list[float]] = None
    N: Optional[list[list[float]]] = None
    jumps: Optional[list[tuple[int, int, float]]] = None
    kappa: Union[float, list[float]] = 0.0
    positions: Optional[list[float]] = None
    labels: Optional[list[str]] = None

    @model_validator(mode="after")
    def _source(self):
        inline = self.m is not None
        if self.file is None and not inline:
            raise ValueError("explicit model needs either file or m with N/jumps")
        if self.file is not None and inline:
            raise ValueError("give file or inline matrices, not both")
        if inline and (self.N is None) == (self.jumps is None):
            raise ValueError("inline model needs exactly one of N or jumps")
        return self


class StableLatticeModelSpec(_Strict):
    kind: Literal["stable_lattice"]
    L: int = Field(ge=1)
    h: float = Field(gt=0)
    alpha: float = Field(gt=0, lt=2)
    c: float = Field(default=1.0, gt=0)
    boundary: Literal["kill-outside", "reflect-truncate"] = "kill-outside"
    c_bar: Optional[float] = Field(default=None, gt=0)


class DiffusionChainModelSpec(_Strict):
    kind: Literal["diffusion_chain"]
    L: int = Field(ge=1)
    h: float = Field(gt=0)
    a: Union[float, str] = 1.0
    boundary: Literal["kill-outside", "reflect-truncate"] = "reflect-truncate"

    @field_validator("a")
    @classmethod
    def _positive_constant(cls, v):
        if isinstance(v, (int, float)) and v <= 0:
            raise ValueError("diffusion coefficient must be positive")
        return v


ModelSpec = Union[ExplicitModelSpec, StableLatticeModelSpec, DiffusionChainModelSpec]


class BumpSpec(_Strict):
    kind: Literal["bump"]
    center: float = 0.0
    radius: float = Field(gt=0)
    height: float


class FGammaSpec(_Strict):
    kind: Literal["gamma"]
    c: float = Field(ge=0)
    gamma: float = Field(gt=0)
    center: float = 0.0
    K_radius: Optional[float] = Field(default=None, gt=0)
    K: Optional[list[int]] = None

    @model_validator(mode="after")
    def _region(self):
        if (self.K is None) == (self.K_radius is None):
            raise ValueError("give exactly one of K (state indices) or K_radius")
        return self


VectorSpec = Union[float, str, BumpSpec, list[float], None]
JumpSpec = Union[str, FGammaSpec, list[list[float]], None]


class PerturbationSpec(_Strict):
    u: VectorSpec = None
    mu: VectorSpec = None
    F: JumpSpec = None


class MCSpec(_Strict):
    n_paths: int = Field(default=4000, ge=1)
    seed: Optional[int] = None


class SpectralRequest(_Strict):
    model: ModelSpec = Field(discriminator="kind")
    perturbation: PerturbationSpec = PerturbationSpec()
    p_grid: list[Union[float, str]] = [1.0, 1.5, 2.0, 4.0, math.inf]
    t_fixed: float = Field(default=20.0, gt=0)
    t_grid: Optional[list[float]] = None
    mc: Optional[MCSpec] = None
    seed: Optional[int] = None
    threads: int = Field(default=1, ge=1)
    truncation_trend: Optional[str] = None
    expect_verdict: Optional[str] = None

    @field_validator("p_grid")
    @classmethod
    def _coerce_inf(cls, grid):
        out = []
        for p in grid:
            if isinstance(p, str):
                if p != "inf":
                    raise ValueError(f"p entries are numbers or 'inf', got {p!r}")
                out.append(math.inf)
            else:
                p = float(p)
                if p < 1:
                    raise ValueError("p must be >= 1")
                out.append(p)
        return out

    @field_validator("t_grid")
    @classmethod
    def _positive_grid(cls, grid):
        if grid is not None and (len(grid) < 2 or min(grid) <= 0):
            raise ValueError("t_grid needs at least two positive times")
        return grid

    @model_validator(mode="after")
    def _mc_seed(self):
        if self.mc is not None and self.seed is None and self.mc.seed is None:
            raise ValueError("seed is mandatory when the MC route is requested")
        return self


class SuiteSpec(_Strict):
    seed: int = 7
    count: int = Field(default=100, ge=1)
    n_states: int = Field(default=5, ge=2)


class IdentityRequest(_Strict):
    suite: SuiteSpec = SuiteSpec()
    t: float = Field(default=0.7, gt=0)
    tolerance: float = Field(default=1e-8, gt=0)
    nu_shift: float = 0.0  # deliberate-break hook; nonzero breaks the reduction


class KinfCheckSpec(_Strict):
    kind: Literal["kinf"]
    eps: float = Field(gt=0)
    alpha: Optional[float] = Field(default=None, ge=0)
    delta: Optional[float] = Field(default=None, gt=0)
    max_radius_frac: Optional[float] = Field(default=None, gt=0, le=1)
    expect: Optional[Literal["pass", "fail"]] = None


class K1CheckSpec(_Strict):
    kind: Literal["k1"]
    K: list[int]
    delta: float = Field(gt=0)
    alpha: Optional[float] = Field(default=None, ge=0)
    expect: Optional[Literal["pass", "fail"]] = None


class StableCheckSpec(_Strict):
    kind: Literal["stable"]
    alpha: float = Field(gt=0, lt=2)
    d: int = Field(default=1, ge=1)
    decay_ratio: float = Field(default=0.5, gt=0, lt=1)
    eps_tail: Optional[float] = Field(default=None, gt=0)
    expect: Optional[Literal["pass", "fail"]] = None


class StollmannVoigtCheckSpec(_Strict):
    kind: Literal["stollmann_voigt"]
    alpha: Optional[float] = Field(default=None, ge=0)
    n_trials: int = Field(default=100, ge=1)
    seed: int = 0


class JClassCheckSpec(_Strict):
    kind: Literal["jclass"]
    F: JumpSpec
    eps: float = Field(gt=0)
    alpha: Optional[float] = Field(default=None, ge=0)
    max_radius_frac: Optional[float] = Field(default=None, gt=0, le=1)
    expect: Optional[Literal["pass", "fail"]] = None


KatoCheckSpec = Annotated[
    Union[KinfCheckSpec, K1CheckSpec, StableCheckSpec,
          StollmannVoigtCheckSpec, JClassCheckSpec],
    Field(discriminator="kind"),
]


class KatoRequest(_Strict):
    model: ModelSpec = Field(discriminator="kind")
    mu: VectorSpec = None
    checks: list[KatoCheckSpec] = Field(min_length=1)


class TruncationRequest(_Strict):
    ladder: list[int] = [64, 128, 256]
    h: float = Field(default=0.05, gt=0)
    alpha: float = Field(default=1.0, gt=0, lt=2)
    boundary: Literal["kill-outside", "reflect-truncate"] = "reflect-truncate"
    perturbation: PerturbationSpec = PerturbationSpec()
    p: Union[float, str] = math.inf
    expect_trend: Optional[str] = None

    @field_validator("ladder")
    @classmethod
    def _ladder_ok(cls, ladder):
        if len(ladder) < 2 or min(ladder) < 2:
            raise ValueError("ladder needs at least two sizes >= 2")
        if sorted(ladder) != list(ladder):
            raise ValueError("ladder must be increasing")
        return ladder

    @field_validator("p")
    @classmethod
    def _p_ok(cls, p):
        if isinstance(p, str):
            if p != "inf":
                raise ValueError("p is a number or 'inf'")
            return math.inf
        if p < 1:
            raise ValueError("p must be >= 1")
        return float(p)


def realize_model(spec, *, base_dir=None):
    """Build the ReversibleModel a config names."""
    if isinstance(spec, StableLatticeModelSpec):
        return lattice.build_stable_lattice(lattice.StableLatticeSpec(
            L=spec.L, h=spec.h, alpha=spec.alpha, c=spec.c,
            boundary=spec.boundary, c_bar=spec.c_bar))
    if isinstance(spec, DiffusionChainModelSpec):
        a = spec.a
        if isinstance(a, str):
            f = compile_expr(a, variables=("x",))
            a = lambda x, f=f: f(x=x)
        return lattice.build_diffusion_chain(lattice.DiffusionChainSpec(
            L=spec.L, h=spec.h, a=a, boundary=spec.boundary))
    if spec.file is not None:
        path = Path(spec.file)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return model_from_json(path.read_text())
    m = np.asarray(spec.m, dtype=float)
    n = m.size
    if spec.N is not None:
        N = np.asarray(spec.N, dtype=float)
    else:
        N = np.zeros((n, n))
        for i, j, rate in spec.jumps:
            N[i, j] = rate
    kappa = (np.full(n, float(spec.kappa)) if np.isscalar(spec.kappa)
             else np.asarray(spec.kappa, dtype=float))
    positions = None if spec.positions is None else np.asarray(spec.positions, float)
    space = StateSpace(m, labels=spec.labels, positions=positions)
    return build_model(space, N, kappa)


def realize_vector(spec, model, *, name="vector"):
    """Turn a vector spec (constant, expression, bump, or list) into values."""
    if spec is None:
        return np.zeros(model.n)
    if isinstance(spec, BumpSpec):
        u, _ = lattice.build_u_bump(model, spec.center, spec.radius, spec.height)
        return u
    if isinstance(spec, str):
        if model.space.positions is None:
            raise ValueError(f"{name} given as an expression but the model has no positions")
        return eval_on_positions(spec, model.space.positions)
    if isinstance(spec, (int, float)):
        return np.full(model.n, float(spec))
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (model.n,):
        raise ValueError(f"{name} has length {arr.size}, model has {model.n} states")
    return arr


def realize_jump(spec, model):
    if spec is None:
        return JumpFunction.zero(model.n)
    if isinstance(spec, FGammaSpec):
        if spec.K is not None:
            K = spec.K
        else:
            x = model.space.positions[:, 0]
            K = np.flatnonzero(np.abs(x - spec.center) <= spec.K_radius)
        return lattice.build_F_gamma(model, spec.c, spec.gamma, K)
    if isinstance(spec, str):
        if model.space.positions is None:
            raise ValueError("F given as an expression but the model has no positions")
        V = eval_on_pairs(spec, model.space.positions)
        return JumpFunction(0.5 * (V + V.T))
    F = np.asarray(spec, dtype=float)
    return JumpFunction(0.5 * (F + F.T))


def realize_perturbation(spec, model):
    u = realize_vector(spec.u, model, name="u")
    mu = SmoothMeasure(realize_vector(spec.mu, model, name="mu"))
    F = realize_jump(spec.F, model)
    return Perturbation(u, mu, F)
