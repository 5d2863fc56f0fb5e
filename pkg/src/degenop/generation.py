"""Generation windows, domain descriptions and regime flags.

All tests compare the scaling index (m+1)/p of the space against open
intervals; equality with an endpoint never counts as inside.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .operator_core import (IndicialData, OperatorParams, SpaceParams,
                            indicial_roots, validate)
from .transform_calculus import KelvinStep


class GenerationError(ValueError):
    pass


class RegimeFlag(str, Enum):
    NEUMANN_AUTOMATIC = "NEUMANN_AUTOMATIC"
    NEUMANN_TRACE_REQUIRED = "NEUMANN_TRACE_REQUIRED"
    WN_EQUALS_WV = "WN_EQUALS_WV"
    ALL_SPACES_COINCIDE = "ALL_SPACES_COINCIDE"
    RELLICH_DOMAIN = "RELLICH_DOMAIN"
    MIXED_DERIV_ESTIMATE = "MIXED_DERIV_ESTIMATE"
    DIRICHLET_OBLIQUE_COINCIDE = "DIRICHLET_OBLIQUE_COINCIDE"
    ALTERNATIVE_REALIZATION_EXISTS = "ALTERNATIVE_REALIZATION_EXISTS"
    DIRICHLET_ENLARGED_WINDOW = "DIRICHLET_ENLARGED_WINDOW"


BC_KINDS = ("neumann", "oblique", "dirichlet")


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str
    v: tuple | None = None  # oblique direction, optional

    def __post_init__(self) -> None:
        if self.kind not in BC_KINDS:
            raise ValueError(f"boundary condition kind must be one of {BC_KINDS}")
        if self.v is not None:
            object.__setattr__(self, "v", tuple(float(a) for a in self.v))

    @property
    def mode(self) -> str:
        return "dirichlet" if self.kind == "dirichlet" else "oblique"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.v is not None:
            out["v"] = list(self.v)
        return out


@dataclass
class GenerationReport:
    generates: bool
    window: tuple | None
    value: float
    realization: str
    reasons: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "generates": self.generates,
            "window": None if self.window is None else [float(a) for a in self.window],
            "value": self.value,
            "realization": self.realization,
            "reasons": list(self.reasons),
        }


@dataclass(frozen=True)
class TraceCondition:
    exponent: float
    limit: str          # "zero" or "finite"
    expression: str

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "limit": self.limit, "expression": self.expression}


@dataclass
class DomainSpec:
    space_family: str
    w: tuple
    weight_shift: float
    measure_exponent: float
    trace_condition: TraceCondition
    equivalence_flags: list
    core_description: str

    def to_dict(self) -> dict:
        return {
            "space_family": self.space_family,
            "w": [float(a) for a in self.w],
            "weight_shift": self.weight_shift,
            "measure_exponent": self.measure_exponent,
            "trace_condition": self.trace_condition.to_dict(),
            "equivalence_flags": list(self.equivalence_flags),
            "core_description": self.core_description,
        }


def inside(value: float, window: tuple) -> bool:
    return window[0] < value < window[1]


def alpha1_minus(params: OperatorParams) -> float:
    """Negative part of alpha1; 0 when there are no tangential variables."""
    return max(-params.alpha1, 0.0) if params.dim_x else 0.0


def normal_drift(params: OperatorParams) -> np.ndarray:
    """Boundary direction (d, c + beta gamma) of the oblique realization."""
    return np.append(params.d, params.c + params.beta_alpha * params.gamma)


def _require_admissible(params: OperatorParams) -> None:
    rep = validate(params)
    if not rep.ok:
        raise GenerationError(f"inadmissible operator: {', '.join(rep.violations)}")


def _realization(params: OperatorParams, mode: str) -> str:
    unequal = params.dim_x > 0 and params.alpha1 != params.alpha2
    return mode + ("-unequal-exponents" if unequal else "")


def oblique_window(params: OperatorParams) -> tuple:
    return (alpha1_minus(params), params.c / params.gamma + 1.0 - params.alpha2)


def dirichlet_window(params: OperatorParams, ind: IndicialData | None = None) -> tuple:
    ind = ind or indicial_roots(params)
    return (ind.s1 + alpha1_minus(params), ind.s2 + 2.0 - params.alpha2)


def check_generation(params: OperatorParams, space: SpaceParams,
                     bc: BoundaryCondition) -> GenerationReport:
    """Decide whether the realization selected by ``bc`` generates an
    analytic semigroup on L^p with weight y^m."""
    _require_admissible(params)
    val = space.scaling_index
    mode = bc.mode
    real = _realization(params, mode)
    reasons: list[str] = []
    if mode == "oblique":
        if params.b != 0.0:
            raise GenerationError("the oblique realization requires b = 0")
        w = normal_drift(params)
        if bc.kind == "neumann" and np.any(params.d != 0.0):
            raise GenerationError("a Neumann condition requires d = 0; use an oblique condition")
        if w[-1] == 0.0 and np.any(params.d != 0.0):
            return GenerationReport(False, None, val, real,
                                    ["tangential drift with vanishing normal component "
                                     "c + (alpha1 - alpha2) gamma / 2"])
        if bc.v is not None:
            v = np.asarray(bc.v)
            if v.size != w.size or np.linalg.matrix_rank(np.vstack([v, w]), tol=1e-12) > 1:
                reasons.append("boundary direction is not parallel to (d, c + beta gamma)")
                return GenerationReport(False, None, val, real, reasons)
        win = oblique_window(params)
    else:
        win = dirichlet_window(params)
    ok = inside(val, win)
    if not ok:
        if win[0] >= win[1]:
            reasons.append("empty window")
        else:
            reasons.append("(m+1)/p outside the window")
    return GenerationReport(ok, win, val, real, reasons)


def domain_description(params: OperatorParams, space: SpaceParams,
                       bc: BoundaryCondition) -> DomainSpec:
    rep = check_generation(params, space, bc)
    if not rep.generates:
        raise GenerationError("no generation in this configuration: " + "; ".join(rep.reasons))
    flags = sorted(f.value for f in regime_flags(params, space))
    w = normal_drift(params)
    beta = params.beta_alpha
    tang = f"y^{beta:g} w_x.grad_x u + " if params.dim_x else ""
    if bc.mode == "oblique":
        sigma = params.c / params.gamma
        family = "W_N" if not np.any(params.d != 0.0) else "W_w"
        expr = f"lim_(y->0) y^{sigma:g} ({tang}w_y D_y u) = 0"
        return DomainSpec(
            space_family=family, w=tuple(w), weight_shift=0.0,
            measure_exponent=space.m,
            trace_condition=TraceCondition(sigma, "zero", expr),
            equivalence_flags=flags,
            core_description=("smooth functions with bounded support in R^N x [0, inf) "
                              f"satisfying {tang}w_y D_y u = 0 near y = 0"),
        )
    ind = indicial_roots(params)
    s1 = ind.s1
    w = w - 2.0 * s1 * np.append(params.q, params.gamma)
    limit = "zero" if ind.D > 0 else "finite"
    expr = (f"lim_(y->0) y^{ind.s2:g} u = 0" if limit == "zero"
            else f"lim_(y->0) y^{ind.s2:g} u exists")
    return DomainSpec(
        space_family="y^-s1 W_w", w=tuple(w), weight_shift=-s1 * space.p,
        measure_exponent=space.m - s1 * space.p,
        trace_condition=TraceCondition(ind.s2, limit, expr),
        equivalence_flags=flags,
        core_description=(f"y^{-s1:g} times smooth functions with bounded support in "
                          f"R^N x [0, inf) satisfying {tang}w_y D_y v = 0 near y = 0"),
    )


def _equal_exponent_flags(P: OperatorParams, val: float, ind: IndicialData | None) -> set:
    """Flags whose criteria are stated for alpha1 = alpha2 = alpha."""
    a = P.alpha2
    am = alpha1_minus(P)
    out = set()
    if ind is None:
        return out
    s1, s2 = ind.s1, ind.s2
    if s1 + 2.0 - a < val < s2 + 2.0 - a:
        out.add(RegimeFlag.RELLICH_DOMAIN)
    if ind.D > 0 and s2 + am < val < s1 + 2.0 - a:
        out.add(RegimeFlag.ALTERNATIVE_REALIZATION_EXISTS)
    if P.b == 0.0:
        if P.c > P.gamma:
            out.add(RegimeFlag.DIRICHLET_OBLIQUE_COINCIDE)
        elif P.c < P.gamma and P.c / P.gamma - 1.0 + am < val < 2.0 - a:
            out.add(RegimeFlag.DIRICHLET_ENLARGED_WINDOW)
    return out


def regime_flags(params: OperatorParams, space: SpaceParams) -> set:
    """Structural statements that hold for the given coefficients and space.

    Flags tied to equal exponents are evaluated after the exponent balancing
    transform, which carries the general case onto that one.
    """
    _require_admissible(params)
    P = params
    val = space.scaling_index
    flags = set()
    if val > 1.0 - P.alpha2:
        flags.add(RegimeFlag.NEUMANN_AUTOMATIC)
    elif val < 1.0 - P.alpha2:
        flags.add(RegimeFlag.NEUMANN_TRACE_REQUIRED)
    if val > 1.0 - P.alpha_mixed:
        flags.add(RegimeFlag.WN_EQUALS_WV)
    if val > 2.0 - P.alpha2:
        flags.add(RegimeFlag.ALL_SPACES_COINCIDE)
    ind = indicial_roots(P)
    if inside(val, dirichlet_window(P, ind)) and val > ind.s1 + 1.0 - P.alpha_mixed:
        flags.add(RegimeFlag.MIXED_DERIV_ESTIMATE)
    beta = P.beta_alpha
    if P.dim_x and beta != 0.0:
        step = KelvinStep(0.0, beta, space.p)
        Pt, St = step.conjugate(P, space)
        Pt = Pt.replace(alpha2=Pt.alpha1)
        flags |= _equal_exponent_flags(Pt, St.scaling_index, step.map_indicial(ind))
    else:
        flags |= _equal_exponent_flags(P.replace(alpha1=P.alpha2) if not P.dim_x else P,
                                       val, ind)
    return flags


def regime_flags_direct(params: OperatorParams, space: SpaceParams) -> set:
    """Same flags evaluated with closed-form criteria for unequal exponents.
    Kept as an independent route for cross-checking ``regime_flags``."""
    _require_admissible(params)
    P = params
    val = space.scaling_index
    a1, a2 = P.alpha1, P.alpha2
    beta = P.beta_alpha
    am = alpha1_minus(P)
    ind = indicial_roots(P)
    s1, s2 = ind.s1, ind.s2
    flags = set()
    if val > 1.0 - a2:
        flags.add(RegimeFlag.NEUMANN_AUTOMATIC)
    elif val < 1.0 - a2:
        flags.add(RegimeFlag.NEUMANN_TRACE_REQUIRED)
    if val > 1.0 - P.alpha_mixed:
        flags.add(RegimeFlag.WN_EQUALS_WV)
    if val > 2.0 - a2:
        flags.add(RegimeFlag.ALL_SPACES_COINCIDE)
    if inside(val, dirichlet_window(P, ind)) and val > s1 + 1.0 - P.alpha_mixed:
        flags.add(RegimeFlag.MIXED_DERIV_ESTIMATE)
    if s1 + 2.0 - a2 < val < s2 + 2.0 - a2:
        flags.add(RegimeFlag.RELLICH_DOMAIN)
    if ind.D > 0 and s2 + am < val < s1 + 2.0 - a2:
        flags.add(RegimeFlag.ALTERNATIVE_REALIZATION_EXISTS)
    if P.b == 0.0:
        cb = P.c + beta * P.gamma
        if cb > P.gamma * (beta + 1.0):
            flags.add(RegimeFlag.DIRICHLET_OBLIQUE_COINCIDE)
        elif cb < P.gamma * (beta + 1.0) and P.c / P.gamma - 1.0 + am < val < 2.0 - a2:
            flags.add(RegimeFlag.DIRICHLET_ENLARGED_WINDOW)
    return flags
