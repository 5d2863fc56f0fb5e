"""Numerical verification suites.

Each suite returns a SuiteResult with a pass/fail verdict against a fixed
tolerance plus the measured quantities. The same suites back the
``degenop verify`` command and the acceptance tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sy

from .generation import BoundaryCondition
from .operator_core import (OperatorParams, PolyGaussian, SpaceParams, apply_operator,
                            indicial_roots, operator_scale, validate)
from .solver import (DirectResolvent, PipelineResolvent, ResolventProblem, cell_edges,
                     parabolic_march, power_integral, solve_resolvent_1d,
                     solve_resolvent_2d, solve_via_pipeline)
from .transform_calculus import (KelvinStep, ShiftStep, apply_transform, compose_kelvin,
                                 compose_shift, reduce_to_canonical, TermSum)
from .weighted_spaces import GradedMesh, GridFunction, boundary_trace, weighted_lp_norm


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "summary": self.summary,
                "metrics": _jsonable(self.metrics)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------- random data

def random_admissible_params(rng: np.random.Generator, dim_x: int, *,
                             equal_exponents: bool = False, b_zero: bool = False,
                             d_zero: bool = False) -> OperatorParams:
    """Random coefficients satisfying the admissibility constraints."""
    while True:
        a2 = rng.uniform(-1.5, 1.8)
        a1 = a2 if equal_exponents or dim_x == 0 else rng.uniform(max(a2 - 1.8, -1.5), a2 + 1.8)
        M = rng.normal(size=(dim_x + 1, dim_x + 1))
        A = M @ M.T / (dim_x + 1) + 0.3 * np.eye(dim_x + 1)
        gamma = A[dim_x, dim_x]
        c = rng.uniform(-1.0, 3.0)
        h = 0.5 * (c / gamma - 1.0)
        b = 0.0 if b_zero else gamma * (rng.uniform(0.0, 2.0) - h * h)
        d = np.zeros(dim_x) if d_zero else 0.6 * rng.normal(size=dim_x)
        P = OperatorParams(dim_x, a1, a2, A[:dim_x, :dim_x], A[dim_x, :dim_x], gamma, d, c, b)
        if validate(P).ok:
            return P


def random_test_function(rng: np.random.Generator, dim_x: int) -> PolyGaussian:
    terms = []
    for _ in range(int(rng.integers(1, 4))):
        terms.append((float(rng.normal()), tuple(int(e) for e in rng.integers(0, 4, dim_x)),
                      float(rng.uniform(0.0, 3.0))))
    return PolyGaussian(dim_x, tuple(terms), float(rng.uniform(0.3, 1.0)),
                        tuple(float(v) for v in 0.5 * rng.normal(size=dim_x)))


def _random_points(rng, dim_x, n, lo=0.3, hi=2.5):
    return rng.normal(size=(n, dim_x)), rng.uniform(lo, hi, n)


def _rel_dev(a, b, scale):
    scale = np.maximum(scale, 1e-300)
    return float(np.max(np.abs(a - b) / scale))


# ---------------------------------------------------------------- transform identities

def _termsum_scale(ts: TermSum, u, x, y) -> np.ndarray:
    """Sum of the absolute values of the individual terms."""
    return sum(np.abs(TermSum(ts.dim_x, [t]).apply(u, x, y)) for t in ts.terms)


@_timed
def conjugation_suite(n_params: int = 200, n_funcs: int = 5, n_points: int = 20,
                      seed: int = 0, tol: float = 1e-9) -> SuiteResult:
    """T^-1 L T u == (conjugated L) u for Kelvin steps, matched shifts and
    shifts with an arbitrary exponent (conjugate kept as a TermSum)."""
    rng = np.random.default_rng(seed)
    worst_k = worst_s = worst_g = 0.0
    for i in range(n_params):
        n = 1 + i % 2
        P = random_admissible_params(rng, n)
        e = rng.uniform(0.4, 2.5) * (-1.0 if i % 5 == 4 else 1.0)
        K = KelvinStep(rng.uniform(-2, 2), e - 1.0, float(rng.choice([1.5, 2.0, 3.0])))
        Kt = K.conjugate(P)
        S = ShiftStep(P.beta_alpha, tuple(0.7 * rng.normal(size=n)))
        St = S.conjugate(P)
        G = ShiftStep(rng.uniform(-0.6, 1.2), tuple(0.7 * rng.normal(size=n)))
        Gt = G.conjugate_general(P)
        for _ in range(n_funcs):
            u = random_test_function(rng, n)
            x, y = _random_points(rng, n, n_points)
            # T^-1 g (x, y) = |1/e|^(1/p) y^(-k/e) g(x, y^(1/e))
            Ku = apply_transform(K, u)
            lhs = (abs(1.0 / e) ** (1.0 / K.p) * y ** (-K.k / e)
                   * apply_operator(P, Ku, x, y ** (1.0 / e)))
            rhs = apply_operator(Kt, u, x, y)
            worst_k = max(worst_k, _rel_dev(lhs, rhs, operator_scale(Kt, u, x, y)))
            Su = apply_transform(S, u)
            w = np.asarray(S.omega)
            lhs = apply_operator(P, Su, x - np.outer(y ** (S.beta + 1.0), w), y)
            rhs = apply_operator(St, u, x, y)
            worst_s = max(worst_s, _rel_dev(lhs, rhs, operator_scale(St, u, x, y)))
            Gu = apply_transform(G, u)
            lhs = apply_operator(P, Gu, x - np.outer(y ** (G.beta + 1.0), G.omega_vec), y)
            rhs = Gt.apply(u, x, y)
            worst_g = max(worst_g, _rel_dev(lhs, rhs, _termsum_scale(Gt, u, x, y)))
    ok = max(worst_k, worst_s, worst_g) <= tol
    return SuiteResult("conjugation", ok,
                       f"max relative deviation kelvin {worst_k:.2e}, matched shift {worst_s:.2e}, "
                       f"general shift {worst_g:.2e} (tol {tol:g})",
                       {"kelvin": worst_k, "shift": worst_s, "general_shift": worst_g, "tol": tol,
                        "n_params": n_params, "n_funcs": n_funcs, "n_points": n_points})


def _param_dev(A: OperatorParams, B: OperatorParams) -> float:
    a, b = A.flat_vector(), B.flat_vector()
    return float(np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(b))))


@_timed
def group_law_suite(n_pairs: int = 100, seed: int = 1, tol: float = 1e-12) -> SuiteResult:
    """Composition, inverse and commutation laws evaluated pointwise."""
    rng = np.random.default_rng(seed)
    worst = {"kelvin_compose": 0.0, "kelvin_inverse": 0.0, "shift_compose": 0.0,
             "shift_inverse": 0.0, "commute": 0.0}

    def dev(f, g, x, y):
        a, b = f(x, y), g(x, y)
        return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))

    for i in range(n_pairs):
        n = 1 + i % 2
        u = random_test_function(rng, n)
        x, y = _random_points(rng, n, 20, 0.4, 2.0)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        A = KelvinStep(rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.8), p)
        B = KelvinStep(rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.8), p)
        AB = compose_kelvin(A, B)
        worst["kelvin_compose"] = max(worst["kelvin_compose"], dev(
            apply_transform(A, apply_transform(B, u)), apply_transform(AB, u), x, y))
        worst["kelvin_inverse"] = max(worst["kelvin_inverse"], dev(
            apply_transform(A, apply_transform(A.inverse(), u)), u, x, y))
        bs = rng.uniform(-0.5, 1.0)
        S1 = ShiftStep(bs, tuple(rng.normal(size=n)))
        S2 = ShiftStep(bs, tuple(rng.normal(size=n)))
        worst["shift_compose"] = max(worst["shift_compose"], dev(
            apply_transform(S1, apply_transform(S2, u)),
            apply_transform(compose_shift(S1, S2), u), x, y))
        worst["shift_inverse"] = max(worst["shift_inverse"], dev(
            apply_transform(S1, apply_transform(S1.inverse(), u)), u, x, y))
        # Shift(g, w) Kelvin(0, b) == Kelvin(0, b) Shift(g~, w) with g~+1 = (g+1)/(b+1)
        K = KelvinStep(0.0, A.beta, p)
        S = ShiftStep(bs, S1.omega)
        St = ShiftStep((bs + 1.0) / (A.beta + 1.0) - 1.0, S1.omega)
        worst["commute"] = max(worst["commute"], dev(
            apply_transform(S, apply_transform(K, u)),
            apply_transform(K, apply_transform(St, u)), x, y))
        # parameter level: T^-1 conjugation undoes T, and composition agrees
        P = random_admissible_params(rng, n)
        Kb = KelvinStep(rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 0.8) - (2.5 if i % 4 == 3 else 0.0), p)
        back = Kb.inverse().conjugate(Kb.conjugate(P))
        worst["params_inverse"] = max(worst.get("params_inverse", 0.0), _param_dev(back, P))
        two = B.conjugate(A.conjugate(P))
        worst["params_compose"] = max(worst.get("params_compose", 0.0),
                                      _param_dev(two, compose_kelvin(A, B).conjugate(P)))
        Sm = ShiftStep(P.beta_alpha, tuple(rng.normal(size=n)))
        worst["params_shift_inverse"] = max(worst.get("params_shift_inverse", 0.0), _param_dev(
            Sm.inverse().conjugate(Sm.conjugate(P)), P))
        # indicial covariance, including negative e where the roots swap
        ind = indicial_roots(P)
        ind_t = indicial_roots(Kb.conjugate(P))
        e = Kb.beta + 1.0
        r = sorted(((ind.s1 + Kb.k) / e, (ind.s2 + Kb.k) / e))
        sc = 1.0 + abs(ind.s1) + abs(ind.s2) + abs(Kb.k)
        worst["indicial"] = max(worst.get("indicial", 0.0), abs(ind_t.D - ind.D / e ** 2) / (1.0 + ind.D),
                                abs(ind_t.s1 - r[0]) / sc, abs(ind_t.s2 - r[1]) / sc)
    w = max(worst.values())
    return SuiteResult("group_laws", w <= tol, f"max relative deviation {w:.2e} (tol {tol:g})",
                       {**worst, "tol": tol, "n_pairs": n_pairs})


@_timed
def pipeline_suite(n_configs: int = 50, seed: int = 2, tol: float = 1e-12) -> SuiteResult:
    """Postconditions of the reduction to canonical form."""
    rng = np.random.default_rng(seed)
    worst = {"exponents": 0.0, "drift": 0.0, "normal_ratio": 0.0, "bookkeeping": 0.0,
             "indicial": 0.0}
    b_exact = True
    for i in range(n_configs):
        n = 1 + i % 2
        P = random_admissible_params(rng, n)
        S = SpaceParams(float(rng.choice([1.5, 2.0, 3.0])), rng.uniform(-0.5, 2.0))
        Pc, Sc, pipe = reduce_to_canonical(P, S, "dirichlet")
        worst["exponents"] = max(worst["exponents"], abs(Pc.alpha1 - Pc.alpha2))
        worst["drift"] = max(worst["drift"], float(np.max(np.abs(Pc.d))))
        b_exact &= Pc.b == 0.0
        pot = [s for s in pipe.steps if s.purpose == "remove potential"]
        if pot:
            Dt = pot[0].indicial_before.D
            worst["normal_ratio"] = max(worst["normal_ratio"],
                                        abs(Pc.c / Pc.gamma - (1.0 + 2.0 * np.sqrt(Dt))))
            s1 = indicial_roots(P).s1
            e = P.beta_alpha + 1.0
            after = pot[0].params_after
            d_exp = P.d - 2.0 * s1 * P.q
            c_exp = e * (P.c + P.beta_alpha * P.gamma - 2.0 * s1 * P.gamma)
            sc = 1.0 + np.max(np.abs(np.append(d_exp, c_exp)))
            worst["bookkeeping"] = max(worst["bookkeeping"],
                                       float(np.max(np.abs(after.d - d_exp))) / sc,
                                       abs(after.c - c_exp) / sc)
        for st in pipe.steps:
            if st.indicial_before is None or st.indicial_after is None:
                continue
            mapped = st.transform.map_indicial(st.indicial_before)
            worst["indicial"] = max(worst["indicial"], abs(mapped.s1 - st.indicial_after.s1),
                                    abs(mapped.s2 - st.indicial_after.s2))
        Po = random_admissible_params(rng, n, b_zero=True)
        if Po.c + Po.beta_alpha * Po.gamma != 0.0:
            Pc, _, _ = reduce_to_canonical(Po, S, "oblique")
            worst["exponents"] = max(worst["exponents"], abs(Pc.alpha1 - Pc.alpha2))
            worst["drift"] = max(worst["drift"], float(np.max(np.abs(Pc.d))))
    # indicial data are only compared at the 1e-10 level (square roots of sums)
    ok = (b_exact and worst["indicial"] <= 1e-10
          and all(v <= tol for k, v in worst.items() if k != "indicial"))
    return SuiteResult("pipeline", ok,
                       f"b exactly zero: {b_exact}; worst deviations "
                       + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()),
                       {**worst, "b_exact": b_exact, "tol": tol, "n_configs": n_configs})


@_timed
def isometry_suite(n_combos: int = 20, seed: int = 3, tol: float = 1e-6) -> SuiteResult:
    """|T_(k,beta) u|_(p,m) == |u|_(p,m~) with both sides integrated on
    independent graded meshes."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_combos):
        k = float(rng.choice([-0.5, 0.0, 0.5, 1.0]))
        beta = float(rng.choice([-0.4, 0.0, 0.5, 1.0]))
        m = float(rng.choice([-0.5, 0.0, 1.0]))
        p = float(rng.choice([1.5, 2.0, 3.0]))
        e = beta + 1.0
        a = max(1.0, ((0.5 - m) / p - k) / e)
        u = PolyGaussian(0, ((1.0, (), a), (0.3, (), a + 1.0)), 1.0)
        K = KelvinStep(k, beta, p)
        mt = K.map_weight(m)
        E1 = (k + a * e) * p + m
        E2 = a * p + mt
        M1 = GradedMesh(4000, 8.0 ** (1.0 / e), max(2.0, 4.0 / (E1 + 1.0)))
        M2 = GradedMesh(3000, 8.0, max(2.0, 4.0 / (E2 + 1.0)))
        lhs = weighted_lp_norm(apply_transform(K, u), m, p, M1)
        rhs = weighted_lp_norm(u, mt, p, M2)
        rows.append({"k": k, "beta": beta, "m": m, "p": p, "lhs": lhs, "rhs": rhs,
                     "rel": abs(lhs - rhs) / rhs})
    w = max(r["rel"] for r in rows)
    return SuiteResult("isometry", w <= tol, f"max relative mismatch {w:.2e} (tol {tol:g})",
                       {"cases": rows, "tol": tol})


# ---------------------------------------------------------------- manufactured solutions

_x, _y = sy.symbols("x y", positive=True)


def _sym_apply(P: OperatorParams, u):
    """L u symbolically (dim_x <= 1)."""
    R = sy.nsimplify
    a1, a2 = R(P.alpha1), R(P.alpha2)
    am = (a1 + a2) / 2
    out = (R(P.gamma) * _y ** a2 * sy.diff(u, _y, 2) + R(P.c) * _y ** (a2 - 1) * sy.diff(u, _y)
           - R(P.b) * _y ** (a2 - 2) * u)
    if P.dim_x:
        out += (R(P.Q[0, 0]) * _y ** a1 * sy.diff(u, _x, 2)
                + 2 * R(P.q[0]) * _y ** am * sy.diff(u, _x, _y)
                + R(P.d[0]) * _y ** (am - 1) * sy.diff(u, _x))
    return out


@dataclass
class MMSCase:
    name: str
    params: OperatorParams
    space: SpaceParams
    bc: BoundaryCondition
    exact: object  # sympy expression in x, y

    def functions(self, lam: float):
        f = sy.lambdify((_x, _y), lam * self.exact - _sym_apply(self.params, self.exact), "numpy")
        u = sy.lambdify((_x, _y), self.exact, "numpy")
        wrap = lambda g: (lambda x, y: g(np.zeros_like(y) if x is None else x, y) + 0.0 * y)
        return wrap(f), wrap(u)


def _op(n, a1, a2, gamma, c, b=0.0, Q=1.0, q=0.0, d=0.0):
    if n == 0:
        return OperatorParams(0, a1, a2, [], [], gamma, [], c, b)
    return OperatorParams(1, a1, a2, [Q], [q], gamma, [d], c, b)


def mms_cases() -> tuple[list, list]:
    S = sy.Rational
    g = sy.exp(-_y ** 2)
    one = [
        MMSCase("oblique a=0 c=1", _op(0, 0, 0, 1, 1), SpaceParams(2, 0),
                BoundaryCondition("neumann"), g),
        MMSCase("oblique a=-1/2 c=1/2", _op(0, -.5, -.5, 1, .5), SpaceParams(2, 0),
                BoundaryCondition("neumann"), g),
        MMSCase("oblique a=3/2 c=3", _op(0, 1.5, 1.5, 1, 3), SpaceParams(2, 0),
                BoundaryCondition("neumann"), g),
        MMSCase("oblique a=1/2 gamma=2 c=1", _op(0, .5, .5, 2, 1), SpaceParams(2, 0),
                BoundaryCondition("neumann"), g),
        MMSCase("dirichlet a=0 c=0 b=3/4", _op(0, 0, 0, 1, 0, .75), SpaceParams(2, 0),
                BoundaryCondition("dirichlet"), _y ** S(3, 2) * g),
        MMSCase("dirichlet a=3/2 c=1/5 b=0", _op(0, 1.5, 1.5, 1, .2), SpaceParams(2, -.2),
                BoundaryCondition("dirichlet"), _y ** S(4, 5) * g),
    ]
    two = [
        MMSCase("oblique a1=a2=0 q=0.3 d=0.5 c=2", _op(1, 0, 0, 1, 2, q=.3, d=.5),
                SpaceParams(2, 0), BoundaryCondition("oblique"),
                sy.cos(_x - S(1, 4) * _y) * g),
        MMSCase("oblique a1=1 a2=0 q=0.2 d=0.4 c=3/2", _op(1, 1, 0, 1, 1.5, q=.2, d=.4),
                SpaceParams(2, 0), BoundaryCondition("oblique"),
                # tangential phase matched to the boundary direction
                sy.cos(_x - S(2, 5) / (2 * S(3, 2)) * _y ** S(3, 2)) * g),
        MMSCase("dirichlet a=1/2 q=0.3 d=0.4 c=1/2 b=1/2", _op(1, .5, .5, 1, .5, .5, q=.3, d=.4),
                SpaceParams(2, 0), BoundaryCondition("dirichlet"),
                _y * sy.cos(_x - S(2, 5) * _y) * g),
    ]
    return one, two


def _observed_orders(errs):
    return [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]


@_timed
def mms_suite(min_order: float = 1.8, lam: float = 1.0) -> SuiteResult:
    """Second order convergence against closed-form solutions."""
    one, two = mms_cases()
    rows = []
    for case in one:
        f, ue = case.functions(lam)
        errs = []
        for J in (100, 200, 400):
            mesh = GradedMesh(J, 8.0, 2.0)
            u = solve_resolvent_1d(ResolventProblem(case.params, case.space, lam, f, case.bc, mesh))
            errs.append(float(np.max(np.abs(u.values - ue(None, mesh.y)))))
        rows.append({"case": case.name, "solver": "1d", "errors": errs,
                     "orders": _observed_orders(errs)})
    for case in two:
        f, ue = case.functions(lam)
        for name, solve in (("direct", solve_resolvent_2d), ("pipeline", solve_via_pipeline)):
            errs = []
            for J in (32, 64, 128):
                mesh = GradedMesh(J, 8.0, 2.0, J, np.pi)
                u = solve(ResolventProblem(case.params, case.space, lam, f, case.bc, mesh))
                X, Y = mesh.points()
                ex = ue(X[:, 0], Y).reshape(mesh.shape)
                errs.append(float(np.max(np.abs(u.values - ex))))
            rows.append({"case": case.name, "solver": name, "errors": errs,
                         "orders": _observed_orders(errs)})
    worst = min(min(r["orders"]) for r in rows)
    return SuiteResult("mms", worst >= min_order,
                       f"minimum observed order {worst:.3f} over {len(rows)} runs (need {min_order})",
                       {"runs": rows, "min_order": min_order})


# ---------------------------------------------------------------- solver comparisons

def _bump_2d(x, y):
    return np.exp(np.cos(x)) * y * np.exp(-(y - 1.0) ** 2)


@_timed
def pipeline_vs_direct_suite(levels=(64, 128, 256), tol: float = 5e-2) -> SuiteResult:
    """Transform-then-solve against the direct flux-form solve in 2D, as a
    relative difference in the weighted L^p norm of the space."""
    cases = [
        ("oblique a1=1 a2=0 q=0.2 d=0.4 c=3/2", _op(1, 1, 0, 1, 1.5, q=.2, d=.4),
         SpaceParams(2, 0), BoundaryCondition("oblique")),
        ("dirichlet a=1/2 q=0.3 d=0.4 c=1/2 b=1/2", _op(1, .5, .5, 1, .5, .5, q=.3, d=.4),
         SpaceParams(2, 0), BoundaryCondition("dirichlet")),
        ("dirichlet a1=1 a2=0 q=0.2 d=0.4 c=1 b=1/2", _op(1, 1, 0, 1, 1, .5, q=.2, d=.4),
         SpaceParams(2, 0), BoundaryCondition("dirichlet")),
    ]
    rows = []
    ok = True
    for name, P, S, bc in cases:
        diffs = []
        for J in levels:
            mesh = GradedMesh(J, 8.0, 2.0, J, np.pi)
            prob = ResolventProblem(P, S, 1.0, _bump_2d, bc, mesh)
            ud = solve_resolvent_2d(prob)
            up = solve_via_pipeline(prob)
            diff = weighted_lp_norm(ud.with_values(ud.values - up.values), S.m, S.p)
            diffs.append(diff / weighted_lp_norm(ud, S.m, S.p))
        dec = all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))
        ok &= dec and diffs[-1] <= tol
        rows.append({"case": name, "levels": list(levels), "rel_diff": diffs,
                     "decreasing": dec})
    return SuiteResult("pipeline_vs_direct", ok,
                       "; ".join(f"{r['case']}: " + ", ".join(f"{d:.2e}" for d in r["rel_diff"])
                                 for r in rows) + f" (final tol {tol:g})",
                       {"cases": rows, "tol": tol})


def resolvent_operator_norm(P: OperatorParams, S: SpaceParams, bc: BoundaryCondition,
                            mesh: GradedMesh, lam: complex) -> float:
    """|lam R(lam)| in the discrete weighted L^2 norm (dim_x = 0, p = 2).

    The norm uses the cell masses of y^m as weights, so the value is the
    largest singular value of W^(1/2) lam R_h W^(-1/2).
    """
    if P.dim_x != 0 or S.p != 2.0:
        raise ValueError("operator norms are computed for dim_x = 0 and p = 2")
    R = DirectResolvent(P, S, bc, mesh, lam)
    n = R.system.n_interior
    Ainv_M = np.linalg.solve(R.A.toarray(), np.diag(R.system.mass[:n]))
    yf = mesh.y[:n] ** R.s1
    Ru = (Ainv_M * yf[None, :]) / yf[:, None]
    lo, hi = cell_edges(mesh.y)
    wgt = np.sqrt(power_integral(lo, hi, S.m)[:n])
    B = lam * (wgt[:, None] * Ru / wgt[None, :])
    return float(np.linalg.norm(B, 2))


def sector_cases():
    return [
        ("oblique a=0 c=1", _op(0, 0, 0, 1, 1), SpaceParams(2, 0),
         BoundaryCondition("neumann"), GradedMesh(400, 400.0, 3.0)),
        ("dirichlet a=0 c=0 b=3/4", _op(0, 0, 0, 1, 0, .75), SpaceParams(2, 0),
         BoundaryCondition("dirichlet"), GradedMesh(400, 400.0, 3.0)),
        ("oblique a=1/2 c=3/2 m=1", _op(0, .5, .5, 1, 1.5), SpaceParams(2, 1),
         BoundaryCondition("neumann"), GradedMesh(400, 4000.0, 4.0)),
    ]


@_timed
def sector_suite(bound: float = 10.0, n_mag: int = 10) -> SuiteResult:
    """|lam R(lam)| over |lam| in [1e-2, 1e2], arg lam in {0, +-pi/3}."""
    mags = np.logspace(-2, 2, n_mag)
    args = (0.0, np.pi / 3, -np.pi / 3)
    rows = []
    ok = True
    for name, P, S, bc, mesh in sector_cases():
        norms = []
        fixed = []
        f = GridFunction.sample(lambda x, y: y * np.exp(-(y - 1.0) ** 2), mesh).values
        fn = weighted_lp_norm(GridFunction(mesh, f), S.m, 2.0)
        for th in args:
            for r in mags:
                lam = r * np.exp(1j * th)
                norms.append(resolvent_operator_norm(P, S, bc, mesh, lam))
                u = DirectResolvent(P, S, bc, mesh, lam).solve_values(f.astype(complex))
                fixed.append(abs(lam) * weighted_lp_norm(GridFunction(mesh, u), S.m, 2.0) / fn)
        ratio = max(norms) / min(norms)
        ok &= ratio <= bound
        rows.append({"case": name, "operator_norm_min": min(norms), "operator_norm_max": max(norms),
                     "ratio": ratio, "fixed_rhs_min": min(fixed), "fixed_rhs_max": max(fixed),
                     "truncation": mesh.Y})
    return SuiteResult("sector", ok,
                       "; ".join(f"{r['case']}: max/min {r['ratio']:.2f}" for r in rows)
                       + f" (bound {bound:g})", {"cases": rows, "bound": bound})


def _discrete_Lu(lam, u: GridFunction, f):
    """L u for a resolvent solution, read off the equation (zero at y = Y)."""
    Lu = lam * u.values - GridFunction.sample(f, u.mesh).values
    Lu[-1] = 0.0
    return Lu


def _witness(P: OperatorParams, s1: float):
    """y^-s1 phi(x - (d~/c~) y) chi(y): the first order boundary term of the
    transformed operator vanishes on it, so it lies in the Dirichlet domain,
    while y^a D_yy u and y^(a-1) w.grad u behave like y^(a - s1 - 2)."""
    R = sy.nsimplify
    dt = R(P.d[0]) - 2 * R(s1) * R(P.q[0])
    ct = R(P.c) - 2 * R(s1) * R(P.gamma)
    u = _y ** (-R(s1)) * sy.exp(sy.cos(_x - dt / ct * _y)) * sy.exp(-_y ** 2)
    a = R(P.alpha2)
    parts = {
        "y_second": _y ** a * sy.diff(u, _y, 2),
        "drift": _y ** (a - 1) * (dt * sy.diff(u, _x) + ct * sy.diff(u, _y)),
        "L": _sym_apply(P, u),
    }
    return {k: sy.lambdify((_x, _y), v, "numpy") for k, v in parts.items()}


@_timed
def elliptic_suite(bound: float = 50.0, growth_min: float = 1.5) -> SuiteResult:
    """Second derivative and drift norms against |L u| for resolvent
    solutions, and the growth of the split terms on a Dirichlet witness."""
    rows = []
    lams = (0.5, 1.0, 2.0, 4.0, 8.0)
    bumps = (lambda x, y: y * np.exp(-(y - 1.0) ** 2),
             lambda x, y: np.exp(-4.0 * (y - 0.5) ** 2) - 0.5 * np.exp(-(y - 2.0) ** 2))
    oblique = []

    def nrm(mesh, S, v):
        return weighted_lp_norm(GridFunction(mesh, v), S.m, S.p)

    for name, P, S in (("oblique a=0 c=1", _op(0, 0, 0, 1, 1), SpaceParams(2, 0)),
                       ("oblique a=1 c=2", _op(0, 1, 1, 1, 2), SpaceParams(2, 0))):
        mesh = GradedMesh(400, 10.0, 2.0)
        y, a = mesh.y, P.alpha2
        sec, dri = [], []
        for lam in lams:
            for f in bumps:
                u = solve_resolvent_1d(ResolventProblem(P, S, lam, f, BoundaryCondition("neumann"),
                                                        mesh))
                den = nrm(mesh, S, _discrete_Lu(lam, u, f))
                sec.append(nrm(mesh, S, y ** a * u.dyy()) / den)
                dri.append(nrm(mesh, S, P.c * y ** (a - 1) * u.dy()) / den)
        rows.append({"case": name, "solves": len(sec), "max_second": max(sec),
                     "max_drift": max(dri)})
        oblique += sec + dri
    # full Hessian and drift in 2D, oblique condition with tangential drift
    P = _op(1, 0, 0, 1, 2, q=.3, d=.5)
    S = SpaceParams(2, 0)
    mesh = GradedMesh(128, 8.0, 2.0, 64, np.pi)
    y = mesh.y[:, None]
    sec, dri = [], []
    for lam in (0.5, 1.0, 2.0, 4.0):
        u = solve_via_pipeline(ResolventProblem(P, S, lam, _bump_2d, BoundaryCondition("oblique"),
                                                mesh))
        den = nrm(mesh, S, _discrete_Lu(lam, u, _bump_2d))
        sec.append(max(nrm(mesh, S, u.dxx()), nrm(mesh, S, u.dxy()), nrm(mesh, S, u.dyy())) / den)
        dri.append(nrm(mesh, S, (P.d[0] * u.dx() + P.c * u.dy()) / y) / den)
    rows.append({"case": "oblique 2D q=0.3 d=0.5 c=2", "solves": len(sec),
                 "max_second": max(sec), "max_drift": max(dri)})
    oblique += sec + dri
    n_oblique = sum(r["solves"] for r in rows)
    # Dirichlet: only the tangential second derivatives are controlled
    P = _op(1, .5, .5, 1, .5, .5, q=.3, d=.4)
    mesh = GradedMesh(96, 8.0, 2.0, 64, np.pi)
    xr = []
    for lam in (0.5, 1.0, 2.0, 4.0):
        u = solve_via_pipeline(ResolventProblem(P, S, lam, _bump_2d, BoundaryCondition("dirichlet"),
                                                mesh))
        xr.append(nrm(mesh, S, mesh.y[:, None] ** P.alpha1 * u.dxx())
                  / nrm(mesh, S, _discrete_Lu(lam, u, _bump_2d)))
    rows.append({"case": "dirichlet 2D a=1/2", "kind": "y^a D_xx", "max_ratio": max(xr)})
    # witness outside the Rellich range: split ratios blow up under refinement
    P = _op(1, 0, 0, 1, 0, .75, q=.3, d=.4)
    S = SpaceParams(2, -0.5)
    s1 = indicial_roots(P).s1
    fns = _witness(P, s1)
    split = {"y_second": [], "drift": []}
    lnorm = []
    for J in (50, 100, 200, 400):
        mesh = GradedMesh(J, 6.0, 4.0, 32, np.pi)
        X, Y = mesh.points()
        ev = {k: np.asarray(fn(X[:, 0], Y), dtype=float).reshape(mesh.shape) for k, fn in fns.items()}
        den = nrm(mesh, S, ev["L"])
        lnorm.append(den)
        for k in split:
            split[k].append(nrm(mesh, S, ev[k]) / den)
    growth = {k: [v[i + 1] / v[i] for i in range(len(v) - 1)] for k, v in split.items()}
    gmin = min(min(g) for g in growth.values())
    # |L u| itself converges: the witness is a domain element
    l_settled = abs(lnorm[-1] - lnorm[-2]) <= 1e-3 * lnorm[-1]
    rows.append({"case": "dirichlet witness c=0 b=3/4 m=-1/2", "split_ratios": split,
                 "growth": growth, "L_norms": lnorm, "L_norm_settled": l_settled})
    ok = (max(oblique) <= bound and max(xr) <= bound and n_oblique >= 20
          and gmin >= growth_min and l_settled)
    return SuiteResult(
        "elliptic", ok,
        f"{n_oblique} oblique solves, max ratio {max(oblique):.2f}; dirichlet x-second ratio "
        f"{max(xr):.2f} (bound {bound:g}); witness growth per refinement "
        + ", ".join(f"{k} {min(g):.2f}" for k, g in growth.items()) + f" (need {growth_min})",
        {"cases": rows, "n_oblique_solves": n_oblique, "max_oblique_ratio": max(oblique),
         "max_dirichlet_x_ratio": max(xr), "witness_growth": growth, "bound": bound})


@_timed
def trace_suite(tol: float = 1e-2, levels=(50, 100, 200, 400)) -> SuiteResult:
    """Boundary behaviour y^s2 u of Dirichlet solutions: vanishing limits for
    D > 0 (shrinking under refinement), a finite one for D = 0."""
    f = lambda x, y: y * np.exp(-(y - 1.0) ** 2)
    rows = []
    ok = True
    for name, P, rhs in (
        ("a=0 c=0 b=3/4 (D=1)", _op(0, 0, 0, 1, 0, .75), f),
        ("a=1/2 c=1 b=3/8 (D=3/8)", _op(0, .5, .5, 1, 1, .375), f),
        ("a=0 c=3 b=0 (D=1)", _op(0, 0, 0, 1, 3, 0), f),
        ("a=-1/2 c=1/2 b=1/4 (D=5/16)", _op(0, -.5, -.5, 1, .5, .25), f),
        ("2D a=1/2 q=0.3 d=0.4 c=1/2 b=1/2 (D=9/16)", _op(1, .5, .5, 1, .5, .5, q=.3, d=.4),
         _bump_2d),
    ):
        ind = indicial_roots(P)
        est = []
        for J in levels:
            mesh = GradedMesh(J, 8.0, 2.0, 32 if P.dim_x else 0)
            solve = solve_via_pipeline if P.dim_x else solve_resolvent_1d
            u = solve(ResolventProblem(P, SpaceParams(2, 0), 1.0, rhs,
                                       BoundaryCondition("dirichlet"), mesh))
            est.append(float(np.max(np.abs(boundary_trace(u, ind.s2).limit))))
        dec = all(est[i + 1] < est[i] for i in range(len(est) - 1))
        ok &= dec and est[-1] <= tol
        rows.append({"case": name, "D": ind.D, "estimates": est, "decreasing": dec})
    # D = 0: finite nonzero limit, stable under refinement
    P = _op(0, 0, 0, 1, .5, -0.0625)
    S = SpaceParams(2, 0)
    lims = []
    for J in (200, 400, 800):
        mesh = GradedMesh(J, 8.0, 2.0)
        u = solve_resolvent_1d(ResolventProblem(P, S, 1.0, f, BoundaryCondition("dirichlet"), mesh))
        lims.append(float(boundary_trace(u, indicial_roots(P).s2).limit))
    finite_ok = abs(lims[-1]) > 1e-3 and abs(lims[-1] - lims[-2]) <= 1e-2 * abs(lims[-1])
    ok &= finite_ok
    rows.append({"case": "a=0 c=1/2 b=-1/16 (D=0)", "D": 0.0, "limits": lims,
                 "finite_nonzero": finite_ok})
    # explicit sample with known limit
    mesh = GradedMesh(200, 4.0, 2.0)
    samp = GridFunction(mesh, mesh.y ** -1.5 * (1.0 + mesh.y))
    sl = boundary_trace(samp, 1.5).limit
    ok &= abs(sl - 1.0) <= 1e-3
    rows.append({"case": "y^-3/2 (1+y), sigma=3/2", "limit": sl})
    def line(r):
        if "estimates" in r:
            return f"{r['case']}: {r['estimates'][0]:.1e} -> {r['estimates'][-1]:.1e}"
        return f"{r['case']}: limit {r.get('limit', r.get('limits'))}"
    return SuiteResult("trace", ok, "; ".join(line(r) for r in rows) + f" (tol {tol:g})",
                       {"cases": rows, "tol": tol})


@_timed
def maxreg_suite(rtol: float = 0.2, T: float = 1.0, steps=(20, 40, 80)) -> SuiteResult:
    """Discrete maximal regularity ratio under time-step halving."""
    cases = (
        ("oblique 1D a=0 c=1", _op(0, 0, 0, 1, 1), BoundaryCondition("neumann"),
         GradedMesh(200, 8.0, 2.0), lambda x, y: y * np.exp(-(y - 1.0) ** 2)),
        ("dirichlet 1D a=0 c=0 b=3/4", _op(0, 0, 0, 1, 0, .75), BoundaryCondition("dirichlet"),
         GradedMesh(200, 8.0, 2.0), lambda x, y: y * np.exp(-(y - 1.0) ** 2)),
        ("dirichlet 2D a=1/2 q=0.3 d=0.4 c=1/2 b=1/2", _op(1, .5, .5, 1, .5, .5, q=.3, d=.4),
         BoundaryCondition("dirichlet"), GradedMesh(64, 8.0, 2.0, 32), _bump_2d),
    )
    S = SpaceParams(2, 0)
    rows = []
    ok = True
    for name, P, bc, mesh, rhs in cases:
        g = GridFunction.sample(rhs, mesh).values
        # forcing switched on smoothly in time
        forcing = lambda t: np.sin(0.5 * np.pi * t / T) * g
        ratios = []
        for n in steps:
            _, rep = parabolic_march(P, S, bc, forcing, T / n, n, mesh)
            ratios.append(rep.ratio)
        rel = [abs(ratios[i + 1] / ratios[i] - 1.0) for i in range(len(ratios) - 1)]
        ok &= max(rel) <= rtol
        rows.append({"case": name, "ratios": ratios, "relative_changes": rel})
    P, bc, mesh = cases[0][1], cases[0][2], cases[0][3]
    _, zero = parabolic_march(P, S, bc, lambda t: np.zeros(mesh.shape), T / steps[0], steps[0], mesh)
    ok &= zero.degenerate and zero.ratio is None
    worst = max(max(r["relative_changes"]) for r in rows)
    return SuiteResult("maxreg", ok,
                       "; ".join(f"{r['case']}: " + ", ".join(f"{v:.4f}" for v in r["ratios"])
                                 for r in rows)
                       + f"; max relative change {worst:.3f} (tol {rtol:g}); "
                       f"zero forcing flagged {zero.degenerate}",
                       {"cases": rows, "tau": [T / n for n in steps],
                        "zero_forcing_degenerate": zero.degenerate, "rtol": rtol})


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "conjugation": conjugation_suite,
    "group_laws": group_law_suite,
    "pipeline": pipeline_suite,
    "isometry": isometry_suite,
    "mms": mms_suite,
    "pipeline_vs_direct": pipeline_vs_direct_suite,
    "sector": sector_suite,
    "elliptic": elliptic_suite,
    "trace": trace_suite,
    "maxreg": maxreg_suite,
}

QUICK_SUITES = ("conjugation", "group_laws", "pipeline", "isometry", "trace")
