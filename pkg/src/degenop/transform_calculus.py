"""Weighted Kelvin-type transforms, tangential shifts, their conjugation rules
and the reduction of an operator to canonical form.

Kelvin step (k, beta):  (T u)(x, y) = |beta+1|^(1/p) y^k u(x, y^(beta+1))
Shift step (beta, w):   (S u)(x, y) = u(x + w y^(beta+1), y)

Conjugation always means the operator acting on the transformed unknown,
i.e. T^-1 L T.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import CubicSpline

from .operator_core import (IndicialData, OperatorParams, SpaceParams, TestFunction,
                            _as_points, indicial_roots, validate)
from .weighted_spaces import GradedMesh, GridFunction

EXP_TOL = 1e-12


class TransformError(ValueError):
    pass


# ---------------------------------------------------------------- steps

@dataclass(frozen=True)
class KelvinStep:
    k: float
    beta: float
    p: float = 2.0

    def __post_init__(self) -> None:
        if self.beta == -1.0:
            raise TransformError("beta = -1 is not an admissible exponent")
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "p", float(self.p))

    kind = "kelvin"

    @property
    def prefactor(self) -> float:
        return abs(self.beta + 1.0) ** (1.0 / self.p)

    def inverse(self) -> "KelvinStep":
        e = self.beta + 1.0
        return KelvinStep(-self.k / e, -self.beta / e, self.p)

    def map_weight(self, m: float) -> float:
        """Weight exponent of the space on which T^-1 L T acts."""
        return (m + self.k * self.p - self.beta) / (self.beta + 1.0)

    def conjugate(self, params: OperatorParams, space: SpaceParams | None = None):
        e = self.beta + 1.0
        k, beta = self.k, self.beta
        P = params
        new = OperatorParams(
            dim_x=P.dim_x,
            alpha1=P.alpha1 / e,
            alpha2=(P.alpha2 + 2.0 * beta) / e,
            Q=P.Q,
            q=e * P.q,
            gamma=e * e * P.gamma,
            d=2.0 * k * P.q + P.d,
            c=e * (P.c + (2.0 * k + beta) * P.gamma),
            b=P.b - k * (P.c + (k - 1.0) * P.gamma),
        )
        if space is None:
            return new
        return new, SpaceParams(space.p, self.map_weight(space.m))

    def map_indicial(self, ind: IndicialData) -> IndicialData:
        e = self.beta + 1.0
        r1 = (ind.s1 + self.k) / e
        r2 = (ind.s2 + self.k) / e
        return IndicialData(D=ind.D / (e * e), s1=min(r1, r2), s2=max(r1, r2))

    def to_dict(self) -> dict:
        return {"kind": "kelvin", "k": self.k, "beta": self.beta, "p": self.p}


@dataclass(frozen=True)
class ShiftStep:
    beta: float
    omega: tuple

    def __post_init__(self) -> None:
        if self.beta == -1.0:
            raise TransformError("beta = -1 is not an admissible exponent")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "omega", tuple(float(w) for w in np.ravel(self.omega)))

    kind = "shift"
    prefactor = 1.0

    @property
    def omega_vec(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)

    def inverse(self) -> "ShiftStep":
        return ShiftStep(self.beta, tuple(-w for w in self.omega))

    def conjugate_general(self, params: OperatorParams) -> "TermSum":
        return conjugate_by_shift_general(params, self.beta, self.omega_vec)

    def conjugate(self, params: OperatorParams, space: SpaceParams | None = None):
        if abs(self.beta - params.beta_alpha) > EXP_TOL:
            raise TransformError(
                "shift exponent must equal (alpha1 - alpha2)/2 for the conjugate "
                "to stay in the operator family; use conjugate_general")
        new = conjugate_by_shift_matched(params, self.omega_vec)
        return new if space is None else (new, space)

    def map_indicial(self, ind: IndicialData) -> IndicialData:
        return ind

    def to_dict(self) -> dict:
        return {"kind": "shift", "beta": self.beta, "omega": list(self.omega)}


Step = Union[KelvinStep, ShiftStep]


def step_from_dict(doc: dict) -> Step:
    if doc["kind"] == "kelvin":
        return KelvinStep(doc["k"], doc["beta"], doc.get("p", 2.0))
    if doc["kind"] == "shift":
        return ShiftStep(doc["beta"], tuple(doc["omega"]))
    raise TransformError(f"unknown transform kind {doc['kind']!r}")


def compose_kelvin(outer: KelvinStep, inner: KelvinStep) -> KelvinStep:
    """The single Kelvin step equal to outer(inner(u))."""
    if outer.p != inner.p:
        raise TransformError("composition needs a common p")
    e = outer.beta + 1.0
    return KelvinStep(outer.k + e * inner.k, e * (inner.beta + 1.0) - 1.0, outer.p)


def compose_shift(outer: ShiftStep, inner: ShiftStep) -> ShiftStep:
    if outer.beta != inner.beta:
        raise TransformError("shifts compose only for equal exponents")
    return ShiftStep(outer.beta, tuple(np.add(outer.omega, inner.omega)))


def conjugate_by_kelvin(params: OperatorParams, space: SpaceParams, k: float, beta: float):
    return KelvinStep(k, beta, space.p).conjugate(params, space)


def conjugate_by_shift_matched(params: OperatorParams, omega) -> OperatorParams:
    """Conjugate by the shift with exponent (alpha1 - alpha2)/2."""
    w = np.asarray(omega, dtype=float).reshape(params.dim_x)
    e = params.beta_alpha + 1.0
    g = params.gamma
    return params.replace(
        Q=params.Q + e * (np.outer(params.q, w) + np.outer(w, params.q)) + g * e * e * np.outer(w, w),
        q=params.q + g * e * w,
        d=params.d + (params.c + g * params.beta_alpha) * e * w,
    )


# ---------------------------------------------------------------- term sums

DERIVS = ("Dxx", "DxDy", "Dyy", "Dx", "Dy", "I")


@dataclass(frozen=True)
class Term:
    coef: np.ndarray
    power: float
    deriv: str


@dataclass
class TermSum:
    """Finite sum of terms coef * y^power * (derivative), a normal form for
    operators that leave the six-coefficient family."""
    dim_x: int
    terms: list = field(default_factory=list)

    def add(self, coef, power: float, deriv: str) -> "TermSum":
        if deriv not in DERIVS:
            raise ValueError(f"unknown derivative {deriv!r}")
        self.terms.append(Term(np.asarray(coef, dtype=float), float(power), deriv))
        return self

    @classmethod
    def from_params(cls, P: OperatorParams) -> "TermSum":
        ts = cls(P.dim_x)
        am = P.alpha_mixed
        if P.dim_x:
            ts.add(P.Q, P.alpha1, "Dxx")
            ts.add(2.0 * P.q, am, "DxDy")
            ts.add(P.d, am - 1.0, "Dx")
        ts.add(P.gamma, P.alpha2, "Dyy")
        ts.add(P.c, P.alpha2 - 1.0, "Dy")
        ts.add(-P.b, P.alpha2 - 2.0, "I")
        return ts.canonical()

    def canonical(self, atol: float = 1e-14) -> "TermSum":
        """Merge terms with equal derivative and power (within 1e-12), drop
        vanishing ones and sort by derivative then power."""
        groups: list[list] = []
        for t in sorted(self.terms, key=lambda t: (DERIVS.index(t.deriv), t.power)):
            if groups and groups[-1][0] == t.deriv and abs(groups[-1][1] - t.power) <= EXP_TOL:
                groups[-1][2] = groups[-1][2] + t.coef
            else:
                groups.append([t.deriv, t.power, t.coef.copy()])
        scale = max([1.0] + [float(np.max(np.abs(g[2]))) for g in groups if g[2].size])
        out = TermSum(self.dim_x)
        for deriv, power, coef in groups:
            if coef.size and np.max(np.abs(coef)) > atol * scale:
                out.terms.append(Term(coef, power, deriv))
        return out

    def is_close(self, other: "TermSum", tol: float = 1e-10) -> bool:
        a = self.canonical()
        b = other.canonical()
        if len(a.terms) != len(b.terms):
            return False
        for s, t in zip(a.terms, b.terms):
            if s.deriv != t.deriv or abs(s.power - t.power) > EXP_TOL:
                return False
            if not np.allclose(s.coef, t.coef, rtol=tol, atol=tol):
                return False
        return True

    def apply(self, u: TestFunction, x, y) -> np.ndarray:
        yarr = np.asarray(y, dtype=float)
        X, Y, _ = _as_points(x, y, self.dim_x)
        v, g, H = u.jet(X, Y)
        n = self.dim_x
        out = np.zeros(Y.size)
        for t in self.terms:
            yp = Y ** t.power
            if t.deriv == "Dxx":
                val = np.einsum("ij,pij->p", t.coef, H[:, :n, :n])
            elif t.deriv == "DxDy":
                val = H[:, :n, n] @ t.coef
            elif t.deriv == "Dyy":
                val = t.coef * H[:, n, n]
            elif t.deriv == "Dx":
                val = g[:, :n] @ t.coef
            elif t.deriv == "Dy":
                val = t.coef * g[:, n]
            else:
                val = t.coef * v
            out += yp * val
        return out[0] if yarr.ndim == 0 else out

    def to_dict(self) -> list:
        return [{"deriv": t.deriv, "power": t.power, "coef": np.asarray(t.coef).tolist()}
                for t in self.canonical().terms]


def conjugate_by_shift_general(params: OperatorParams, beta: float, omega) -> TermSum:
    """S^-1 L S for an arbitrary shift exponent, as a TermSum."""
    P = params
    w = np.asarray(omega, dtype=float).reshape(P.dim_x)
    e = beta + 1.0
    g = P.gamma
    a1, a2 = P.alpha1, P.alpha2
    am = P.alpha_mixed
    ts = TermSum(P.dim_x)
    if P.dim_x:
        ts.add(P.Q, a1, "Dxx")
        ts.add(e * (np.outer(P.q, w) + np.outer(w, P.q)), am + beta, "Dxx")
        ts.add(g * e * e * np.outer(w, w), a2 + 2.0 * beta, "Dxx")
        ts.add(2.0 * P.q, am, "DxDy")
        ts.add(2.0 * g * e * w, a2 + beta, "DxDy")
        ts.add((P.c + g * beta) * e * w, a2 + beta - 1.0, "Dx")
        ts.add(P.d, am - 1.0, "Dx")
    ts.add(g, a2, "Dyy")
    ts.add(P.c, a2 - 1.0, "Dy")
    ts.add(-P.b, a2 - 2.0, "I")
    return ts.canonical()


# ---------------------------------------------------------------- transformed functions

@dataclass(frozen=True)
class KelvinFunction(TestFunction):
    base: TestFunction
    step: KelvinStep

    @property
    def dim_x(self) -> int:  # type: ignore[override]
        return self.base.dim_x

    def jet(self, x, y):
        n = self.dim_x
        k, beta = self.step.k, self.step.beta
        e = beta + 1.0
        C = self.step.prefactor
        Yv = y ** e
        v, g, H = self.base.jet(x, Yv)
        yk = C * y ** k
        yk1 = C * k * y ** (k - 1.0)
        yk2 = C * k * (k - 1.0) * y ** (k - 2.0)
        d1 = e * y ** beta
        d2 = e * beta * y ** (beta - 1.0)
        val = yk * v
        grad = np.empty_like(g)
        grad[:, :n] = yk[:, None] * g[:, :n]
        grad[:, n] = yk1 * v + yk * g[:, n] * d1
        hess = np.empty_like(H)
        hess[:, :n, :n] = yk[:, None, None] * H[:, :n, :n]
        mix = yk1[:, None] * g[:, :n] + (yk * d1)[:, None] * H[:, :n, n]
        hess[:, :n, n] = mix
        hess[:, n, :n] = mix
        hess[:, n, n] = (yk2 * v + 2.0 * yk1 * g[:, n] * d1
                         + yk * (H[:, n, n] * d1 * d1 + g[:, n] * d2))
        return val, grad, hess


@dataclass(frozen=True)
class ShiftFunction(TestFunction):
    base: TestFunction
    step: ShiftStep

    @property
    def dim_x(self) -> int:  # type: ignore[override]
        return self.base.dim_x

    def jet(self, x, y):
        n = self.dim_x
        beta = self.step.beta
        w = self.step.omega_vec
        e = beta + 1.0
        phi = y ** e
        d1 = e * y ** beta
        d2 = e * beta * y ** (beta - 1.0)
        v, g, H = self.base.jet(x + phi[:, None] * w[None, :], y)
        gx = g[:, :n]
        Hxx = H[:, :n, :n]
        Hxy = H[:, :n, n]
        grad = g.copy()
        grad[:, n] = gx @ w * d1 + g[:, n]
        hess = H.copy()
        mix = (Hxx @ w) * d1[:, None] + Hxy
        hess[:, :n, n] = mix
        hess[:, n, :n] = mix
        hess[:, n, n] = (np.einsum("i,pij,j->p", w, Hxx, w) * d1 * d1
                         + 2.0 * (Hxy @ w) * d1 + (gx @ w) * d2 + H[:, n, n])
        return v, grad, hess


def apply_transform(step: Step, u, target: GradedMesh | None = None):
    """Apply a Kelvin or shift step to a TestFunction (exact) or to a
    GridFunction (node mapping / Fourier translation)."""
    if isinstance(u, GridFunction):
        if isinstance(step, KelvinStep):
            return _kelvin_grid(step, u, target)
        return _shift_grid(step, u)
    if isinstance(step, KelvinStep):
        return KelvinFunction(u, step)
    return ShiftFunction(u, step)


class OutOfBoxError(ValueError):
    pass


def _kelvin_grid(step: KelvinStep, u: GridFunction, target: GradedMesh | None) -> GridFunction:
    e = step.beta + 1.0
    if not e > 0:
        raise TransformError("grid transport needs beta > -1 (orientation preserving)")
    mesh = u.mesh
    new_mesh = mesh.mapped(1.0 / e - 1.0)
    yn = new_mesh.y
    shape = (-1,) + (1,) * (u.values.ndim - 1)
    vals = step.prefactor * yn.reshape(shape) ** step.k * u.values
    m_new = None if u.m is None else u.m * e - step.k * step.p + step.beta
    out = GridFunction(new_mesh, vals, m_new, u.p)
    if target is None:
        return out
    yt = target.y
    if yt[0] < yn[0] * (1 - 1e-12) or yt[-1] > yn[-1] * (1 + 1e-12):
        raise OutOfBoxError("target nodes outside the sampled y-range")
    if target.n_x != mesh.n_x:
        raise ValueError("target mesh must have the same x-grid")
    spline = CubicSpline(np.log(yn), out.values, axis=0)
    return GridFunction(target, spline(np.log(yt)), m_new, u.p)


def _shift_grid(step: ShiftStep, u: GridFunction) -> GridFunction:
    mesh = u.mesh
    if len(step.omega) == 0:
        return GridFunction(mesh, u.values.copy(), u.m, u.p)
    if len(step.omega) != 1 or not mesh.n_x:
        raise TransformError("grid shifts are implemented for dim_x = 1")
    delta = step.omega[0] * mesh.y ** (step.beta + 1.0)
    return GridFunction(mesh, translate_x(u.values, mesh, delta), u.m, u.p)


def translate_x(vals: np.ndarray, mesh: GradedMesh, delta: np.ndarray) -> np.ndarray:
    """Rows j of vals become v(x + delta_j) by exact trigonometric translation."""
    xi = mesh.xi
    ph = np.exp(1j * np.outer(delta, xi))
    if mesh.n_x % 2 == 0:
        ph[:, mesh.n_x // 2] = np.cos(delta * xi[mesh.n_x // 2])
    out = np.fft.ifft(np.fft.fft(vals, axis=1) * ph, axis=1)
    return out.real if not np.iscomplexobj(vals) else out


# ---------------------------------------------------------------- pipelines

@dataclass
class PipelineStep:
    transform: Step
    purpose: str
    params_before: OperatorParams
    params_after: OperatorParams
    space_before: SpaceParams
    space_after: SpaceParams
    indicial_before: IndicialData | None
    indicial_after: IndicialData | None

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "purpose": self.purpose,
            "params_before": self.params_before.to_dict(),
            "params_after": self.params_after.to_dict(),
            "space_before": self.space_before.to_dict(),
            "space_after": self.space_after.to_dict(),
            "indicial_before": None if self.indicial_before is None else self.indicial_before.to_dict(),
            "indicial_after": None if self.indicial_after is None else self.indicial_after.to_dict(),
        }


@dataclass
class TransformPipeline:
    """Composition u = X_1 X_2 ... X_n v relating the original unknown u to
    the canonical unknown v."""
    mode: str
    source_params: OperatorParams
    source_space: SpaceParams
    target_params: OperatorParams
    target_space: SpaceParams
    steps: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def prefactors(self) -> list[float]:
        return [s.transform.prefactor for s in self.steps]

    def pull(self, f):
        """Map data in original variables to canonical variables."""
        for s in self.steps:
            f = apply_transform(s.transform.inverse(), f)
        return f

    def push(self, v):
        """Map a canonical solution back to original variables."""
        for s in reversed(self.steps):
            v = apply_transform(s.transform, v)
        return v

    def to_dict(self) -> dict:
        def side(P, S):
            try:
                ind = indicial_roots(P).to_dict()
            except ValueError:
                ind = None
            return {"params": P.to_dict(), "space": S.to_dict(), "indicial": ind}
        return {
            "mode": self.mode,
            "source": side(self.source_params, self.source_space),
            "target": side(self.target_params, self.target_space),
            "steps": [s.to_dict() for s in self.steps],
            "prefactors": self.prefactors,
            "total_prefactor": float(np.prod(self.prefactors)) if self.steps else 1.0,
            "notes": list(self.notes),
        }


MODES = ("oblique", "dirichlet")


def _indicial_or_none(P):
    try:
        return indicial_roots(P)
    except ValueError:
        return None


def reduce_to_canonical(params: OperatorParams, space: SpaceParams, mode: str):
    """Transform to equal exponents, (dirichlet mode) no potential, and no
    tangential drift. Returns (params, space, pipeline)."""
    if mode == "neumann":
        mode = "oblique"
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rep = validate(params)
    if not rep.ok:
        raise ValueError(f"inadmissible operator: {rep.violations}")
    if mode == "oblique" and params.b != 0.0:
        raise ValueError("oblique realization requires b = 0")
    pipe = TransformPipeline(mode, params, space, params, space)
    P, S = params, space
    if P.dim_x == 0 and P.alpha1 != P.alpha2:
        P = P.replace(alpha1=P.alpha2)
        pipe.notes.append("dim_x = 0: alpha1 has no effect and is set to alpha2")

    def push(step, purpose, fix=None):
        nonlocal P, S
        P2, S2 = step.conjugate(P, S)
        if fix:
            P2 = P2.replace(**fix)
        ib = _indicial_or_none(P)
        ia = _indicial_or_none(P2)
        pipe.steps.append(PipelineStep(step, purpose, P, P2, S, S2, ib, ia))
        P, S = P2, S2

    beta = P.beta_alpha
    if P.dim_x and beta != 0.0:
        push(KelvinStep(0.0, beta, S.p), "equalize exponents",
             fix={"alpha2": P.alpha1 / (beta + 1.0)})
    if mode == "dirichlet":
        ind = indicial_roots(P)
        if ind.s1 != 0.0:
            push(KelvinStep(-ind.s1, 0.0, S.p), "remove potential", fix={"b": 0.0})
    if P.dim_x and np.any(P.d != 0.0):
        if P.c == 0.0:
            raise ValueError("tangential drift cannot be removed when the normal drift vanishes")
        push(ShiftStep(0.0, tuple(-P.d / P.c)), "remove tangential drift",
             fix={"d": np.zeros(P.dim_x)})
    pipe.target_params, pipe.target_space = P, S
    return P, S, pipe
