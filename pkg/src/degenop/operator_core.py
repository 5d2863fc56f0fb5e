"""Coefficient model, admissibility checks and pointwise evaluation of the
degenerate operator

    L = y^a1 Tr(Q D_x^2) + 2 y^((a1+a2)/2) q.grad_x D_y + gamma y^a2 D_yy
        + y^((a1+a2)/2 - 1) d.grad_x + c y^(a2-1) D_y - b y^(a2-2)

on the half space R^N x (0, inf).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

OPERATOR_KEYS = ("dim_x", "alpha1", "alpha2", "Q", "q", "gamma", "d", "c", "b")

# relative eigenvalue floor for positive definiteness of the coefficient block
SPD_RTOL = 1e-10


class ConfigError(ValueError):
    """Malformed parameter document (missing/unknown keys, wrong shapes)."""


class NegativeDiscriminantError(ValueError):
    """Raised when the indicial discriminant is negative."""


@dataclass(frozen=True, eq=False)
class OperatorParams:
    dim_x: int
    alpha1: float
    alpha2: float
    Q: np.ndarray
    q: np.ndarray
    gamma: float
    d: np.ndarray
    c: float
    b: float

    def __post_init__(self) -> None:
        n = int(self.dim_x)
        if n < 0:
            raise ConfigError("dim_x must be >= 0")
        Q = np.array(self.Q, dtype=float).reshape(-1)
        if Q.size != n * n:
            raise ConfigError(f"Q must have {n * n} entries, got {Q.size}")
        Q = Q.reshape(n, n)
        q = np.array(self.q, dtype=float).reshape(-1)
        d = np.array(self.d, dtype=float).reshape(-1)
        if q.size != n or d.size != n:
            raise ConfigError(f"q and d must have length {n}")
        for arr in (Q, q, d):
            arr.setflags(write=False)
        object.__setattr__(self, "dim_x", n)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", d)
        for name in ("alpha1", "alpha2", "gamma", "c", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def beta_alpha(self) -> float:
        """Exponent offset (a1 - a2)/2 that balances the two degeneracies."""
        return 0.5 * (self.alpha1 - self.alpha2)

    @property
    def alpha_mixed(self) -> float:
        return 0.5 * (self.alpha1 + self.alpha2)

    @property
    def block_matrix(self) -> np.ndarray:
        """The (N+1)x(N+1) matrix [[Q, q^T], [q, gamma]]."""
        n = self.dim_x
        A = np.empty((n + 1, n + 1))
        A[:n, :n] = self.Q
        A[:n, n] = self.q
        A[n, :n] = self.q
        A[n, n] = self.gamma
        return A

    @property
    def drift(self) -> np.ndarray:
        """First order coefficient vector (d, c)."""
        return np.append(self.d, self.c)

    def replace(self, **changes: Any) -> "OperatorParams":
        return replace(self, **changes)

    def isclose(self, other: "OperatorParams", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        if self.dim_x != other.dim_x:
            return False
        a = self.flat_vector()
        b = other.flat_vector()
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))

    def flat_vector(self) -> np.ndarray:
        return np.concatenate([
            [self.alpha1, self.alpha2, self.gamma, self.c, self.b],
            self.Q.ravel(), self.q, self.d,
        ])

    def to_dict(self) -> dict:
        return {
            "dim_x": self.dim_x,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "Q": [float(v) for v in self.Q.ravel()],
            "q": [float(v) for v in self.q],
            "gamma": self.gamma,
            "d": [float(v) for v in self.d],
            "c": self.c,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "OperatorParams":
        keys = set(doc)
        missing = [k for k in OPERATOR_KEYS if k not in keys]
        unknown = sorted(keys - set(OPERATOR_KEYS))
        if missing:
            raise ConfigError(f"missing operator keys: {missing}")
        if unknown:
            raise ConfigError(f"unknown operator keys: {unknown}")
        return cls(**{k: doc[k] for k in OPERATOR_KEYS})


@dataclass(frozen=True)
class SpaceParams:
    """L^p space on the half space with weight y^m."""
    p: float = 2.0
    m: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "m", float(self.m))
        if not self.p > 1.0:
            raise ConfigError("p must be > 1")

    @property
    def scaling_index(self) -> float:
        """(m + 1)/p, the quantity compared against generation windows."""
        return (self.m + 1.0) / self.p

    def to_dict(self) -> dict:
        return {"p": self.p, "m": self.m}


@dataclass(frozen=True)
class IndicialData:
    D: float
    s1: float
    s2: float

    def to_dict(self) -> dict:
        return {"D": self.D, "s1": self.s1, "s2": self.s2}


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def discriminant(params: OperatorParams) -> float:
    h = 0.5 * (params.c / params.gamma - 1.0)
    return params.b / params.gamma + h * h


def validate(params: OperatorParams) -> ValidationReport:
    rep = ValidationReport()
    if not np.all(np.isfinite(params.flat_vector())):
        rep.violations.append("finite coefficients")
        return rep
    Q = params.Q
    if Q.size and not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        rep.violations.append("Q symmetric")
    A = params.block_matrix
    A = 0.5 * (A + A.T)
    eig = np.linalg.eigvalsh(A)
    if not eig[0] > SPD_RTOL * np.linalg.norm(A, 2):
        rep.violations.append("A positive definite")
    if not params.alpha2 < 2.0:
        rep.violations.append("alpha2 < 2")
    if not params.alpha2 - params.alpha1 < 2.0:
        rep.violations.append("alpha2 - alpha1 < 2")
    if params.gamma > 0 and not discriminant(params) >= 0.0:
        rep.violations.append("D >= 0")
    return rep


def indicial_roots(params: OperatorParams) -> IndicialData:
    """Roots s1 <= s2 of gamma s^2 + (gamma - c) s - b = 0, i.e. the exponents
    for which y^-s is annihilated by the y-part of the operator."""
    D = discriminant(params)
    if D < 0:
        raise NegativeDiscriminantError(f"discriminant D = {D!r} < 0")
    h = 0.5 * (params.c / params.gamma - 1.0)
    r = float(np.sqrt(D))
    return IndicialData(D=float(D), s1=float(h - r), s2=float(h + r))


def indicial_polynomial(params: OperatorParams, s: float) -> float:
    return params.gamma * s * s + (params.gamma - params.c) * s - params.b


# ---------------------------------------------------------------- test functions

class TestFunction:
    """Smooth function on the half space with exact first and second
    derivatives. Subclasses implement ``jet``."""

    __test__ = False  # not a pytest class

    dim_x: int

    def jet(self, x: np.ndarray, y: np.ndarray):
        """Return (value, gradient, hessian) at P points.

        x has shape (P, N), y has shape (P,). Gradient and Hessian are taken
        in the variables (x_1..x_N, y); shapes (P, N+1) and (P, N+1, N+1).
        """
        raise NotImplementedError

    def __call__(self, x, y) -> np.ndarray:
        X, Y, scalar = _as_points(x, y, self.dim_x)
        v = self.jet(X, Y)[0]
        return v[0] if scalar else v

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return LinearCombination(((1.0, self), (1.0, other)))

    def __rmul__(self, a: float) -> "TestFunction":
        return LinearCombination(((float(a), self),))


def _as_points(x, y, n: int):
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    Y = np.atleast_1d(y).reshape(-1)
    X = np.asarray(x, dtype=float)
    if n == 0:
        X = np.zeros((Y.size, 0))
    elif X.ndim == 0 or (X.ndim == 1 and n == 1 and X.size == Y.size):
        X = np.broadcast_to(X.reshape(-1, 1), (Y.size, 1))
    elif X.ndim == 1:
        X = np.broadcast_to(X.reshape(1, n), (Y.size, n))
    X = np.asarray(X, dtype=float).reshape(Y.size, n)
    if np.any(Y <= 0):
        raise ValueError("evaluation points must satisfy y > 0")
    return X, Y, scalar


@dataclass(frozen=True)
class PolyGaussian(TestFunction):
    """sum_k coef_k x^e_k y^s_k * exp(-decay (|x - center|^2 + y^2)).

    ``terms`` holds (coef, x-exponents, y-exponent); x-exponents are
    nonnegative integers, y-exponents are arbitrary reals.
    """
    dim_x: int
    terms: tuple
    decay: float = 1.0
    center: tuple = ()

    def jet(self, x, y):
        n = self.dim_x
        P = y.size
        ctr = np.zeros(n) if not self.center else np.asarray(self.center, float)
        g = np.zeros(P)
        dg = np.zeros((P, n + 1))
        hg = np.zeros((P, n + 1, n + 1))
        for coef, ex, sy in self.terms:
            ex = np.asarray(ex, dtype=int).reshape(n)
            v, dv, hv = _monomial_jet(x, y, ex, float(sy))
            g += coef * v
            dg += coef * dv
            hg += coef * hv
        a = self.decay
        z = np.concatenate([x - ctr, y[:, None]], axis=1)
        h = np.exp(-a * np.sum(z * z, axis=1))
        dh = -2.0 * a * z * h[:, None]
        hh = (4.0 * a * a * z[:, :, None] * z[:, None, :]
              - 2.0 * a * np.eye(n + 1)[None]) * h[:, None, None]
        val = g * h
        grad = dg * h[:, None] + g[:, None] * dh
        hess = (hg * h[:, None, None] + g[:, None, None] * hh
                + dg[:, :, None] * dh[:, None, :] + dh[:, :, None] * dg[:, None, :])
        return val, grad, hess


def _monomial_jet(x, y, ex, sy):
    n = ex.size
    P = y.size
    v = y ** sy
    for i in range(n):
        v = v * x[:, i] ** ex[i]

    def part(i_counts, ycount):
        # derivative of x^ex y^sy with i_counts x-derivatives and ycount y-derivatives
        out = np.ones(P)
        for i in range(n):
            k = i_counts[i]
            e = ex[i]
            if k > e:
                return np.zeros(P)
            fac = 1.0
            for j in range(k):
                fac *= e - j
            out = out * fac * x[:, i] ** (e - k)
        fac = 1.0
        for j in range(ycount):
            fac *= sy - j
        if fac == 0.0:
            return np.zeros(P)
        return out * fac * y ** (sy - ycount)

    grad = np.zeros((P, n + 1))
    hess = np.zeros((P, n + 1, n + 1))
    zero = [0] * n
    for i in range(n + 1):
        ci = list(zero)
        yi = 0
        if i < n:
            ci[i] += 1
        else:
            yi += 1
        grad[:, i] = part(ci, yi)
        for j in range(i, n + 1):
            cj = list(ci)
            yj = yi
            if j < n:
                cj[j] += 1
            else:
                yj += 1
            hess[:, i, j] = part(cj, yj)
            hess[:, j, i] = hess[:, i, j]
    return v, grad, hess


@dataclass(frozen=True)
class LinearCombination(TestFunction):
    parts: tuple  # ((coef, TestFunction), ...)

    @property
    def dim_x(self) -> int:  # type: ignore[override]
        return self.parts[0][1].dim_x

    def jet(self, x, y):
        out = None
        for a, f in self.parts:
            v, g, h = f.jet(x, y)
            if out is None:
                out = [a * v, a * g, a * h]
            else:
                out[0] = out[0] + a * v
                out[1] = out[1] + a * g
                out[2] = out[2] + a * h
        return tuple(out)


# ---------------------------------------------------------------- evaluation

def operator_terms(params: OperatorParams, u: TestFunction, x, y) -> np.ndarray:
    """The six individual terms of L u at the given points, shape (6, P)."""
    X, Y, _ = _as_points(x, y, params.dim_x)
    if u.dim_x != params.dim_x:
        raise ConfigError("test function and operator have different dim_x")
    n = params.dim_x
    v, g, H = u.jet(X, Y)
    a1, a2, am = params.alpha1, params.alpha2, params.alpha_mixed
    t = np.zeros((6, Y.size))
    if n:
        t[0] = Y ** a1 * np.einsum("ij,pij->p", params.Q, H[:, :n, :n])
        t[1] = 2.0 * Y ** am * (H[:, :n, n] @ params.q)
        t[3] = Y ** (am - 1.0) * (g[:, :n] @ params.d)
    t[2] = params.gamma * Y ** a2 * H[:, n, n]
    t[4] = params.c * Y ** (a2 - 1.0) * g[:, n]
    t[5] = -params.b * Y ** (a2 - 2.0) * v
    return t


def apply_operator(params: OperatorParams, u: TestFunction, x, y) -> np.ndarray:
    """Pointwise L u. ``x`` is (P, N) (or broadcastable), ``y`` is (P,) with y > 0."""
    yarr = np.asarray(y, dtype=float)
    t = operator_terms(params, u, x, y)
    out = t.sum(axis=0)
    return out[0] if yarr.ndim == 0 else out


def operator_scale(params: OperatorParams, u: TestFunction, x, y) -> np.ndarray:
    """Sum of absolute values of the terms of L u, a cancellation-aware scale."""
    return np.abs(operator_terms(params, u, x, y)).sum(axis=0)
