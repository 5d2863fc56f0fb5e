"""Resolvent and implicit Euler solvers on graded meshes.

Discretization: the operator with b = 0 is written in flux form

    L u = y^(a2 - mu) [ d_y( y^mu (gamma u_y + kappa y^beta u_x) )
                        + d_x( y^mu (kappa' y^beta u_y + Q y^(2 beta) u_x) ) ]

with mu = c/gamma, beta = (a1 - a2)/2, kappa = d gamma/(c + beta gamma) and
kappa' = 2q - kappa. A vanishing y-flux at y = 0 is exactly the oblique
(Neumann when d = 0) boundary condition, so the finite-volume scheme in y
imposes it naturally. Cells are [mid_(j-1), mid_j] with the first cell
starting at 0; cell masses and face conductances are exact power integrals.
The truncation boundary y = Y carries a homogeneous Dirichlet condition.
Potentials b != 0 are always removed first by the substitution
u = y^(-s1) w, which keeps Dirichlet data out of the discrete system.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .generation import BoundaryCondition, check_generation
from .operator_core import OperatorParams, SpaceParams, TestFunction, indicial_roots
from .transform_calculus import KelvinStep, reduce_to_canonical
from .weighted_spaces import GradedMesh, GridFunction, weighted_lp_norm, y_derivative_matrices

RESIDUAL_RTOL = 1e-8


class SolverError(RuntimeError):
    """Numerical failure (singular system, residual check, unsupported case)."""


class NonGeneratingError(ValueError):
    """The requested realization is not a generator on the given space."""


class SingularSystemError(SolverError):
    def __init__(self, msg: str, condition: float = np.inf):
        super().__init__(f"{msg} (condition estimate {condition:.3e})")
        self.condition = condition


# ---------------------------------------------------------------- flux form pieces

def power_integral(a, b, e):
    """int_a^b y^e dy, elementwise; a may be 0 when e > -1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if abs(e + 1.0) < 1e-14:
        return np.log(b / a)
    return (b ** (e + 1.0) - a ** (e + 1.0)) / (e + 1.0)


def cell_edges(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (y[:-1] + y[1:])
    lo = np.concatenate([[0.0], mid])
    hi = np.concatenate([mid, [y[-1]]])
    return lo, hi


@dataclass(frozen=True)
class ModeOperator:
    """Canonical operator (equal exponents, no tangential drift, no
    potential) restricted to the Fourier mode exp(i xi.x)."""
    alpha: float
    gamma: float
    c: float
    qxi: float = 0.0     # q . xi
    Qxixi: float = 0.0   # (Q xi, xi)

    @classmethod
    def from_params(cls, P: OperatorParams, xi) -> "ModeOperator":
        if P.dim_x and (P.alpha1 != P.alpha2 or np.any(P.d != 0.0)):
            raise SolverError("mode operators need equal exponents and d = 0")
        if P.b != 0.0:
            raise SolverError("mode operators need b = 0")
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if not P.dim_x:
            return cls(P.alpha2, P.gamma, P.c)
        return cls(P.alpha2, P.gamma, P.c, float(P.q @ xi), float(xi @ P.Q @ xi))


class FluxSystem:
    """Weighted finite-volume form  lam*M u - Lw u = M f  for b = 0.

    ``xsym`` selects the tangential treatment: None (no x), ("grid", hx, n_x)
    for periodic centered differences, or ("mode", xi) for a single
    Fourier mode. The y-parts are kept so that many modes can share them.
    """

    def __init__(self, P: OperatorParams, y: np.ndarray, xsym=None):
        if P.b != 0.0:
            raise SolverError("flux form needs b = 0; remove the potential first")
        if P.dim_x > 1:
            raise SolverError("grid solvers support dim_x <= 1")
        self.y = y
        J = y.size
        g = P.gamma
        mu = P.c / g
        a2 = P.alpha2
        beta = P.beta_alpha if P.dim_x else 0.0
        if not mu - a2 > -1.0:
            raise SolverError("weight y^(c/gamma - alpha2) not integrable at y = 0")
        lo, hi = cell_edges(y)
        self.ymass = power_integral(lo, hi, mu - a2)
        Iface = power_integral(y[:-1], y[1:], -mu)
        F = g / Iface
        main = np.zeros(J)
        main[:-1] -= F
        main[1:] -= F
        self.G = sp.diags([main, F, F], [0, 1, -1], format="csr")
        self.J = J
        self.T1 = self.T2 = None
        if P.dim_x:
            d, q, Q = P.d[0], P.q[0], P.Q[0, 0]
            if d != 0.0:
                den = P.c + beta * g
                if den == 0.0:
                    raise SolverError("tangential drift with c + beta gamma = 0")
                kappa = d * g / den
            else:
                kappa = 0.0
            kappa2 = 2.0 * q - kappa
            for e in (mu + beta, mu + 2.0 * beta):
                if not e > -1.0:
                    raise SolverError("tangential flux weights not integrable at y = 0")
            Pm = power_integral(lo, hi, mu + beta)
            Pq = power_integral(lo, hi, mu + 2.0 * beta)
            Dy, _ = y_derivative_matrices(y)
            # drift part of the y-flux through face j+1/2:
            # kappa * avg(u_x) * int y^beta / int y^-mu
            hf = kappa * power_integral(y[:-1], y[1:], beta) / Iface
            up = np.zeros(J)
            lw = np.zeros(J)
            up[:-1] += 0.5 * hf
            lw[1:] -= 0.5 * hf
            H = sp.diags([up + lw, 0.5 * hf, -0.5 * hf], [0, 1, -1], format="csr")
            self.T1 = (H + sp.diags(kappa2 * Pm) @ Dy).tocsr()   # multiplies d_x
            self.T2 = sp.diags(Q * Pq, format="csr")             # multiplies d_xx
        self.set_x(xsym)

    def set_x(self, xsym) -> "FluxSystem":
        self.xsym = xsym
        self.nx = 1
        self.mass = self.ymass
        if self.T1 is None or xsym is None:
            self.Lw = self.G
        elif xsym[0] == "mode":
            xi = xsym[1]
            self.Lw = (self.G + 1j * xi * self.T1 - xi * xi * self.T2).tocsr()
        else:
            _, hx, nx = xsym
            self.nx = nx
            I = sp.identity(nx, format="csr")
            Dx = sp.diags([0.5, -0.5, -0.5, 0.5], [1, -1, nx - 1, -(nx - 1)],
                          shape=(nx, nx), format="csr") / hx
            Dxx = sp.diags([1.0, -2.0, 1.0, 1.0, 1.0], [1, 0, -1, nx - 1, -(nx - 1)],
                           shape=(nx, nx), format="csr") / hx ** 2
            self.Lw = (sp.kron(self.G, I) + sp.kron(self.T1, Dx) + sp.kron(self.T2, Dxx)).tocsr()
            self.mass = np.repeat(self.ymass, nx)
        return self

    @property
    def n_interior(self) -> int:
        return (self.J - 1) * self.nx

    def matrix(self, lam: complex) -> sp.csc_matrix:
        n = self.n_interior
        A = lam * sp.diags(self.mass) - self.Lw
        return A[:n, :n].tocsc()

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        """Discrete L u = M^-1 Lw u at all nodes (u flattened y-major)."""
        return (self.Lw @ u) / self.mass


def _factor(A: sp.csc_matrix):
    try:
        return spla.splu(A)
    except RuntimeError as exc:  # exactly singular
        raise SingularSystemError(str(exc), np.inf) from exc


def _solve_checked(lu, A, rhs):
    u = lu.solve(rhs)
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("non-finite solution", np.inf)
    res = np.max(np.abs(A @ u - rhs)) / max(np.max(np.abs(rhs)), 1e-300)
    if res > RESIDUAL_RTOL:
        Anorm = spla.norm(A, 1)
        raise SingularSystemError(f"residual {res:.2e} exceeds tolerance",
                                  Anorm * _inverse_norm_estimate(lu, A.shape[0]))
    return u, res


def _inverse_norm_estimate(lu, n):
    op = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="H"),
                             dtype=complex)
    try:
        return float(spla.onenormest(op))
    except Exception:
        return np.inf


# ---------------------------------------------------------------- problems

@dataclass
class ResolventProblem:
    params: OperatorParams
    space: SpaceParams
    lam: complex
    rhs: object                      # GridFunction, TestFunction or f(x, y)
    bc: BoundaryCondition
    mesh: GradedMesh

    def rhs_values(self) -> np.ndarray:
        f = self.rhs
        if isinstance(f, GridFunction):
            if f.mesh != self.mesh:
                raise ValueError("rhs lives on a different mesh")
            return f.values
        return GridFunction.sample(f, self.mesh).values


def _check_problem(params, space, bc, lam):
    if not np.real(lam) > 0:
        raise ValueError("the resolvent parameter must have positive real part")
    rep = check_generation(params, space, bc)
    if not rep.generates:
        raise NonGeneratingError("; ".join(rep.reasons) or "not a generator")


def _substitution(params: OperatorParams, bc: BoundaryCondition, p: float):
    """Exponent s with u = y^-s w, and the operator acting on w."""
    if bc.mode == "oblique":
        return 0.0, params
    s1 = indicial_roots(params).s1
    if s1 == 0.0:
        return 0.0, params.replace(b=0.0)
    Pw = KelvinStep(-s1, 0.0, p).conjugate(params).replace(b=0.0)
    return s1, Pw


class DirectResolvent:
    """Flux-form solver applied to the operator itself (after the potential
    substitution in the Dirichlet case)."""

    method = "direct"

    def __init__(self, params, space, bc, mesh, lam):
        _check_problem(params, space, bc, lam)
        self.params, self.space, self.bc, self.mesh, self.lam = params, space, bc, mesh, lam
        self.s1, Pw = _substitution(params, bc, space.p)
        if params.dim_x == 0:
            Pw = Pw.replace(alpha1=Pw.alpha2)
            xsym = None
        else:
            if not mesh.n_x:
                raise ValueError("dim_x = 1 needs a mesh with an x-grid")
            xsym = ("grid", mesh.hx, mesh.n_x)
        self.system = FluxSystem(Pw, mesh.y, xsym)
        self.A = self.system.matrix(lam)
        self.lu = _factor(self.A)
        self.residual = 0.0

    def _yfac(self, shape):
        return (self.mesh.y ** self.s1).reshape((-1,) + (1,) * (len(shape) - 1))

    def solve_values(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        fac = self._yfac(f.shape)
        fw = (fac * f).reshape(-1)
        n = self.system.n_interior
        rhs = self.system.mass[:n] * fw[:n]
        w, res = _solve_checked(self.lu, self.A, rhs)
        self.residual = max(self.residual, res)
        out = np.zeros(fw.size, dtype=np.result_type(w, f))
        out[:n] = w
        return out.reshape(f.shape) / fac

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        fac = self._yfac(u.shape)
        Lw = self.system.apply_L((fac * u).reshape(-1)).reshape(u.shape)
        return Lw / fac


class _ModeView:
    """One Fourier mode of a shared FluxSystem."""

    def __init__(self, base: FluxSystem, xi: float):
        self.mass = base.ymass
        self.n_interior = base.J - 1
        self._base, self._xi = base, xi

    def matrix(self, lam):
        n = self.n_interior
        b = self._base
        A = lam * sp.diags(b.ymass) - b.G - 1j * self._xi * b.T1 + self._xi ** 2 * b.T2
        return A[:n, :n].tocsc()


class PipelineResolvent:
    """Reduce to canonical form, solve there (Fourier modes in x), map back."""

    method = "pipeline"

    def __init__(self, params, space, bc, mesh, lam):
        _check_problem(params, space, bc, lam)
        self.params, self.space, self.bc, self.mesh, self.lam = params, space, bc, mesh, lam
        Pc, Sc, self.pipeline = reduce_to_canonical(params, space, bc.mode)
        self.canonical = Pc
        probe = self.pipeline.pull(GridFunction(mesh, np.zeros(mesh.shape)))
        self.cmesh = probe.mesh
        yc = self.cmesh.y
        self.residual = 0.0
        if params.dim_x == 0:
            sysm = FluxSystem(Pc.replace(alpha1=Pc.alpha2), yc, None)
            self.systems = [sysm]
        else:
            if not mesh.n_x:
                raise ValueError("dim_x = 1 needs a mesh with an x-grid")
            xi = mesh.xi
            nyq = mesh.n_x // 2 if mesh.n_x % 2 == 0 else None
            base = FluxSystem(Pc, yc, None)
            odd = FluxSystem(Pc.replace(q=np.zeros(1)), yc, None) if nyq is not None else None
            self.systems = []
            for k, xk in enumerate(xi):
                # the sign of the Nyquist wavenumber is ambiguous; drop odd terms there
                src = odd if k == nyq else base
                self.systems.append(_ModeView(src, xk))
        self.As = [s.matrix(lam) for s in self.systems]
        self.lus = [_factor(A) for A in self.As]

    def _solve_canonical(self, fc: np.ndarray) -> np.ndarray:
        J = self.cmesh.J
        if self.params.dim_x == 0:
            fh = fc[:, None]
        else:
            fh = np.fft.fft(fc, axis=1)
        out = np.zeros(fh.shape, dtype=complex)
        for k, (s, A, lu) in enumerate(zip(self.systems, self.As, self.lus)):
            rhs = s.mass[: J - 1] * fh[: J - 1, k]
            w, res = _solve_checked(lu, A, rhs)
            self.residual = max(self.residual, res)
            out[: J - 1, k] = w
        if self.params.dim_x == 0:
            out = out[:, 0]
        else:
            out = np.fft.ifft(out, axis=1)
        return out

    def solve_values(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        fc = self.pipeline.pull(GridFunction(self.mesh, f))
        vc = self._solve_canonical(fc.values)
        real = not np.iscomplexobj(f) and np.isrealobj(self.lam)
        if real:
            vc = vc.real
        u = self.pipeline.push(GridFunction(self.cmesh, vc)).values
        return u


def _make(problem: ResolventProblem, cls):
    return cls(problem.params, problem.space, problem.bc, problem.mesh, problem.lam)


def _finish(solver, problem, t0) -> GridFunction:
    u = solver.solve_values(problem.rhs_values())
    return GridFunction(problem.mesh, u, problem.space.m, problem.space.p,
                        meta={"method": solver.method, "residual": solver.residual,
                              "seconds": time.perf_counter() - t0})


def solve_resolvent_1d(problem: ResolventProblem) -> GridFunction:
    """(lam - L) u = f for dim_x = 0."""
    if problem.params.dim_x != 0:
        raise ValueError("solve_resolvent_1d needs dim_x = 0")
    t0 = time.perf_counter()
    return _finish(_make(problem, DirectResolvent), problem, t0)


def solve_mode(mode: ModeOperator, lam: complex, f: np.ndarray, mesh: GradedMesh,
               xi: float = 1.0) -> np.ndarray:
    """(lam - L_xi) v = f for one Fourier mode of a canonical operator."""
    qv = mode.qxi / xi if xi else 0.0
    Qv = mode.Qxixi / xi ** 2 if xi else 0.0
    P = OperatorParams(1, mode.alpha, mode.alpha, [Qv], [qv], mode.gamma, [0.0], mode.c, 0.0)
    sysm = FluxSystem(P, mesh.y, ("mode", xi))
    A = sysm.matrix(lam)
    J = mesh.J
    out = np.zeros(J, dtype=complex)
    out[:-1], _ = _solve_checked(_factor(A), A, sysm.mass[:-1] * np.asarray(f)[:-1])
    return out


def solve_resolvent_2d(problem: ResolventProblem) -> GridFunction:
    """Direct flux-form solve for dim_x = 1 (no transforms besides the
    potential substitution)."""
    if problem.params.dim_x != 1:
        raise ValueError("solve_resolvent_2d needs dim_x = 1")
    t0 = time.perf_counter()
    return _finish(_make(problem, DirectResolvent), problem, t0)


def solve_via_pipeline(problem: ResolventProblem) -> GridFunction:
    t0 = time.perf_counter()
    return _finish(_make(problem, PipelineResolvent), problem, t0)


def solve_adaptive(problem: ResolventProblem, solve=solve_via_pipeline, tol: float = 1e-4,
                   max_doublings: int = 6) -> GridFunction:
    """Double the truncation length until the weighted norm of the solution
    changes by less than ``tol`` (relative). J doubles with Y so the spacing
    near the far end stays fixed. The rhs must be a function, not grid data."""
    if isinstance(problem.rhs, GridFunction):
        raise ValueError("adaptive truncation needs the rhs as a function")
    prev = None
    mesh = problem.mesh
    for _ in range(max_doublings + 1):
        prob = ResolventProblem(problem.params, problem.space, problem.lam, problem.rhs,
                                problem.bc, mesh)
        u = solve(prob)
        nrm = weighted_lp_norm(u, problem.space.m, problem.space.p)
        if prev is not None and abs(nrm - prev) <= tol * max(abs(nrm), 1e-300):
            u.meta["truncation"] = mesh.Y
            return u
        prev = nrm
        mesh = GradedMesh(2 * mesh.J, 2.0 * mesh.Y, mesh.r, mesh.n_x, mesh.X)
    raise SolverError("truncation did not settle")


# ---------------------------------------------------------------- time stepping

@dataclass
class MaxRegReport:
    ratio: float | None
    time_derivative: float
    operator_term: float
    forcing: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "time_derivative": self.time_derivative,
                "operator_term": self.operator_term, "forcing": self.forcing,
                "degenerate": self.degenerate}


def parabolic_march(params: OperatorParams, space: SpaceParams, bc: BoundaryCondition,
                    g: Callable[[float], np.ndarray] | np.ndarray, tau: float, n_steps: int,
                    mesh: GradedMesh, q: float = 2.0, method: str = "pipeline"):
    """Implicit Euler for u' = L u + g, u(0) = 0.

    ``g`` is either an array of shape (n_steps, *mesh.shape) holding g at
    t_1..t_N, or a callable t -> nodal values. Returns the trajectory
    (n_steps + 1, *mesh.shape) and the discrete maximal-regularity ratio
    (sum tau |D_tau u|^q)^(1/q) / (sum tau |g|^q)^(1/q) measured in the
    weighted L^p norm of the space.
    """
    if not tau > 0 or n_steps < 1:
        raise ValueError("need tau > 0 and n_steps >= 1")
    cls = PipelineResolvent if method == "pipeline" else DirectResolvent
    R = cls(params, space, bc, mesh, 1.0 / tau)
    traj = np.zeros((n_steps + 1,) + mesh.shape)
    sd = so = sg = 0.0
    for n in range(1, n_steps + 1):
        gn = g(n * tau) if callable(g) else g[n - 1]
        gn = np.asarray(gn, dtype=float).reshape(mesh.shape)
        traj[n] = np.real(R.solve_values(traj[n - 1] / tau + gn))
        dt = (traj[n] - traj[n - 1]) / tau
        # the scheme gives L_h u^n = D_tau u^n - g^n exactly
        Lu = dt - gn
        nrm = lambda v: weighted_lp_norm(GridFunction(mesh, v), space.m, space.p)
        sd += tau * nrm(dt) ** q
        so += tau * nrm(Lu) ** q
        sg += tau * nrm(gn) ** q
    sd, so, sg = (v ** (1.0 / q) for v in (sd, so, sg))
    degenerate = sg == 0.0
    ratio = None if degenerate else sd / sg
    return traj, MaxRegReport(ratio, sd, so, sg, degenerate)
