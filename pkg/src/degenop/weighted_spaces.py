"""Graded meshes, sampled functions, weighted L^p norms and boundary traces."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson

from .operator_core import OperatorParams, SpaceParams, TestFunction


@dataclass(frozen=True)
class GradedMesh:
    """Nodes y_j = Y (j/J)^r, j = 1..J, optionally times a periodic x-grid of
    n_x points on [-X, X)."""
    J: int
    Y: float
    r: float = 2.0
    n_x: int = 0
    X: float = np.pi

    def __post_init__(self) -> None:
        if int(self.J) < 4:
            raise ValueError("J must be >= 4")
        if not self.Y > 0 or not self.r > 0:
            raise ValueError("Y and r must be positive")
        if int(self.n_x) < 0 or (0 < int(self.n_x) < 4):
            raise ValueError("n_x must be 0 or >= 4")
        object.__setattr__(self, "J", int(self.J))
        object.__setattr__(self, "n_x", int(self.n_x))
        object.__setattr__(self, "Y", float(self.Y))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "X", float(self.X))

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.J + 1) / self.J

    @property
    def y(self) -> np.ndarray:
        return self.Y * self.t ** self.r

    @property
    def hx(self) -> float:
        return 2.0 * self.X / self.n_x

    @property
    def x(self) -> np.ndarray:
        return -self.X + self.hx * np.arange(self.n_x) if self.n_x else np.zeros(0)

    @property
    def xi(self) -> np.ndarray:
        """Angular wavenumbers matching numpy's FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.hx)

    @property
    def shape(self) -> tuple:
        return (self.J, self.n_x) if self.n_x else (self.J,)

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, y) evaluation points, y-major, x of shape (P, N)."""
        y = self.y
        if not self.n_x:
            return np.zeros((self.J, 0)), y
        Yg, Xg = np.meshgrid(y, self.x, indexing="ij")
        return Xg.reshape(-1, 1), Yg.reshape(-1)

    def refine(self) -> "GradedMesh":
        return GradedMesh(2 * self.J, self.Y, self.r, 2 * self.n_x, self.X)

    def mapped(self, beta: float) -> "GradedMesh":
        """Image of the nodes under y -> y^(beta+1) (requires beta > -1)."""
        e = beta + 1.0
        if not e > 0:
            raise ValueError("node mapping needs beta > -1")
        return GradedMesh(self.J, self.Y ** e, self.r * e, self.n_x, self.X)

    def with_y(self, Y: float) -> "GradedMesh":
        return GradedMesh(self.J, Y, self.r, self.n_x, self.X)

    def integrate_y(self, F: np.ndarray, m: float) -> np.ndarray:
        """Approximate int_0^Y F(y) y^m dy from nodal values (along axis 0).

        Simpson's rule in the graded coordinate t on [t_1, 1] plus a power-law
        fit on the first cell [0, t_1]. A first-cell fit whose exponent makes
        the integral divergent contributes nothing; this is what makes norm
        sequences of non-members grow under refinement.
        """
        F = np.asarray(F)
        t = self.t
        shape = (-1,) + (1,) * (F.ndim - 1)
        y = self.y.reshape(shape)
        G = F * y ** m * (self.Y * self.r * t ** (self.r - 1.0)).reshape(shape)
        total = simpson(G, dx=1.0 / self.J, axis=0)
        return total + _first_cell(G[0], G[1], t[0])


def _first_cell(g1, g2, t1):
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    a1 = np.abs(g1)
    a2 = np.abs(g2)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.log2(a2 / a1)
        val = np.where((a1 > 0) & (a2 > 0) & (e > -1.0), g1 * t1 / (e + 1.0), 0.0)
    return val


@dataclass
class GridFunction:
    """Nodal values on a GradedMesh, shape (J,) or (J, n_x)."""
    mesh: GradedMesh
    values: np.ndarray
    m: float | None = None
    p: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.shape != self.mesh.shape:
            raise ValueError(f"values shape {self.values.shape} != mesh shape {self.mesh.shape}")

    @classmethod
    def sample(cls, u, mesh: GradedMesh, **kw) -> "GridFunction":
        """Sample a TestFunction or a callable f(x, y) on the mesh."""
        X, Y = mesh.points()
        if isinstance(u, TestFunction):
            vals = u.jet(X, Y)[0]
        else:
            vals = np.asarray(u(X[:, 0] if mesh.n_x else None, Y))
        return cls(mesh, np.asarray(vals).reshape(mesh.shape), **kw)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.mesh, values, self.m, self.p)

    def dy(self) -> np.ndarray:
        D1, _ = y_derivative_matrices(self.mesh.y)
        return D1 @ self.values

    def dyy(self) -> np.ndarray:
        _, D2 = y_derivative_matrices(self.mesh.y)
        return D2 @ self.values

    def dx(self) -> np.ndarray:
        v = self.values
        return (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * self.mesh.hx)

    def dxx(self) -> np.ndarray:
        v = self.values
        return (np.roll(v, -1, axis=1) - 2.0 * v + np.roll(v, 1, axis=1)) / self.mesh.hx ** 2

    def dxy(self) -> np.ndarray:
        D1, _ = y_derivative_matrices(self.mesh.y)
        return D1 @ self.dx()


def y_derivative_matrices(y: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Three-point first and second derivative matrices on nonuniform nodes,
    one-sided at both ends."""
    J = y.size
    rows, c1, c2, cols = [], [], [], []
    for j in range(J):
        k = min(max(j, 1), J - 2)
        idx = (k - 1, k, k + 1)
        z = y[list(idx)]
        x0 = y[j]
        for a, i in enumerate(idx):
            o = [z[b] for b in range(3) if b != a]
            den = (z[a] - o[0]) * (z[a] - o[1])
            rows.append(j)
            cols.append(i)
            c1.append(((x0 - o[0]) + (x0 - o[1])) / den)
            c2.append(2.0 / den)
    D1 = sp.csr_matrix((c1, (rows, cols)), shape=(J, J))
    D2 = sp.csr_matrix((c2, (rows, cols)), shape=(J, J))
    return D1, D2


def _values_on(u, mesh: GradedMesh | None):
    if isinstance(u, GridFunction):
        return u.values, u.mesh
    if mesh is None:
        raise ValueError("a mesh is required to evaluate a TestFunction")
    return GridFunction.sample(u, mesh).values, mesh


def weighted_lp_norm(u, m: float, p: float, mesh: GradedMesh | None = None) -> float:
    """(int |u|^p y^m dx dy)^(1/p) on the truncated domain of the mesh."""
    if p < 1:
        raise ValueError("p must be >= 1")
    vals, mesh = _values_on(u, mesh)
    return _norm_of_values(vals, mesh, m, p)


def _norm_of_values(vals, mesh: GradedMesh, m: float, p: float) -> float:
    a = np.abs(vals) ** p
    if mesh.n_x:
        a = a.sum(axis=1) * mesh.hx
    return float(max(mesh.integrate_y(a, m), 0.0) ** (1.0 / p))


TERM_NAMES = ("u", "x_first", "y_first", "x_second", "mixed", "y_second",
              "neumann", "drift", "rellich")


def _derivative_fields(u, mesh):
    """(value, [dx_i], dy, [[dxx_ij]], [dxy_i], dyy) on the mesh nodes."""
    if isinstance(u, GridFunction):
        g = u
        if mesh.n_x:
            return (g.values, [g.dx()], g.dy(), [[g.dxx()]], [g.dxy()], g.dyy())
        return g.values, [], g.dy(), [], [], g.dyy()
    X, Y = mesh.points()
    v, gr, H = u.jet(X, Y)
    n = u.dim_x
    sh = mesh.shape
    return (v.reshape(sh), [gr[:, i].reshape(sh) for i in range(n)],
            gr[:, n].reshape(sh),
            [[H[:, i, j].reshape(sh) for j in range(n)] for i in range(n)],
            [H[:, i, n].reshape(sh) for i in range(n)], H[:, n, n].reshape(sh))


def sobolev_term_norms(u, params: OperatorParams, space: SpaceParams,
                       mesh: GradedMesh | None = None) -> dict[str, float]:
    """Weighted norms of the individual terms entering the domain norms."""
    if isinstance(u, GridFunction):
        mesh = u.mesh
    if mesh is None:
        raise ValueError("a mesh is required to evaluate a TestFunction")
    if isinstance(u, TestFunction) and mesh.n_x != (1 if u.dim_x else 0):
        if u.dim_x > 1:
            raise ValueError("grid evaluation supports dim_x <= 1")
    v, gx, gy, hxx, hxy, hyy = _derivative_fields(u, mesh)
    y = mesh.y.reshape((-1,) + (1,) * (v.ndim - 1))
    a1, a2, am = params.alpha1, params.alpha2, params.alpha_mixed
    p, m = space.p, space.m

    def nrm(f):
        return _norm_of_values(f, mesh, m, p)

    out = {
        "u": nrm(v),
        "x_first": sum(nrm(y ** (a1 / 2) * g) for g in gx),
        "y_first": nrm(y ** (a2 / 2) * gy),
        "x_second": sum(nrm(y ** a1 * h) for row in hxx for h in row),
        "mixed": sum(nrm(y ** am * h) for h in hxy),
        "y_second": nrm(y ** a2 * hyy),
        "neumann": nrm(y ** (a2 - 1) * gy),
        "rellich": nrm(y ** (a2 - 2) * v),
    }
    drift = params.c * y ** (a2 - 1) * gy
    for di, g in zip(params.d, gx):
        drift = drift + di * y ** (am - 1) * g
    out["drift"] = nrm(drift)
    return out


def membership_scan(u, params: OperatorParams, space: SpaceParams,
                    meshes: Sequence[GradedMesh], stable_rtol: float = 1e-3,
                    growth: float = 1.5) -> dict[str, dict]:
    """Evaluate term norms on successively refined meshes and classify each
    sequence as 'bounded' (Cauchy within stable_rtol), 'unbounded' (grows by
    at least ``growth`` per refinement) or 'undecided'."""
    seqs = {k: [] for k in TERM_NAMES}
    for mesh in meshes:
        vals = sobolev_term_norms(u if isinstance(u, TestFunction) else u(mesh),
                                  params, space, mesh)
        for k in TERM_NAMES:
            seqs[k].append(vals[k])
    out = {}
    for k, s in seqs.items():
        s = np.asarray(s)
        ratios = s[1:] / np.where(s[:-1] == 0, np.inf, s[:-1])
        if s[-1] == 0 or abs(s[-1] - s[-2]) <= stable_rtol * abs(s[-1]):
            verdict = "bounded"
        elif np.all(ratios >= growth):
            verdict = "unbounded"
        else:
            verdict = "undecided"
        out[k] = {"values": s.tolist(), "verdict": verdict}
    return out


@dataclass
class TraceEstimate:
    limit: float | np.ndarray
    confidence: float
    low_confidence: bool
    bands: tuple


def _aitken(a, b, c):
    den = c - 2.0 * b + a
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(c))
    tiny = np.abs(den) <= 1e-13 * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = a - (b - a) ** 2 / den
    return np.where(tiny, a, est), tiny


def boundary_trace(u: GridFunction, sigma: float) -> TraceEstimate:
    """Estimate lim_{y->0} y^sigma u(., y) from the first nodes.

    Aitken extrapolation on y^sigma u at nodes 1, 2, 4 (a geometric sequence
    of y values); the spread against the estimate from nodes 2, 4, 8 is the
    reported confidence. Non-geometric or oscillating bands are flagged.
    """
    y = u.mesh.y
    if u.mesh.J < 8:
        raise ValueError("trace estimation needs J >= 8")
    g = y.reshape((-1,) + (1,) * (u.values.ndim - 1)) ** sigma * u.values
    idx1 = (0, 1, 3)
    idx2 = (1, 3, 7)
    e1, t1 = _aitken(*(g[i] for i in idx1))
    e2, t2 = _aitken(*(g[i] for i in idx2))
    spread = np.abs(e1 - e2)
    conf = float(np.max(spread))
    a, b, c = (g[i] for i in idx1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(c - b) / np.abs(b - a)
    # y^sigma u - L ~ A y^k with k > 0 gives ratios 2^(r k) > 1
    settled = np.abs(c - b) <= 1e-13 * np.maximum(np.abs(c), 1e-300)
    monotone = settled | (np.isfinite(ratio) & (ratio > 1.0))
    scale = np.maximum(np.abs(e1), np.max(np.abs(g[:8]), axis=0))
    low = bool(np.any(~monotone) or np.any(t1 & ~settled) or np.any(spread > 1e-2 * scale))
    lim = e1 if np.ndim(e1) else e1.item()
    return TraceEstimate(limit=lim, confidence=conf, low_confidence=low,
                         bands=(np.asarray(e1).tolist(), np.asarray(e2).tolist()))


def write_csv(u: GridFunction, target=None) -> str:
    """CSV rows (x, y, value); complex data gets an extra value_imag column.
    For dim_x = 0 the x column is 0."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cplx = np.iscomplexobj(u.values)
    w.writerow(["x", "y", "value"] + (["value_imag"] if cplx else []))
    X, Y = u.mesh.points()
    xs = X[:, 0] if u.mesh.n_x else np.zeros_like(Y)
    vals = u.values.reshape(-1)
    for xv, yv, v in zip(xs, Y, vals):
        row = [repr(float(xv)), repr(float(yv)), repr(float(np.real(v)))]
        if cplx:
            row.append(repr(float(np.imag(v))))
        w.writerow(row)
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text
