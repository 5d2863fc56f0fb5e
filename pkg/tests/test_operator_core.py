import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings, strategies as st

from degenop.operator_core import (ConfigError, NegativeDiscriminantError, OperatorParams,
                                   PolyGaussian, SpaceParams, apply_operator, discriminant,
                                   indicial_polynomial, indicial_roots, operator_scale,
                                   validate)
from conftest import function_from_seed, params_from_seed, points, seeds

X1, X2, Y = sy.symbols("x1 x2 y", real=True)


def sym_polygauss(u: PolyGaussian, xs):
    ctr = u.center or (0.0,) * u.dim_x
    r2 = sum((x - c) ** 2 for x, c in zip(xs, ctr)) + Y ** 2
    g = sum(sy.nsimplify(c) * sy.Mul(*[x ** int(e) for x, e in zip(xs, ex)]) * Y ** sy.nsimplify(s)
            for c, ex, s in u.terms)
    return g * sy.exp(-sy.nsimplify(u.decay) * r2)


def sym_operator(P: OperatorParams, f, xs):
    a1, a2 = sy.nsimplify(P.alpha1), sy.nsimplify(P.alpha2)
    am = (a1 + a2) / 2
    out = P.gamma * Y ** a2 * sy.diff(f, Y, 2) + P.c * Y ** (a2 - 1) * sy.diff(f, Y)
    out -= P.b * Y ** (a2 - 2) * f
    for i, xi in enumerate(xs):
        out += 2 * P.q[i] * Y ** am * sy.diff(f, xi, Y) + P.d[i] * Y ** (am - 1) * sy.diff(f, xi)
        for j, xj in enumerate(xs):
            out += P.Q[i, j] * Y ** a1 * sy.diff(f, xi, xj)
    return out


@pytest.mark.parametrize("dim_x", [0, 1, 2])
def test_apply_operator_matches_symbolic_differentiation(dim_x):
    P = OperatorParams(dim_x, 0.5 if dim_x else -0.25, -0.25,
                       np.array([[1.5, 0.2], [0.2, 1.0]])[:dim_x, :dim_x],
                       [0.3, -0.1][:dim_x], 1.2, [0.7, -0.4][:dim_x], 0.9, 0.35)
    assert validate(P).ok
    u = PolyGaussian(dim_x, ((1.0, (1, 0)[:dim_x], 0.5), (-0.5, (0, 2)[:dim_x], 2.0)), 0.7,
                     (0.2, -0.1)[:dim_x])
    xs = (X1, X2)[:dim_x]
    expr = sy.lambdify((xs, Y), sym_operator(P, sym_polygauss(u, xs), xs), "numpy")
    rng = np.random.default_rng(0)
    x = rng.normal(size=(15, dim_x))
    y = rng.uniform(0.2, 2.5, 15)
    ref = np.array([expr(tuple(xi), yi) for xi, yi in zip(x, y)], dtype=float)
    got = apply_operator(P, u, x, y)
    assert np.max(np.abs(got - ref) / operator_scale(P, u, x, y)) < 1e-12


def test_scalar_point_evaluation():
    P = OperatorParams(0, 0.0, 0.0, [], [], 1.0, [], 0.0, 0.0)
    u = PolyGaussian(0, ((1.0, (), 2.0),), 0.0)
    # L y^2 = 2
    assert apply_operator(P, u, None, 1.3) == pytest.approx(2.0, rel=1e-14)


@given(seeds, seeds, st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_operator_is_linear(ps, fs, a, b):
    P = params_from_seed(ps)
    u, v = function_from_seed(fs), function_from_seed(fs + 1)
    x, y = points(fs, 1)
    lhs = apply_operator(P, a * u + b * v, x, y)
    rhs = a * apply_operator(P, u, x, y) + b * apply_operator(P, v, x, y)
    scale = abs(a) * operator_scale(P, u, x, y) + abs(b) * operator_scale(P, v, x, y) + 1e-300
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale)


@given(seeds, st.integers(0, 2))
@settings(max_examples=60, deadline=None)
def test_indicial_roots_annihilate_power(seed, dim_x):
    P = params_from_seed(seed, dim_x)
    ind = indicial_roots(P)
    assert ind.s1 <= ind.s2
    assert ind.s2 - ind.s1 == pytest.approx(2.0 * np.sqrt(ind.D), abs=1e-12)
    for s in (ind.s1, ind.s2):
        scale = P.gamma * s * s + abs(P.gamma - P.c) * abs(s) + abs(P.b) + 1.0
        assert abs(indicial_polynomial(P, s)) <= 1e-12 * scale
        # y^-s is annihilated by the y-part of the operator
        u = PolyGaussian(dim_x, ((1.0, (0,) * dim_x, -s),), 0.0)
        y = np.array([0.4, 1.0, 2.7])
        Lu = apply_operator(P, u, np.zeros((3, dim_x)), y)
        assert np.all(np.abs(Lu) <= 1e-11 * operator_scale(P, u, np.zeros((3, dim_x)), y))


def test_indicial_examples():
    P = OperatorParams(0, 0, 0, [], [], 1.0, [], 0.0, 0.75)
    ind = indicial_roots(P)
    assert (ind.D, ind.s1, ind.s2) == (1.0, -1.5, 0.5)
    P = OperatorParams(0, 0, 0, [], [], 1.0, [], 1.0, 0.0)
    ind = indicial_roots(P)
    assert (ind.D, ind.s1, ind.s2) == (0.0, 0.0, 0.0)


def test_negative_discriminant():
    P = OperatorParams(0, 0, 0, [], [], 1.0, [], 1.0, -0.5)
    assert discriminant(P) == -0.5
    assert "D >= 0" in validate(P).violations
    with pytest.raises(NegativeDiscriminantError):
        indicial_roots(P)


@pytest.mark.parametrize("change, violation", [
    ({"alpha2": 2.0}, "alpha2 < 2"),
    ({"alpha1": -1.0, "alpha2": 1.5}, "alpha2 - alpha1 < 2"),
    ({"Q": [[1.0, 0.0], [0.5, 1.0]]}, "Q symmetric"),
    ({"q": [1.0, 0.0]}, "A positive definite"),
    ({"gamma": -1.0}, "A positive definite"),
    ({"c": float("nan")}, "finite coefficients"),
])
def test_validation_violations(change, violation):
    base = dict(dim_x=2, alpha1=0.5, alpha2=0.5, Q=np.eye(2), q=[0.1, 0.0], gamma=1.0,
                d=[0.0, 0.0], c=1.0, b=0.0)
    assert validate(OperatorParams(**base)).ok
    rep = validate(OperatorParams(**{**base, **change}))
    assert not rep.ok
    assert violation in rep.violations


def test_dict_roundtrip_and_errors():
    P = OperatorParams(2, 0.5, 0.25, [[2.0, 0.1], [0.1, 1.0]], [0.2, 0.3], 1.5, [1, -1], 0.4, 0.1)
    doc = P.to_dict()
    assert doc["Q"] == [2.0, 0.1, 0.1, 1.0]
    assert OperatorParams.from_dict(doc).isclose(P, rtol=0, atol=0)
    with pytest.raises(ConfigError, match="missing"):
        OperatorParams.from_dict({k: v for k, v in doc.items() if k != "c"})
    with pytest.raises(ConfigError, match="unknown"):
        OperatorParams.from_dict({**doc, "extra": 1})
    with pytest.raises(ConfigError):
        OperatorParams(1, 0, 0, [1.0, 2.0], [0.0], 1.0, [0.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        P.Q[0, 0] = 5.0


def test_space_params():
    S = SpaceParams(3.0, 2.0)
    assert S.scaling_index == 1.0
    with pytest.raises(ValueError):
        SpaceParams(1.0, 0.0)


def test_points_must_lie_in_half_space():
    P = OperatorParams(0, 0, 0, [], [], 1.0, [], 1.0, 0.0)
    u = PolyGaussian(0, ((1.0, (), 0.0),))
    with pytest.raises(ValueError):
        apply_operator(P, u, None, np.array([0.5, 0.0]))
