import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings, strategies as st

from degenop.operator_core import (OperatorParams, PolyGaussian, SpaceParams, apply_operator,
                                   indicial_roots, validate)
from degenop.transform_calculus import (KelvinStep, ShiftStep, TermSum, TransformError,
                                        apply_transform, compose_kelvin, compose_shift,
                                        conjugate_by_shift_general, reduce_to_canonical,
                                        step_from_dict)
from degenop.weighted_spaces import GradedMesh, GridFunction
from conftest import function_from_seed, params_from_seed, points, seeds
from test_operator_core import X1, Y, sym_operator, sym_polygauss

P1 = OperatorParams(1, 0.75, 0.25, [1.3], [0.4], 1.1, [0.6], 0.8, -0.05)


def test_general_shift_termsum_matches_symbolic_conjugation():
    beta, om = 0.3, 0.7
    u = PolyGaussian(1, ((1.0, (1,), 0.5), (0.4, (2,), 1.0)), 0.6, (0.1,))
    f = sym_polygauss(u, (X1,))
    shifted = f.subs(X1, X1 + om * Y ** sy.nsimplify(beta + 1))
    conj = sym_operator(P1, shifted, (X1,)).subs(X1, X1 - om * Y ** sy.nsimplify(beta + 1))
    ref = sy.lambdify((X1, Y), conj, "numpy")
    ts = conjugate_by_shift_general(P1, beta, [om])
    x, y = points(0, 1, 10)
    got = ts.apply(u, x, y)
    want = np.array([ref(a, b) for a, b in zip(x[:, 0], y)], dtype=float)
    assert np.max(np.abs(got - want)) <= 1e-11 * np.max(np.abs(want))


def test_general_shift_keeps_tangential_second_order_term():
    ts = conjugate_by_shift_general(P1, 0.3, [0.7])
    dxx = {round(t.power, 12): float(t.coef[0, 0]) for t in ts.terms if t.deriv == "Dxx"}
    assert dxx[0.75] == pytest.approx(1.3)
    e = 1.3
    assert dxx[round(0.5 + 0.3, 12)] == pytest.approx(2 * e * 0.4 * 0.7)
    assert dxx[round(0.25 + 0.6, 12)] == pytest.approx(1.1 * e * e * 0.49)
    counts = {dv: sum(t.deriv == dv for t in ts.terms) for dv in ("Dxx", "DxDy", "Dx")}
    assert counts == {"Dxx": 3, "DxDy": 2, "Dx": 2}


@given(seeds, st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_matched_shift_agrees_with_general_form(seed, dim_x):
    P = params_from_seed(seed, dim_x)
    omega = tuple(np.random.default_rng(seed).normal(size=dim_x))
    S = ShiftStep(P.beta_alpha, omega)
    assert TermSum.from_params(S.conjugate(P)).is_close(S.conjugate_general(P), tol=1e-10)


def test_matched_shift_rejects_other_exponents():
    with pytest.raises(TransformError):
        ShiftStep(P1.beta_alpha + 0.1, (1.0,)).conjugate(P1)


@given(seeds, seeds, st.floats(-2, 2), st.floats(0.3, 2.5))
@settings(max_examples=40, deadline=None)
def test_kelvin_conjugation_identity(ps, fs, k, e):
    P = params_from_seed(ps)
    K = KelvinStep(k, e - 1.0, 2.0)
    u = function_from_seed(fs)
    x, y = points(fs, 1)
    lhs = e ** -0.5 * y ** (-k / e) * apply_operator(P, apply_transform(K, u), x, y ** (1 / e))
    rhs = apply_operator(K.conjugate(P), u, x, y)
    from degenop.operator_core import operator_scale
    assert np.all(np.abs(lhs - rhs) <= 1e-9 * operator_scale(K.conjugate(P), u, x, y))


@given(seeds, st.floats(-1.5, 1.5), st.floats(-2.5, 1.0).filter(lambda b: abs(b + 1) > 0.2))
@settings(max_examples=60, deadline=None)
def test_kelvin_inverse_and_indicial_covariance(seed, k, beta):
    P = params_from_seed(seed)
    K = KelvinStep(k, beta, 2.0)
    assert K.inverse().conjugate(K.conjugate(P)).isclose(P, rtol=1e-12, atol=1e-12)
    ind, ind_t = indicial_roots(P), indicial_roots(K.conjugate(P))
    mapped = K.map_indicial(ind)
    e = beta + 1.0
    assert ind_t.D == pytest.approx(ind.D / e ** 2, rel=1e-12, abs=1e-12)
    assert ind_t.s1 == pytest.approx(mapped.s1, abs=1e-10)
    assert ind_t.s2 == pytest.approx(mapped.s2, abs=1e-10)
    if e < 0 and ind.D > 0:
        # orientation reversal swaps the roles of the roots
        assert mapped.s1 == pytest.approx((ind.s2 + k) / e)


def test_composition_laws():
    A, B = KelvinStep(0.5, 0.25, 3.0), KelvinStep(-1.0, -0.5, 3.0)
    AB = compose_kelvin(A, B)
    assert (AB.k, AB.beta) == pytest.approx((0.5 + 1.25 * -1.0, 1.25 * 0.5 - 1.0))
    assert compose_kelvin(A, A.inverse()).k == pytest.approx(0.0, abs=1e-15)
    S = compose_shift(ShiftStep(0.5, (1.0,)), ShiftStep(0.5, (2.0,)))
    assert S.omega == (3.0,)
    assert B.conjugate(A.conjugate(P1)).isclose(AB.conjugate(P1))


def test_weight_map():
    K = KelvinStep(1.0, 0.5, 2.0)
    assert K.map_weight(1.0) == pytest.approx((1.0 + 2.0 - 0.5) / 1.5)
    assert K.conjugate(P1, SpaceParams(2.0, 1.0))[1].m == pytest.approx(K.map_weight(1.0))


def test_step_serialization():
    for s in (KelvinStep(0.5, -0.25, 3.0), ShiftStep(0.2, (1.0, -2.0))):
        assert step_from_dict(s.to_dict()) == s
    with pytest.raises(TransformError):
        KelvinStep(0.0, -1.0)


def test_unequal_exponents_reduce_with_one_kelvin_step():
    P = OperatorParams(1, 1.0, 0.0, [1.0], [0.0], 1.0, [0.0], 1.0, 0.0)
    Pc, Sc, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.0), "oblique")
    assert [s.purpose for s in pipe.steps] == ["equalize exponents"]
    st0 = pipe.steps[0].transform
    assert (st0.k, st0.beta) == (0.0, 0.5)
    assert Pc.alpha1 == Pc.alpha2 == pytest.approx(2.0 / 3.0)


def test_potential_removal_in_one_dimension():
    P = OperatorParams(0, 0.0, 0.0, [], [], 1.0, [], 0.0, 0.75)
    Pc, Sc, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.0), "dirichlet")
    assert len(pipe.steps) == 1
    assert (pipe.steps[0].transform.k, pipe.steps[0].transform.beta) == (1.5, 0.0)
    assert Pc.b == 0.0 and Pc.c == pytest.approx(3.0)
    assert Sc.m == pytest.approx(3.0)


def test_canonical_operator_needs_no_steps():
    P = OperatorParams(1, 0.5, 0.5, [1.0], [0.2], 1.0, [0.0], 1.5, 0.0)
    Pc, Sc, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.0), "oblique")
    assert pipe.steps == [] and Pc is P


def test_one_dimensional_alpha1_is_ignored():
    P = OperatorParams(0, 1.7, 0.5, [], [], 1.0, [], 1.5, 0.0)
    Pc, _, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.0), "oblique")
    assert Pc.alpha1 == 0.5 and pipe.steps == [] and pipe.notes


def test_reduction_errors():
    S = SpaceParams(2.0, 0.0)
    with pytest.raises(ValueError):
        reduce_to_canonical(P1, S, "oblique")  # b != 0
    P = OperatorParams(1, 0.0, 0.0, [1.0], [0.0], 1.0, [1.0], 0.0, 0.0)
    with pytest.raises(ValueError):
        reduce_to_canonical(P, S, "oblique")  # drift cannot be removed


@given(seeds, st.integers(1, 2), st.sampled_from(["oblique", "dirichlet"]))
@settings(max_examples=50, deadline=None)
def test_pipeline_postconditions(seed, dim_x, mode):
    P = params_from_seed(seed, dim_x, b_zero=(mode == "oblique"))
    if mode == "oblique" and P.c + P.beta_alpha * P.gamma == 0.0:
        return
    Pc, Sc, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.5), mode)
    assert validate(Pc).ok
    assert Pc.alpha1 == pytest.approx(Pc.alpha2, abs=1e-12)
    assert np.all(Pc.d == 0.0)
    if mode == "dirichlet":
        assert Pc.b == 0.0
        assert Pc.c / Pc.gamma == pytest.approx(1 + 2 * np.sqrt(indicial_roots(Pc).D), abs=1e-12)
    # the recorded trail composes to the target
    Q = P
    for st_ in pipe.steps:
        Q = st_.transform.conjugate(Q)
    assert Q.isclose(Pc, rtol=1e-10, atol=1e-10)


def test_grid_pull_push_roundtrip():
    P = OperatorParams(1, 1.0, 0.0, [1.0], [0.3], 1.0, [0.4], 1.0, 0.2)
    _, _, pipe = reduce_to_canonical(P, SpaceParams(2.0, 0.0), "dirichlet")
    mesh = GradedMesh(32, 5.0, 2.0, 16)
    # band-limited below the Nyquist mode, which real translation only damps
    f = GridFunction.sample(lambda x, y: (1 + np.cos(x) + 0.5 * np.sin(3 * x)) * y * np.exp(-y), mesh)
    back = pipe.push(pipe.pull(f))
    assert np.allclose(back.mesh.y, mesh.y, rtol=1e-14)
    assert np.allclose(back.values, f.values, rtol=1e-12, atol=1e-12)


def test_grid_kelvin_matches_exact_transform():
    u = PolyGaussian(0, ((1.0, (), 1.0),), 0.5)
    K = KelvinStep(0.5, 0.5, 2.0)
    mesh = GradedMesh(40, 4.0)
    g = apply_transform(K, GridFunction.sample(u, mesh))
    exact = apply_transform(K, u)(None, g.mesh.y)
    assert np.allclose(g.values, exact, rtol=1e-13)
    tgt = GradedMesh(40, 2.5, 1.2)
    gi = apply_transform(K, GridFunction.sample(u, mesh), tgt)
    assert np.max(np.abs(gi.values - apply_transform(K, u)(None, tgt.y))) < 1e-3
