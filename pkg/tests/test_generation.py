import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from degenop.generation import (BoundaryCondition, GenerationError, RegimeFlag,
                                check_generation, dirichlet_window, domain_description,
                                oblique_window, regime_flags, regime_flags_direct)
from degenop.operator_core import OperatorParams, SpaceParams
from degenop.transform_calculus import reduce_to_canonical
from conftest import params_from_seed, seeds
from golden_check import check_case, load_cases


@pytest.mark.parametrize("case", load_cases(), ids=lambda c: c["id"])
def test_golden_decision_case(case):
    assert check_case(case) == []


def _op(n=0, a1=0.0, a2=0.0, gamma=1.0, c=1.0, b=0.0, q=0.0, d=0.0):
    return OperatorParams(n, a1, a2, [1.0] * n * n, [q] * n, gamma, [d] * n, c, b)


def test_oblique_example():
    rep = check_generation(_op(), SpaceParams(2.0, 0.0), BoundaryCondition("oblique"))
    assert rep.generates and rep.window == (0.0, 2.0) and rep.value == 0.5
    assert rep.realization == "oblique"


def test_empty_oblique_window_rejects_every_space():
    P = _op(1, 1.5, 1.5, c=0.2)
    for p, m in [(2.0, -0.9), (2.0, 0.0), (1.5, 3.0), (4.0, -0.5)]:
        rep = check_generation(P, SpaceParams(p, m), BoundaryCondition("oblique"))
        assert not rep.generates and "empty window" in rep.reasons
    assert oblique_window(P) == pytest.approx((0.0, -0.3))


def test_window_edges_are_not_covered():
    P = _op()
    for m in (-1.0, 3.0):  # (m+1)/p = 0 and 2
        assert not check_generation(P, SpaceParams(2.0, m), BoundaryCondition("oblique")).generates


def test_rejections():
    S = SpaceParams(2.0, 0.0)
    with pytest.raises(GenerationError):
        check_generation(_op(b=0.5), S, BoundaryCondition("oblique"))
    with pytest.raises(GenerationError):
        check_generation(_op(1, d=0.3), S, BoundaryCondition("neumann"))
    with pytest.raises(GenerationError):
        check_generation(_op(a2=2.0), S, BoundaryCondition("dirichlet"))
    P = _op(1, 1.0, 0.0, c=-0.5, d=0.3)
    rep = check_generation(P, S, BoundaryCondition("oblique"))
    assert not rep.generates and rep.window is None
    rep = check_generation(_op(1, d=0.5, c=2.0), S, BoundaryCondition("oblique", (1.0, 1.0)))
    assert not rep.generates
    rep = check_generation(_op(1, d=0.5, c=2.0), S, BoundaryCondition("oblique", (1.0, 4.0)))
    assert rep.generates
    with pytest.raises(GenerationError):
        domain_description(_op(1, 1.5, 1.5, c=0.2), S, BoundaryCondition("oblique"))


def test_domain_examples():
    S = SpaceParams(2.0, 0.0)
    dom = domain_description(_op(1, 0.5, 0.5, c=1.5), S, BoundaryCondition("oblique"))
    assert dom.space_family == "W_N" and dom.weight_shift == 0.0
    P = _op(1, c=0.0, b=0.75, q=0.2, d=0.1)
    dom = domain_description(P, S, BoundaryCondition("dirichlet"))
    assert dom.w == pytest.approx((0.1 + 3 * 0.2, 3.0))
    assert dom.weight_shift == pytest.approx(3.0)
    assert (dom.trace_condition.exponent, dom.trace_condition.limit) == (0.5, "zero")
    dom = domain_description(_op(c=1.0), S, BoundaryCondition("dirichlet"))
    assert (dom.trace_condition.exponent, dom.trace_condition.limit) == (0.0, "finite")


def test_flag_examples():
    P = _op(c=1.0)
    assert RegimeFlag.ALL_SPACES_COINCIDE in regime_flags(P, SpaceParams(2.0, 5.0))
    assert RegimeFlag.NEUMANN_TRACE_REQUIRED in regime_flags(P, SpaceParams(2.0, 0.0))
    assert RegimeFlag.DIRICHLET_OBLIQUE_COINCIDE in regime_flags(_op(c=2.0), SpaceParams(2.0, 0.0))


def _space(seed):
    rng = np.random.default_rng(seed + 5)
    return SpaceParams(float(rng.choice([1.5, 2.0, 3.0])), float(rng.uniform(-0.9, 3.0)))


@given(seeds, st.integers(0, 2), st.booleans())
@settings(max_examples=150, deadline=None)
def test_flag_routes_agree(seed, dim_x, b_zero):
    P = params_from_seed(seed, dim_x, b_zero=b_zero)
    S = _space(seed)
    assert regime_flags(P, S) == regime_flags_direct(P, S)


@given(seeds, st.integers(0, 2), st.booleans())
@settings(max_examples=150, deadline=None)
def test_flag_consistency(seed, dim_x, b_zero):
    P = params_from_seed(seed, dim_x, b_zero=b_zero)
    S = _space(seed)
    flags = regime_flags(P, S)
    if RegimeFlag.RELLICH_DOMAIN in flags:
        assert RegimeFlag.MIXED_DERIV_ESTIMATE in flags
    if RegimeFlag.MIXED_DERIV_ESTIMATE in flags:
        assert check_generation(P, S, BoundaryCondition("dirichlet")).generates
    assert not {RegimeFlag.NEUMANN_AUTOMATIC, RegimeFlag.NEUMANN_TRACE_REQUIRED} <= flags


@given(seeds, st.integers(0, 2))
@settings(max_examples=100, deadline=None)
def test_dirichlet_window_contains_oblique_window(seed, dim_x):
    P = params_from_seed(seed, dim_x, b_zero=True)
    assume(P.c < P.gamma and P.alpha1 == P.alpha2)
    lo_o, hi_o = oblique_window(P)
    lo_d, hi_d = dirichlet_window(P)
    assert lo_d <= lo_o + 1e-12 and hi_o <= hi_d + 1e-12


@given(seeds, st.integers(0, 2), st.sampled_from(["oblique", "dirichlet"]))
@settings(max_examples=150, deadline=None)
def test_verdict_is_transform_equivariant(seed, dim_x, mode):
    P = params_from_seed(seed, dim_x, b_zero=(mode == "oblique"))
    assume(mode == "dirichlet" or P.c + P.beta_alpha * P.gamma != 0.0)
    S = _space(seed)
    bc = BoundaryCondition(mode)
    rep = check_generation(P, S, bc)
    assume(rep.window[0] < rep.window[1])
    assume(min(abs(rep.value - rep.window[0]), abs(rep.value - rep.window[1])) > 1e-9)
    Pc, Sc, _ = reduce_to_canonical(P, S, mode)
    assert check_generation(Pc, Sc, bc).generates == rep.generates
