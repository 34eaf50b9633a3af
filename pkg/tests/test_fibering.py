import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from nehari_lab.errors import BracketError, DomainError, EmptyBranch, NoRoots
from nehari_lab.fibering import (
    T_MAX,
    A_NEG_B_POS,
    A_POS_B_NEG,
    BOTH_NEGATIVE,
    BOTH_POSITIVE,
    branch_root,
    classify_case,
    eval_gamma,
    falling_root,
    fibering_roots,
    m_of_t,
    root_residual,
    sample_grid,
    sign_changes,
)
from nehari_lab.functional import EnergyBreakdown, assemble_energy

from conftest import critical_cfg, subcritical_cfg

CFG = subcritical_cfg(lam=0.5)
DENSE = np.geomspace(1e-6, 1e6, 10_000)


def bd_of(P, Q, A, B, cfg=CFG):
    return EnergyBreakdown(P, Q, A, B, assemble_energy(P, Q, A, B, cfg))


terms = st.floats(1e-3, 1e3)


@given(P=terms, Q=terms, A=st.floats(-1e3, 1e3), B=st.floats(-1e3, 1e3), t=st.floats(1e-3, 1e3))
@settings(max_examples=200, deadline=None)
def test_derivative_identity(P, Q, A, B, t):
    bd = bd_of(P, Q, A, B)
    g = eval_gamma(bd, t, CFG)
    rhs = t ** (CFG.delta - 1) * (g.m - CFG.lam * A)
    scale = (t**CFG.p * P + t**CFG.q * Q + t**CFG.delta * abs(CFG.lam * A) + t**CFG.r * abs(CFG.lam * B)) / t
    assert abs(g.dgamma - rhs) <= 1e-12 * scale


def test_nonpositive_t_rejected():
    with pytest.raises(DomainError):
        eval_gamma(bd_of(1, 1, 1, 1), 0.0, CFG)


def test_classification():
    assert classify_case(bd_of(1, 1, 1, 1), CFG) == BOTH_POSITIVE
    assert classify_case(bd_of(1, 1, -1, 1), CFG) == A_NEG_B_POS
    assert classify_case(bd_of(1, 1, 1, -1), CFG) == A_POS_B_NEG
    assert classify_case(bd_of(1, 1, -1, -1), CFG) == BOTH_NEGATIVE
    # a vanishing A counts as nonpositive
    assert classify_case(bd_of(1, 1, 1e-14, 1), CFG) == A_NEG_B_POS


def _check_two_roots(bd, cfg):
    rep = fibering_roots(bd, cfg)
    assert rep.case == BOTH_POSITIVE and rep.status == "ok"
    assert rep.t1 < rep.t_max < rep.t2
    assert rep.gamma_pp_at["t1"] > 0 > rep.gamma_pp_at["t2"]
    for t in rep.roots():
        assert root_residual(bd, t, cfg) <= 1e-10
    assert sign_changes(bd, cfg, DENSE) == 2
    return rep


@given(P=terms, Q=terms, A=st.floats(1e-2, 1e2), B=st.floats(1e-2, 1e2), lam=st.floats(1e-3, 10.0))
@settings(max_examples=100, deadline=None)
def test_both_positive_roots(P, Q, A, B, lam):
    cfg = CFG.with_(lam=lam)
    bd = bd_of(P, Q, A, B, cfg)
    try:
        rep = fibering_roots(bd, cfg)
    except BracketError:
        # only legitimate when a root sits outside the search window
        level = lam * A
        assert m_of_t(bd, 1.0 / T_MAX, cfg) > level or m_of_t(bd, T_MAX, cfg) > level
        return
    if rep.status == "NoRoots":
        assert m_of_t(bd, rep.t_max, cfg) <= lam * A
        return
    assume(1e-6 < rep.t1 and rep.t2 < 1e6)
    _check_two_roots(bd, cfg)


def test_no_roots_when_lambda_too_large():
    cfg = CFG.with_(lam=1e3)
    bd = bd_of(1.0, 1.0, 1.0, 1.0, cfg)
    assert fibering_roots(bd, cfg).status == "NoRoots"
    with pytest.raises(NoRoots):
        branch_root(bd, cfg, "plus")


def test_single_root_cases():
    rep = fibering_roots(bd_of(1.0, 1.0, -1.0, 1.0), CFG)
    assert rep.case == A_NEG_B_POS and rep.t2 is None and rep.gamma_pp_at["t1"] < 0
    assert sign_changes(bd_of(1.0, 1.0, -1.0, 1.0), CFG, DENSE) == 1
    rep = fibering_roots(bd_of(1.0, 1.0, 1.0, -1.0), CFG)
    assert rep.case == A_POS_B_NEG and rep.t2 is None and rep.gamma_pp_at["t1"] > 0
    rep = fibering_roots(bd_of(1.0, 1.0, -1.0, -1.0), CFG)
    assert rep.case == BOTH_NEGATIVE and rep.roots() == []


def test_empty_branches():
    with pytest.raises(EmptyBranch):
        branch_root(bd_of(1.0, 1.0, -1.0, 1.0), CFG, "plus")
    with pytest.raises(EmptyBranch):
        branch_root(bd_of(1.0, 1.0, 1.0, -1.0), CFG, "minus")
    with pytest.raises(EmptyBranch):
        falling_root(bd_of(1.0, 1.0, -1.0, -1.0), CFG)


def test_scaling_of_roots():
    bd = bd_of(2.0, 3.0, 1.5, 0.7)
    rep = fibering_roots(bd, CFG)
    rep2 = fibering_roots(bd.scaled(2.0, CFG), CFG)
    assert math.isclose(rep2.t1, rep.t1 / 2, rel_tol=1e-8)
    assert math.isclose(rep2.t2, rep.t2 / 2, rel_tol=1e-8)


def test_projection_idempotent():
    bd = bd_of(2.0, 3.0, 1.5, 0.7)
    rep = fibering_roots(bd, CFG)
    for name, t in (("t1", rep.t1), ("t2", rep.t2)):
        again = fibering_roots(bd.scaled(t, CFG), CFG)
        assert math.isclose(getattr(again, name), 1.0, rel_tol=1e-6)


def test_m_unimodal():
    bd = bd_of(2.0, 3.0, 1.5, 0.7)
    rep = fibering_roots(bd, CFG)
    left = [m_of_t(bd, t, CFG) for t in np.linspace(rep.t_max * 1e-3, rep.t_max, 1000)]
    right = [m_of_t(bd, t, CFG) for t in np.linspace(rep.t_max, rep.t_max * 50, 1000)]
    assert np.all(np.diff(left) > 0) and np.all(np.diff(right) < 0)


def test_falling_root_agrees_with_full_search():
    bd = bd_of(2.0, 3.0, 1.5, 0.7)
    t2, t_max = falling_root(bd, CFG)
    rep = fibering_roots(bd, CFG)
    assert t2 == rep.t2 and t_max == rep.t_max


def test_critical_mode_roots():
    cfg = critical_cfg(lam=0.2)
    bd = bd_of(1.0, 1.0, 10.0, 0.01, cfg)
    _check_two_roots(bd, cfg)


def test_samples_cover_roots():
    bd = bd_of(2.0, 3.0, 1.5, 0.7)
    rep = fibering_roots(bd, CFG, samples=sample_grid(fibering_roots(bd, CFG)))
    ts = [row[0] for row in rep.samples]
    assert ts[0] < rep.t1 and ts[-1] > rep.t2
