import math

import numpy as np
import pytest

import oracles
from oracles import DRAWS, critical_draws, subcritical_draws
from nehari_lab.constants import (
    bn_window_check,
    c_delta,
    c_infinity,
    compute_constants,
    default_targets,
    e_lambda,
    lambda0,
    lambda_bar0_closed,
    lambda_branches,
    level_threshold,
    m_exponent,
    rayleigh_minimize,
    sobolev_constant,
    talenti_K,
)
from nehari_lab.errors import BracketError, DomainError, ModeError, SpecError
from nehari_lab.fibering import eval_gamma, fibering_roots
from nehari_lab.functional import EnergyBreakdown, assemble_energy
from nehari_lab.model import DiscreteField, ProblemConfig, build_grid, make_bump

from conftest import critical_cfg, subcritical_cfg

RTOL = 1e-10


def close(a, b, rtol=RTOL):
    return abs(a - float(b)) <= rtol * abs(float(b))


# -- closed forms against the extended-precision oracle ---------------------------


def test_lambda0_matches_oracle():
    for cfg, (S_rp, S_rq), (na, nb) in subcritical_draws():
        S_rq_used = S_rq if cfg.q in lambda_branches(cfg) else None
        got = lambda0(cfg, S_rp, S_rq, na, nb)
        want = oracles.lam0(cfg.p, cfg.q, cfg.delta, cfg.r, S_rp, S_rq_used, na, nb)
        assert close(got, want)


@pytest.mark.parametrize("mode", ["critical", "bn"])
def test_critical_constants_match_oracle(mode):
    for cfg, S_p, a_inf, vol in critical_draws(mode=mode):
        N, p, d = cfg.dim_N, cfg.p, cfg.delta
        C = c_delta(cfg, S_p, a_inf, vol)
        assert close(C, oracles.cdelta(N, p, d, a_inf, S_p, vol))
        for lam in (1e-3, 0.1, 0.7):
            want = oracles.cinf(N, p, d, S_p, C, lam, bn=mode == "bn")
            assert abs(c_infinity(cfg, S_p, C, lam) - float(want)) <= RTOL * max(abs(float(want)), 1e-300) + 1e-14
        root = oracles.level_root(N, p, d, S_p, C, bn=mode == "bn")
        assert close(level_threshold(cfg, S_p, C), root)
        assert close(talenti_K(N, p), oracles.talenti_K(N, p))
        assert close(m_exponent(N, p, cfg.q, cfg.s), oracles.m_exp(N, p, cfg.q, cfg.s))


def test_bn_window_matches_oracle():
    rng = np.random.default_rng(99)
    agree = 0
    for cfg, *_ in critical_draws(seed=11, mode="bn"):
        cfg = cfg.with_(delta=rng.uniform(0.5, 2.5))
        got = bn_window_check(cfg)
        want = oracles.bn_window(cfg.dim_N, cfg.p, cfg.q, cfg.s, cfg.delta)
        agree += (got["cond1"], got["cond2"]) == want
    assert agree == DRAWS


def test_spot_values():
    assert math.isclose(m_exponent(2, 1.5, 1.2, 0.5), 0.8, rel_tol=1e-14)
    assert math.isclose(talenti_K(2, 1.5), 2 ** (2 / 9), rel_tol=1e-14)
    cfg = critical_cfg()
    C = c_delta(cfg, 1.0, 1.0, 1.0)
    assert round(C, 5) == 0.93833
    assert round(c_infinity(cfg, 1.0, C, 0.1), 3) == 10.772


def test_sobolev_constant_three_dimensions():
    # classical value of the best constant for N = 3, p = 2
    assert math.isclose(sobolev_constant(3, 2.0), 3 * (math.pi / 2) ** (4 / 3), rel_tol=1e-12)


def test_bn_closed_form_matches_bisection():
    cfg = critical_cfg(mode="bn", s=0.4)
    C = c_delta(cfg, 4.3, 1.0, 1.0)
    assert math.isclose(lambda_bar0_closed(cfg, 4.3, C), level_threshold(cfg, 4.3, C), rel_tol=1e-8)


def test_level_threshold_brackets():
    cfg = critical_cfg()
    C = c_delta(cfg, 4.3, 1.0, 4.0)
    L = level_threshold(cfg, 4.3, C)
    assert abs(c_infinity(cfg, 4.3, C, L)) <= 1e-8
    assert c_infinity(cfg, 4.3, C, 0.99 * L) > 0 > c_infinity(cfg, 4.3, C, 1.01 * L)
    with pytest.raises(BracketError):
        level_threshold(cfg, 4.3, C, lo=2 * L)


def test_lambda0_scaling_in_weight_norm():
    cfg = critical_cfg(strictness="lab")
    assert lambda_branches(cfg) == [cfg.p]
    base = lambda0(cfg, 4.0, None, 1.0, 1.0)
    e = (cfg.r - cfg.p) / (cfg.r - cfg.delta)
    assert math.isclose(lambda0(cfg, 4.0, None, 2.0, 1.0), base * 2**-e, rel_tol=1e-13)
    assert lambda0(cfg, 4.0, None, 1.0, 2.0) < base
    with pytest.raises(DomainError):
        lambda0(cfg, 4.0, None, 0.0, 1.0)


def test_c_delta_scaling_in_sup_norm():
    cfg = critical_cfg()
    ratio = c_delta(cfg, 4.0, 2.0, 1.0) / c_delta(cfg, 4.0, 1.0, 1.0)
    assert math.isclose(ratio, 2 ** (cfg.p / (cfg.p - cfg.delta)), rel_tol=1e-13)


def test_mode_guards():
    with pytest.raises(ModeError):
        c_delta(subcritical_cfg(), 1.0, 1.0, 1.0)
    with pytest.raises(ModeError):
        bn_window_check(critical_cfg())
    with pytest.raises(DomainError):
        c_infinity(critical_cfg(), 1.0, 1.0, lam=0.0)


def test_bn_window_boundary_is_strict():
    # s equal to the bound (0.5 for these exponents) must fail the second window
    cfg = critical_cfg(mode="bn", delta=1.05, s=0.5)
    out = bn_window_check(cfg)
    assert math.isclose(out["s_bound"], 0.5, rel_tol=1e-12)
    assert not out["cond2"]
    assert bn_window_check(cfg.with_(s=0.4))["cond2"]


def test_e_lambda_is_curvature_on_nehari_set():
    cfg = subcritical_cfg(lam=0.5)
    bd = EnergyBreakdown(2.0, 3.0, 1.5, 0.7, assemble_energy(2.0, 3.0, 1.5, 0.7, cfg))
    for t in fibering_roots(bd, cfg).roots():
        on = bd.scaled(t, cfg)
        g = eval_gamma(on, 1.0, cfg)
        assert math.isclose(-(cfg.r - cfg.delta) * e_lambda(on, cfg), g.ddgamma, rel_tol=1e-9)


# -- Rayleigh quotients -----------------------------------------------------------


def lab_cfg(**kw):
    return ProblemConfig(p=2.0, q=2.0, s=0.5, delta=1.2, r=3.0, strictness="lab").with_(**kw)


def test_dirichlet_eigenvalue_of_unit_square():
    res = rayleigh_minimize("lambda_1p", build_grid((1.0, 1.0), 32), lab_cfg())
    assert res.converged
    assert abs(res.value - 2 * math.pi**2) <= 0.02 * 2 * math.pi**2


def test_zero_start_rejected():
    g = build_grid((1.0, 1.0), 12)
    res = rayleigh_minimize("lambda_1p", g, lab_cfg(), starts=[DiscreteField.zeros(g), make_bump(g, (0.5, 0.5), 0.4)])
    assert res.rejected_starts == [0]
    with pytest.raises(SpecError):
        rayleigh_minimize("lambda_1p", g, lab_cfg(), starts=[DiscreteField.zeros(g)])


def test_quotient_is_scale_invariant():
    g = build_grid((1.0, 1.0), 12)
    u = make_bump(g, (0.4, 0.5), 0.4)
    a = rayleigh_minimize("S_rp", g, subcritical_cfg(), starts=[u]).value
    b = rayleigh_minimize("S_rp", g, subcritical_cfg(), starts=[u.scaled(37.0)]).value
    assert math.isclose(a, b, rel_tol=1e-5)


def test_unknown_target():
    with pytest.raises(SpecError):
        rayleigh_minimize("S_xyz", build_grid((1.0, 1.0), 4), subcritical_cfg())


def test_default_targets_by_mode():
    assert default_targets(critical_cfg()) == ["S_p"]
    sub = default_targets(subcritical_cfg())
    assert sub[0] == "S_rp" and "lambda_1p" in sub and "lambda_1q" in sub


def test_critical_report(crit_cfg):
    from nehari_lab.functional import default_weights

    cfg = crit_cfg.with_(grid_n=16)
    g = build_grid(cfg.domain, 16)
    rep = compute_constants(cfg, default_weights(cfg, g), grid=g)
    assert rep.S_p == rep.S_rp > 0
    assert rep.C_delta > 0 and rep.Lambda0 > 0
    assert rep.Lambda0_capped == min(rep.Lambda0, rep.lambda0)
    assert math.isclose(rep.m_exp, 0.8)
    # the discrete constant is an upper bound of the continuum one
    assert rep.S_p >= sobolev_constant(2, 1.5)
