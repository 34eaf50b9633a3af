import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nehari_lab.errors import InvalidGrid, SpecError
from nehari_lab.model import (
    DiscreteField,
    ProblemConfig,
    WeightSpec,
    build_grid,
    load_config,
    make_bump,
    parse_config_text,
    parse_weight,
    sample_weight,
    validate_config,
)
from nehari_lab.operators import cell_quadrature, fsum


def test_reference_config_is_admissible():
    assert validate_config(ProblemConfig()) == []


def test_large_s_violates_sq_below_p():
    out = validate_config(ProblemConfig(s=0.9))
    assert any("s·q = 1.62 ≥ p" in v for v in out)


def test_delta_above_min_pq():
    assert "δ ≥ min{p,q}" in validate_config(ProblemConfig(delta=1.6))


def test_critical_mode_requires_r_equal_p_star():
    cfg = ProblemConfig(p=1.5, q=1.2, s=0.5, delta=1.1, r=5.0, mode="critical")
    assert any("p*" in v for v in validate_config(cfg))
    assert validate_config(cfg.with_(r=6.0)) == []


def test_lab_mode_permits_p_equal_N():
    cfg = ProblemConfig(p=2.0, q=2.0, strictness="lab")
    assert validate_config(cfg) == []
    assert validate_config(cfg.with_(strictness="strict"))


@given(p=st.floats(1.01, 3.0), q=st.floats(1.01, 3.0), s=st.floats(0.01, 0.99), d=st.floats(1.0, 3.0))
@settings(max_examples=50, deadline=None)
def test_validation_is_pure(p, q, s, d):
    cfg = ProblemConfig(p=p, q=q, s=s, delta=d)
    assert validate_config(cfg) == validate_config(cfg)


def test_grid_counts():
    g = build_grid((1.0, 1.0), 4)
    assert g.interior_count == 9
    assert g.h == (0.25, 0.25)
    assert build_grid((1.0, 1.0), 2).interior_count == 1
    with pytest.raises(InvalidGrid):
        build_grid((1.0, 1.0), 0)


def test_constant_weight_is_exact():
    g = build_grid((1.0, 1.0), 8)
    w = sample_weight(WeightSpec.constant(2.5), g)
    assert np.all(w.values == 2.5)


def test_sine_weight_integrates_to_zero():
    g = build_grid((1.0, 1.0), 16)
    w = sample_weight(parse_weight("sinusoid freqs=1,0"), g)
    quad = cell_quadrature(g)
    assert abs(quad.weight * fsum(quad.values(w))) <= 1e-10


def test_radial_bump_weight_vanishes_outside_ball():
    g = build_grid((1.0, 1.0), 16)
    w = sample_weight(parse_weight("radial_bump center=0.5,0.5 radius=0.2"), g)
    r = np.linalg.norm(g.closed_coords() - 0.5, axis=1)
    assert np.all(w.values[r >= 0.2] == 0.0)
    assert np.all(w.values[r < 0.19] > 0.0)


def test_tabulated_length_mismatch(tmp_path):
    path = tmp_path / "a.csv"
    np.savetxt(path, np.ones(5), delimiter=",")
    spec = parse_weight(f"tabulated path={path}")
    with pytest.raises(SpecError):
        sample_weight(spec, build_grid((1.0, 1.0), 4))


def test_bump_support_and_peak():
    g = build_grid((1.0, 1.0), 16)
    u = make_bump(g, (0.5, 0.5), 0.25, amplitude=2.0)
    r = np.linalg.norm(g.coords - 0.5, axis=1)
    assert np.all((u.values > 0) == (r < 0.25))
    assert math.isclose(u.values.max(), 2.0)
    assert not np.any(make_bump(g, (0.5, 0.5), 0.25, amplitude=0.0).values)
    assert np.all(make_bump(g, (0.5, 0.5), 5.0).values > 0)


def test_field_length_checked():
    g = build_grid((1.0, 1.0), 4)
    with pytest.raises(SpecError):
        DiscreteField(g, np.ones(10))


def test_config_round_trip(fixture_dir):
    cfg = load_config(fixture_dir / "critical.cfg")
    assert cfg.mode == "critical" and cfg.r == 6.0 and cfg.domain == (2.0, 2.0)
    text = "\n".join(f"{k} = {v}" for k, v in [
        ("p", 1.5), ("q", 1.8), ("lambda", 0.7), ("mode", "subcritical"), ("weight_a", "constant 2")
    ])
    cfg = parse_config_text(text + "  # comment\n")
    assert cfg.lam == 0.7 and cfg.weight_a.params["value"] == 2.0


def test_unknown_config_key():
    with pytest.raises(SpecError):
        parse_config_text("flavour = strawberry")
