"""TTC computation, segment featurization, and the aggressive rules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivestyle.errors import DataError
from drivestyle.features import compute_ttc_series, featurize
from drivestyle.labeling import AGGRESSIVE, RuleConfig, rule_label

from synth import make_cf_segment, make_lc_segment


def test_ttc_basic_arithmetic():
    ttc = compute_ttc_series(np.array([100.0]), np.array([10.0]))
    assert ttc[0] == pytest.approx(10.0)


def test_ttc_opening_gap_is_capped():
    ttc = compute_ttc_series(np.array([100.0]), np.array([-2.0]), ttc_cap=99.0)
    assert ttc[0] == 99.0


def test_ttc_ramp_matches_elementwise_oracle():
    dd = np.linspace(50.0, 30.0, 21)
    dv = np.full(21, 4.0)
    ttc = compute_ttc_series(dd, dv)
    np.testing.assert_allclose(ttc, dd / 4.0, atol=1e-12)
    assert ttc[0] == pytest.approx(12.5)
    assert ttc[-1] == pytest.approx(7.5)


def test_ttc_clipped_to_cap_even_while_closing():
    ttc = compute_ttc_series(np.array([1000.0]), np.array([0.5]), ttc_cap=99.0)
    assert ttc[0] == 99.0


def test_ttc_overlapping_vehicles_rejected():
    with pytest.raises(DataError):
        compute_ttc_series(np.array([10.0, 0.0]), np.array([1.0, 1.0]))


def test_featurize_cf_constant_channels():
    seg = make_cf_segment(v=30.0, a_lon=0.0, dd=100.0, dv=10.0)
    fv = featurize(seg)
    assert fv.values == pytest.approx((30.0, 0.0, 10.0))


def test_featurize_lc_means():
    seg = make_lc_segment(dd=[10.0, 20.0, 30.0], dv=[1.0, 2.0, 3.0],
                          a_lat=[0.1, 0.2, 0.3])
    fv = featurize(seg)
    assert fv.values == pytest.approx((20.0, 2.0, 0.2))


def test_featurize_matches_two_pass_mean_oracle():
    rng = np.random.default_rng(7)
    v = rng.uniform(10, 35, 200)
    a = rng.normal(0, 1, 200)
    dd = rng.uniform(5, 110, 200)
    dv = rng.normal(0, 2, 200)
    seg = make_cf_segment(v=v, a_lon=a, dd=dd, dv=dv)
    fv = featurize(seg, ttc_cap=99.0)

    def two_pass_mean(values):
        total = 0.0
        for x in values:
            total += x
        return total / len(values)

    ttc = [min(d / s, 99.0) if s > 0.1 else 99.0 for d, s in zip(dd, dv)]
    assert fv.values[0] == pytest.approx(two_pass_mean(v), abs=1e-12)
    assert fv.values[1] == pytest.approx(two_pass_mean(a), abs=1e-12)
    assert fv.values[2] == pytest.approx(two_pass_mean(ttc), abs=1e-12)


# --- rule stage -------------------------------------------------------------

def fv_cf(v, a, ttc):
    return featurize(make_cf_segment(v=v, a_lon=a, dd=ttc * 4.0, dv=4.0))


def test_cf_speed_rule_fires_above_limit():
    lab = rule_label(fv_cf(34.0, 0.1, 20.0))
    assert lab is not None and lab.label == AGGRESSIVE and lab.provenance == "rule"


def test_cf_ttc_rule_fires_below_five_seconds():
    lab = rule_label(fv_cf(25.0, 0.0, 4.9))
    assert lab is not None and lab.label == AGGRESSIVE


def test_cf_boundary_values_are_strict():
    limit = 120.0 / 3.6
    eps = 1e-9
    assert rule_label(fv_cf(limit, 0.0, 20.0)) is None
    assert rule_label(fv_cf(limit + eps, 0.0, 20.0)) is not None
    assert rule_label(fv_cf(25.0, 0.0, 5.0)) is None
    assert rule_label(fv_cf(25.0, 0.0, 5.0 - 1e-9)) is not None


def test_lc_rules_and_boundaries():
    eps = 1e-9
    mk = lambda dd, dv, al: featurize(make_lc_segment(dd=dd, dv=dv, a_lat=al))
    assert rule_label(mk(25.0, 1.0, 0.2)) is None
    assert rule_label(mk(20.0 - eps, 1.0, 0.2)) is not None  # gap rule, strict
    assert rule_label(mk(20.0, 1.0, 0.2)) is None
    assert rule_label(mk(25.0, 0.0 - eps, 0.2)) is not None  # closing rule, strict
    assert rule_label(mk(25.0, 0.0, 0.2)) is None
    assert rule_label(mk(25.0, 1.0, 0.5 + eps)) is not None  # steering rule, strict
    assert rule_label(mk(25.0, 1.0, 0.5)) is None
    assert rule_label(mk(25.0, 1.0, -(0.5 + eps))) is not None  # magnitude comparison


@settings(max_examples=60, deadline=None)
@given(
    v=st.floats(min_value=5.0, max_value=33.0),
    bump=st.floats(min_value=0.0, max_value=10.0),
    ttc=st.floats(min_value=6.0, max_value=99.0),
    drop=st.floats(min_value=0.0, max_value=5.0),
)
def test_cf_rule_is_monotone(v, bump, ttc, drop):
    """Raising speed or lowering TTC never turns aggressive back to none."""
    base = rule_label(fv_cf(v, 0.0, ttc))
    harder = rule_label(fv_cf(v + bump, 0.0, max(ttc - drop, 0.2)))
    if base is not None:
        assert harder is not None
