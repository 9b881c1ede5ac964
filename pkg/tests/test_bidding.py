import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tevsim.bidding import (BidCurve, bid_slope, curve_from_arrays, four_point_arrays, four_point_bid,
                            inflexible_bid, quantity_at_price, quantity_limits_at_price, rt_bid)
from tevsim.ev_model import EvSpec

V1G = EvSpec("Tesla Model 3", 220, 3.84, 11.5)
V2G = EvSpec("Tesla Model 3", 220, 3.84, 11.5, discharge_rating=7.0)


def example_bid():
    return four_point_bid(5.0, 0.06, -0.01, 0.005, V1G, omega=0.5)


def test_hand_computed_four_point_example():
    bid = example_bid()
    assert bid.intercept == pytest.approx(0.11, abs=1e-12)
    expected = [(0.115, 0.0), (0.065, 5.0), (0.055, 5.0), (0.055, 11.5)]
    for (p, q), (ep, eq) in zip(zip(bid.prices, bid.quantities), expected):
        assert abs(p - ep) < 1e-12 and abs(q - eq) < 1e-12


def test_quantity_at_price_examples():
    bid = example_bid()
    assert quantity_at_price(bid, 0.09) == pytest.approx(2.5, abs=1e-12)
    assert quantity_at_price(bid, 0.06) == 5.0
    assert quantity_at_price(bid, 0.01) == 11.5
    assert quantity_at_price(bid, 0.2) == 0.0


def test_slope_examples():
    prices = np.array([0.04, 0.12, 0.08])
    assert bid_slope(prices, 0.5, V1G) == pytest.approx(-0.08 / 11.5 / 0.5, rel=1e-12)
    assert bid_slope(prices, 1.0, V1G) == pytest.approx(-0.006957, abs=1e-6)
    assert bid_slope(prices, 0.0, V1G) == float("inf")
    assert bid_slope(np.full(4, 0.05), 0.7, V1G) == 0.0


@settings(max_examples=200, deadline=None)
@given(w=st.floats(0.01, 0.5), lo=st.floats(0.0, 0.2), spread=st.floats(1e-4, 0.3))
def test_doubling_slider_halves_slope(w, lo, spread):
    prices = np.array([lo, lo + spread])
    assert bid_slope(prices, 2 * w, V2G) == pytest.approx(0.5 * bid_slope(prices, w, V2G), rel=1e-12)


def test_zero_slider_bid_is_vertical():
    bid = four_point_bid(4.0, 0.06, -0.01, 0.002, V1G, omega=0.0)
    assert not bid.flexible
    for p in (-1.0, 0.0, 0.058, 0.06, 0.3, 5.0):
        assert quantity_at_price(bid, p) == 4.0


def test_zero_deadband_collapses():
    bid = four_point_bid(5.0, 0.06, -0.01, 0.0, V1G, omega=0.5)
    assert bid.prices[1] == bid.prices[2] == pytest.approx(0.06)


def test_plan_outside_range_rejected():
    with pytest.raises(ValueError):
        four_point_bid(12.0, 0.06, -0.01, 0.002, V1G, 0.5)
    with pytest.raises(ValueError):
        four_point_bid(1.0, 0.06, -0.01, -0.002, V1G, 0.5)


def test_curve_has_only_prices_and_quantities():
    names = {f.name for f in dataclasses.fields(BidCurve)}
    assert names == {"prices", "quantities", "deadband", "slope", "intercept", "flexible"}
    rec = example_bid().to_record("ev001", 17)
    assert set(rec) == {"agent_id", "hour", "P1", "P2", "P3", "P4", "Q1", "Q2", "Q3", "Q4"}


def test_wire_round_trip():
    for bid in (example_bid(), four_point_bid(-3.0, 0.08, -0.004, 0.002, V2G, 0.8),
                inflexible_bid(2.0, 0.07, 0.002)):
        rec = json.loads(json.dumps(bid.to_record("ev001", 3)))
        back = BidCurve.from_record(rec)
        assert back.prices == bid.prices and back.quantities == bid.quantities
        for p in np.linspace(0, 0.2, 41):
            assert quantity_at_price(back, p) == pytest.approx(quantity_at_price(bid, p), abs=1e-12)


def test_continuity_at_deadband_edges():
    bid = four_point_bid(5.0, 0.06, -0.01, 0.005, V2G, 0.5)
    for eps in (1e-6, 1e-9, 1e-12):
        assert quantity_at_price(bid, bid.prices[1] + eps) == pytest.approx(5.0, abs=2 * eps / 0.01)
        assert quantity_at_price(bid, bid.prices[1] - eps) == 5.0
        assert quantity_at_price(bid, bid.prices[2] + eps) == 5.0
    assert quantity_at_price(bid, bid.prices[2]) == 5.0
    assert quantity_limits_at_price(bid, bid.prices[2]) == (5.0, V2G.charge_rating)


def curves():
    return st.builds(
        lambda q_frac, pf, slope, db, dis, omega: four_point_bid(
            -dis + q_frac * (11.5 + dis), pf, slope, db,
            EvSpec("x", 220, 3.84, 11.5, discharge_rating=dis), omega),
        st.floats(0, 1), st.floats(-0.05, 0.5), st.floats(-0.1, 0.0), st.floats(0, 0.02),
        st.sampled_from([0.0, 3.3, 11.5]), st.floats(0, 1))


@settings(max_examples=2000, deadline=None)
@given(bid=curves(), p1=st.floats(-1, 2), p2=st.floats(-1, 2))
def test_quantity_is_monotone_bounded_and_centred(bid, p1, p2):
    lo, hi = sorted((p1, p2))
    q_lo, q_hi = quantity_at_price(bid, lo), quantity_at_price(bid, hi)
    assert q_hi <= q_lo + 1e-12
    for q in (q_lo, q_hi):
        assert bid.quantities[0] - 1e-12 <= q <= bid.quantities[3] + 1e-12
    assert quantity_at_price(bid, bid.center_price) == bid.q_plan
    assert bid.quantities[0] <= bid.quantities[1] <= bid.quantities[2] <= bid.quantities[3]
    assert bid.prices[0] >= bid.prices[1] >= bid.prices[2] >= bid.prices[3]


def test_rt_bid_anchor_interpolates():
    hour = four_point_bid(4.0, 0.06, -0.005, 0.002, V1G, 0.6)
    b0 = rt_bid(4.0, 8.0, 0, hour, V1G)
    assert b0.q_plan * 12 == pytest.approx(4.0)
    b6 = rt_bid(4.0, 8.0, 6, hour, V1G)
    assert b6.q_plan * 12 == pytest.approx(6.0)
    assert b6.slope * (1 / 12) == pytest.approx(hour.slope)
    assert b6.deadband == hour.deadband
    assert b6.quantities[3] * 12 == pytest.approx(V1G.charge_rating)
    with pytest.raises(ValueError):
        rt_bid(4.0, 8.0, 12, hour, V1G)


def test_rt_bid_keeps_inflexible():
    hour = four_point_bid(4.0, 0.06, -0.005, 0.002, V1G, 0.0)
    b = rt_bid(4.0, 8.0, 3, hour, V1G)
    assert not b.flexible
    assert quantity_at_price(b, 10.0) * 12 == pytest.approx(5.0)


def test_rt_bid_anchored_at_given_price():
    hour = four_point_bid(4.0, 0.06, -0.005, 0.002, V1G, 0.6)
    b = rt_bid(3.0, 3.0, 0, hour, V1G, anchor_price=0.071)
    assert b.center_price == pytest.approx(0.071)
    assert quantity_at_price(b, 0.071) * 12 == pytest.approx(3.0)


def test_array_bids_match_scalar_bids():
    rng = np.random.default_rng(0)
    q = rng.uniform(-7, 11.5, 30)
    pf = rng.uniform(0.02, 0.2, 30)
    plugged = rng.random(30) > 0.3
    P, Q = four_point_arrays(q, pf, -0.004, 0.002, V2G, 0.7, plugged)
    for t in range(30):
        curve = curve_from_arrays(P[t], Q[t], 0.002, -0.004)
        if plugged[t]:
            ref = four_point_bid(q[t], pf[t], -0.004, 0.002, V2G, 0.7)
            np.testing.assert_allclose(curve.prices, ref.prices, atol=1e-15)
            np.testing.assert_allclose(curve.quantities, ref.quantities, atol=1e-15)
        else:
            assert quantity_at_price(curve, 0.0) == 0.0 and not curve.flexible
