import logging

import numpy as np
import pytest

from tevsim.ev_model import AgentConfig, DrivingSchedule, EvSpec
from tevsim.metrics import (amenity, base_case_sim, full_hours, greedy_charging, savings, spearman)

# unit efficiency so the metered and battery-side limits coincide
SPEC = EvSpec("Tesla Model 3", 220, 3.84, 11.5, eta_in=1.0)


def agent(miles=30.0, spec=SPEC):
    return AgentConfig(spec, DrivingSchedule(18, 8, miles), 0.0)


def test_greedy_charges_at_rating_until_full():
    e_in, soc = greedy_charging(agent(), 4, start_hour=19, initial_soc=SPEC.c_max - 20.0)
    np.testing.assert_allclose(e_in, [11.5, 8.5, 0.0, 0.0], atol=1e-12)
    assert soc[1] == pytest.approx(SPEC.c_max) and soc[-1] == pytest.approx(SPEC.c_max)


def test_greedy_full_battery_draws_nothing():
    e_in, soc = greedy_charging(agent(), 6, start_hour=20)
    assert np.all(e_in == 0) and np.all(soc == SPEC.c_max)


def test_greedy_covers_arrival_drain_and_skips_away_hours():
    miles = 30.0
    e_in, soc = greedy_charging(agent(miles), 24, start_hour=0)
    half = 0.5 * miles / SPEC.mileage
    assert np.all(e_in[9:18] == 0)                 # away
    assert e_in[18] == pytest.approx(2 * half)     # both halves of the trip on arrival
    assert soc[8] == pytest.approx(SPEC.c_max - half)
    assert soc[18] == pytest.approx(SPEC.c_max)


def test_base_case_bill_uses_metered_energy_and_window():
    spec = EvSpec("Tesla Model 3", 220, 3.84, 11.5)  # eta_in 0.9
    prices = np.linspace(0.05, 0.10, 48)
    tr = base_case_sim(agent(spec=spec), prices, start_hour=0, billed_from=24)
    np.testing.assert_allclose(tr.metered, tr.e_in / 0.9)
    assert tr.bill == pytest.approx(float(prices[24:] @ tr.metered[24:]))
    assert tr.metered.max() <= spec.charge_rating + 1e-12


def test_savings_examples(caplog):
    assert savings(8.0, 10.0) == pytest.approx(20.0)
    assert savings(10.0, 10.0) == 0.0
    assert savings(12.0, 10.0) == pytest.approx(-20.0)
    with caplog.at_level(logging.WARNING):
        assert savings(3.0, 0.0) == 0.0
    assert "zero" in caplog.text


def test_amenity_identical_traces_is_hundred():
    soc = np.array([40.0, 50.0, SPEC.c_max, SPEC.c_max, 55.0])
    assert amenity(soc, soc, SPEC.c_max) == pytest.approx(100.0)


def test_amenity_ratio_and_tolerance():
    c = SPEC.c_max
    base = np.array([c, c, c, c, 40.0])
    trans = np.array([c - 0.004 * c, 40.0, 40.0, c, 40.0])  # first within 1 % of full
    assert full_hours(trans, c) == 2
    assert amenity(trans, base, c) == pytest.approx(50.0)


def test_amenity_undefined_when_base_never_full(caplog):
    with caplog.at_level(logging.WARNING):
        assert np.isnan(amenity(np.full(4, SPEC.c_max), np.full(4, 30.0), SPEC.c_max))
    assert "never" in caplog.text


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 25, 90]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert np.isnan(spearman([1, 2, 3], [5, 5, 5]))
