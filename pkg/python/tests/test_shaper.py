"""Tests for the token-bucket traffic shaper"""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.shaper import (
    DuplicateFilter,
    InvalidRate,
    KeyPattern,
    NoSuchClass,
    NoSuchFilter,
    PipeKey,
    TrafficShaper,
    default_burst,
)

MB = 1_000_000


@pytest.fixture
def key():
    return PipeKey("dn1", 50010, "nm1", 32768)


class TestPipeKey:
    def test_render_and_parse(self, key):
        """Test pipe key rendering and parsing"""
        assert key.render() == "dn1:50010->nm1:32768"
        assert PipeKey.parse("dn1:50010->nm1:32768") == key

    @pytest.mark.parametrize(
        "args",
        [
            ("dn 1", 1, "nm1", 2),
            ("dn1", 0, "nm1", 2),
            ("dn1", 1, "nm:1", 2),
            ("dn1", 1, "nm1", 70000),
        ],
    )
    def test_invalid(self, args):
        """Test invalid pipe key fields"""
        with pytest.raises(ValueError):
            PipeKey(*args)

    def test_parse_invalid(self):
        with pytest.raises(ValueError):
            PipeKey.parse("dn1:50010-nm1:32768")

    def test_ordering_follows_fields(self):
        a = PipeKey("dn1", 50010, "nm1", 32768)
        b = PipeKey("dn1", 50010, "nm1", 32769)
        assert sorted([b, a]) == [a, b]


class TestClassify:
    def test_unclassified_is_none(self, key):
        assert TrafficShaper().classify(key) is None

    def test_lower_priority_value_wins(self, key):
        """Test the lowest priority value classifies"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 10, 1)
        shaper.configure_class("1:2", 20, 2)
        shaper.add_filter(KeyPattern.exact(key), "1:1", priority=10)
        shaper.add_filter(KeyPattern(dst_host="nm1"), "1:2", priority=5)
        assert shaper.classify(key) == "1:2"

    def test_more_exact_pattern_wins_on_equal_priority(self, key):
        """Test exact fields win ties on priority"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 10, 1)
        shaper.configure_class("1:2", 20, 2)
        shaper.add_filter(KeyPattern(src_host="dn1"), "1:2", priority=10)
        shaper.add_filter(KeyPattern.exact(key), "1:1", priority=10)
        assert shaper.classify(key) == "1:1"

    def test_rendering_breaks_remaining_ties(self, key):
        """Test pattern rendering breaks the last ties"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 10, 1)
        shaper.configure_class("1:2", 20, 2)
        shaper.add_filter(KeyPattern(src_host="dn1"), "1:2", priority=10)
        shaper.add_filter(KeyPattern(dst_host="nm1"), "1:1", priority=10)
        # "*:*->nm1:*" < "dn1:*->*:*"
        assert shaper.classify(key) == "1:1"

    def test_filter_errors(self, key):
        """Test duplicate filters and unknown classes"""
        shaper = TrafficShaper()
        with pytest.raises(NoSuchClass):
            shaper.add_filter(KeyPattern.exact(key), "1:1", 10)
        shaper.configure_class("1:1", 10, 1)
        shaper.add_filter(KeyPattern.exact(key), "1:1", 10)
        with pytest.raises(DuplicateFilter):
            shaper.add_filter(KeyPattern.exact(key), "1:1", 10)
        shaper.remove_filter(KeyPattern.exact(key), "1:1")
        with pytest.raises(NoSuchFilter):
            shaper.remove_filter(KeyPattern.exact(key), "1:1")

    def test_remove_class_drops_its_filters(self, key):
        """Test removing a class removes its filters"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 10, 1)
        shaper.add_filter(KeyPattern.exact(key), "1:1", 10)
        shaper.remove_class("1:1")
        assert shaper.filters() == []
        assert shaper.classify(key) is None
        with pytest.raises(NoSuchClass):
            shaper.remove_class("1:1")


class TestBuckets:
    def test_invalid_rate(self):
        with pytest.raises(InvalidRate):
            TrafficShaper().configure_class("1:1", 0, 1)
        with pytest.raises(InvalidRate):
            TrafficShaper().configure_class("1:1", 1, 0)

    def test_default_burst(self):
        assert default_burst(40 * MB) == pytest.approx(4 * MB)

    def test_unclassified_grant_is_unlimited(self):
        assert TrafficShaper().grant(None, 123.0, now=1.0) == 123.0

    def test_grant_is_limited_by_tokens(self):
        """Test grants stop at the token count"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 40 * MB, 4 * MB, now=0.0)
        assert shaper.grant("1:1", 10 * MB, now=0.0) == pytest.approx(4 * MB)
        assert shaper.grant("1:1", 10 * MB, now=0.05) == pytest.approx(2 * MB)

    def test_steady_rate_under_saturating_demand(self):
        """Test saturating demand is served at the class rate"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 40 * MB, default_burst(40 * MB), now=0.0)
        dt = 0.1
        granted = [shaper.grant("1:1", 10 * MB, now=dt * i) for i in range(1, 101)]
        assert sum(granted[10:]) / (90 * dt) == pytest.approx(40 * MB)

    def test_overhead_factor_charges_wire_bytes(self):
        """Test overhead factor is charged against tokens"""
        shaper = TrafficShaper(overhead_factor=1.25)
        shaper.configure_class("1:1", 10 * MB, 1 * MB, now=0.0)
        assert shaper.grant("1:1", 10 * MB, now=0.0) == pytest.approx(0.8 * MB)

    def test_reconfigure_clamps_tokens_to_new_burst(self):
        """Test lowering the burst clamps stored tokens"""
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 40 * MB, 4 * MB, now=0.0)
        shaper.configure_class("1:1", 10 * MB, 1 * MB, now=1.0)
        shape = shaper.get_class("1:1")
        assert shape.tokens == pytest.approx(1 * MB)
        assert shape.rate == 10 * MB
        assert shape.last_refill == 1.0

    def test_refill_backwards_is_rejected(self):
        shaper = TrafficShaper()
        shaper.configure_class("1:1", 10, 1, now=2.0)
        with pytest.raises(ValueError):
            shaper.grant("1:1", 1, now=1.0)


@settings(max_examples=200, deadline=None)
@given(
    rate=st.floats(min_value=1.0, max_value=1e9),
    burst=st.floats(min_value=1.0, max_value=1e8),
    steps=st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=2.0),
            st.floats(min_value=0.0, max_value=1e9),
        ),
        min_size=1,
        max_size=50,
    ),
)
def test_granted_bytes_never_exceed_burst_plus_rate_times_window(rate, burst, steps):
    """Test grants stay under burst plus rate times window"""
    shaper = TrafficShaper()
    shaper.configure_class("1:1", rate, burst, now=0.0)
    now = 0.0
    total = 0.0
    for gap, requested in steps:
        now += gap
        got = shaper.grant("1:1", requested, now)
        assert 0.0 <= got <= requested
        total += got
        assert total <= burst + rate * now + 1e-6 * (burst + rate * now)


@settings(max_examples=300, deadline=None)
@given(
    rate=st.floats(min_value=1e3, max_value=1e9),
    burst_steps=st.floats(min_value=1.0, max_value=20.0),
    demand_factor=st.floats(min_value=0.1, max_value=10.0),
    steps=st.integers(min_value=1, max_value=200),
)
def test_stepped_grants_track_the_fluid_bucket(rate, burst_steps, demand_factor, steps):
    """Test stepped grants follow the continuous bucket"""
    dt = 0.1
    burst = rate * dt * burst_steps
    demand = rate * demand_factor
    shaper = TrafficShaper()
    shaper.configure_class("1:1", rate, burst, now=0.0)
    granted = 0.0
    for k in range(1, steps + 1):
        granted += shaper.grant("1:1", demand * dt, now=k * dt)
        fluid = min(demand * k * dt, burst + rate * k * dt)
        assert abs(granted - fluid) <= rate * dt * (1 + 1e-9) + 1e-6 * fluid


def test_every_window_of_random_sequences_stays_within_burst_plus_rate():
    rng = random.Random(2024)
    for _ in range(10_000):
        rate = rng.uniform(1.0, 1e9)
        burst = rng.uniform(1.0, 1e8)
        shaper = TrafficShaper()
        shaper.configure_class("1:1", rate, burst, now=0.0)
        now = 0.0
        times, grants = [], []
        for _ in range(rng.randint(1, 12)):
            now += rng.choice([0.0, rng.uniform(0.0, 0.5)])
            times.append(now)
            grants.append(shaper.grant("1:1", rng.uniform(0.0, 2 * burst), now))
        sums = [0.0, *itertools.accumulate(grants)]
        for i, j in itertools.combinations_with_replacement(range(len(grants)), 2):
            window = times[j] - times[i]
            bound = burst + rate * window
            assert sums[j + 1] - sums[i] <= bound * (1 + 1e-9)
