import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moodid.mood import (
    DatasetVariant,
    average_hourly,
    build_variant,
    classify_mood,
    coverage_report,
    label_samples,
    load_labels,
    propagate_daily,
    propagate_hourly,
    save_labels,
)
from moodid.types import EmaResponse, EmaTopic, HourKey, MoodLabels, StudyWindow
from oracles import table_oracle

S = EmaTopic.STRESS
W = StudyWindow(1_364_169_600, 1_364_169_600 + 72 * 3600)  # starts at UTC midnight


def resp(subject, hour, topic, value, minute=0):
    return EmaResponse(subject, W.start + hour * 3600 + minute * 60, topic, value)


def by_name(ema):
    return {t.value: v for t, v in ema.items()}


# -- averaging and propagation ---------------------------------------------


def test_average_hourly():
    hourly = average_hourly([resp(0, 5, S, 2), resp(0, 5, S, 4, 30), resp(1, 2, S, 1)], W)
    assert hourly == {HourKey(0, 5): {S: 3.0}, HourKey(1, 2): {S: 1.0}}
    assert average_hourly([], W) == {}


def test_propagate_single_value():
    out = propagate_hourly({HourKey(0, 10): {S: 2.0}}, 72)
    assert out == {HourKey(0, h): {S: 2.0} for h in (9, 10, 11)}


def test_propagate_adjacent_values_do_not_overwrite():
    out = propagate_hourly({HourKey(0, 10): {S: 2.0}, HourKey(0, 11): {S: 5.0}}, 72)
    assert out[HourKey(0, 9)] == {S: 2.0}
    assert out[HourKey(0, 10)] == {S: 2.0}
    assert out[HourKey(0, 11)] == {S: 5.0}
    assert out[HourKey(0, 12)] == {S: 5.0}
    assert len(out) == 4


def test_propagate_clamps_at_grid_edges():
    out = propagate_hourly({HourKey(0, 0): {S: 1.0}, HourKey(1, 71): {S: 4.0}}, 72)
    assert set(out) == {HourKey(0, 0), HourKey(0, 1), HourKey(1, 70), HourKey(1, 71)}


def test_propagate_is_per_topic_and_per_subject():
    hourly = {HourKey(0, 5): {S: 1.0}, HourKey(0, 6): {EmaTopic.SAD: 3.0}, HourKey(1, 7): {S: 4.0}}
    out = propagate_hourly(hourly, 72)
    assert out[HourKey(0, 6)] == {EmaTopic.SAD: 3.0, S: 1.0}
    assert out[HourKey(0, 5)] == {S: 1.0, EmaTopic.SAD: 3.0}
    assert out[HourKey(0, 7)] == {EmaTopic.SAD: 3.0}
    assert out[HourKey(1, 6)] == {S: 4.0} and HourKey(0, 8) not in out


def test_gap_between_two_reports_takes_the_earlier_value():
    out = propagate_hourly({HourKey(0, 4): {S: 1.0}, HourKey(0, 6): {S: 5.0}}, 72)
    assert out[HourKey(0, 5)] == {S: 1.0}


def test_propagate_daily():
    hourly = average_hourly([resp(0, 3, S, 2), resp(0, 20, S, 4)], W)
    out = propagate_daily(hourly, W)
    assert set(out) == {HourKey(0, h) for h in range(24)}
    assert all(v == {S: 3.0} for v in out.values())


def test_daily_uses_utc_days_with_offset_window():
    w = StudyWindow(W.start + 20 * 3600, W.start + 20 * 3600 + 30 * 3600)
    out = propagate_daily({HourKey(0, 1): {S: 2.0}}, w)  # 21:00 UTC on day one
    assert set(out) == {HourKey(0, h) for h in range(4)}
    out = propagate_daily({HourKey(0, 5): {S: 2.0}}, w)  # 01:00 UTC on day two
    assert set(out) == {HourKey(0, h) for h in range(4, 28)}


def test_day_without_ema_stays_unlabeled():
    out = propagate_daily({HourKey(0, 30): {S: 2.0}}, W)
    assert all(24 <= k.hour_index < 48 for k in out)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 71), st.sampled_from(list(EmaTopic)),
                          st.integers(1, 3)), max_size=30))
def test_coverage_ordering_and_no_chaining(raw):
    hourly = average_hourly([resp(s, h, t, v) for s, h, t, v in raw], W)
    h_map = propagate_hourly(hourly, W.grid_length)
    d_map = propagate_daily(hourly, W)
    assert set(hourly) <= set(h_map) and set(hourly) <= set(d_map)
    for key, topics in h_map.items():
        for topic, value in topics.items():
            if topic in hourly.get(key, {}):
                assert value == hourly[key][topic]
            else:
                sources = [hourly.get(HourKey(key.subject, key.hour_index + d), {}).get(topic)
                           for d in (-1, 1)]
                assert value in [v for v in sources if v is not None]
    # Re-propagating the H map would chain; the builder must not.
    for key in h_map:
        assert any(HourKey(key.subject, key.hour_index + d) in hourly for d in (-1, 0, 1))


def test_hourly_can_reach_past_a_day_boundary():
    # A fully reported day: H spills one hour into each neighbouring day, D does not.
    hourly = {HourKey(0, h): {S: 2.0} for h in range(24, 48)}
    assert len(propagate_hourly(hourly, 72)) == 26
    assert len(propagate_daily(hourly, W)) == 24


def test_partial_first_day_can_give_hourly_more_coverage():
    # Window opens at 23:00 UTC; the lone response sits in a one-hour first day.
    w = StudyWindow(W.start + 23 * 3600, W.start + 23 * 3600 + 48 * 3600)
    hourly = {HourKey(0, 0): {S: 2.0}}
    assert len(propagate_hourly(hourly, w.grid_length)) == 2
    assert len(propagate_daily(hourly, w)) == 1


# -- classification ---------------------------------------------------------


def test_table_examples():
    assert classify_mood({S: 5}) == MoodLabels(happy=True)
    assert classify_mood({S: 3}) == MoodLabels(upset=True, stressed=True)
    assert classify_mood({}) == MoodLabels()
    assert classify_mood({EmaTopic.MOOD: 3, EmaTopic.SLEEP: 3}) == MoodLabels(upset=True, stressed=True)
    assert classify_mood({EmaTopic.MOOD: 1.5}) == MoodLabels()


def test_truth_table_grid():
    topics = list(EmaTopic)
    grid = list(itertools.product(*(t.levels for t in topics)))
    assert len(grid) == 960
    for combo in grid:
        ema = dict(zip(topics, combo))
        assert classify_mood(ema).as_tuple() == table_oracle(by_name(ema)), combo


def test_flags_are_monotone_in_added_topics():
    topics = list(EmaTopic)
    options = [[None, *t.levels] for t in topics]
    for combo in itertools.product(*options):
        ema = {t: v for t, v in zip(topics, combo) if v is not None}
        base = classify_mood(ema).as_tuple()
        for t in topics:
            if t in ema:
                continue
            for v in t.levels:
                more = classify_mood({**ema, t: v}).as_tuple()
                assert all(m or not b for b, m in zip(base, more))


def test_fractional_points_match_oracle():
    rng = random.Random(2)
    for _ in range(2000):
        ema = {}
        for t in EmaTopic:
            lo, hi = t.value_range
            r = rng.random()
            if r < 0.3:
                ema[t] = float(rng.randint(lo, hi))
            elif r < 0.8:
                vals = [rng.randint(lo, hi) for _ in range(rng.randint(2, 3))]
                ema[t] = sum(vals) / len(vals)
        assert classify_mood(ema).as_tuple() == table_oracle(by_name(ema))


# -- coverage and persistence ----------------------------------------------


def test_coverage_all_labeled_and_counts():
    keys = [HourKey(s, h) for s in (0, 1) for h in range(3)]
    ema = {k: {S: 3.0} for k in keys}
    rep = coverage_report("D", ema, keys)
    assert rep.fraction == 1.0 and rep.labeled_count == 6
    assert rep.per_subject_counts[0] == {"happy": 0, "upset": 3, "stressed": 3}
    assert rep.mood_totals() == {"happy": 0, "upset": 6, "stressed": 6}


def test_coverage_scripted_counts():
    keys = [HourKey(0, h) for h in range(10)]
    ema = {HourKey(0, 2): {S: 5.0}, HourKey(0, 7): {EmaTopic.SAD: 1.0}}
    rep = coverage_report(DatasetVariant.RAW, ema, keys)
    assert (rep.labeled_count, rep.total) == (2, 10)
    assert rep.per_subject_counts[0] == {"happy": 1, "upset": 0, "stressed": 0}


def test_label_samples_default_false():
    labels = label_samples({}, [HourKey(0, 0)])
    assert labels[HourKey(0, 0)] == MoodLabels()


@pytest.mark.parametrize("variant", list(DatasetVariant))
def test_label_file_round_trip(tmp_path, variant):
    hourly = average_hourly([resp(0, 3, S, 2), resp(0, 3, EmaTopic.MOOD, 3), resp(1, 40, EmaTopic.SAD, 2)], W)
    ema = build_variant(hourly, variant, W)
    keys = [HourKey(s, h) for s in (0, 1) for h in range(W.grid_length)]
    save_labels(tmp_path / "l.csv", variant, ema, keys)
    v, labels, back = load_labels(tmp_path / "l.csv")
    assert v == variant.value
    assert back == ema
    assert labels == label_samples(ema, keys)
