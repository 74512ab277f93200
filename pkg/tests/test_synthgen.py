import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from moodid.featurize import hour_samples
from moodid.ingest import DatasetManifest, write_dataset
from moodid.mood import average_hourly, label_samples
from moodid.synthgen import (
    TARGET_MOOD_SHARES,
    MoodShift,
    ProfileError,
    SubjectProfile,
    _ema_answers,
    day_prob_for_share,
    disjoint_profiles,
    generate,
    moodshift_profiles,
    paperlike_profiles,
    scenario,
    tiny_profiles,
    truth_fraction_days,
)
from moodid.types import AppTask, HourKey, Mood, MoodLabels, validate_event


def write(out, root):
    m = DatasetManifest(out.window.start, out.window.end, out.subjects, root=root)
    write_dataset(out.all_events, m, root / "manifest.json")
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_byte_identical_output(tmp_path):
    a = write(generate(tiny_profiles(), 2, seed=7), tmp_path / "a")
    b = write(generate(tiny_profiles(), 2, seed=7), tmp_path / "b")
    c = write(generate(tiny_profiles(), 2, seed=8), tmp_path / "c")
    assert a == b and a != c


def test_subject_streams_are_independent():
    one = generate(disjoint_profiles(3), 2, seed=1)
    two = generate(disjoint_profiles(4), 2, seed=1)
    assert [e for e in one.events if e.subject < 3] == [e for e in two.events if e.subject < 3]


@pytest.mark.parametrize("name", ["tiny", "disjoint", "moodshift"])
def test_events_are_valid(name):
    profiles, days = scenario(name)
    out = generate(profiles, days, seed=3)
    assert all(validate_event(e, out.window) == [] for e in out.all_events)
    assert out.window.grid_length == days * 24


def test_happy_all_day_closed_loop():
    base = tiny_profiles()[0]
    happy = replace(base, mood_day_prob={Mood.HAPPY: 1.0}, episode_hours=(24, 24), ema_rate=1.0)
    out = generate([happy, base], 3, seed=5)
    hourly = average_hourly(out.ema, out.window)
    labels = label_samples(hourly, [k for k in hourly if k.subject == 0])
    assert len(labels) == 72
    assert all(lab == MoodLabels(happy=True) for lab in labels.values())


@pytest.mark.parametrize("seed", range(3))
def test_labels_recover_schedule_where_ema_exists(seed):
    out = generate(moodshift_profiles(4), 6, seed=seed)
    truth = {}
    for s, h, m in out.truth:
        truth.setdefault(HourKey(s, h), set()).add(m)
    hourly = average_hourly(out.ema, out.window)
    assert len(hourly) == 4 * 6 * 24  # rate 1.0: one prompt every hour
    for key, lab in label_samples(hourly, hourly).items():
        active = truth.get(key, set())
        assert lab == MoodLabels(*(m in active for m in Mood)), key


def test_every_flag_combination_is_reachable():
    for combo in range(8):
        target = tuple(bool(combo >> i & 1) for i in range(3))
        assert _ema_answers(target)


def test_mood_day_fractions_within_three_sigma():
    profiles = paperlike_profiles()
    days = 60
    out = generate(profiles, days, seed=21)
    for mood, share in TARGET_MOOD_SHARES.items():
        p = day_prob_for_share(share)
        n = days * len(profiles)
        k = sum(truth_fraction_days(out.truth, s, mood, days) * days for s in range(len(profiles)))
        assert abs(k / n - p) <= 3 * math.sqrt(p * (1 - p) / n), mood
        # Hour share follows from day probability and mean episode length.
        hours = sum(1 for _, _, m in out.truth if m == mood) / (n * 24)
        assert abs(hours - share) < 0.02


def _features(out):
    """Per-subject mood flags and feature columns over that subject's hours."""
    samples = hour_samples(out.events, out.window, out.subjects)
    moody = {(s, h) for s, h, _ in out.truth}
    per_subject = {}
    for subject in out.subjects:
        mine = [x for x in samples if x.key.subject == subject]
        tokens = sorted({x.app_token for x in mine})
        flag = np.array([(subject, x.key.hour_index) in moody for x in mine])
        per_subject[subject] = (flag, {
            "app": np.array([tokens.index(x.app_token) for x in mine]),
            "lock": np.array([x.lock_count for x in mine]),
            "audio": np.array([x.audio_code for x in mine]),
        })
    return per_subject


def _differs(per_subject, alpha=0.01):
    """Two-sample tests of mood vs other hours, within each subject.

    Comparing within a subject keeps differences between subjects from
    posing as a mood effect. Bonferroni over every test keeps the family
    error at *alpha*.
    """
    p_values = []
    for flag, cols in per_subject.values():
        if flag.all() or not flag.any():
            continue
        for name, v in cols.items():
            if name == "lock":
                p_values.append(stats.mannwhitneyu(v[flag], v[~flag]).pvalue)
                continue
            table = np.array([[np.sum(v[flag] == c), np.sum(v[~flag] == c)] for c in np.unique(v)])
            p_values.append(stats.chi2_contingency(table).pvalue if len(table) > 1 else 1.0)
    return bool(p_values) and min(p_values) < alpha / len(p_values)


def test_identity_shift_is_indistinguishable():
    passes = 0
    seeds = range(40)
    for seed in seeds:
        out = generate(disjoint_profiles(5), 30, seed=seed)
        passes += not _differs(_features(out))
    assert passes / len(seeds) >= 0.95


def test_real_shift_is_detected():
    out = generate(moodshift_profiles(5), 30, seed=0)
    assert _differs(_features(out))


def test_mood_only_apps_appear_only_in_mood_hours():
    out = generate(moodshift_profiles(5), 10, seed=2)
    moody = {(s, h) for s, h, _ in out.truth}
    for e in out.events:
        if isinstance(e, AppTask) and e.task_id.endswith("4") and e.task_id.startswith("5"):
            assert (e.subject, out.window.hour_of(e.time)) in moody


def test_invalid_profiles_are_rejected():
    base = tiny_profiles()[0]
    bad = [
        replace(base, gps_rate=1.5),
        replace(base, app_weights=(1.0,)),
        replace(base, audio_weights=(1, 1, 1)),
        replace(base, mood_day_prob={Mood.HAPPY: -0.1}),
        replace(base, locations=((95.0, 0.0),)),
        replace(base, app_sets=(("a b",), ("x",), ("y",))),
        replace(base, episode_hours=(5, 30)),
        replace(base, mood_shift={Mood.UPSET: MoodShift(app_scale={0: 0.0, 1: 0.0})}),
        replace(base, mood_shift={Mood.UPSET: MoodShift(app_extra={len(base.app_sets): 1.0})}),
        replace(base, mood_shift={Mood.UPSET: MoodShift(lock_scale=-1.0)}),
    ]
    for p in bad:
        with pytest.raises(ProfileError):
            generate([p, base], 2, seed=0)
    with pytest.raises(ProfileError):
        generate([base], 2, seed=0)
    with pytest.raises(ProfileError):
        generate([base, base], 1, seed=0)
    with pytest.raises(ProfileError, match="valid: disjoint"):
        scenario("nope")


def test_paperlike_defaults():
    profiles, days = scenario("paperlike")
    assert len(profiles) == 19 and days == 60
    for p in profiles:
        p.validate()
    assert isinstance(profiles[0], SubjectProfile)
