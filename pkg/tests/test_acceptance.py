"""Acceptance criteria, each at its stated tolerance and time limit."""

import itertools
import json
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from moodid.cli import main
from moodid.dbscan import dbscan
from moodid.featurize import FeatureMatrix, build_matrix, build_vocabulary, featurize
from moodid.harness import ExperimentConfig, run_experiment, saliency_frequencies
from moodid.learn import ExtraTreesParams, ForestParams
from moodid.metrics import f_score, pearson, precision, recall
from moodid.mood import (
    average_hourly,
    build_variant,
    classify_mood,
    coverage_report,
    label_samples,
    propagate_daily,
    propagate_hourly,
)
from moodid.synthgen import generate, scenario, tiny_profiles
from moodid.types import EmaResponse, EmaTopic, HourKey, HourSample, StudyWindow
from oracles import dbscan_oracle, f_by_hand, pearson_two_pass, same_partition, table_oracle


@contextmanager
def time_limit(seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.1f}s, limit {seconds}s"


def acceptance(criterion, title):
    return pytest.mark.acceptance(criterion=criterion, title=title)


@acceptance(1, "column count = |app vocab| + |gps vocab| + 4; 7,802 + 28 gives 7,834")
def test_ac1_dimension_identity():
    with time_limit(1):
        for seed in range(3):
            out = generate(tiny_profiles(), 2, seed=seed)
            fm = featurize(out.events, out.window, out.subjects)
            n_app = len({c for c in fm.columns if c.startswith("apps_")})
            n_gps = len({c for c in fm.columns if c.startswith("gps_")})
            assert len(fm.columns) == n_app + n_gps + 4
        app_vocab = build_vocabulary(" ".join(map(str, c)) for c in itertools.combinations(range(130), 2))
        app_vocab = dict(itertools.islice(app_vocab.items(), 7802))
        gps_vocab = build_vocabulary([""] + [str(i) for i in range(26)] + ["n"])
        assert (len(app_vocab), len(gps_vocab)) == (7802, 28)
        a, g = next(iter(app_vocab)), "n"
        fm = build_matrix([HourSample(HourKey(0, 0), app_token=a, gps_token=g)], app_vocab, gps_vocab)
        assert len(fm.columns) == 7834


@acceptance(2, "mood flags match the table oracle on 960 grid points and 10,000 fractional points")
def test_ac2_mood_truth_table():
    with time_limit(1):
        topics = list(EmaTopic)
        names = [t.value for t in topics]
        grid = list(itertools.product(*(t.levels for t in topics)))
        assert len(grid) == 960
        for combo in grid:
            assert classify_mood(dict(zip(topics, combo))).as_tuple() == table_oracle(dict(zip(names, combo)))
        rng = random.Random(2024)
        for _ in range(10_000):
            ema = {}
            for t in topics:
                lo, hi = t.value_range
                u = rng.random()
                if u < 0.2:
                    continue
                if u < 0.5:
                    ema[t] = float(rng.randint(lo, hi))
                elif u < 0.8:
                    k = rng.randint(2, 4)
                    ema[t] = sum(rng.randint(lo, hi) for _ in range(k)) / k
                else:
                    ema[t] = rng.uniform(lo, hi)
            assert classify_mood(ema).as_tuple() == table_oracle({t.value: v for t, v in ema.items()})


def _random_ema_stream(rng):
    """Sparse EMA stream: up to six prompts per subject-day, random topics.

    The window starts at UTC midnight, as generated datasets do. A window
    opening mid-day lets a prompt in its first partial day spill into a
    next day that daily propagation leaves empty.
    """
    n_subjects, days = rng.randint(2, 4), rng.randint(2, 5)
    start = 1_364_169_600 + rng.randrange(0, 30) * 86400
    window = StudyWindow(start, start + days * 86400)
    events = []
    for s in range(n_subjects):
        for _ in range(sum(rng.randint(0, 6) for _ in range(days))):
            t = rng.randrange(window.start, window.end)
            for topic in rng.sample(list(EmaTopic), rng.randint(1, 5)):
                events.append(EmaResponse(s, t, topic, float(rng.choice(topic.levels))))
    return window, n_subjects, events


@acceptance(3, "coverage Raw <= H <= D and H adds only hours next to a response, 100 streams")
def test_ac3_coverage_monotonicity():
    with time_limit(10):
        rng = random.Random(3)
        for _ in range(100):
            window, n_subjects, events = _random_ema_stream(rng)
            keys = [HourKey(s, h) for s in range(n_subjects) for h in range(window.grid_length)]
            raw = average_hourly(events, window)
            h_map = propagate_hourly(raw, window.grid_length)
            d_map = propagate_daily(raw, window)
            counts = [coverage_report(v, m, keys).labeled_count
                      for v, m in (("raw", raw), ("H", h_map), ("D", d_map))]
            assert counts[0] <= counts[1] <= counts[2], counts
            for key in set(h_map) - set(raw):
                assert {HourKey(key.subject, key.hour_index - 1), HourKey(key.subject, key.hour_index + 1)} & set(raw)


@acceptance(4, "DBSCAN equals the quadratic oracle on 200 random instances")
def test_ac4_dbscan_oracle():
    with time_limit(30):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(0, 201))
            centres = rng.uniform(-4, 4, (int(rng.integers(1, 5)), 2))
            pts = centres[rng.integers(0, len(centres), n)] + rng.normal(0, rng.uniform(0.1, 0.8), (n, 2))
            eps = float(rng.choice([0.2, 0.5, 0.8]))
            min_pts = int(rng.integers(1, 9))
            got, want = dbscan(pts, eps, min_pts).tolist(), dbscan_oracle(pts, eps, min_pts)
            assert same_partition(got, want)
            assert {i for i, v in enumerate(got) if v == -1} == {i for i, v in enumerate(want) if v == -1}


@acceptance(5, "precision/recall/F match hand values to 1e-12; Pearson matches two-pass to 1e-9")
def test_ac5_metrics():
    with time_limit(5):
        rng = np.random.default_rng(5)
        cases = [(0, 0, 0), (0, 3, 0), (0, 0, 4), (5, 0, 0), (0, 2, 2), (3, 1, 2)]
        cases += [tuple(int(v) for v in rng.integers(0, 30, 3) * rng.integers(0, 2, 3)) for _ in range(44)]
        assert len(cases) == 50
        for tp, fp, fn in cases:
            p, r, f = f_by_hand(tp, fp, fn)
            assert abs(precision(tp, fp) - p) <= 1e-12
            assert abs(recall(tp, fn) - r) <= 1e-12
            assert abs(f_score(tp, fp, fn) - f) <= 1e-12
        assert abs(f_score(3, 1, 2) - 2 / 3) <= 1e-12
        for _ in range(50):
            n = int(rng.integers(3, 200))
            x = rng.normal(rng.uniform(-100, 100), rng.uniform(0.01, 50), n)
            y = rng.uniform(-1, 1) * x + rng.normal(0, rng.uniform(0.01, 10), n)
            assert abs(pearson(x, y) - pearson_two_pass(x, y)) <= 1e-9


def _permute_within_hours(fm, rng):
    subjects, hours = fm.subjects.copy(), fm.hours
    for h in np.unique(hours):
        idx = np.flatnonzero(hours == h)
        subjects[idx] = rng.permutation(subjects[idx])
    rows = tuple(HourKey(int(s), int(h)) for s, h in zip(subjects, hours))
    return FeatureMatrix(rows, fm.columns, fm.values)


@acceptance(6, "disjoint vocabularies: mean F >= 0.95 over 10 seeds; permuted labels <= 0.3")
def test_ac6_learner_sanity():
    with time_limit(300):
        real, permuted = [], []
        for seed in range(10):
            profiles, days = scenario("disjoint")
            assert len(profiles) == 5
            out = generate(profiles, days, seed=seed)
            fm = featurize(out.events, out.window, out.subjects)
            cfg = ExperimentConfig(delta=4, master_seed=seed)
            real.append(run_experiment(cfg, fm).aggregates()["mean_f"])
            shuffled = _permute_within_hours(fm, np.random.default_rng(seed))
            permuted.append(run_experiment(cfg, shuffled).aggregates()["mean_f"])
        print(f"mean F {np.mean(real):.4f}, permuted {np.mean(permuted):.4f}")
        assert np.mean(real) >= 0.95
        assert np.mean(permuted) <= 1 / 5 + 0.1


@acceptance(7, "Exclude(mood) mean F below All in >= 9 of 10 seeds, every mood")
def test_ac7_directional_mood_effect():
    with time_limit(900):
        moods = ("happy", "upset", "stressed")
        lower = dict.fromkeys(moods, 0)
        for seed in range(10):
            profiles, days = scenario("moodshift")
            out = generate(profiles, days, seed=seed)
            fm = featurize(out.events, out.window, out.subjects)
            hourly = average_hourly(out.ema, out.window)
            labels = label_samples(build_variant(hourly, "H", out.window), fm.rows)
            all_f = run_experiment(ExperimentConfig(delta=4, master_seed=seed), fm).aggregates()["mean_f"]
            for m in moods:
                cfg = ExperimentConfig(delta=4, regime="exclude", mood=m, variant="H", master_seed=seed)
                lower[m] += run_experiment(cfg, fm, labels).aggregates()["mean_f"] < all_f
        print("runs with Exclude < All:", lower)
        assert all(v >= 9 for v in lower.values()), lower


def _tree_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


@acceptance(8, "bit-identical result files at --jobs 1, 4 and 8")
def test_ac8_determinism(tmp_path):
    with time_limit(600):
        data = tmp_path / "data"
        assert main(["synth", "--scenario", "moodshift", "--seed", "8", "-o", str(data)]) == 0
        m = str(data / "manifest.json")
        assert main(["featurize", "--manifest", m, "-o", str(tmp_path / "feat")]) == 0
        assert main(["label", "--manifest", m, "-o", str(tmp_path / "labels")]) == 0
        outputs = []
        for jobs in (1, 4, 8):
            spec = {
                "features": "feat", "labels": "labels", "output": f"results_{jobs}",
                "deltas": [4, 6], "regimes": ["all", "exclude", "only"],
                "moods": ["stressed"], "variants": ["H", "D"], "stride": 3,
            }
            (tmp_path / "run.json").write_text(json.dumps(spec))
            assert main(["run", "--config", str(tmp_path / "run.json"), "--seed", "42", "--jobs", str(jobs)]) == 0
            outputs.append(_tree_bytes(tmp_path / f"results_{jobs}"))
        assert len(outputs[0]) > 10
        assert outputs[0] == outputs[1] == outputs[2]


@acceptance(9, "a feature selected in every window has frequency 1.0; frequencies sum to 1")
def test_ac9_saliency(tmp_path):
    with time_limit(60):
        subjects, grid = 3, 30
        rows = tuple(HourKey(s, h) for h in range(grid) for s in range(subjects))
        values = np.zeros((len(rows), 5))
        values[:, 2] = [k.subject for k in rows]  # the only informative column
        fm = FeatureMatrix(rows, ("a", "b", "signature", "c", "d"), values)
        cfg = ExperimentConfig(delta=4, selector=ExtraTreesParams(), forest=ForestParams(n_trees=20))
        result = run_experiment(cfg, fm)
        assert all(r.selected_columns == (2,) for r in result.records)
        assert saliency_frequencies([result]) == [("signature", 1.0)]

        profiles, days = scenario("moodshift")
        out = generate(profiles, days, seed=9)
        fm = featurize(out.events, out.window, out.subjects)
        results = [run_experiment(ExperimentConfig(delta=d, stride=4, forest=ForestParams(n_trees=20)), fm)
                   for d in (4, 8)]
        freqs = saliency_frequencies(results)
        assert abs(sum(f for _, f in freqs) - 1.0) <= 1e-12
        assert [f for _, f in freqs] == sorted((f for _, f in freqs), reverse=True)
