"""Seeded synthetic telemetry with scheduled mood episodes.

Each subject behaves according to a :class:`SubjectProfile`. Mood episodes
are drawn per day; while a mood is active the profile's :class:`MoodShift`
rescales the subject's distributions. EMA prompts carry answers whose mood
labels equal the moods active in that hour, so the labeller recovers the
schedule exactly wherever an answer exists.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from moodid._seeding import derive_seed
from moodid.mood import classify_mood
from moodid.types import (
    ActivityInf,
    AppTask,
    AudioInf,
    Call,
    EmaResponse,
    EmaTopic,
    GpsFix,
    LockEvent,
    Mood,
    MoodLabels,
    StudyWindow,
    canonical_order,
)

DEFAULT_START = 1364169600  # 2013-03-25T00:00:00Z


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class MoodShift:
    """Multiplicative changes applied while a mood is active.

    ``app_extra`` adds weight to app-set entries, which is how an entry with
    zero base weight becomes a mood-only behaviour.
    """

    app_scale: dict = field(default_factory=dict)
    app_extra: dict = field(default_factory=dict)
    lock_scale: float = 1.0
    call_scale: float = 1.0
    audio_scale: tuple = (1.0, 1.0, 1.0, 1.0)
    activity_scale: tuple = (1.0, 1.0, 1.0, 1.0)

    @property
    def is_identity(self) -> bool:
        return self == MoodShift()


@dataclass(frozen=True)
class SubjectProfile:
    app_sets: tuple  # tuple of tuples of task ids; () means no app use
    app_weights: tuple
    locations: tuple  # (lat, lon) centres
    location_weights: tuple
    gps_rate: float = 0.3
    gps_spread: float = 0.02
    lock_rate: float = 0.3
    call_prob: float = 0.05
    call_log_mean: float = 1.5
    call_log_sd: float = 1.0
    audio_weights: tuple = (0.62, 0.15, 0.12, 0.01)
    audio_missing: float = 0.16
    activity_weights: tuple = (0.93, 0.03, 0.01, 0.03)
    activity_missing: float = 0.16
    inferences_per_hour: float = 3.0
    mood_day_prob: dict = field(default_factory=dict)  # Mood -> P(episode on a day)
    episode_hours: tuple = (3, 9)
    mood_shift: dict = field(default_factory=dict)  # Mood -> MoodShift
    ema_rate: float = 0.1

    def validate(self) -> None:
        def prob(name, p):
            if not 0.0 <= p <= 1.0:
                raise ProfileError(f"{name}={p} is not a probability")

        def dist(name, w, size=None):
            w = np.asarray(w, dtype=float)
            if size is not None and w.shape != (size,):
                raise ProfileError(f"{name} must have {size} entries")
            if np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
                raise ProfileError(f"{name} must be non-negative with positive mass")

        if len(self.app_sets) != len(self.app_weights):
            raise ProfileError("app_sets and app_weights differ in length")
        if len(self.locations) != len(self.location_weights):
            raise ProfileError("locations and location_weights differ in length")
        for s in self.app_sets:
            if any((not t) or any(c.isspace() for c in t) for t in s):
                raise ProfileError(f"bad task id in app set {s!r}")
        for lat, lon in self.locations:
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ProfileError(f"location {(lat, lon)} out of range")
        dist("location_weights", self.location_weights)
        dist("audio_weights", self.audio_weights, 4)
        dist("activity_weights", self.activity_weights, 4)
        for name in ("gps_rate", "call_prob", "audio_missing", "activity_missing", "ema_rate"):
            prob(name, getattr(self, name))
        for name in ("lock_rate", "inferences_per_hour", "gps_spread", "call_log_sd"):
            if getattr(self, name) < 0:
                raise ProfileError(f"{name} must be non-negative")
        lo, hi = self.episode_hours
        if not 1 <= lo <= hi <= 24:
            raise ProfileError("episode_hours must satisfy 1 <= lo <= hi <= 24")
        for m, p in self.mood_day_prob.items():
            Mood(m)
            prob(f"mood_day_prob[{m}]", p)
        for m, shift in self.mood_shift.items():
            for i in (*shift.app_scale, *shift.app_extra):
                if not 0 <= i < len(self.app_sets):
                    raise ProfileError(f"mood shift for {Mood(m).value} names app set {i}, which does not exist")
        # The base app distribution must be valid, and so must every mix of shifts.
        moods = list(self.mood_shift)
        for r in range(len(moods) + 1):
            for combo in itertools.combinations(moods, r):
                w = self.shifted(frozenset(combo))
                dist(f"app weights under {sorted(m.value for m in combo)}", w["app"])
                dist("audio weights under shift", w["audio"], 4)
                dist("activity weights under shift", w["activity"], 4)
                prob("shifted call probability", min(1.0, w["call"]))
                if w["lock"] < 0:
                    raise ProfileError("shifted lock rate is negative")

    def shifted(self, active: frozenset) -> dict:
        """Distributions in effect while the moods in *active* hold."""
        app = np.asarray(self.app_weights, dtype=float).copy()
        audio = np.asarray(self.audio_weights, dtype=float).copy()
        activity = np.asarray(self.activity_weights, dtype=float).copy()
        lock, call = self.lock_rate, self.call_prob
        for m in sorted(active, key=lambda m: m.value):
            s = self.mood_shift.get(m)
            if s is None:
                continue
            for i, f in s.app_scale.items():
                app[i] *= f
            for i, extra in s.app_extra.items():
                app[i] += extra
            audio *= s.audio_scale
            activity *= s.activity_scale
            lock *= s.lock_scale
            call *= s.call_scale
        return {"app": app, "audio": audio, "activity": activity, "lock": lock, "call": min(1.0, call)}


@dataclass
class SynthOutput:
    events: list
    ema: list
    truth: list  # (subject, hour_index, Mood)
    window: StudyWindow
    subjects: list

    @property
    def all_events(self) -> list:
        return canonical_order(self.events + self.ema)


@functools.lru_cache(maxsize=None)
def _ema_answers(target: tuple[bool, bool, bool]) -> tuple:
    """Every answer combination whose labels equal *target*.

    A proposal draws each topic uniformly from {absent} + its levels, and is
    accepted when its labels match; sampling uniformly from this table is
    the same distribution without the rejection loop.
    """
    topics = list(EmaTopic)
    options = [[None, *t.levels] for t in topics]
    accepted = []
    for combo in itertools.product(*options):
        ema = {t: v for t, v in zip(topics, combo) if v is not None}
        if ema and classify_mood(ema).as_tuple() == target:
            accepted.append(tuple(sorted(ema.items(), key=lambda kv: topics.index(kv[0]))))
    if not accepted:
        raise ProfileError(f"no EMA answer yields mood flags {target}")
    return tuple(accepted)


def sample_ema(target: MoodLabels, rng: np.random.Generator) -> dict:
    answers = _ema_answers(target.as_tuple())
    return dict(answers[rng.integers(len(answers))])


def schedule_moods(profile: SubjectProfile, days: int, rng: np.random.Generator) -> dict[int, frozenset]:
    """Hour index -> moods active in that hour.

    Each mood gets at most one episode per day, placed uniformly among the
    start hours that keep it inside the day.
    """
    active: dict[int, set] = {}
    lo, hi = profile.episode_hours
    for day in range(days):
        for mood in Mood:
            p = profile.mood_day_prob.get(mood, 0.0)
            if rng.random() >= p:
                continue
            length = int(rng.integers(lo, hi + 1))
            start = int(rng.integers(0, 24 - length + 1))
            for h in range(start, start + length):
                active.setdefault(day * 24 + h, set()).add(mood)
    return {h: frozenset(ms) for h, ms in active.items()}


def _simulate_subject(subject: int, profile: SubjectProfile, days: int, start: int, rng):
    events, ema, truth = [], [], []
    schedule = schedule_moods(profile, days, rng)
    cache: dict[frozenset, dict] = {}
    loc_w = np.asarray(profile.location_weights, dtype=float)
    loc_w = loc_w / loc_w.sum()

    def at(h):
        return start + h * 3600 + int(rng.integers(0, 3600))

    for h in range(days * 24):
        moods = schedule.get(h, frozenset())
        for m in sorted(moods, key=lambda m: m.value):
            truth.append((subject, h, m))
        if moods not in cache:
            cache[moods] = profile.shifted(moods)
        dist = cache[moods]

        app_w = dist["app"] / dist["app"].sum()
        chosen = profile.app_sets[rng.choice(len(app_w), p=app_w)]
        for task in chosen:
            for _ in range(int(rng.integers(1, 4))):
                events.append(AppTask(subject, at(h), task))

        if rng.random() < profile.gps_rate:
            lat, lon = profile.locations[rng.choice(len(loc_w), p=loc_w)]
            dlat, dlon = rng.normal(0.0, profile.gps_spread, size=2)
            events.append(GpsFix(
                subject, at(h),
                float(np.clip(lat + dlat, -90, 90)),
                float(np.clip(lon + dlon, -180, 180)),
            ))

        for kind, missing, weights in (
            (AudioInf, profile.audio_missing, dist["audio"]),
            (ActivityInf, profile.activity_missing, dist["activity"]),
        ):
            if rng.random() < missing:
                continue
            n = 1 + int(rng.poisson(max(profile.inferences_per_hour - 1, 0)))
            w = weights / weights.sum()
            for cls in rng.choice(4, size=n, p=w):
                events.append(kind(subject, at(h), int(cls)))

        for _ in range(int(rng.poisson(dist["lock"]))):
            events.append(LockEvent(subject, at(h)))

        if rng.random() < dist["call"]:
            minutes = float(np.round(rng.lognormal(profile.call_log_mean, profile.call_log_sd), 2))
            events.append(Call(subject, at(h), minutes))

        if rng.random() < profile.ema_rate:
            target = MoodLabels(Mood.HAPPY in moods, Mood.UPSET in moods, Mood.STRESSED in moods)
            t = at(h)
            for topic, value in sample_ema(target, rng).items():
                ema.append(EmaResponse(subject, t, topic, float(value)))
    return events, ema, truth


def generate(profiles, days: int, seed: int, start: int = DEFAULT_START) -> SynthOutput:
    """Simulate ``days`` whole days for each profile; subject ids are list positions.

    Each subject draws from its own generator derived from *seed*, so a
    subject's stream does not depend on the others.
    """
    profiles = list(profiles)
    if len(profiles) < 2:
        raise ProfileError("need at least 2 subject profiles")
    if days < 2:
        raise ProfileError("need at least 2 days")
    for p in profiles:
        p.validate()
    events, ema, truth = [], [], []
    for s, profile in enumerate(profiles):
        rng = np.random.default_rng(derive_seed(seed, s))
        ev, em, tr = _simulate_subject(s, profile, days, start, rng)
        events.extend(ev)
        ema.extend(em)
        truth.extend(tr)
    window = StudyWindow(start, start + days * 86400)
    return SynthOutput(canonical_order(events), canonical_order(ema), sorted(truth), window, list(range(len(profiles))))


# -- scenarios ----------------------------------------------------------------

TARGET_MOOD_SHARES = {Mood.HAPPY: 0.06, Mood.UPSET: 0.06, Mood.STRESSED: 0.10}


def day_prob_for_share(share: float, episode_hours=(3, 9)) -> float:
    """Per-day episode probability giving roughly *share* of hours in the mood."""
    lo, hi = episode_hours
    return float(min(1.0, share * 24 / ((lo + hi) / 2)))


def _target_mood_probs(episode_hours=(3, 9)) -> dict:
    return {m: day_prob_for_share(s, episode_hours) for m, s in TARGET_MOOD_SHARES.items()}


def paperlike_profiles(n_subjects: int = 19, seed: int = 0) -> list[SubjectProfile]:
    """Nineteen heterogeneous subjects sharing campus apps and places."""
    rng = np.random.default_rng(derive_seed(seed, 1_000_003))
    campus = (43.70, -72.29)
    homes = [(43.70 + 1.5 * (i % 4) + 1.0, -72.29 - 1.5 * (i // 4) - 1.0) for i in range(8)]
    common = [(), ("2",), ("2", "3"), ("3",), ("2", "5"), ("2", "3", "5"), ("7",)]
    profiles = []
    for s in range(n_subjects):
        own = [str(100 + 10 * s + k) for k in range(4)]
        personal = [(own[0],), ("2", own[0]), (own[1],), (own[0], own[2]), ("2", "3", own[1]), (own[3],)]
        mood_only = [(own[2], own[3])]
        sets = tuple(common + personal + mood_only)
        base = np.concatenate([
            [0.45, 0.15, 0.06, 0.03, 0.03, 0.02, 0.02],
            rng.dirichlet(np.ones(len(personal))) * rng.uniform(0.15, 0.3),
            [0.0],
        ])
        mood_idx = len(sets) - 1
        home = homes[int(rng.integers(len(homes)))]
        trip = homes[int(rng.integers(len(homes)))]
        profiles.append(SubjectProfile(
            app_sets=sets,
            app_weights=tuple(float(x) for x in base),
            locations=(campus, home, trip),
            location_weights=(0.5, 0.4, 0.1),
            gps_rate=0.2,
            gps_spread=0.05,
            lock_rate=float(rng.uniform(0.15, 0.45)),
            call_prob=float(rng.uniform(0.02, 0.07)),
            audio_weights=tuple(rng.dirichlet([30, 7, 5, 0.3])),
            activity_weights=tuple(rng.dirichlet([90, 2, 0.6, 1.5])),
            mood_day_prob=_target_mood_probs(),
            mood_shift={
                Mood.HAPPY: MoodShift(app_extra={mood_idx: 0.05}, lock_scale=1.3, audio_scale=(1, 1.6, 1, 1)),
                Mood.UPSET: MoodShift(app_extra={mood_idx: 0.05}, activity_scale=(1, 2.0, 2.0, 1)),
                Mood.STRESSED: MoodShift(app_extra={mood_idx: 0.05}, call_scale=1.5, app_scale={0: 0.7}),
            },
            ema_rate=0.1,
        ))
    return profiles


def disjoint_profiles(n_subjects: int = 5) -> list[SubjectProfile]:
    """Subjects whose app vocabularies never overlap and who always use an app.

    Each subject has a signature app set used in most hours, so a few
    training hours are enough to have seen it.
    """
    profiles = []
    for s in range(n_subjects):
        own = [str(1000 + 10 * s + k) for k in range(2)]
        profiles.append(SubjectProfile(
            app_sets=((own[0],), (own[0], own[1])),
            app_weights=(0.95, 0.05),
            locations=((40.0 + 2 * s, -70.0),),
            location_weights=(1.0,),
            gps_rate=0.5,
            mood_day_prob=_target_mood_probs(),
        ))
    return profiles


def moodshift_profiles(n_subjects: int = 5, discriminative_rate: float = 0.25) -> list[SubjectProfile]:
    """Subjects whose most identifying app use happens in mood hours.

    Each subject owns five discriminative app sets; one of them (20%) is
    used only, and then always, while the subject is in a mood. Outside
    moods the other four are used with probability ``discriminative_rate``
    and otherwise the subject uses apps shared by everyone. Every other
    behaviour is identical across subjects.
    """
    common = [(), ("2",), ("2", "3"), ("3",)]
    profiles = []
    for s in range(n_subjects):
        own = [str(500 + 10 * s + k) for k in range(5)]
        disc = [(own[0],), (own[1],), ("2", own[2]), (own[3],)]
        sets = tuple(common + disc + [(own[4],)])
        q = discriminative_rate
        base = [(1 - q) / len(common)] * len(common) + [q / len(disc)] * len(disc) + [0.0]
        mood_idx = len(sets) - 1
        all_to_mood = MoodShift(app_scale={i: 0.0 for i in range(mood_idx)}, app_extra={mood_idx: 1.0})
        profiles.append(SubjectProfile(
            app_sets=sets,
            app_weights=tuple(base),
            locations=((43.70, -72.29), (45.0, -71.0)),
            location_weights=(0.7, 0.3),
            mood_day_prob=_target_mood_probs(),
            mood_shift={m: all_to_mood for m in Mood},
            ema_rate=1.0,
        ))
    return profiles


def tiny_profiles() -> list[SubjectProfile]:
    return disjoint_profiles(2)


SCENARIOS = {
    "paperlike": (paperlike_profiles, 60),
    "disjoint": (disjoint_profiles, 3),
    "moodshift": (moodshift_profiles, 4),
    "tiny": (tiny_profiles, 2),
}


def scenario(name: str, days: int | None = None) -> tuple[list[SubjectProfile], int]:
    try:
        factory, default_days = SCENARIOS[name]
    except KeyError:
        raise ProfileError(f"unknown scenario {name!r}; valid: {', '.join(sorted(SCENARIOS))}") from None
    return factory(), days if days is not None else default_days


def truth_fraction_days(truth, subject: int, mood: Mood, days: int) -> float:
    """Fraction of days on which *subject* had at least one *mood* hour."""
    hit = {h // 24 for s, h, m in truth if s == subject and m == mood}
    return len(hit) / days if days else math.nan
