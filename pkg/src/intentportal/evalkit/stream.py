"""Seeded synthetic usage stream: the stand-in for a live user corpus.

Each simulated user gets a personal slice of the function universe with
a power-law usage profile.  Contexts are habit-shaped per function: when
someone is about to ask for navigation they have usually been in and out
of the maps app over the last few minutes, at a familiar hour, with a
couple of their other usual apps in the trace.  Query texts come from
small per-function phrase pools (people retype the same things), with
occasional suffix noise.  The one calibrated quantity is the chance
that the target function's app was launched within the last minute;
habitual launches of that app sit further back so they never touch it.

Everything is drawn from a single seeded generator in a fixed order, so
a stream is a pure function of its config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from random import Random
from typing import Sequence

from ..encoder import AppLaunch, ContextSnapshot
from ..memory import (
    FunctionDescriptor,
    UsageRecord,
    context_from_dict,
    largest_remainder,
)

# (id, app, action, description, phrases)
# every app hosts two functions, so the recent-app trace narrows the
# intent to a pair and the text has to settle which member
FUNCTION_UNIVERSE: tuple[tuple[str, str, str, str, tuple[str, ...]], ...] = (
    ("maps-search", "maps", "search", "find a place",
     ("sushi near me", "gas station open now", "parking garage downtown",
      "coffee shop with wifi", "pharmacy 24 hour", "thai food delivery")),
    ("maps-navigate", "maps", "navigate", "start navigation",
     ("central station", "airport terminal 2", "12 elm street",
      "parking garage entrance 5th", "gas station on route 9", "dana's place")),
    ("notes-record", "notes", "record", "jot a note",
     ("locker code 4417", "gift ideas for dana", "wifi password guest123",
      "meeting parking level b2", "book club page 140", "garage door 8841")),
    ("notes-search", "notes", "search", "find a note",
     ("locker code", "wifi password", "packing list",
      "recipe banana bread", "meeting notes tuesday", "serial number laptop")),
    ("mail-compose", "mail", "compose", "write an email",
     ("quarterly report attached", "following up on the invoice",
      "agenda for monday", "thanks for the quick turnaround",
      "resume and cover letter attached", "minutes from standup")),
    ("mail-search", "mail", "search", "find an email",
     ("invoice 2209", "flight confirmation", "quarterly report",
      "password reset", "receipts march", "shipping label")),
    ("calendar-create", "calendar", "create", "schedule an event",
     ("dentist tuesday 3pm", "team sync 9am", "dinner with sam saturday",
      "gym class thursday 7", "flight check in 8pm", "standup friday 10")),
    ("calendar-search", "calendar", "search", "find an event",
     ("dentist appointment", "next team sync", "payday",
      "sam birthday", "school holidays", "car service due")),
    ("music-search", "music", "search", "find a song",
     ("lofi study mix", "jazz for rainy days", "workout playlist",
      "acoustic covers", "deep focus", "summer road trip hits")),
    ("music-play", "music", "play", "play something",
     ("piano sonata no 14", "blue in green", "workout playlist 2",
      "lofi beats to relax", "morning raga", "take five")),
    ("video-search", "video", "search", "find a video",
     ("how to tile a bathroom", "funny cat compilation",
      "mechanical keyboard review", "sourdough starter guide",
      "beginner yoga 20 min", "drone footage iceland")),
    ("video-play", "video", "play", "resume watching",
     ("lecture 12 linear algebra", "episode 4 season 2",
      "keyboard review part 2", "yoga flow evening",
      "documentary deep sea", "concert live 2019")),
    ("shopping-search", "shopping", "search", "find a product",
     ("usb c cable 2m", "running shoes size 10", "desk lamp warm light",
      "laptop stand aluminum", "water filter cartridge", "noise cancelling earbuds")),
    ("shopping-track", "shopping", "track", "track an order",
     ("order 118 2654 3307", "usb c cable order", "package from friday",
      "running shoes delivery", "return label status", "order 771 0042")),
    ("files-search", "files", "search", "find a file",
     ("tax return pdf", "lease agreement", "presentation draft",
      "insurance policy scan", "boarding pass", "invoice template")),
    ("files-open", "files", "open", "open a document",
     ("lease agreement final v3", "presentation draft 7", "budget xlsx",
      "notes from kickoff", "tax return 2025", "manual washing machine")),
    ("clock-alarm", "clock", "alarm", "set an alarm",
     ("6:30", "7:15", "14:10", "5:45", "8:00 weekdays", "21:30")),
    ("clock-timer", "clock", "timer", "start a timer",
     ("10 minutes", "naptime 30", "45 min laundry",
      "3 minutes tea", "90 minutes", "25 minute focus")),
    ("banking-transfer", "banking", "transfer", "send money",
     ("rent 1450", "split dinner 36", "phone bill 42",
      "dana 120", "insurance 89.50", "savings 300")),
    ("banking-search", "banking", "search", "find a transaction",
     ("recent transactions", "rent payment march", "refund from store",
      "standing orders", "dana transfer", "statement q1")),
    ("social-search", "social", "search", "find a post or account",
     ("hiking club", "marathon training tips", "pasta recipes account",
      "local flea market", "bouldering beginners", "street photography")),
    ("social-post", "social", "post", "share a post",
     ("sunset from the pier tonight", "race day done 10k pb",
      "new pasta recipe turned out great", "trail views from saturday",
      "thrift haul from sunday", "first outdoor climb")),
    ("calculator-calculate", "calculator", "calculate", "evaluate an expression",
     ("1299*0.85", "4500/12", "18 percent of 230",
      "(84+67+91)/3", "240*1.21", "365*24*60")),
    ("calculator-convert", "calculator", "convert", "convert units",
     ("300 usd to eur", "5 miles in km", "72 f to c",
      "2.5 cups in ml", "80 kg to lbs", "100 km in miles")),
)

# side apps never overlap function apps, so the within-a-minute
# calibration stays driven by explicit target insertion alone
BACKGROUND_APPS = ("launcher", "camera", "gallery", "messenger", "phone", "gamehub")

# habitual launches live in [RECENT_FLOOR, window); only the calibrated
# insertion may land inside the last minute
RECENT_FLOOR = 66.0

NOISE_SUFFIXES = (" today", " now", " again", " 2")


@dataclass
class StreamConfig:
    seed: int = 42
    n_users: int = 4
    n_days: int = 7
    functions_per_user: int = 20
    queries_per_day: int = 30
    target_in_context_rate: float = 0.3362
    zipf_exponent: float = 1.0
    phrase_noise: float = 0.07
    unusual_context_rate: float = 0.2
    pool_users: int = 3
    pool_queries_per_function: int = 6
    start_day: str = "2026-03-02"  # a Monday


@dataclass(frozen=True)
class TrialInput:
    user_id: str
    day: int
    timestamp: datetime
    query: str
    context: ContextSnapshot
    truth: str


@dataclass
class SyntheticStream:
    config: StreamConfig
    collections: dict[str, list[FunctionDescriptor]]
    trials: list[TrialInput]
    pool: list[UsageRecord]
    truth_script: dict[str, str] = field(default_factory=dict)

    @property
    def function_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for fns in self.collections.values():
            for fn in fns:
                seen.setdefault(fn.id, None)
        return list(seen.keys())


def _descriptor(row: tuple) -> FunctionDescriptor:
    fid, app, action, description, _ = row
    return FunctionDescriptor(fid, app, action, description=description)


# how often a user falls back to their 1st/2nd/... favourite wording
PHRASE_PREFERENCE = (0.55, 0.17, 0.10, 0.07, 0.06, 0.05)


@dataclass
class _FnHabit:
    stack: tuple[float, ...]          # ages of habitual own-app launches
    trace: tuple[tuple[str, float], ...]   # tag-along app launches (apps repeat)
    hour: int
    phrases: tuple[str, ...]          # wording preference, favourite first


@dataclass
class _UserProfile:
    user_id: str
    functions: list[tuple]            # universe rows, popularity order
    weights: list[float]              # zipf over that order
    habits: dict[str, _FnHabit]       # keyed by function id, all of universe
    background: tuple[str, float]     # one old ambient app
    hours: list[int]


def _make_profile(
    rng: Random, user_id: str, cfg: StreamConfig, stack_n: int = 5
) -> _UserProfile:
    functions = rng.sample(list(FUNCTION_UNIVERSE), cfg.functions_per_user)
    weights = [1.0 / (r + 1) ** cfg.zipf_exponent for r in range(len(functions))]
    # one habitual hour per part of the day, so habits stay far apart
    hours = [rng.randrange(8, 11), rng.randrange(13, 16), rng.randrange(19, 22)]
    # a user's ambient apps tag along regardless of what they are doing
    all_apps = list(dict.fromkeys(r[1] for r in FUNCTION_UNIVERSE))
    ambient = rng.sample(all_apps, 5)
    habits: dict[str, _FnHabit] = {}
    hour_by_app: dict[str, int] = {}
    trace_mates: dict[str, tuple[str, ...]] = {}
    # habits exist for the whole universe so pool users can emit any function
    for row in FUNCTION_UNIVERSE:
        fid, app = row[0], row[1]
        stack = tuple(
            sorted(rng.uniform(RECENT_FLOOR, 200.0) for _ in range(stack_n))
        )
        # the two intents sharing an app keep separate company: disjoint
        # tag-along apps, a few launches each, so their contexts only
        # overlap on the shared app itself
        used = trace_mates.get(app, ())
        mates = rng.sample([a for a in ambient if a != app and a not in used], 2)
        trace_mates[app] = used + tuple(mates)
        trace = tuple(
            (other, rng.uniform(90.0, 200.0))
            for other in mates
            for _ in range(3)
        ) + ((rng.choice(BACKGROUND_APPS), rng.uniform(90.0, 260.0)),)
        # the two intents sharing an app live at different hours of day
        taken = hour_by_app.get(app)
        hour = rng.choice([h for h in hours if h != taken])
        hour_by_app.setdefault(app, hour)
        habits[fid] = _FnHabit(
            stack=stack,
            trace=trace,
            hour=hour,
            phrases=tuple(rng.sample(row[4], len(row[4]))),
        )
    background = (rng.choice(BACKGROUND_APPS), rng.uniform(300.0, 500.0))
    return _UserProfile(user_id, functions, weights, habits, background, hours)


def _context_for(
    rng: Random,
    profile: _UserProfile,
    now: datetime,
    row: tuple,
    cfg: StreamConfig,
    unusual: bool,
) -> ContextSnapshot:
    fid, target_app = row[0], row[1]
    habit = profile.habits[fid]
    launches: list[AppLaunch] = []
    if unusual:
        # out of routine: no habitual trace, just stray recent launches
        stray = [r[1] for r in FUNCTION_UNIVERSE if r[1] != target_app]
        for app in rng.sample(stray, rng.randrange(2, 4)):
            launches.append(
                AppLaunch(app, now - timedelta(seconds=rng.uniform(80.0, 400.0)))
            )
    else:
        for age in habit.stack:
            if rng.random() < 0.96:
                jitter = rng.uniform(-3.0, 3.0)
                launches.append(
                    AppLaunch(target_app, now - timedelta(seconds=age + jitter))
                )
        for app, age in habit.trace:
            if rng.random() < 0.95:
                jitter = rng.uniform(-8.0, 8.0)
                launches.append(
                    AppLaunch(app, now - timedelta(seconds=age + jitter))
                )
        bg_app, bg_age = profile.background
        if rng.random() < 0.8:
            launches.append(
                AppLaunch(
                    bg_app, now - timedelta(seconds=bg_age + rng.uniform(-20, 20))
                )
            )
    if rng.random() < cfg.target_in_context_rate:
        launches.append(
            AppLaunch(target_app, now - timedelta(seconds=rng.uniform(5.0, 55.0)))
        )
    if rng.random() < 0.25:
        distractor = rng.choice(profile.functions)[1]
        launches.append(
            AppLaunch(distractor, now - timedelta(seconds=rng.uniform(70.0, 500.0)))
        )
    launches.sort(key=lambda l: l.timestamp)
    return ContextSnapshot(now=now, launches=tuple(launches))


def _moment_for(
    rng: Random, profile: _UserProfile, row: tuple, day_start: datetime
) -> datetime:
    hour = profile.habits[row[0]].hour
    if rng.random() < 0.1:
        hour = min(22, max(8, hour + rng.choice((-1, 1))))
    return day_start + timedelta(
        hours=hour, minutes=rng.randrange(60), seconds=rng.randrange(60)
    )


def _phrase(
    rng: Random, profile: _UserProfile, fid: str, cfg: StreamConfig, unusual: bool
) -> str:
    # people mostly reuse a favourite wording and occasionally reach for
    # a rarer one; out of routine the habitual wording slips with them
    phrases = profile.habits[fid].phrases
    if unusual:
        text = rng.choice(phrases[1:])
    else:
        text = rng.choices(phrases, weights=PHRASE_PREFERENCE[: len(phrases)])[0]
    if rng.random() < cfg.phrase_noise:
        text += rng.choice(NOISE_SUFFIXES)
    return text


def _day_picks(rng: Random, profile: _UserProfile, cfg: StreamConfig) -> list[tuple]:
    # steady habit mix day to day, with the slots for rare functions
    # drifting so the whole tail gets exercised over a week
    jittered = [w * rng.uniform(0.7, 1.3) for w in profile.weights]
    counts = largest_remainder(jittered, cfg.queries_per_day)
    picks = [
        row for row, n in zip(profile.functions, counts) for _ in range(n)
    ]
    rng.shuffle(picks)
    return picks


def _build_pool(rng: Random, cfg: StreamConfig, start: datetime) -> list[UsageRecord]:
    # pool donors are lighter app users: two habitual launches, not five
    profiles = [
        _make_profile(rng, f"pool-p{i}", cfg, stack_n=2)
        for i in range(cfg.pool_users)
    ]
    records: list[UsageRecord] = []
    pool_start = start - timedelta(days=14)
    for row in FUNCTION_UNIVERSE:
        fid = row[0]
        for j in range(cfg.pool_queries_per_function):
            profile = profiles[j % len(profiles)]
            day = pool_start + timedelta(days=rng.randrange(12))
            now = _moment_for(rng, profile, row, day)
            unusual = rng.random() < cfg.unusual_context_rate
            records.append(
                UsageRecord(
                    user_id=profile.user_id,
                    query=_phrase(rng, profile, fid, cfg, unusual),
                    context=_context_for(rng, profile, now, row, cfg, unusual),
                    label={fid: 1.0},
                    chosen=fid,
                    timestamp=now,
                    origin="live",
                    is_chat=False,
                )
            )
    records.sort(key=lambda r: (r.timestamp, r.user_id, r.query))
    return records


def generate_stream(cfg: StreamConfig | None = None) -> SyntheticStream:
    cfg = cfg or StreamConfig()
    rng = Random(cfg.seed)
    start = datetime.fromisoformat(cfg.start_day).replace(tzinfo=timezone.utc)

    pool = _build_pool(rng, cfg, start)
    profiles = [
        _make_profile(rng, f"u{i + 1}", cfg) for i in range(cfg.n_users)
    ]
    collections = {
        p.user_id: [_descriptor(row) for row in p.functions] for p in profiles
    }

    trials: list[TrialInput] = []
    script: dict[str, str] = {}
    for day in range(cfg.n_days):
        day_start = start + timedelta(days=day)
        for profile in profiles:
            for row in _day_picks(rng, profile, cfg):
                fid = row[0]
                now = _moment_for(rng, profile, row, day_start)
                unusual = rng.random() < cfg.unusual_context_rate
                query = _phrase(rng, profile, fid, cfg, unusual)
                script[query] = fid
                trials.append(
                    TrialInput(
                        user_id=profile.user_id,
                        day=day,
                        timestamp=now,
                        query=query,
                        context=_context_for(rng, profile, now, row, cfg, unusual),
                        truth=fid,
                    )
                )
    trials.sort(key=lambda t: (t.day, t.timestamp, t.user_id))
    return SyntheticStream(
        config=cfg,
        collections=collections,
        trials=trials,
        pool=pool,
        truth_script=script,
    )


def write_stream(stream: SyntheticStream, path: str) -> None:
    """Trial inputs as JSONL, one object per trial."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in stream.trials:
            fh.write(
                json.dumps(
                    {
                        "user": t.user_id,
                        "day": t.day,
                        "ts": t.timestamp.isoformat(),
                        "query": t.query,
                        "truth": t.truth,
                        "context": {
                            "now": t.context.now.isoformat(),
                            "launches": [
                                {"app": l.app, "ts": l.timestamp.isoformat()}
                                for l in t.context.launches
                            ],
                        },
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_trial_inputs(path: str) -> list[TrialInput]:
    out: list[TrialInput] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                TrialInput(
                    user_id=d["user"],
                    day=d["day"],
                    timestamp=datetime.fromisoformat(d["ts"]),
                    query=d["query"],
                    context=context_from_dict(d["context"]),
                    truth=d["truth"],
                )
            )
    return out
