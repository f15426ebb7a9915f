#!/usr/bin/env python3
"""Regenerate the packaged starter pool (src/intentportal/data/global_pool.jsonl).

The shipped pool stands in for a shared usage database: two dozen
fictional users whose traffic is popularity-sloped to match the default
collection order, with contexts shaped like the habits the encoder keys
on (the chosen function's app tends to appear in the recent trace).
Queries repeat across records on purpose; people retype the same things.

Output is a pure function of SEED and ANCHOR, so rerunning the script
produces a byte-identical file.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timedelta, timezone
from random import Random

from intentportal.defaults import DEFAULT_FUNCTIONS
from intentportal.memory import largest_remainder

SEED = 20251103
ANCHOR = datetime(2025, 11, 3, tzinfo=timezone.utc)
TOTAL = 800
FLOOR = 12  # every function keeps a usable base even at the tail of the slope
USERS = [f"p{i:02d}" for i in range(1, 25)]
BACKGROUND_APPS = ("launcher", "camera", "gallery", "messenger", "phone")

# per-function phrase pool and habitual hour of day
PROFILES: dict[str, tuple[int, tuple[str, ...]]] = {
    "browser-search": (20, (
        "capital of mongolia", "python list comprehension", "flu symptoms how long",
        "best pizza dough recipe", "train strike tomorrow", "usb c vs thunderbolt",
        "how tall is denali", "oscar winners 2025")),
    "maps-search": (12, (
        "ramen near me", "cheap parking city center", "atm open sunday",
        "dog park within 5 km", "hardware store nearby", "vegan brunch downtown")),
    "maps-navigate": (8, (
        "office via the bridge", "dentist on 14 oak avenue", "home avoiding tolls",
        "terminal 1 departures", "riverside climbing gym", "sam's new flat")),
    "notes-record": (14, (
        "bike lock 0415", "plants watered monday", "mentor call takeaways",
        "storage unit row c 12", "blood pressure 118 76", "left charger at office")),
    "mail-compose": (10, (
        "offer letter questions", "re invoice 2209 correction", "minutes from the retro",
        "out of office next week", "draft for the landlord", "photos from the offsite")),
    "calendar-create": (9, (
        "physio wednesday 8am", "rent due first of month", "1on1 with mara thursday",
        "car inspection friday 14:30", "yoga tuesdays 19:00", "call grandma sunday 5pm")),
    "music-search": (17, (
        "rainy day jazz", "running mix 170 bpm", "norah jones album",
        "focus piano no vocals", "80s road trip", "new releases friday")),
    "video-search": (21, (
        "bike brake adjustment tutorial", "standing desk review", "pasta from scratch",
        "interval training 15 min", "northern lights timelapse", "how to patch drywall")),
    "shopping-search": (20, (
        "wool socks size 42", "hdmi 2.1 cable braided", "espresso tamper 51mm",
        "rain cover backpack 30l", "replacement watch strap 20mm", "desk organizer bamboo")),
    "translate-translate": (13, (
        "where is the nearest pharmacy", "thank you for the lovely evening",
        "i am allergic to peanuts", "how much does this cost",
        "the bill please", "does this train stop in milan")),
    "calculator-calculate": (11, (
        "2340*0.19", "(1450+89.5+42)/2", "17500/235",
        "0.85^12", "sqrt(2)*100", "365*24*60")),
    "appstore-search": (19, (
        "podcast player offline", "pdf scanner free", "habit tracker widget",
        "offline maps hiking", "white noise baby", "expense split app")),
    "photos-search": (16, (
        "screenshots from tuesday", "beach 2024 album", "receipts folder",
        "dana birthday cake", "whiteboard from kickoff", "passport scan")),
    "files-search": (15, (
        "rental contract signed", "cv 2025 pdf", "warranty washing machine",
        "slides q3 review", "insurance claim form", "boarding pass lisbon")),
    "weather-search": (7, (
        "rain this afternoon", "weekend forecast mountains", "uv index today",
        "wind tomorrow morning", "snow next week", "sunrise time saturday")),
    "clock-alarm": (22, (
        "6:10", "7:40 weekdays", "13:50", "5:15", "21:45", "8:30 sunday")),
    "contacts-search": (11, (
        "mara from physio", "landlord number", "dr alvarez",
        "courier hotline", "sam work mobile", "building manager")),
    "reminders-record": (18, (
        "take out recycling tonight", "renew passport next month", "water plants wednesday",
        "call bank before 4", "pick up parcel locker", "defrost freezer saturday")),
    "settings-search": (19, (
        "battery saver schedule", "bluetooth codec", "font size",
        "hotspot password", "do not disturb weekends", "screen timeout")),
    "social-search": (21, (
        "trail runners local group", "sourdough bakers", "camera gear secondhand",
        "climbing partners tuesday", "neighborhood garage sale", "birdwatching spring meetup")),
}


def main() -> None:
    rng = Random(SEED)
    quotas = largest_remainder(
        [1.0 / (i + 1) for i in range(len(DEFAULT_FUNCTIONS))], TOTAL
    )
    rows: list[dict] = []
    for fn, quota in zip(DEFAULT_FUNCTIONS, quotas):
        hour, phrases = PROFILES[fn.id]
        owners = rng.sample(USERS, rng.randint(5, 9))
        owner_weights = [1.0 / (j + 1) for j in range(len(owners))]
        for _ in range(max(FLOOR, quota)):
            ts = (ANCHOR - timedelta(days=rng.uniform(1.0, 61.0))).replace(
                hour=min(23, max(0, round(rng.gauss(hour, 2.5)))),
                minute=rng.randrange(60),
                second=rng.randrange(60),
                microsecond=0,
            )
            launches = []
            if rng.random() < 0.72:
                launches.append((fn.app, ts - timedelta(seconds=rng.uniform(15, 540))))
            for app in rng.sample(BACKGROUND_APPS, rng.randint(0, 3)):
                launches.append((app, ts - timedelta(seconds=rng.uniform(60, 1800))))
            launches.sort(key=lambda pair: pair[1])
            rows.append(
                {
                    "user": rng.choices(owners, weights=owner_weights)[0],
                    "query": rng.choice(phrases),
                    "ts": ts.isoformat(),
                    "chosen": fn.id,
                    "label": {fn.id: 1.0},
                    "origin": "live",
                    "is_chat": False,
                    "context": {
                        "now": ts.isoformat(),
                        "launches": [
                            {"app": app, "ts": when.isoformat()}
                            for app, when in launches
                        ],
                    },
                }
            )

    rows.sort(key=lambda r: (r["ts"], r["user"], r["chosen"]))
    out = os.path.join(
        os.path.dirname(__file__), "..", "src", "intentportal", "data",
        "global_pool.jsonl",
    )
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for i, row in enumerate(rows):
            fh.write(json.dumps({"id": i, **row}, ensure_ascii=False) + "\n")
    print(f"wrote {len(rows)} records to {os.path.normpath(out)}")


if __name__ == "__main__":
    main()
