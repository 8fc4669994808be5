#!/usr/bin/env python3
"""Generate data/promise_nfr.csv: a synthetic requirements export.

Row counts per class follow the canonical public distribution of the 625-row
NFR benchmark (255 functional rows, 370 across eleven non-functional
subclasses), so count-based checks line up with published numbers. The texts
themselves are generated, not the original corpus, which is not bundled here.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "data" / "promise_nfr.csv"

CLASS_COUNTS = {
    "F": 255,
    "A": 21,
    "FT": 10,
    "L": 13,
    "LF": 38,
    "MN": 17,
    "O": 62,
    "PE": 54,
    "SC": 21,
    "SE": 66,
    "US": 67,
    "PO": 1,
}

ACTORS = [
    "the user", "an administrator", "the dispatcher", "a registered customer",
    "the auditor", "the product owner", "a field technician", "the operator",
    "the program manager", "a clinical staff member",
]

ENVIRONMENTS = [
    "hospital network", "warehouse floor", "call center", "regional office",
    "vehicle fleet network", "retail kiosk network",
]

OBJECTS = [
    "meeting records", "lead estimates", "audit entries", "shipment manifests",
    "recycled part listings", "conference rooms", "nursing schedules",
    "dispute cases", "inventory snapshots", "collision notifications",
    "user profiles", "payment disputes", "route assignments", "status digests",
]

TEMPLATES = {
    "F": [
        "The system shall allow {actor} to search {obj} by date and owner.",
        "The system shall let {actor} create and cancel {obj}.",
        "The product shall notify {actor} when new {obj} are assigned.",
        "The system shall display {obj} matching the criteria supplied by {actor}.",
        "The system shall record every change {actor} makes to {obj}.",
        "The product shall allow {actor} to export {obj} to a spreadsheet.",
        "The system shall compute weekly summaries of {obj} for {actor}.",
        "The system shall let {actor} merge duplicate {obj} into one entry.",
    ],
    "A": [
        "The system shall be available to {actor} {pct} percent of the time during business hours.",
        "The product shall achieve {pct} percent uptime measured monthly.",
        "Scheduled maintenance shall not make the system unavailable for more than {n} hours per month.",
        "The website shall be operational for {actor} 24 hours a day, 7 days a week.",
    ],
    "FT": [
        "The system shall continue serving cached {obj} when the primary database fails.",
        "The product shall recover from a component crash without losing {obj}.",
        "A failure in one node shall not interrupt {actor} for more than {n} seconds.",
    ],
    "L": [
        "The system shall retain {obj} for {n} years as required by the records statute.",
        "The product shall comply with the data protection regulation applicable to {obj}.",
        "All handling of {obj} shall satisfy the audit requirements of the licensing body.",
    ],
    "LF": [
        "The interface shall use the corporate color palette on all screens showing {obj}.",
        "The product shall present {obj} in a layout consistent with the style guide.",
        "Screens used by {actor} shall appear uncluttered, showing at most {n} panels.",
        "The look of the dashboard shall be appealing to {actor} on first use.",
    ],
    "MN": [
        "A developer shall be able to add a new category of {obj} within {n} days.",
        "The system shall isolate reporting modules so updates to {obj} handling require no downtime.",
        "Defect fixes touching {obj} shall be deployable within one maintenance window.",
    ],
    "O": [
        "The system shall operate on the standard desktop used by {actor} in the {env}.",
        "The product shall interface with the existing scheduling server that stores {obj}.",
        "The system shall run inside the {env} without dedicated hardware.",
        "The product shall import {obj} nightly from the legacy dispatch system.",
        "The system shall coexist with the {env} systems already installed on site.",
    ],
    "PE": [
        "The system shall return search results over {obj} within {n} seconds.",
        "The product shall process {big} concurrent updates to {obj} per minute.",
        "Response time for {actor} shall not exceed {n} seconds at peak load.",
        "The system shall refresh the dashboard of {obj} in under {n} seconds.",
    ],
    "SC": [
        "The system shall support growth to {big} simultaneous sessions without redesign.",
        "The product shall scale to hold {big} {obj} while meeting response targets.",
        "Capacity shall expand to {big} users in the first release year.",
    ],
    "SE": [
        "The system shall encrypt {obj} in transit and at rest.",
        "Only authenticated users shall be permitted to view {obj}.",
        "The product shall lock an account after {n} failed login attempts by {actor}.",
        "Access to {obj} shall be restricted by role-based authorization.",
        "The system shall log every security-relevant action taken on {obj}.",
    ],
    "US": [
        "{actor_cap} shall be able to complete a booking of {obj} within {n} minutes of first use.",
        "The system shall be learnable by {actor} after {n} hours of training.",
        "The product shall use symbols and words naturally understandable by {actor}.",
        "Error messages about {obj} shall tell {actor} how to recover.",
    ],
    "PO": [
        "The product shall run unmodified on the supported desktop and tablet platforms.",
    ],
}


def main() -> None:
    rng = random.Random(20240625)
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    for label, count in CLASS_COUNTS.items():
        templates = TEMPLATES[label]
        made = 0
        attempt = 0
        while made < count:
            template = templates[attempt % len(templates)]
            actor = rng.choice(ACTORS)
            text = template.format(
                actor=actor,
                actor_cap=actor.capitalize(),
                obj=rng.choice(OBJECTS),
                env=rng.choice(ENVIRONMENTS),
                n=rng.choice([2, 3, 5, 10, 15, 30, 60, 90]),
                big=rng.choice([1000, 2000, 5000, 10000, 25000]),
                pct=rng.choice([98, 99]),
            )
            if attempt > 100 * count:
                raise RuntimeError(f"template space too small for class {label}")
            attempt += 1
            if text in seen:
                continue
            seen.add(text)
            rows.append((text, label))
            made += 1
    rng.shuffle(rows)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["text", "label"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {OUT}")


if __name__ == "__main__":
    main()
