"""Schema-faithful synthetic benchmark files for loader tests."""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

BLEND_COUNTS = {
    "US": 310, "UK": 304, "Spain": 325, "Mexico": 334, "South_Korea": 366, "North_Korea": 290,
    "Indonesia": 334, "China": 335, "Algeria": 304, "Greece": 320, "Iran": 306, "Azerbaijan": 325,
    "West_Java": 286, "Assam": 358, "Northern_Nigeria": 249, "Ethiopia": 335,
}
BLEND_TOTAL = 5081

CLICK_COUNTS = {"Society": 309, "Tradition": 222, "History": 280, "Law": 219, "Politics": 84,
                "Economy": 59, "Geography": 131, "Pop culture": 41}
CLICK_TOTAL = 1345
CLICK_LANGUAGE_COUNTS = {"Textual": 40, "Grammar": 25, "Functional": 12}


def blend_rows(counts=BLEND_COUNTS, variants: int = 1, seed: int = 0) -> list[dict]:
    """``variants`` option sets per (country, question id), as in the combinatorial release."""
    rng = random.Random(seed)
    rows = []
    for country, n in counts.items():
        for q in range(n):
            for v in range(variants):
                opts = {L: f"{country} option {q}-{v}-{L}" for L in "ABCD"}
                rows.append({"MCQID": f"{country}-q{q}-v{v}", "ID": f"q{q}", "country": country,
                             "prompt": f"What is typical in {country.replace('_', ' ')}? ({q})",
                             "choices": json.dumps(opts), "answer_idx": rng.choice("ABCD")})
    return rows


def write_blend(path: Path, rows: list[dict]) -> Path:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open("w", encoding="utf-8", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["MCQID", "ID", "country", "prompt", "choices", "answer_idx"])
            w.writeheader()
            w.writerows(rows)
    elif path.suffix == ".jsonl":
        path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    else:
        path.write_text(json.dumps(rows, ensure_ascii=False), encoding="utf-8")
    return path


def click_rows(counts=CLICK_COUNTS, language_counts=CLICK_LANGUAGE_COUNTS, seed: int = 0) -> list[dict]:
    """Half the culture records carry an explicit category, the rest only an id to infer it from."""
    rng = random.Random(seed)
    rows = []
    for cat, n in {**counts, **language_counts}.items():
        slug = cat.lower().replace(" ", "_")
        for i in range(n):
            choices = [f"{cat} choice {i}-{j}" for j in range(4)]
            rec = {"id": f"KIIP_{slug}_{i}", "paragraph": "" if i % 3 else f"context {i}",
                   "question": f"{cat} question {i}?", "choices": choices,
                   "answer": rng.choice(choices) if i % 5 else rng.choice("ABCD")}
            if i % 2 == 0:
                rec["category"] = cat
            rows.append(rec)
    rng.shuffle(rows)
    return rows


def write_click(directory: Path, rows: list[dict], shards: int = 3) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in range(shards):
        part = rows[s::shards]
        (directory / f"part{s}.json").write_text(json.dumps(part, ensure_ascii=False), encoding="utf-8")
    return directory
