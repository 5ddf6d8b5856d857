"""Benchmark loading, answer extraction, and aggregate reporting.

Supported input layouts:

BLEnD multiple-choice file, as JSON (list), JSON Lines, or CSV with columns
``MCQID, ID, country, prompt, choices, answer_idx``. ``choices`` is an
object (or a JSON string of one) mapping letters to option text, ``ID`` is
the underlying question id shared by all country-specific option sets.

CLIcK file(s), as JSON (list), JSON Lines, or a directory of such files.
Each record has ``id``, ``question``, ``choices`` (list of option strings),
``answer`` (the correct option text, or its letter), optional ``paragraph``
and an optional ``category``; when ``category`` is missing it is inferred
from the ``id`` tokens. Only the culture categories are kept.
"""

from __future__ import annotations

import csv
import io
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any, Iterable, Mapping, Sequence

from .errors import DatasetError
from .languages import LANGUAGE_POOL

LETTERS = "ABCDE"

_ANSWER_RE = re.compile(r"answer:\s?([a-e])(?![a-z])", re.IGNORECASE)

# Editorial defaults: only su=low, fa=mid, es=high are anchored; the rest is
# a judgement call and can be overridden in the config file.
DEFAULT_TIERS: dict[str, str] = {
    "am": "low", "su": "low", "ha": "low", "as": "low", "az": "low",
    "id": "mid", "el": "mid", "fa": "mid", "ko": "mid",
    "en": "high", "es": "high", "zh": "high", "ar": "high",
}
TIER_ORDER = ("low", "mid", "high")

BLEND_COUNTRY_LANG: dict[str, str] = {
    "us": "en", "united states": "en", "uk": "en", "united kingdom": "en",
    "spain": "es", "mexico": "es",
    "south korea": "ko", "north korea": "ko",
    "indonesia": "id", "china": "zh", "algeria": "ar", "greece": "el", "iran": "fa",
    "azerbaijan": "az", "west java": "su", "assam": "as", "northern nigeria": "ha",
    "ethiopia": "am",
}

CLICK_CULTURE_CATEGORIES = ("Society", "Tradition", "History", "Law", "Politics", "Economy",
                            "Geography", "Pop culture")
CLICK_LANGUAGE_CATEGORIES = ("Textual", "Grammar", "Functional")
_CLICK_KEYS = {re.sub(r"[^a-z]", "", c.lower()): c for c in CLICK_CULTURE_CATEGORIES}
_CLICK_LANG_KEYS = {c.lower() for c in CLICK_LANGUAGE_CATEGORIES}


@dataclass(frozen=True)
class McqInstance:
    uid: str
    dataset: str
    question: str
    options: dict[str, str]
    gold: str
    source_lang: str
    group: str
    tier: str | None = None

    def __post_init__(self) -> None:
        if not self.dataset:
            raise DatasetError(f"{self.uid}: empty dataset name")
        if not 2 <= len(self.options) <= 5 or any(k not in LETTERS for k in self.options):
            raise DatasetError(f"{self.uid}: options must be 2-5 letters from A-E")
        if self.gold not in self.options:
            raise DatasetError(f"{self.uid}: gold {self.gold!r} is not an option")

    def to_json(self) -> dict:
        return {"uid": self.uid, "dataset": self.dataset, "options": dict(self.options), "gold": self.gold,
                "source_lang": self.source_lang, "group": self.group, "tier": self.tier}


def extract_answer(raw: str) -> str | None:
    """Scan lines from the end for ``Answer: X``; returns the upper-case letter or None."""
    for line in reversed(raw.splitlines()):
        m = _ANSWER_RE.search(line)
        if m:
            return m.group(1).upper()
    return None


# -- loading ---------------------------------------------------------------

def _read_records(path: Path) -> list[dict]:
    if path.is_dir():
        out: list[dict] = []
        for p in sorted(path.iterdir()):
            if p.suffix.lower() in (".json", ".jsonl", ".csv"):
                out.extend(_read_records(p))
        return out
    text = path.read_text(encoding="utf-8-sig")
    if not text.strip():
        return []
    if path.suffix.lower() == ".csv":
        return list(csv.DictReader(io.StringIO(text)))
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
    elif stripped.startswith("{") and path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = [json.loads(line) for line in text.splitlines() if line.strip()]
        else:
            data = data.get("data", [data]) if isinstance(data, dict) else data
    else:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not isinstance(data, list) or not all(isinstance(r, dict) for r in data):
        raise DatasetError(f"{path}: expected a list of JSON objects")
    return data


def _blend_lang(country: str, uid: str) -> str:
    key = re.sub(r"[_\s]+", " ", country.strip().lower())
    try:
        return BLEND_COUNTRY_LANG[key]
    except KeyError:
        raise DatasetError(f"{uid}: unknown BLEnD country {country!r}") from None


def _field(rec: Mapping[str, Any], name: str, uid: str) -> Any:
    v = rec.get(name)
    if v is None or (isinstance(v, str) and not v.strip()):
        raise DatasetError(f"{uid}: missing field {name!r}")
    return v


def load_blend(path: str | Path, tiers: Mapping[str, str] | None = None,
               one_per_question: bool = False, seed: int = 0) -> list[McqInstance]:
    """Load BLEnD MCQs.

    ``one_per_question`` keeps a single seeded-random option set per
    (country, question id), for use on the full combinatorial file.
    """
    tiers = DEFAULT_TIERS if tiers is None else tiers
    records = _read_records(Path(path))
    out = []
    for n, rec in enumerate(records, start=1):
        uid = str(rec.get("MCQID") or f"blend-record-{n}")
        choices = _field(rec, "choices", uid)
        if isinstance(choices, str):
            try:
                choices = json.loads(choices)
            except json.JSONDecodeError:
                raise DatasetError(f"{uid}: 'choices' is not valid JSON") from None
        if not isinstance(choices, dict):
            raise DatasetError(f"{uid}: 'choices' must map letters to text")
        options = {str(k).strip().upper(): str(v) for k, v in choices.items()}
        gold = str(_field(rec, "answer_idx", uid)).strip().upper()
        country = str(_field(rec, "country", uid))
        lang = _blend_lang(country, uid)
        out.append(((country.strip().lower(), str(rec.get("ID") or uid)), McqInstance(
            uid=uid, dataset="blend", question=str(_field(rec, "prompt", uid)), options=options,
            gold=gold, source_lang=lang, group=country.strip(), tier=tiers.get(lang))))
    if one_per_question:
        groups: dict[tuple[str, str], list[McqInstance]] = {}
        for qid, inst in out:
            groups.setdefault(qid, []).append(inst)
        rng = random.Random(seed)
        return [rng.choice(groups[qid]) for qid in sorted(groups)]
    return [inst for _, inst in out]


def _click_category(rec: Mapping[str, Any], uid: str) -> str | None:
    """Culture category name, None for a language-category record."""
    raw = rec.get("category")
    candidates = [str(raw)] if raw else re.split(r"[_\-\s/]+", uid)
    for c in candidates:
        key = re.sub(r"[^a-z]", "", c.lower())
        if key in _CLICK_KEYS:
            return _CLICK_KEYS[key]
        if key in _CLICK_LANG_KEYS:
            return None
    if raw:
        raise DatasetError(f"{uid}: unknown CLIcK category {raw!r}")
    if "pop" in [c.lower() for c in candidates]:
        return "Pop culture"
    raise DatasetError(f"{uid}: cannot infer CLIcK category from id")


def load_click(path: str | Path, tiers: Mapping[str, str] | None = None) -> list[McqInstance]:
    tiers = DEFAULT_TIERS if tiers is None else tiers
    out = []
    for n, rec in enumerate(_read_records(Path(path)), start=1):
        uid = str(rec.get("id") or f"click-record-{n}")
        category = _click_category(rec, uid)
        if category is None:
            continue
        choices = _field(rec, "choices", uid)
        if not isinstance(choices, list) or not 2 <= len(choices) <= 5:
            raise DatasetError(f"{uid}: 'choices' must be a list of 2-5 options")
        options = {LETTERS[i]: str(c) for i, c in enumerate(choices)}
        answer = str(_field(rec, "answer", uid)).strip()
        gold = next((k for k, v in options.items() if v.strip() == answer), None)
        if gold is None and len(answer) == 1 and answer.upper() in options:
            gold = answer.upper()
        if gold is None:
            raise DatasetError(f"{uid}: answer {answer!r} matches no option")
        question = str(_field(rec, "question", uid))
        paragraph = rec.get("paragraph")
        body = f"{paragraph}\n\n{question}" if isinstance(paragraph, str) and paragraph.strip() else question
        prompt = body + "\n" + "\n".join(f"{k}: {v}" for k, v in options.items())
        out.append(McqInstance(uid, "click", prompt, options, gold, "ko", category, tiers.get("ko")))
    return out


# -- scoring ---------------------------------------------------------------

@dataclass(frozen=True)
class GroupScore:
    n: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    def to_json(self) -> dict:
        return {"n": self.n, "correct": self.correct, "accuracy": self.accuracy}


@dataclass
class EvalReport:
    method: str
    n: int
    correct: int
    per_language: dict[str, GroupScore]
    per_group: dict[str, GroupScore]
    tier_averages: dict[str, float]
    mean_iterations: float
    mean_final_evidence_iteration: float | None
    mean_tokens: float
    mean_prompt_tokens: float
    mean_completion_tokens: float
    planner_lang_distribution: dict[str, int] = field(default_factory=dict)
    evidence_lang_distribution: dict[str, int] = field(default_factory=dict)
    unanswered: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "unanswered": self.unanswered,
            "per_language": {k: v.to_json() for k, v in self.per_language.items()},
            "per_group": {k: v.to_json() for k, v in self.per_group.items()},
            "tier_averages": dict(self.tier_averages),
            "efficiency": {
                "mean_iterations": self.mean_iterations,
                "mean_final_evidence_iteration": self.mean_final_evidence_iteration,
                "mean_tokens": self.mean_tokens,
                "mean_prompt_tokens": self.mean_prompt_tokens,
                "mean_completion_tokens": self.mean_completion_tokens,
            },
            "planner_lang_distribution": dict(self.planner_lang_distribution),
            "evidence_lang_distribution": dict(self.evidence_lang_distribution),
        }


def _tally(pairs: Iterable[tuple[str, bool]]) -> dict[str, GroupScore]:
    n: Counter[str] = Counter()
    c: Counter[str] = Counter()
    for key, ok in pairs:
        n[key] += 1
        c[key] += ok
    return {k: GroupScore(n[k], c[k]) for k in sorted(n)}


def _lang_sort(langs: Iterable[str]) -> list[str]:
    order = {l: i for i, l in enumerate(LANGUAGE_POOL)}
    return sorted(langs, key=lambda l: (order.get(l, len(order)), l))


def score_batch(instances: Sequence[McqInstance], results: Sequence[Any],
                tiers: Mapping[str, str] | None = None, method: str | None = None) -> EvalReport:
    """Score one method's results against their instances (matched by uid).

    ``results`` are run results (anything with ``uid``, ``answer``, ``trace``,
    ``evidence_used`` and token counts). Missing answers count as wrong.
    """
    tiers = DEFAULT_TIERS if tiers is None else tiers
    by_uid = {}
    for r in results:
        if r.uid in by_uid:
            raise DatasetError(f"duplicate result uid {r.uid!r}")
        by_uid[r.uid] = r
    inst_uids = [i.uid for i in instances]
    if len(set(inst_uids)) != len(inst_uids):
        raise DatasetError("duplicate instance uids")
    missing = [u for u in inst_uids if u not in by_uid]
    extra = sorted(set(by_uid) - set(inst_uids), key=str)
    if missing or extra:
        raise DatasetError(f"uid mismatch: missing results for {missing[:5]}, unexpected results {extra[:5]}")
    if method is None:
        methods = {by_uid[u].method for u in inst_uids}
        method = methods.pop() if len(methods) == 1 else "mixed"

    ordered = [by_uid[i.uid] for i in instances]
    ok = [r.answer == i.gold for i, r in zip(instances, ordered)]
    per_language = _tally((i.source_lang, o) for i, o in zip(instances, ok))
    per_group = _tally((i.group, o) for i, o in zip(instances, ok))

    members: dict[str, list[float]] = {}
    for lang, score in per_language.items():
        tier = tiers.get(lang)
        if tier is not None:
            members.setdefault(tier, []).append(score.accuracy)
    tier_averages = {t: fmean(members[t]) for t in TIER_ORDER if t in members}
    tier_averages.update({t: fmean(v) for t, v in sorted(members.items()) if t not in tier_averages})

    planner_langs: Counter[str] = Counter()
    evidence_langs: Counter[str] = Counter()
    final_iters = []
    for r in ordered:
        for rec in r.trace:
            if rec.plan is not None and not rec.plan.fixed:
                planner_langs.update(rec.plan.language_names)
        evidence_langs.update(e.lang for e in r.evidence_used)
        if r.evidence_used:
            final_iters.append(fmean(e.found_iteration for e in r.evidence_used))

    n = len(instances)
    return EvalReport(
        method=method, n=n, correct=sum(ok),
        per_language={k: per_language[k] for k in _lang_sort(per_language)},
        per_group=per_group, tier_averages=tier_averages,
        mean_iterations=fmean(r.iterations_run for r in ordered) if n else 0.0,
        mean_final_evidence_iteration=fmean(final_iters) if final_iters else None,
        mean_tokens=fmean(r.prompt_tokens + r.completion_tokens for r in ordered) if n else 0.0,
        mean_prompt_tokens=fmean(r.prompt_tokens for r in ordered) if n else 0.0,
        mean_completion_tokens=fmean(r.completion_tokens for r in ordered) if n else 0.0,
        planner_lang_distribution={k: planner_langs[k] for k in _lang_sort(planner_langs)},
        evidence_lang_distribution={k: evidence_langs[k] for k in _lang_sort(evidence_langs)},
        unanswered=sum(r.answer is None for r in ordered),
    )


def render_table(reports: Sequence[EvalReport]) -> str:
    """Aligned plain-text table: one row per method, columns are tiers, languages, and the average."""
    if not reports:
        return "(no reports)\n"
    tiers = [t for t in TIER_ORDER if any(t in r.tier_averages for r in reports)]
    langs = _lang_sort({l for r in reports for l in r.per_language})
    header = ["Method", *(f"{t}-avg" for t in tiers), *langs, "Avg."]
    rows = [header]
    for r in reports:
        row = [r.method]
        row += [f"{100 * r.tier_averages[t]:.1f}" if t in r.tier_averages else "-" for t in tiers]
        row += [f"{100 * r.per_language[l].accuracy:.1f}" if l in r.per_language else "-" for l in langs]
        row.append(f"{100 * r.accuracy:.1f}")
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def report_json(reports: Sequence[EvalReport]) -> dict:
    return {"schema": "coral-eval-report/1", "reports": [r.to_json() for r in reports]}
