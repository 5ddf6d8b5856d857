from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Mapping

import pytest

from coral.corpus_store import CorpusStore
from coral.gateway import AgentGateway, AgentRequest, AgentResponse, RuleBackend
from coral.languages import LANGUAGE_POOL
from coral.loop import Engine, LoopConfig
from coral.vector_index import HashingEmbedder, VectorIndex

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "coral" / "fixtures"


def jsonl(docs) -> bytes:
    return "".join(json.dumps(d, ensure_ascii=False) + "\n" for d in docs).encode("utf-8")


def build_engine(root: Path, corpora: Mapping[str, list[dict]], backend,
                 loop: LoopConfig | None = None, dim: int = 256, **gateway_kw) -> Engine:
    """Ingest ``corpora`` and build a shard for every pool language (empty where missing)."""
    store = CorpusStore(root / "corpora")
    for lang, docs in corpora.items():
        store.ingest_bytes(jsonl(docs), lang)
    index = VectorIndex(root / "index", HashingEmbedder(dim), store)
    for lang in LANGUAGE_POOL:
        index.build_shard(lang, allow_missing=True)
    return Engine(store, index, AgentGateway(backend, **gateway_kw), loop)


class RecordingBackend:
    """Wraps another backend and keeps every request it saw."""

    def __init__(self, inner):
        self.inner = inner
        self.requests: list[AgentRequest] = []

    def complete(self, request: AgentRequest) -> AgentResponse:
        self.requests.append(request)
        return self.inner.complete(request)

    def roles(self) -> list[str]:
        return [r.role_tag for r in self.requests]


def rules(**per_role: Callable[[AgentRequest], str]) -> RuleBackend:
    return RuleBackend(per_role)


def critic_json(r: int, u: int, c: int, k: int, text: str = "ok") -> str:
    return json.dumps({"scores": {"relevance": r, "usefulness": u, "clarity_specificity": c,
                                  "compatibility": k}, "critique": text})


@pytest.fixture
def two_iter_path() -> Path:
    return FIXTURE_DIR / "two_iter.json"


def engine_from_fixture(path: Path, root: Path, loop: LoopConfig | None = None):
    """Engine over a simulation fixture's corpora, replaying its exchanges; returns (engine, fixture, recorder)."""
    from coral.gateway import load_script, ScriptedBackend

    fixture = json.loads(Path(path).read_text(encoding="utf-8"))
    rec = RecordingBackend(ScriptedBackend(load_script(path)))
    return build_engine(root, fixture["corpora"], rec, loop), fixture, rec


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
