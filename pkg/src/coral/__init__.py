"""CORAL: multilingual retrieval-augmented QA with a planner/critic retrieval-control loop."""

from .baselines import BaselineSpec, run_baseline, translate
from .config import EngineConfig, load_config
from .corpus_store import ChunkPolicy, CorpusStore
from .critic import Critic, CriterionScores, EvidenceItem, is_valid, select_final, total_score
from .evalkit import EvalReport, McqInstance, extract_answer, load_blend, load_click, score_batch
from .gateway import AgentGateway, RuleBackend, ScriptedBackend
from .loop import Engine, IterationRecord, LoopConfig, RunResult
from .planner import Planner, RetrievalPlan
from .vector_index import HashingEmbedder, VectorIndex

__version__ = "0.1.0"

__all__ = [
    "BaselineSpec", "run_baseline", "translate", "EngineConfig", "load_config",
    "ChunkPolicy", "CorpusStore", "Critic", "CriterionScores", "EvidenceItem", "is_valid",
    "select_final", "total_score", "EvalReport", "McqInstance", "extract_answer", "load_blend",
    "load_click", "score_batch", "AgentGateway", "RuleBackend", "ScriptedBackend", "Engine",
    "IterationRecord", "LoopConfig", "RunResult", "Planner", "RetrievalPlan", "HashingEmbedder",
    "VectorIndex",
]
