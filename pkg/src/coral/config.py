"""Validated engine configuration (JSON file, strict keys).

Every field has a default, so an empty file ``{}`` is a complete config.
Secrets never live in the file: endpoints name the environment variables
that hold API keys.
"""

from __future__ import annotations

import json
import os
from fractions import Fraction
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .corpus_store import ChunkPolicy
from .critic import Thresholds, Weights
from .errors import ConfigurationError
from .evalkit import DEFAULT_TIERS
from .gateway import DEFAULT_ROLE_SETTINGS, ROLE_TAGS, RoleSettings
from .languages import LANGUAGE_POOL, parse_lang
from .loop import EVIDENCE_CHAR_LIMIT, LoopConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EndpointsConfig(_Strict):
    chat_url: str | None = None
    chat_api_key_env: str | None = "CORAL_CHAT_API_KEY"
    models: dict[str, str] = Field(default_factory=dict)
    effort_field: str = "reasoning_effort"
    embed_url: str | None = None
    embed_api_key_env: str | None = "CORAL_EMBED_API_KEY"
    embed_model: str | None = None
    timeout_s: float = Field(300.0, gt=0)

    @field_validator("models")
    @classmethod
    def _known_roles(cls, v: dict[str, str]) -> dict[str, str]:
        unknown = set(v) - set(ROLE_TAGS)
        if unknown:
            raise ValueError(f"unknown roles {sorted(unknown)}; expected {list(ROLE_TAGS)}")
        return v


class RoleConfig(_Strict):
    temperature: float = Field(ge=0)
    top_p: float = Field(1.0, gt=0, le=1)
    max_tokens: int = Field(gt=0)
    effort_tag: str | None = None


def _default_roles() -> dict[str, RoleConfig]:
    return {r: RoleConfig(temperature=s.temperature, top_p=s.top_p, max_tokens=s.max_tokens,
                          effort_tag=s.effort_tag) for r, s in DEFAULT_ROLE_SETTINGS.items()}


class WeightsConfig(_Strict):
    relevance: float = Field(1.0, ge=0)
    usefulness: float = Field(0.5, ge=0)
    clarity_specificity: float = Field(0.5, ge=0)
    compatibility: float = Field(0.5, ge=0)


class LoopSection(_Strict):
    k_per_corpus: int = Field(5, gt=0)
    final_k: int = Field(5, gt=0)
    max_iterations: int = Field(3, gt=0)
    enable_query_rewrite: bool = True
    enable_dynamic_corpora: bool = True
    fixed_langs: list[str] | None = None
    per_criterion_min: int = Field(2, ge=0, le=5)
    total_min: float = Field(6.0, ge=0)
    weights: WeightsConfig = Field(default_factory=WeightsConfig)
    score_workers: int = Field(1, gt=0)
    evidence_char_limit: int = Field(EVIDENCE_CHAR_LIMIT, gt=0)

    @field_validator("fixed_langs")
    @classmethod
    def _langs(cls, v: list[str] | None) -> list[str] | None:
        return None if v is None else [parse_lang(c) for c in v]

    @model_validator(mode="after")
    def _fixed_needed(self) -> "LoopSection":
        if not self.enable_dynamic_corpora and not self.fixed_langs:
            raise ValueError("enable_dynamic_corpora=false needs fixed_langs")
        return self


class ChunkSection(_Strict):
    max_chars: int = Field(1200, gt=0)
    overlap_chars: int = Field(200, ge=0)

    @model_validator(mode="after")
    def _overlap(self) -> "ChunkSection":
        if self.overlap_chars >= self.max_chars:
            raise ValueError("overlap_chars must be smaller than max_chars")
        return self


class EmbeddingSection(_Strict):
    backend: Literal["hashing", "http"] = "hashing"
    dim: int = Field(256, gt=0)
    batch_size: int = Field(64, gt=0)


class RetrySection(_Strict):
    transport_retries: int = Field(3, ge=0)
    backoff_s: float = Field(1.0, ge=0)
    parse_retries: int = Field(2, ge=0)


class ConcurrencySection(_Strict):
    max_in_flight: int = Field(8, gt=0)
    eval_workers: int = Field(4, gt=0)


class PathsSection(_Strict):
    data_dir: str = "coral_data"
    trace_dir: str = "coral_traces"
    blend: str | None = None
    click: str | None = None


class EngineConfig(_Strict):
    endpoints: EndpointsConfig = Field(default_factory=EndpointsConfig)
    roles: dict[str, RoleConfig] = Field(default_factory=_default_roles)
    loop: LoopSection = Field(default_factory=LoopSection)
    language_pool: list[str] = Field(default_factory=lambda: list(LANGUAGE_POOL))
    # editorial: only su=low, fa=mid, es=high are anchored, the rest is a judgement call
    tiers: dict[str, Literal["low", "mid", "high"]] = Field(default_factory=lambda: dict(DEFAULT_TIERS))
    chunking: ChunkSection = Field(default_factory=ChunkSection)
    embedding: EmbeddingSection = Field(default_factory=EmbeddingSection)
    retries: RetrySection = Field(default_factory=RetrySection)
    concurrency: ConcurrencySection = Field(default_factory=ConcurrencySection)
    paths: PathsSection = Field(default_factory=PathsSection)

    @field_validator("roles", mode="before")
    @classmethod
    def _merge_roles(cls, v):
        # a partial override keeps the defaults of the roles it does not mention
        if not isinstance(v, dict):
            return v
        unknown = set(v) - set(ROLE_TAGS)
        if unknown:
            raise ValueError(f"unknown roles {sorted(unknown)}; expected {list(ROLE_TAGS)}")
        merged = {r: c.model_dump() for r, c in _default_roles().items()}
        for role, override in v.items():
            if isinstance(override, RoleConfig):
                override = override.model_dump()
            if not isinstance(override, dict):
                raise ValueError(f"roles.{role} must be an object")
            merged[role] = {**merged[role], **override}
        return merged

    @field_validator("language_pool")
    @classmethod
    def _pool(cls, v: list[str]) -> list[str]:
        codes = [parse_lang(c) for c in v]
        if len(set(codes)) != len(codes):
            raise ValueError("duplicate language codes")
        if "en" not in codes:
            raise ValueError("the pool must contain 'en' (the planner's fallback)")
        return codes

    @field_validator("tiers")
    @classmethod
    def _tier_langs(cls, v: dict[str, str]) -> dict[str, str]:
        return {parse_lang(k): t for k, t in v.items()}

    @model_validator(mode="after")
    def _fixed_in_pool(self) -> "EngineConfig":
        outside = [c for c in (self.loop.fixed_langs or []) if c not in self.language_pool]
        if outside:
            raise ValueError(f"loop.fixed_langs outside language_pool: {outside}")
        return self

    # -- conversions -------------------------------------------------------

    def loop_config(self) -> LoopConfig:
        s = self.loop
        w = s.weights
        return LoopConfig(
            k_per_corpus=s.k_per_corpus, final_k=s.final_k, max_iterations=s.max_iterations,
            enable_query_rewrite=s.enable_query_rewrite, enable_dynamic_corpora=s.enable_dynamic_corpora,
            fixed_langs=tuple(s.fixed_langs) if s.fixed_langs else None,
            thresholds=Thresholds(s.per_criterion_min, _exact(s.total_min)),
            weights=Weights(_exact(w.relevance), _exact(w.usefulness), _exact(w.clarity_specificity),
                            _exact(w.compatibility)),
            score_workers=s.score_workers, evidence_char_limit=s.evidence_char_limit,
        )

    def role_settings(self) -> dict[str, RoleSettings]:
        return {r: RoleSettings(c.temperature, c.top_p, c.max_tokens, c.effort_tag) for r, c in self.roles.items()}

    def chunk_policy(self) -> ChunkPolicy:
        return ChunkPolicy(self.chunking.max_chars, self.chunking.overlap_chars)

    def pool(self) -> tuple[str, ...]:
        return tuple(self.language_pool)

    def header(self) -> dict:
        """Full effective config, embedded in every trace."""
        return serialize_config(self)

    def resolve_secret(self, env_name: str | None) -> str | None:
        if env_name is None:
            return None
        value = os.environ.get(env_name)
        if value is None:
            raise ConfigurationError(f"environment variable {env_name} is not set")
        return value


def _exact(x: float) -> Fraction:
    return Fraction(repr(x))


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data: dict) -> EngineConfig:
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config: {_format_errors(exc)}") from None


def load_config(path: str | Path | None) -> EngineConfig:
    """Load a JSON config file; None or an empty file gives the defaults."""
    if path is None:
        return EngineConfig()
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return EngineConfig()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return config_from_dict(data)


def serialize_config(cfg: EngineConfig) -> dict:
    return cfg.model_dump(mode="json")
