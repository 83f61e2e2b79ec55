"""Run configuration: one JSON file, validated before any network call.

Unknown keys are rejected with the offending path so typos never silently
fall back to defaults. Flag overrides are applied by the CLI after loading;
the effective config round-trips through to_dict()/from_dict() unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .backends import BackendRole, Gateway, Role
from .errors import ConfigInvalid
from .filtering import WeightSchedule
from .supervision import RoleBindings, SupervisionConfig, SupervisionMode

_ROLE_KEYS = tuple(role.value for role in Role)


@dataclass(frozen=True)
class RoleConfig:
    endpoint: str
    model: str


@dataclass(frozen=True)
class PrefilterParams:
    alpha: float = 0.3
    max_tokens: int = 2000


@dataclass(frozen=True)
class ExtractionParams:
    num_samples: int = 1
    temperature: float = 0.7
    top_k: int = 3
    max_tokens: int = 1024
    max_segment_words: int = 2000


@dataclass(frozen=True)
class EmitParams:
    max_context_words: int | None = None


@dataclass(frozen=True)
class RunConfig:
    roles: dict[str, RoleConfig] = field(default_factory=dict)
    prefilter: PrefilterParams = PrefilterParams()
    weights: WeightSchedule = WeightSchedule()
    tau_f: dict[str, float] = field(default_factory=lambda: {"default": 0.0})
    supervision: SupervisionConfig = SupervisionConfig()
    extraction: ExtractionParams = ExtractionParams()
    emit: EmitParams = EmitParams()
    jobs: int = 1
    seed: int = 0

    # -- loading --

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RunConfig":
        _expect_mapping(raw, "config")
        _check_keys(
            raw,
            (
                "roles",
                "prefilter",
                "weights",
                "tau_f",
                "supervision",
                "extraction",
                "emit",
                "jobs",
                "seed",
            ),
            "config",
        )
        roles = _parse_roles(raw.get("roles", {}))
        prefilter = _parse_section(
            raw.get("prefilter", {}),
            "prefilter",
            {"alpha": float, "max_tokens": int},
            PrefilterParams,
        )
        weights = _parse_section(
            raw.get("weights", {}),
            "weights",
            {"decay": float, "horizon": int},
            WeightSchedule,
        )
        tau_f = _parse_tau(raw.get("tau_f", {"default": 0.0}))
        supervision = _parse_supervision(raw.get("supervision", {}))
        extraction = _parse_section(
            raw.get("extraction", {}),
            "extraction",
            {
                "num_samples": int,
                "temperature": float,
                "top_k": int,
                "max_tokens": int,
                "max_segment_words": int,
            },
            ExtractionParams,
        )
        emit = _parse_emit(raw.get("emit", {}))
        jobs = _coerce(raw.get("jobs", 1), int, "config.jobs")
        seed = _coerce(raw.get("seed", 0), int, "config.seed")
        if jobs < 1:
            raise ConfigInvalid("config.jobs must be >= 1")
        return cls(
            roles=roles,
            prefilter=prefilter,
            weights=weights,
            tau_f=tau_f,
            supervision=supervision,
            extraction=extraction,
            emit=emit,
            jobs=jobs,
            seed=seed,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "roles": {
                name: {"endpoint": rc.endpoint, "model": rc.model}
                for name, rc in sorted(self.roles.items())
            },
            "prefilter": {
                "alpha": self.prefilter.alpha,
                "max_tokens": self.prefilter.max_tokens,
            },
            "weights": {"decay": self.weights.decay, "horizon": self.weights.horizon},
            "tau_f": dict(sorted(self.tau_f.items())),
            "supervision": {
                "mode": self.supervision.mode.value,
                "num_candidates": self.supervision.num_candidates,
                "temperature": self.supervision.temperature,
                "top_k": self.supervision.top_k,
                "max_steps": self.supervision.max_steps,
                "stop_pattern": self.supervision.stop_pattern,
                "max_step_tokens": self.supervision.max_step_tokens,
                "max_rationale_tokens": self.supervision.max_rationale_tokens,
            },
            "extraction": {
                "num_samples": self.extraction.num_samples,
                "temperature": self.extraction.temperature,
                "top_k": self.extraction.top_k,
                "max_tokens": self.extraction.max_tokens,
                "max_segment_words": self.extraction.max_segment_words,
            },
            "emit": {"max_context_words": self.emit.max_context_words},
            "jobs": self.jobs,
            "seed": self.seed,
        }

    # -- bindings --

    def role_binding(self, role: Role) -> BackendRole:
        entry = self.roles.get(role.value)
        if entry is None:
            raise ConfigInvalid(f"config.roles.{role.value} is not bound")
        return BackendRole(role=role, endpoint=entry.endpoint, model_id=entry.model)

    def bindings(self) -> RoleBindings:
        return RoleBindings(
            rationale_generator=self.role_binding(Role.RATIONALE_GENERATOR),
            agent=self.role_binding(Role.AGENT),
            scorer=self.role_binding(Role.SCORER),
            extractor=self._optional_binding(Role.EXTRACTOR),
            embedder=self._optional_binding(Role.EMBEDDER),
        )

    def _optional_binding(self, role: Role) -> BackendRole | None:
        return self.role_binding(role) if role.value in self.roles else None

    def gateway(self) -> Gateway:
        import os

        return Gateway(api_key=os.environ.get("RATIONALEKIT_API_KEY"))


def _expect_mapping(value: Any, path: str) -> None:
    if not isinstance(value, Mapping):
        raise ConfigInvalid(f"{path} must be an object")


def _check_keys(mapping: Mapping[str, Any], allowed: tuple[str, ...], path: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigInvalid(f"unknown key {path}.{unknown[0]}")


def _coerce(value: Any, kind: type, path: str) -> Any:
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    raise ConfigInvalid(f"{path} must be of type {kind.__name__}")


def _parse_roles(raw: Any) -> dict[str, RoleConfig]:
    _expect_mapping(raw, "config.roles")
    _check_keys(raw, _ROLE_KEYS, "config.roles")
    roles: dict[str, RoleConfig] = {}
    for name, entry in raw.items():
        _expect_mapping(entry, f"config.roles.{name}")
        _check_keys(entry, ("endpoint", "model"), f"config.roles.{name}")
        try:
            endpoint = _coerce(entry["endpoint"], str, f"config.roles.{name}.endpoint")
            model = _coerce(entry["model"], str, f"config.roles.{name}.model")
        except KeyError as exc:
            raise ConfigInvalid(f"config.roles.{name} is missing {exc}") from exc
        roles[name] = RoleConfig(endpoint=endpoint, model=model)
    return roles


def _parse_section(raw: Any, name: str, fields: dict[str, type], factory):
    _expect_mapping(raw, f"config.{name}")
    _check_keys(raw, tuple(fields), f"config.{name}")
    kwargs = {
        key: _coerce(raw[key], kind, f"config.{name}.{key}")
        for key, kind in fields.items()
        if key in raw
    }
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigInvalid(f"config.{name}: {exc}") from exc


def _parse_tau(raw: Any) -> dict[str, float]:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return {"default": float(raw)}
    _expect_mapping(raw, "config.tau_f")
    out: dict[str, float] = {}
    for source, value in raw.items():
        out[str(source)] = _coerce(value, float, f"config.tau_f.{source}")
    out.setdefault("default", 0.0)
    return out


def _parse_supervision(raw: Any) -> SupervisionConfig:
    _expect_mapping(raw, "config.supervision")
    _check_keys(
        raw,
        (
            "mode",
            "num_candidates",
            "temperature",
            "top_k",
            "max_steps",
            "stop_pattern",
            "max_step_tokens",
            "max_rationale_tokens",
        ),
        "config.supervision",
    )
    kwargs: dict[str, Any] = {}
    if "mode" in raw:
        mode = _coerce(raw["mode"], str, "config.supervision.mode")
        try:
            kwargs["mode"] = SupervisionMode(mode)
        except ValueError as exc:
            raise ConfigInvalid(
                f"config.supervision.mode must be implicit or explicit, got {mode!r}"
            ) from exc
    for key, kind in (
        ("num_candidates", int),
        ("temperature", float),
        ("top_k", int),
        ("max_steps", int),
        ("stop_pattern", str),
        ("max_step_tokens", int),
        ("max_rationale_tokens", int),
    ):
        if key in raw:
            kwargs[key] = _coerce(raw[key], kind, f"config.supervision.{key}")
    try:
        return SupervisionConfig(**kwargs)
    except ValueError as exc:
        raise ConfigInvalid(f"config.supervision: {exc}") from exc


def _parse_emit(raw: Any) -> EmitParams:
    _expect_mapping(raw, "config.emit")
    _check_keys(raw, ("max_context_words",), "config.emit")
    if "max_context_words" not in raw or raw["max_context_words"] is None:
        return EmitParams()
    return EmitParams(
        max_context_words=_coerce(raw["max_context_words"], int, "config.emit.max_context_words")
    )
