"""Backend gateway: one boundary for generation, token scoring, and embeddings.

Every model capability is reached through a `Gateway` bound to per-role
backends. Two transports exist: a real HTTP completion-API client and a
table-driven deterministic mock used for tests and desk-scale runs. The
core never tokenizes; token boundaries always come from the backend.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Protocol

import requests

from .errors import (
    BackendRefusal,
    CapabilityMissing,
    DimensionMismatch,
    EmptyCompletion,
    TransportError,
    TruncationWarning,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "RATIONALEKIT_API_KEY"


class Role(str, Enum):
    """Function a backend plays in a pipeline run. Roles may share a backend."""

    EXTRACTOR = "extractor"
    RATIONALE_GENERATOR = "rationale_generator"
    AGENT = "agent"
    SCORER = "scorer"
    EMBEDDER = "embedder"


@dataclass(frozen=True)
class BackendRole:
    """Binding of one role to one backend endpoint and model id."""

    role: Role
    endpoint: str
    model_id: str


@dataclass(frozen=True)
class GenerationRequest:
    """Parameters for one sampling call.

    num_samples is the N of the supervision loop; temperature and top_k are
    passed through to the backend verbatim.
    """

    prompt: str
    num_samples: int = 1
    temperature: float = 0.0
    top_k: int = 3
    max_tokens: int = 256
    stop_strings: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class TokenScore:
    """Natural-log probability of one backend token of a continuation."""

    token: str
    logprob: float
    index: int


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")


class Transport(Protocol):
    """Minimal wire abstraction: POST a JSON payload to a backend path."""

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]: ...


def _canonical(payload: Mapping[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class HttpTransport:
    """Client for an HTTP JSON completion API with an embeddings route.

    Credentials come only from the environment (RATIONALEKIT_API_KEY); they are
    never part of run configuration files.
    """

    def __init__(self, base_url: str, *, timeout: float = 60.0, api_key: str | None = None) -> None:
        self._base = base_url.rstrip("/")
        self._timeout = timeout
        self._api_key = api_key
        self._session = requests.Session()

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        url = f"{self._base}{path}"
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = self._session.post(url, json=payload, headers=headers, timeout=self._timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request to {url} failed: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise BackendRefusal(
                f"{url} answered {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendRefusal(f"{url} returned non-JSON body") from exc


_TOKEN_RE = re.compile(r"\S+")


def _normalize_context(text: str) -> str:
    """Whitespace-insensitive key for mock probability tables."""
    return " ".join(text.split())


class MockTransport:
    """Deterministic table-driven backend.

    The fixture is a JSON map (see README for the documented schema):

    - "completions":        prompt -> list of completion strings; a request for
                            n samples cycles the list deterministically.
    - "default_completion": fallback completion for unscripted prompts.
    - "token_probs":        whitespace-normalized context -> {token: probability}.
    - "default_token_prob": probability for any unscripted (context, token).
    - "vocabulary":         list of symbols; uniform 1/len fallback probability.
    - "embeddings":         exact input text -> vector.
    - "default_embedding":  fallback vector for unscripted inputs.
    - "max_embed_words":    inputs longer than this many words are truncated and
                            the response is flagged truncated.

    Identical requests produce identical response bytes; every request is
    recorded in `request_log` for assertions about what a run actually asked.
    """

    def __init__(self, fixture: Mapping[str, Any]) -> None:
        self._fixture = dict(fixture)
        self._lock = threading.Lock()
        self.request_log: list[tuple[str, dict[str, Any]]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockTransport":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        return json.loads(self.post_raw(path, payload).decode("utf-8"))

    def post_raw(self, path: str, payload: dict[str, Any]) -> bytes:
        """Serve a request and return the canonical response bytes."""
        with self._lock:
            self.request_log.append((path, json.loads(_canonical(payload))))
        if path.endswith("/completions"):
            response = self._completions(payload)
        elif path.endswith("/embeddings"):
            response = self._embeddings(payload)
        else:
            raise BackendRefusal(f"mock backend has no route {path}", status=404)
        response["id"] = "mock-" + hashlib.sha256(_canonical(payload).encode()).hexdigest()[:16]
        response["model"] = payload.get("model", "mock")
        return _canonical(response).encode("utf-8")

    # -- routes --

    def _completions(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        prompt = payload.get("prompt", "")
        if payload.get("echo") and payload.get("logprobs") is not None:
            return self._score(prompt)
        table = self._fixture.get("completions", {})
        scripted = table.get(prompt)
        if scripted is None:
            default = self._fixture.get("default_completion")
            if default is None:
                raise BackendRefusal(
                    f"mock backend has no completion scripted for prompt {prompt[:80]!r}",
                    status=400,
                )
            scripted = [default]
        if not isinstance(scripted, list):
            scripted = [scripted]
        n = int(payload.get("n", 1))
        choices = [
            {"index": i, "text": scripted[i % len(scripted)], "finish_reason": "stop"}
            for i in range(n)
        ]
        return {"object": "text_completion", "choices": choices}

    def _score(self, prompt: str) -> dict[str, Any]:
        tokens: list[str] = []
        logprobs: list[float | None] = []
        offsets: list[int] = []
        for match in _TOKEN_RE.finditer(prompt):
            token = match.group(0)
            context = _normalize_context(prompt[: match.start()])
            prob = self._token_prob(context, token)
            tokens.append(token)
            if prob is None:
                # Unpriceable tokens get a null logprob, like real echo APIs.
                logprobs.append(None)
            else:
                logprobs.append(math.log(prob) if prob > 0.0 else float("-inf"))
            offsets.append(match.start())
        choice = {
            "index": 0,
            "text": prompt,
            "finish_reason": "stop",
            "logprobs": {"tokens": tokens, "token_logprobs": logprobs, "text_offset": offsets},
        }
        return {"object": "text_completion", "choices": [choice]}

    def _token_prob(self, context: str, token: str) -> float | None:
        by_context = self._fixture.get("token_probs", {}).get(context)
        if by_context is not None and token in by_context:
            return float(by_context[token])
        if "default_token_prob" in self._fixture:
            return float(self._fixture["default_token_prob"])
        vocab = self._fixture.get("vocabulary")
        if vocab:
            return 1.0 / len(vocab)
        return None

    def _embeddings(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        text = payload.get("input", "")
        truncated = False
        max_words = self._fixture.get("max_embed_words")
        if max_words is not None and len(text.split()) > int(max_words):
            text = " ".join(text.split()[: int(max_words)])
            truncated = True
        table = self._fixture.get("embeddings", {})
        vector = table.get(text, self._fixture.get("default_embedding"))
        if vector is None:
            raise BackendRefusal(
                f"mock backend has no embedding scripted for {text[:80]!r}", status=400
            )
        data = {"index": 0, "embedding": [float(v) for v in vector], "truncated": truncated}
        return {"object": "list", "data": [data]}


@dataclass
class Gateway:
    """Routes role-addressed requests to transports and normalizes responses.

    Handles are shareable across worker threads: every call is independent and
    results are matched to requests by choice index, never by arrival order.
    """

    transports: dict[str, Transport] = field(default_factory=dict)
    timeout: float = 60.0
    api_key: str | None = None

    def __post_init__(self) -> None:
        self._embed_dims: dict[tuple[str, str], int] = {}

    def _transport_for(self, role: BackendRole) -> Transport:
        endpoint = role.endpoint
        transport = self.transports.get(endpoint)
        if transport is not None:
            return transport
        if endpoint.startswith("mock://"):
            transport = MockTransport.from_file(endpoint[len("mock://") :])
        elif endpoint.startswith(("http://", "https://")):
            transport = HttpTransport(endpoint, timeout=self.timeout, api_key=self.api_key)
        else:
            raise TransportError(f"no transport available for endpoint {endpoint!r}")
        self.transports[endpoint] = transport
        return transport

    # -- capabilities --

    def generate(self, request: GenerationRequest, role: BackendRole) -> list[str]:
        """Sample completions; returns exactly request.num_samples strings.

        Each completion is truncated at the earliest stop string if one occurs.
        Raises EmptyCompletion when the backend supplies fewer samples than
        requested (the caller decides whether to retry or fail its step).
        """
        payload: dict[str, Any] = {
            "model": role.model_id,
            "prompt": request.prompt,
            "n": request.num_samples,
            "temperature": request.temperature,
            "top_k": request.top_k,
            "max_tokens": request.max_tokens,
            "echo": False,
        }
        if request.stop_strings:
            payload["stop"] = list(request.stop_strings)
        if request.seed is not None:
            payload["seed"] = request.seed
        response = self._transport_for(role).post("/completions", payload)
        choices = sorted(response.get("choices", []), key=lambda c: c.get("index", 0))
        if len(choices) < request.num_samples:
            raise EmptyCompletion(
                f"backend returned {len(choices)} of {request.num_samples} samples"
            )
        completions: list[str] = []
        for choice in choices[: request.num_samples]:
            text = choice.get("text")
            if not isinstance(text, str):
                raise EmptyCompletion("backend returned a sample without text")
            completions.append(_truncate_at_stop(text, request.stop_strings))
        return completions

    def score_continuation(
        self, prefix: str, continuation: str, role: BackendRole
    ) -> list[TokenScore]:
        """Per-token logprobs of `continuation` conditioned on `prefix`.

        Uses the echo+logprobs completion route: the backend scores the full
        text and we keep the tokens whose offsets fall inside the continuation.
        The sum over the returned scores is log p(continuation | prefix) under
        the backend's own tokenization.
        """
        if not continuation:
            raise ValueError("continuation must be non-empty")
        payload = {
            "model": role.model_id,
            "prompt": prefix + continuation,
            "n": 1,
            "temperature": 0.0,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        response = self._transport_for(role).post("/completions", payload)
        choices = response.get("choices") or []
        if not choices:
            raise BackendRefusal("backend returned no choices for a scoring request")
        logprobs = choices[0].get("logprobs")
        if not logprobs:
            raise CapabilityMissing(
                f"backend for role {role.role.value!r} does not return echo logprobs"
            )
        tokens = logprobs.get("tokens", [])
        values = logprobs.get("token_logprobs", [])
        offsets = logprobs.get("text_offset", [])
        if not (len(tokens) == len(values) == len(offsets)):
            raise BackendRefusal("backend returned misaligned logprob arrays")
        scores: list[TokenScore] = []
        for token, value, offset in zip(tokens, values, offsets):
            if offset < len(prefix):
                continue
            if value is None:
                raise CapabilityMissing(
                    "backend omitted a logprob inside the continuation"
                )
            scores.append(TokenScore(token=token, logprob=float(value), index=len(scores)))
        return scores

    def embed(self, text: str, role: BackendRole) -> EmbeddingVector:
        """Embed one text; warns with TruncationWarning if the backend truncated.

        The first successful call fixes the expected dimension for this
        (endpoint, model); later disagreements raise DimensionMismatch.
        """
        if not text:
            raise ValueError("text must be non-empty")
        payload = {"model": role.model_id, "input": text}
        response = self._transport_for(role).post("/embeddings", payload)
        data = response.get("data") or []
        if not data:
            raise BackendRefusal("backend returned no embedding data")
        entry = data[0]
        vector = EmbeddingVector(values=tuple(float(v) for v in entry.get("embedding", [])))
        key = (role.endpoint, role.model_id)
        expected = self._embed_dims.get(key)
        if expected is None:
            self._embed_dims[key] = vector.dim
        elif vector.dim != expected:
            raise DimensionMismatch(
                f"backend returned dim {vector.dim}, expected {expected}"
            )
        if entry.get("truncated"):
            warnings.warn(
                f"backend truncated input before embedding ({len(text)} chars)",
                TruncationWarning,
                stacklevel=2,
            )
        return vector

    def count_tokens(self, text: str, role: BackendRole) -> int:
        """Token count of `text` under the backend's tokenizer (via echo scoring)."""
        if not text:
            return 0
        return len(self.score_continuation("", text, role))


def _truncate_at_stop(text: str, stop_strings: tuple[str, ...]) -> str:
    cut = len(text)
    for stop in stop_strings:
        position = text.find(stop)
        if position != -1:
            cut = min(cut, position)
    return text[:cut]
