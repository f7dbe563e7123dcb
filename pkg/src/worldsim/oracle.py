"""The oracle boundary: every language-model or embedding call goes through
here. The scripted backend makes whole simulation runs deterministic and
replayable; the live backend is a thin HTTP adapter behind the same contract.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

SCRIPT_FORMAT_VERSION = 1


class OracleError(Exception):
    pass


class MissingScriptEntry(OracleError):
    pass


class SchemaViolation(OracleError):
    pass


class EmptyText(OracleError):
    pass


class TransportError(OracleError):
    pass


class Timeout(OracleError):
    pass


# ---------------------------------------------------------------------------
# response schemas

@dataclass(frozen=True)
class ResponseSchema:
    """What shape of text the caller will accept back."""

    kind: str  # free_text | json_object | choice | score
    options: tuple[str, ...] = ()
    score_min: float = 0.0
    score_max: float = 1.0

    def validate(self, text: str) -> Any:
        """Parse and validate; raises SchemaViolation on any mismatch."""
        if self.kind == "free_text":
            return text
        if self.kind == "json_object":
            try:
                value = json.loads(text)
            except (json.JSONDecodeError, ValueError) as exc:
                raise SchemaViolation(f"not valid JSON: {exc}") from exc
            if not isinstance(value, dict):
                raise SchemaViolation("expected a JSON object")
            return value
        if self.kind == "choice":
            candidate = text.strip().lower()
            if candidate not in self.options:
                raise SchemaViolation(
                    f"{candidate!r} not among options {list(self.options)}")
            return candidate
        if self.kind == "score":
            try:
                value = float(text.strip())
            except ValueError as exc:
                raise SchemaViolation(f"not a number: {text!r}") from exc
            if not (self.score_min <= value <= self.score_max):
                raise SchemaViolation(
                    f"{value} outside [{self.score_min}, {self.score_max}]")
            return value
        raise SchemaViolation(f"unknown schema kind {self.kind!r}")


FREE_TEXT = ResponseSchema("free_text")
JSON_OBJECT = ResponseSchema("json_object")


def choice(*options: str) -> ResponseSchema:
    return ResponseSchema("choice", options=tuple(options))


def score(lo: float, hi: float) -> ResponseSchema:
    return ResponseSchema("score", score_min=lo, score_max=hi)


# ---------------------------------------------------------------------------
# templates and requests

@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    slots: tuple[str, ...]
    body: str  # static text with {slot} placeholders
    schema: ResponseSchema = FREE_TEXT

    def render(self, slot_values: dict[str, str]) -> str:
        if set(slot_values) != set(self.slots):
            raise ValueError(
                f"template {self.template_id}: slots {sorted(slot_values)} "
                f"!= declared {sorted(self.slots)}")
        out = self.body
        for name in self.slots:
            out = out.replace("{" + name + "}", str(slot_values[name]))
        return out


def slot_hash(slot_values: dict[str, str]) -> str:
    """Order-insensitive stable hash of the slot name->value map."""
    canon = json.dumps(sorted((k, str(v)) for k, v in slot_values.items()),
                       ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class OracleRequest:
    request_id: int
    template_id: str
    slot_values: dict[str, str]
    schema: ResponseSchema


@dataclass
class OracleResponse:
    request_id: int
    text: str
    parsed: Any


# ---------------------------------------------------------------------------
# script table

@dataclass
class ScriptTable:
    """Keyed responses: exact (template_id, slot_hash) first, then the
    per-template "default" entry."""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def lookup(self, template_id: str, shash: str) -> str:
        key = (template_id, shash)
        if key in self.entries:
            return self.entries[key]
        default = (template_id, "default")
        if default in self.entries:
            return self.entries[default]
        raise MissingScriptEntry(f"no script entry for {template_id}/{shash}")

    def put(self, template_id: str, shash: str, response: str) -> None:
        self.entries[(template_id, shash)] = response

    def put_default(self, template_id: str, response: str) -> None:
        self.entries[(template_id, "default")] = response

    def to_json(self) -> dict:
        return {
            "version": SCRIPT_FORMAT_VERSION,
            "entries": [
                {"template_id": t, "slot_hash": h, "response": r}
                for (t, h), r in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ScriptTable":
        if data.get("version") != SCRIPT_FORMAT_VERSION:
            raise ValueError(f"unsupported script version {data.get('version')}")
        table = cls()
        for entry in data["entries"]:
            table.entries[(entry["template_id"], entry["slot_hash"])] = entry["response"]
        return table

    @classmethod
    def load(cls, path: str) -> "ScriptTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# backends

class Oracle:
    """Base: assigns monotonically increasing request ids and journals every
    (request_id, template_id, slot_hash) triple for replay audits."""

    def __init__(self, catalog: dict[str, PromptTemplate]):
        self.catalog = catalog
        self.journal: list[tuple[int, str, str]] = []
        self._next_id = 0

    def _make_request(self, template_id: str, slot_values: dict[str, str]) -> OracleRequest:
        template = self.catalog.get(template_id)
        if template is None:
            raise OracleError(f"unknown template {template_id!r}")
        request = OracleRequest(self._next_id, template_id, dict(slot_values),
                                template.schema)
        self._next_id += 1
        self.journal.append((request.request_id, template_id,
                             slot_hash(slot_values)))
        return request

    def complete(self, template_id: str, slot_values: dict[str, str]) -> OracleResponse:
        raise NotImplementedError


_SLOT_REF = re.compile(r"\{(\w+)\}")


class ScriptedOracle(Oracle):
    """Deterministic backend: responses come from a script table. A response
    may reference request slots as {slot_name}; unknown names are left
    untouched, so JSON response bodies are unaffected."""

    def __init__(self, catalog: dict[str, PromptTemplate],
                 script: Optional[ScriptTable] = None):
        super().__init__(catalog)
        self.script = script or ScriptTable()

    def complete(self, template_id, slot_values):
        request = self._make_request(template_id, slot_values)
        text = self.script.lookup(template_id, slot_hash(slot_values))
        text = _SLOT_REF.sub(
            lambda m: str(slot_values.get(m.group(1), m.group(0))), text)
        parsed = request.schema.validate(text)
        return OracleResponse(request.request_id, text, parsed)


@dataclass
class EndpointConfig:
    base_url: str
    auth_env_var: str = "WORLDSIM_ORACLE_TOKEN"
    timeout_s: float = 10.0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_tokens: int = 512
    temperature: float = 0.7


class LiveOracle(Oracle):
    """HTTP adapter. POSTs {template_id, prompt, schema} and expects
    {"text": ...} back. Responses are validated, never repaired; determinism
    mode (DETERMINISM=1) forces temperature 0."""

    def __init__(self, catalog, config: EndpointConfig, client=None):
        super().__init__(catalog)
        self.config = config
        if client is None:
            import httpx
            client = httpx.Client(timeout=config.timeout_s)
        self.client = client

    def complete(self, template_id, slot_values):
        import httpx

        request = self._make_request(template_id, slot_values)
        template = self.catalog[template_id]
        prompt = template.render(slot_values)
        temperature = self.config.temperature
        if os.environ.get("DETERMINISM") == "1":
            temperature = 0.0
        payload = {
            "template_id": template_id,
            "prompt": prompt,
            "schema": {"kind": request.schema.kind,
                       "options": list(request.schema.options)},
            "max_tokens": self.config.max_tokens,
            "temperature": temperature,
        }
        headers = {}
        token = os.environ.get(self.config.auth_env_var)
        if token:
            headers["Authorization"] = f"Bearer {token}"

        last_error: OracleError = TransportError("no attempt made")
        for attempt in range(self.config.max_retries):
            try:
                resp = self.client.post(self.config.base_url, json=payload,
                                        headers=headers)
                resp.raise_for_status()
                text = resp.json()["text"]
                parsed = request.schema.validate(text)
                return OracleResponse(request.request_id, text, parsed)
            except SchemaViolation as exc:
                last_error = exc
            except httpx.TimeoutException as exc:
                last_error = Timeout(str(exc))
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_error = TransportError(str(exc))
            if attempt + 1 < self.config.max_retries:
                time.sleep(self.config.backoff_s * 2**attempt)
        raise last_error


# ---------------------------------------------------------------------------
# test embedder

class HashEmbedder:
    """Seeded pseudo-random projection of token hashes, normalized.

    Stable, model-free vectors whose cosine similarity still rewards shared
    tokens, which is all retrieval logic needs for offline tests.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is not None:
            return vec
        need = self.dim * 8
        chunks = []
        i = 0
        while sum(len(c) for c in chunks) < need:
            msg = f"{self.seed}:{token}:{i}".encode()
            chunks.append(hashlib.blake2b(msg, digest_size=64).digest())
            i += 1
        raw = b"".join(chunks)[:need]
        u = np.frombuffer(raw, dtype="<u8").astype(np.float64)
        vec = u / 2**63 - 1.0  # [-1, 1)
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed empty text")
        tokens = [t for t in "".join(
            c.lower() if c.isalnum() else " " for c in text).split()]
        if not tokens:
            tokens = [text]
        total = np.zeros(self.dim)
        for token in tokens:
            total = total + self._token_vector(token)
        norm = float(np.linalg.norm(total))
        if norm == 0.0:  # astronomically unlikely cancellation
            total = self._token_vector(" ".join(tokens))
            norm = float(np.linalg.norm(total))
        return total / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))
