"""Preference oracles, response parsing and the retrying call loop.

An oracle turns an :class:`OracleRequest` into raw response text. Two response
modes exist: ``weight_json`` (a JSON object of feature weights) and
``champion_token`` (``FINAL <label>``). Parsing and retries live here so every
backend, live or scripted, goes through the same contract.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .model import Dataset, Item, WeightVector, feature_array, feature_layout, minmax_array
from .prompts import candidate_label, label_index

logger = logging.getLogger(__name__)

WEIGHT_JSON = "weight_json"
CHAMPION_TOKEN = "champion_token"
DEFAULT_RETRIES = 3


class OracleError(RuntimeError):
    pass


class OracleFormatError(OracleError):
    """The response could not be parsed into the requested payload."""


class OracleTransportError(OracleError):
    """The oracle could not be reached or returned an unusable envelope."""


@dataclass(frozen=True)
class OracleRequest:
    prompt: str
    mode: str
    # structured context for scripted oracles; live oracles only read `prompt`
    candidates: tuple[str, ...] = ()
    layout: tuple[str, ...] = ()
    attempt: int = 0
    temperature: float | None = None
    seed: int | None = None


@dataclass(frozen=True)
class OracleResponse:
    raw: str
    payload: Any
    attempts: int


@dataclass
class TranscriptRecord:
    call: int
    attempt: int
    mode: str
    prompt: str
    response: str | None
    ok: bool
    error: str | None = None
    timestamp: float | None = None


@dataclass
class Transcript:
    """Every oracle call of one run, failed attempts included."""

    records: list[TranscriptRecord] = field(default_factory=list)
    clock: Callable[[], float] | None = None
    calls: int = 0

    def new_call(self) -> int:
        self.calls += 1
        return self.calls

    def append(self, **kwargs: Any) -> int:
        stamp = self.clock() if self.clock is not None else None
        self.records.append(TranscriptRecord(timestamp=stamp, **kwargs))
        return len(self.records) - 1

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> Transcript:
        records = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(TranscriptRecord(**json.loads(line)))
        calls = max((r.call for r in records), default=0)
        return cls(records=records, calls=calls)


class Oracle(Protocol):
    def respond(self, request: OracleRequest) -> str: ...


# --------------------------------------------------------------------------- parsing

_FENCE = re.compile(r"```(?:json)?\s*\n?(.*?)```", re.DOTALL)
_FINAL = re.compile(r"\bFINAL\b[\s:*\-]*\(?\s*([A-Za-z]+)\b")


def extract_json_object(text: str, strict: bool = False) -> dict:
    """Return the first JSON object in `text`.

    In strict mode the whole response (ignoring surrounding whitespace) must be
    a single JSON object.
    """
    if text is None or not text.strip():
        raise OracleFormatError("empty response")
    if strict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise OracleFormatError(f"response is not JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise OracleFormatError("response JSON is not an object")
        return obj
    decoder = json.JSONDecoder()
    fenced = [m.group(1) for m in _FENCE.finditer(text)]
    for chunk in fenced + [text]:
        pos = chunk.find("{")
        while pos != -1:
            try:
                obj, _ = decoder.raw_decode(chunk, pos)
            except json.JSONDecodeError:
                pos = chunk.find("{", pos + 1)
                continue
            if isinstance(obj, dict):
                return obj
            pos = chunk.find("{", pos + 1)
    raise OracleFormatError("no JSON object found in response")


def parse_weights(text: str, layout: Sequence[str], strict: bool = False) -> WeightVector:
    """Parse a weight response against `layout`.

    Unknown keys are dropped and absent layout keys get weight 0, both with a
    warning. A response sharing no key with the layout is rejected.
    """
    obj = extract_json_object(text, strict=strict)
    if set(obj) == {"weights"} and isinstance(obj["weights"], dict):
        obj = obj["weights"]
    layout = list(layout)
    known = [k for k in obj if k in layout]
    if not known:
        raise OracleFormatError(f"no layout feature among response keys {sorted(obj)[:10]}")
    weights: dict[str, float] = {}
    for key in known:
        value = obj[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise OracleFormatError(f"weight for {key!r} is not a number: {value!r}")
        if not math.isfinite(value):
            raise OracleFormatError(f"weight for {key!r} is not finite")
        weights[key] = float(value)
    extra = [k for k in obj if k not in layout]
    if extra:
        logger.warning("dropping weights for unknown features: %s", extra)
    missing = [k for k in layout if k not in weights]
    if missing:
        logger.warning("no weight given for %s; using 0", missing)
    return WeightVector({k: weights.get(k, 0.0) for k in layout})


def parse_champion(text: str, n_candidates: int) -> int:
    """Index of the champion named by the last ``FINAL <label>`` token."""
    if text is None or not text.strip():
        raise OracleFormatError("empty response")
    matches = _FINAL.findall(text)
    if not matches:
        raise OracleFormatError("no FINAL token in response")
    label = matches[-1]
    if not label.isupper():
        raise OracleFormatError(f"FINAL is not followed by a candidate label: {label!r}")
    idx = label_index(label)
    if idx >= n_candidates:
        raise OracleFormatError(f"label {label} outside candidates A..{candidate_label(n_candidates - 1)}")
    return idx


# --------------------------------------------------------------------------- backends


class ScriptedLinearOracle:
    """Deterministic stand-in that answers as a linear-utility decision maker.

    Weight requests return the true weights as JSON. Champion requests pick the
    candidate with maximal utility, or, with ``temperature > 0``, sample a
    candidate with probability proportional to ``exp(u / temperature)`` (the
    logistic choice model for two candidates).
    """

    def __init__(
        self,
        weights: WeightVector,
        utilities: Mapping[str, float],
        temperature: float = 0.0,
        seed: int = 0,
    ) -> None:
        if temperature < 0:
            raise ValueError("temperature must be non-negative")
        self.weights = weights
        self.utilities = dict(utilities)
        self.temperature = temperature
        self.rng = np.random.default_rng(seed)

    @classmethod
    def from_dataset(
        cls, dataset: Dataset, weights: WeightVector, temperature: float = 0.0, seed: int = 0
    ) -> ScriptedLinearOracle:
        return cls(weights, true_utilities(dataset, weights), temperature=temperature, seed=seed)

    def choose(self, utilities: Sequence[float]) -> int:
        u = np.asarray(utilities, dtype=float)
        if self.temperature == 0:
            return int(np.argmax(u))
        z = (u - u.max()) / self.temperature
        p = np.exp(z)
        return int(self.rng.choice(len(u), p=p / p.sum()))

    def respond(self, request: OracleRequest) -> str:
        if request.mode == WEIGHT_JSON:
            return json.dumps(dict(self.weights.weights))
        if request.mode == CHAMPION_TOKEN:
            utilities = [self.utilities[c] for c in request.candidates]
            return f"FINAL {candidate_label(self.choose(utilities))}"
        raise ValueError(f"unknown response mode {request.mode!r}")


class FixedWeightsOracle:
    """Returns a scripted sequence of weight vectors; the last one repeats."""

    def __init__(self, sequence: Sequence[WeightVector]) -> None:
        if not sequence:
            raise ValueError("need at least one weight vector")
        self.sequence = list(sequence)
        self.calls = 0

    def respond(self, request: OracleRequest) -> str:
        if request.mode != WEIGHT_JSON:
            raise ValueError("fixed-weights oracle only answers weight requests")
        w = self.sequence[min(self.calls, len(self.sequence) - 1)]
        self.calls += 1
        return json.dumps(dict(w.weights))


class ReplayOracle:
    """Replays recorded responses in order, optionally checking the prompts match."""

    def __init__(self, transcript: Transcript, check_prompts: bool = True) -> None:
        self.records = list(transcript.records)
        self.check_prompts = check_prompts
        self.position = 0

    @classmethod
    def from_file(cls, path: str | Path, check_prompts: bool = True) -> ReplayOracle:
        return cls(Transcript.read(path), check_prompts=check_prompts)

    def respond(self, request: OracleRequest) -> str:
        if self.position >= len(self.records):
            raise OracleTransportError("replay transcript exhausted")
        record = self.records[self.position]
        self.position += 1
        if self.check_prompts and record.prompt != request.prompt:
            raise OracleTransportError(f"replayed prompt differs from request at record {self.position - 1}")
        if record.response is None:
            raise OracleTransportError(record.error or "recorded transport failure")
        return record.response


ENV_ENDPOINT = "LISTEN_LLM_ENDPOINT"
ENV_MODEL = "LISTEN_LLM_MODEL"
ENV_KEY = "LISTEN_LLM_API_KEY"


class LLMHTTPOracle:
    """Chat-completions style HTTP client.

    The credential is never stored in configs; `api_key_env` names the
    environment variable holding it. Decoding temperature is left to the
    server default unless given.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = ENV_KEY,
        temperature: float | None = None,
        timeout: float = 60.0,
        client: Any = None,
    ) -> None:
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    @classmethod
    def from_env(cls, **kwargs: Any) -> LLMHTTPOracle:
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise OracleTransportError(f"set {ENV_ENDPOINT} and {ENV_MODEL} to use the LLM oracle")
        return cls(endpoint, model, **kwargs)

    def respond(self, request: OracleRequest) -> str:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        temperature = request.temperature if request.temperature is not None else self.temperature
        if temperature is not None:
            body["temperature"] = temperature
        if request.seed is not None:
            body["seed"] = request.seed
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.client.post(self.endpoint, json=body, headers=headers)
        except self._httpx.HTTPError as exc:
            raise OracleTransportError(f"request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise OracleTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise OracleTransportError(f"unexpected response body: {resp.text[:200]}") from exc
        return content if isinstance(content, str) else ""


def true_utilities(dataset: Dataset, weights: WeightVector) -> dict[str, float]:
    """Utility of every item under `weights` applied to min-max scaled features."""
    keys = set(weights.weights)
    include_cat = keys != set(feature_layout(dataset, include_categorical=False))
    arr, layout = feature_array(dataset, include_categorical=include_cat)
    u = minmax_array(arr) @ weights.as_array(layout)
    return {item.id: float(v) for item, v in zip(dataset.items, u)}


# --------------------------------------------------------------------------- calls


def call_oracle(
    oracle: Oracle,
    request: OracleRequest,
    parse: Callable[[str], Any],
    transcript: Transcript | None = None,
    retries: int = DEFAULT_RETRIES,
) -> OracleResponse:
    """Send `request` up to ``retries + 1`` times until `parse` accepts the answer."""
    transcript = transcript if transcript is not None else Transcript()
    call = transcript.new_call()
    last: OracleError | None = None
    for attempt in range(retries + 1):
        req = OracleRequest(**{**asdict(request), "attempt": attempt})
        try:
            raw = oracle.respond(req)
        except OracleTransportError as exc:
            transcript.append(call=call, attempt=attempt, mode=request.mode, prompt=request.prompt,
                              response=None, ok=False, error=str(exc))
            last = exc
            continue
        try:
            payload = parse(raw)
        except OracleFormatError as exc:
            transcript.append(call=call, attempt=attempt, mode=request.mode, prompt=request.prompt,
                              response=raw, ok=False, error=str(exc))
            last = exc
            continue
        transcript.append(call=call, attempt=attempt, mode=request.mode, prompt=request.prompt,
                          response=raw, ok=True)
        return OracleResponse(raw=raw, payload=payload, attempts=attempt + 1)
    assert last is not None
    raise type(last)(f"{last} (after {retries + 1} attempts)") from last


def elicit_weights(
    oracle: Oracle,
    prompt: str,
    layout: Sequence[str],
    transcript: Transcript | None = None,
    retries: int = DEFAULT_RETRIES,
    strict: bool = False,
) -> WeightVector:
    request = OracleRequest(prompt=prompt, mode=WEIGHT_JSON, layout=tuple(layout))
    return call_oracle(oracle, request, lambda raw: parse_weights(raw, layout, strict=strict),
                       transcript, retries).payload


def choose_champion(
    oracle: Oracle,
    prompt: str,
    candidates: Sequence[Item],
    transcript: Transcript | None = None,
    retries: int = DEFAULT_RETRIES,
) -> Item:
    if not candidates:
        raise ValueError("no candidates to choose from")
    request = OracleRequest(prompt=prompt, mode=CHAMPION_TOKEN, candidates=tuple(c.id for c in candidates))
    idx = call_oracle(oracle, request, lambda raw: parse_champion(raw, len(candidates)),
                      transcript, retries).payload
    return candidates[idx]


def wall_clock() -> float:
    return time.time()
