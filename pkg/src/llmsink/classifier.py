"""Chat-completion classification of website dossiers.

Sends one single-turn prompt per site to a local chat-completion
endpoint and parses the model's ``{"verdict", "reason"}`` JSON reply.
The reason text travels with every verdict so a human reviewer can see
why a site was (not) flagged.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Sequence

import httpx

from .discovery import WebsiteDossier

__all__ = [
    "VerdictValue",
    "Verdict",
    "ClassifierConfig",
    "ParseFailure",
    "render_prompt",
    "parse_verdict",
    "classify",
    "classify_batch",
    "stub_chat_transport",
    "append_verdict_log",
    "load_verdict_log",
    "DEFAULT_CRITERIA",
]


class VerdictValue(str, Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


DEFAULT_CRITERIA = (
    "Functions like ChatGPT, Grok, meta.ai, or Gemini: It can understand and "
    'answer a broad range of general knowledge questions (e.g., "Explain '
    'photosynthesis", "Help me solve this algebra problem", "Write an essay '
    'outline"), or it serves as frontend chat interface for accessing such LLMs'
)

PROMPT_TEMPLATE = (
    "I need to classify a website based on its primary function. "
    "The following is partial information extracted from the website. {weblog_data}\n"
    "My Question: Does this website (i.e. the domain name given in above URL) "
    "provide a general-purpose, generative AI chat service for answering a wide "
    "variety of questions? Please check if it meets these criteria: {criteria} "
    'Please answer with "Yes" or "No" and provide a brief explanation of what '
    "the website is, based on the provided info. the format of your answer "
    "should only contain a JSON formatted response as "
    '{{"verdict": answer, "reason": reason}}'
)

JSON_ONLY_REMINDER = "Respond with only the JSON object, no other text."


@dataclass
class ClassifierConfig:
    endpoint: str = "http://127.0.0.1:11434"
    model_id: str = "llama3:8b"
    temperature: float = 0.0
    max_retries: int = 2
    request_timeout: float = 60.0
    criteria_text: str = DEFAULT_CRITERIA
    chat_path: str = "/v1/chat/completions"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class Verdict:
    verdict: VerdictValue
    reason: str
    model_id: str
    latency_ms: float
    raw_response: str
    dossier_url: str
    created_at: datetime
    verdict_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def to_json(self) -> dict:
        return {
            "verdict_id": self.verdict_id,
            "verdict": self.verdict.value,
            "reason": self.reason,
            "model_id": self.model_id,
            "latency_ms": round(self.latency_ms, 3),
            "raw_response": self.raw_response,
            "dossier_url": self.dossier_url,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_json(cls, row: dict) -> "Verdict":
        return cls(
            verdict=VerdictValue(row["verdict"]),
            reason=row["reason"],
            model_id=row["model_id"],
            latency_ms=row["latency_ms"],
            raw_response=row["raw_response"],
            dossier_url=row["dossier_url"],
            created_at=datetime.fromisoformat(row["created_at"]),
            verdict_id=row["verdict_id"],
        )


class ParseFailure(ValueError):
    """Model output did not contain a usable verdict object."""


def render_prompt(dossier: WebsiteDossier, config: ClassifierConfig) -> str:
    """Fill the classification prompt with one site's dossier."""
    weblog_data = json.dumps(
        {
            "url": dossier.url,
            "metadata": {
                "title": dossier.title,
                "description": dossier.description,
                "keywords": dossier.keywords,
            },
            "content": dossier.content,
        },
        ensure_ascii=False,
        indent=1,
    )
    return PROMPT_TEMPLATE.format(weblog_data=weblog_data, criteria=config.criteria_text)


_THINK_RE = re.compile(r"<think>.*?</think>", re.DOTALL | re.IGNORECASE)
_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*")


def _first_json_object(text: str) -> str:
    """Return the first balanced ``{...}`` candidate, string-aware."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    raise ParseFailure("no JSON object in model output")


def parse_verdict(raw: str) -> tuple[VerdictValue, str]:
    """Extract (verdict, reason) from raw model output.

    Reasoning traces in ``<think>`` blocks and markdown code fences are
    stripped before locating the first balanced JSON object. The verdict
    value is matched case-insensitively against yes/no; anything else is
    a :class:`ParseFailure`.
    """
    cleaned = _THINK_RE.sub("", raw)
    cleaned = _FENCE_RE.sub("", cleaned)
    candidate = _first_json_object(cleaned)
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict) or "verdict" not in obj:
        raise ParseFailure("missing verdict field")
    value = str(obj["verdict"]).strip().lower()
    if value == "yes":
        verdict = VerdictValue.YES
    elif value == "no":
        verdict = VerdictValue.NO
    else:
        raise ParseFailure(f"invalid verdict value {obj['verdict']!r}")
    reason = str(obj.get("reason", "")).strip()
    return verdict, reason


def _chat_request_body(prompt: str, config: ClassifierConfig) -> dict:
    return {
        "model": config.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "stream": False,
    }


def _assistant_text(payload: dict) -> str:
    # OpenAI-compatible servers; Ollama-native replies as a fallback.
    choices = payload.get("choices")
    if choices:
        return choices[0].get("message", {}).get("content", "")
    message = payload.get("message")
    if isinstance(message, dict):
        return message.get("content", "")
    raise ValueError("response carries no assistant message")


def classify(
    dossier: WebsiteDossier,
    config: ClassifierConfig,
    *,
    transport: httpx.BaseTransport | None = None,
) -> Verdict:
    """Classify one dossier; never raises.

    Measures the wall clock of the whole round trip including retries.
    Parse failures retry with a JSON-only reminder appended; transport
    failures and exhausted retries yield an ``unknown`` verdict, which
    never triggers blocking.
    """
    prompt = render_prompt(dossier, config)
    url = config.endpoint.rstrip("/") + config.chat_path
    started = time.perf_counter()
    raw = ""
    failure_note = "no parsable verdict"
    with httpx.Client(transport=transport, timeout=config.request_timeout) as client:
        for attempt in range(config.max_retries + 1):
            text = prompt if attempt == 0 else f"{prompt}\n\n{JSON_ONLY_REMINDER}"
            try:
                response = client.post(url, json=_chat_request_body(text, config))
                response.raise_for_status()
                raw = _assistant_text(response.json())
            except httpx.TimeoutException:
                failure_note = "endpoint timed out"
                break
            except (httpx.HTTPError, ValueError) as exc:
                failure_note = f"endpoint unreachable: {exc}"
                break
            try:
                value, reason = parse_verdict(raw)
            except ParseFailure as exc:
                failure_note = str(exc)
                continue
            latency_ms = (time.perf_counter() - started) * 1000.0
            return Verdict(
                verdict=value,
                reason=reason or f"model answered {value.value} with no reason",
                model_id=config.model_id,
                latency_ms=latency_ms,
                raw_response=raw,
                dossier_url=dossier.url,
                created_at=datetime.now(timezone.utc),
            )
    latency_ms = (time.perf_counter() - started) * 1000.0
    return Verdict(
        verdict=VerdictValue.UNKNOWN,
        reason=f"classification failed: {failure_note}",
        model_id=config.model_id,
        latency_ms=latency_ms,
        raw_response=raw,
        dossier_url=dossier.url,
        created_at=datetime.now(timezone.utc),
    )


def classify_batch(
    dossiers: Sequence[WebsiteDossier],
    configs: Sequence[ClassifierConfig],
    *,
    transports: dict[str, httpx.BaseTransport] | None = None,
    out_path: Path | str | None = None,
) -> dict[str, list[Verdict]]:
    """Classify every (model, site) pair; the batch always completes.

    Returns verdicts per model in dossier order and optionally appends
    them to a replayable JSON-lines log.
    """
    if not dossiers or not configs:
        raise ValueError("need at least one dossier and one config")
    results: dict[str, list[Verdict]] = {}
    for config in configs:
        transport = (transports or {}).get(config.model_id)
        rows = [classify(dossier, config, transport=transport) for dossier in dossiers]
        results[config.model_id] = rows
        if out_path is not None:
            append_verdict_log(out_path, rows)
    return results


def latency_samples(results: dict[str, list[Verdict]]) -> dict[str, list[float]]:
    return {model: [v.latency_ms for v in rows] for model, rows in results.items()}


def stub_chat_transport(
    rules: Sequence[tuple[str, str, str]],
    default: tuple[str, str] = ("No", "no rule matched; treated as a regular website"),
) -> httpx.MockTransport:
    """Deterministic fake chat endpoint for CI.

    ``rules`` are (url_substring, verdict, reason) checked in order
    against the dossier URL embedded in the prompt.
    """

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content.decode("utf-8"))
        prompt = body["messages"][-1]["content"]
        match = re.search(r'"url":\s*"([^"]+)"', prompt)
        url = match.group(1) if match else ""
        verdict, reason = default
        for needle, rule_verdict, rule_reason in rules:
            if needle in url:
                verdict, reason = rule_verdict, rule_reason
                break
        content = json.dumps({"verdict": verdict, "reason": reason})
        return httpx.Response(
            200,
            json={"choices": [{"message": {"role": "assistant", "content": content}}]},
        )

    return httpx.MockTransport(handler)


def append_verdict_log(path: Path | str, verdicts: Sequence[Verdict]) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        for verdict in verdicts:
            handle.write(json.dumps(verdict.to_json(), sort_keys=True) + "\n")


def load_verdict_log(path: Path | str) -> list[Verdict]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(Verdict.from_json(json.loads(line)))
    return rows
