"""Judge panel harness: prompt construction, endpoint queries, and
tolerant parsing of sectioned JSON verdicts.

Every endpoint speaks the chat-completions wire protocol (a system/user
message array POSTed as JSON), which keeps panelists, local model
runners, and the hosted tie-breaker behind one client. Panelists run at
temperature 0 for reproducibility; the tie-breaker may pin temperature 1.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import requests

from .catalog import Catalog, Criterion, Section, Verdict, render_question
from .model import WorkflowModel

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are a senior DevOps expert specialized in secure, efficient, and "
    "standardized CI pipeline practices. Your task is to rigorously audit "
    "GHA YAML workflow files for compliance with industry-recognized best "
    "practices. You understand both functional correctness and structural "
    "quality of CI workflows. Use a sectioned JSON format matching the "
    "checklist structure."
)

USER_INSTRUCTION = (
    "Audit the following GHA YAML workflow using the compliance checklist "
    "provided. Return your results as a structured JSON matching the "
    "section/question layout from the checklist. Answer each question with "
    '"YES", "NO", or "NOT APPLICABLE". Return only valid JSON, with no '
    "commentary or markdown."
)

REPAIR_INSTRUCTION = (
    "Your previous response did not answer every checklist question. "
    "Return the complete JSON again, answering all questions listed above."
)


class EndpointRole(str, Enum):
    PANELIST = "PANELIST"
    TIEBREAKER = "TIEBREAKER"


class EndpointUnavailable(Exception):
    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class Timeout(EndpointUnavailable):
    pass


class QuotaExceeded(EndpointUnavailable):
    pass


class Unparseable(Exception):
    """No JSON object could be located in the model output."""


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    base_url: str
    api_style: str = "CHAT_COMPLETIONS"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    role: EndpointRole = EndpointRole.PANELIST
    api_key_env: str | None = None
    parallelism: int = 4
    backoff_base: float = 0.5

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


def endpoint_from_dict(data: Mapping) -> ModelEndpoint:
    return ModelEndpoint(
        model_id=str(data["model_id"]),
        base_url=str(data["base_url"]),
        temperature=float(data.get("temperature", 0.0)),
        max_retries=int(data.get("max_retries", 3)),
        timeout=float(data.get("timeout", 60.0)),
        role=EndpointRole(data.get("role", "PANELIST")),
        api_key_env=data.get("api_key_env"),
        parallelism=int(data.get("parallelism", 4)),
        backoff_base=float(data.get("backoff_base", 0.5)),
    )


@dataclass
class VerdictSheet:
    model_id: str
    workflow_id: str
    verdicts: dict[str, Verdict]
    raw_response: str
    latency: float
    attempt: int
    expected_ids: tuple[str, ...] = ()

    @property
    def incomplete(self) -> bool:
        return bool(set(self.expected_ids) - set(self.verdicts))

    def missing_ids(self) -> tuple[str, ...]:
        return tuple(cid for cid in self.expected_ids if cid not in self.verdicts)


@dataclass
class PanelResult:
    workflow_id: str
    sheets: list[VerdictSheet] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)


class PanelError(Exception):
    """Every panelist failed for one workflow."""


def build_prompt(model: WorkflowModel, catalog: Catalog,
                 criteria: Sequence[Criterion] | None = None) -> tuple[str, str]:
    """(system_text, user_text) for one workflow.

    `criteria` restricts the checklist (the tie-breaker audits only the
    disputed questions, blind to the panel's answers); default is the full
    catalog. Construction is deterministic and injective in the raw YAML.
    """
    selected = list(criteria) if criteria is not None else list(catalog)
    lines = [USER_INSTRUCTION, "", "Checklist:"]
    for section in Section:
        in_section = [c for c in selected if c.section is section]
        if not in_section:
            continue
        lines.append("")
        lines.append(f"{section.value}:")
        for criterion in in_section:
            lines.append(f"- {criterion.id}: {render_question(criterion)}")
    lines += ["", "Workflow YAML:", "", model.raw_text]
    return SYSTEM_PROMPT, "\n".join(lines)


_limiters: dict[tuple[str, str], threading.Semaphore] = {}
_limiters_lock = threading.Lock()


def _limiter(endpoint: ModelEndpoint) -> threading.Semaphore:
    key = (endpoint.model_id, endpoint.base_url)
    with _limiters_lock:
        if key not in _limiters:
            _limiters[key] = threading.Semaphore(max(1, endpoint.parallelism))
        return _limiters[key]


def query_model(endpoint: ModelEndpoint, prompt: tuple[str, str]) -> str:
    """POST the prompt to the endpoint's chat-completions route and return
    the completion body, retrying transport failures with exponential
    backoff up to max_retries."""
    system_text, user_text = prompt
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": endpoint.model_id,
        "temperature": endpoint.temperature,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ],
    }
    headers = {"Content-Type": "application/json"}
    key = endpoint.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"

    attempts = 0
    last_error: Exception | None = None
    quota_hit = False
    with _limiter(endpoint):
        while attempts < max(1, endpoint.max_retries):
            attempts += 1
            try:
                response = requests.post(url, json=payload, headers=headers,
                                         timeout=endpoint.timeout)
                if response.status_code == 429:
                    quota_hit = True
                    raise requests.RequestException("HTTP 429")
                if response.status_code >= 400:
                    raise requests.RequestException(f"HTTP {response.status_code}")
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except requests.Timeout as exc:
                last_error = exc
            except (requests.RequestException, KeyError, ValueError, json.JSONDecodeError) as exc:
                last_error = exc
            if attempts < endpoint.max_retries:
                delay = endpoint.backoff_base * (2 ** (attempts - 1))
                logger.warning("%s attempt %d failed (%s); retrying in %.1fs",
                               endpoint.model_id, attempts, last_error, delay)
                time.sleep(delay)

    message = f"{endpoint.model_id} at {url}: {last_error}"
    if quota_hit:
        raise QuotaExceeded(message, attempts=attempts)
    if isinstance(last_error, requests.Timeout):
        raise Timeout(message, attempts=attempts)
    raise EndpointUnavailable(message, attempts=attempts)


_FENCE_RE = re.compile(r"```(?:json|yaml|[a-z]*)?\s*\n?(.*?)```", re.DOTALL)
_NA_SYNONYMS = {"NOT_APPLICABLE", "NOTAPPLICABLE", "NA", "N_A"}


def normalize_answer(value: str) -> Verdict | None:
    token = re.sub(r"[\s/\-]+", "_", value.strip().upper()).strip("_")
    if token == "YES":
        return Verdict.YES
    if token == "NO":
        return Verdict.NO
    if token in _NA_SYNONYMS:
        return Verdict.NOT_APPLICABLE
    return None


def _locate_json(raw: str) -> dict:
    candidates = [raw]
    candidates.extend(m.group(1) for m in _FENCE_RE.finditer(raw))
    start, end = raw.find("{"), raw.rfind("}")
    if start != -1 and end > start:
        candidates.append(raw[start:end + 1])
    for text in candidates:
        text = text.strip()
        if not text.startswith("{"):
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise Unparseable("no JSON object found in response")


def parse_verdicts(raw: str, catalog: Catalog) -> dict[str, Verdict]:
    """Extract criterion verdicts from a model response.

    Tolerates code fences, surrounding prose, sectioned or flat layouts,
    and answer synonyms ("N/A", "not applicable", lowercase). Missing
    criteria are simply absent from the result; only a response with no
    JSON object at all raises Unparseable.
    """
    obj = _locate_json(raw)
    known = set(catalog.ids)
    found: dict[str, Verdict] = {}

    def walk(node) -> None:
        if isinstance(node, dict):
            answer = None
            for answer_key in ("answer", "verdict", "value"):
                if isinstance(node.get(answer_key), str):
                    answer = node[answer_key]
                    break
            ident = node.get("id")
            if isinstance(ident, str) and ident.upper() in known and answer is not None:
                verdict = normalize_answer(answer)
                if verdict is not None:
                    found.setdefault(ident.upper(), verdict)
            for key, value in node.items():
                if isinstance(key, str) and key.upper() in known:
                    verdict = None
                    if isinstance(value, str):
                        verdict = normalize_answer(value)
                    elif isinstance(value, dict):
                        for answer_key in ("answer", "verdict", "value"):
                            inner = value.get(answer_key)
                            if isinstance(inner, str):
                                verdict = normalize_answer(inner)
                                break
                    if verdict is not None:
                        found.setdefault(key.upper(), verdict)
                walk(value)
        elif isinstance(node, list):
            for entry in node:
                walk(entry)

    walk(obj)
    return found


def _query_sheet(endpoint: ModelEndpoint, workflow: WorkflowModel,
                 catalog: Catalog) -> VerdictSheet:
    prompt = build_prompt(workflow, catalog)
    expected = catalog.ids
    started = time.monotonic()
    raw = query_model(endpoint, prompt)
    verdicts: dict[str, Verdict] = {}
    attempt = 1
    try:
        verdicts = parse_verdicts(raw, catalog)
    except Unparseable:
        pass

    if set(expected) - set(verdicts):
        # one repair round for incomplete or unparseable output
        attempt = 2
        repair_prompt = (prompt[0], prompt[1] + "\n\n" + REPAIR_INSTRUCTION)
        raw = query_model(endpoint, repair_prompt)
        try:
            retry_verdicts = parse_verdicts(raw, catalog)
            retry_verdicts.update(verdicts)
            verdicts = retry_verdicts
        except Unparseable:
            if not verdicts:
                raise
    return VerdictSheet(
        model_id=endpoint.model_id,
        workflow_id=workflow.workflow_id,
        verdicts=verdicts,
        raw_response=raw,
        latency=time.monotonic() - started,
        attempt=attempt,
        expected_ids=expected,
    )


def run_panel(workflow: WorkflowModel, panel: Iterable[ModelEndpoint],
              catalog: Catalog) -> PanelResult:
    """Query every panelist for one workflow, concurrently.

    Incomplete sheets get one repair round; persistent gaps stay marked
    INCOMPLETE on the sheet. Individual endpoint failures are recorded;
    only a panel with zero successful sheets raises.
    """
    panelists = [e for e in panel if e.role is EndpointRole.PANELIST]
    if not panelists:
        raise ValueError("panel must contain at least one PANELIST endpoint")
    ids = [e.model_id for e in panelists]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate panelist model ids: {ids}")

    result = PanelResult(workflow_id=workflow.workflow_id)
    with ThreadPoolExecutor(max_workers=len(panelists)) as pool:
        futures = {pool.submit(_query_sheet, e, workflow, catalog): e
                   for e in panelists}
        for future, endpoint in futures.items():
            try:
                result.sheets.append(future.result())
            except (EndpointUnavailable, Unparseable) as exc:
                result.failures[endpoint.model_id] = str(exc)

    result.sheets.sort(key=lambda s: s.model_id)
    if not result.sheets:
        raise PanelError(f"all panelists failed for {workflow.workflow_id}: "
                         f"{result.failures}")
    return result
