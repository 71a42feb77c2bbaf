"""Back-generation prompting, output validation, and batch generation.

Requests are plain chat-completions dicts so they can go to any HTTP
endpoint; a deterministic mock client ships here so the whole pipeline
runs offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .masking import (
    MaskedTree,
    masked_pos_tags,
    masked_words,
    parse_masked,
    render_masked,
    skeleton_signature,
)
from .trees import Tree, UnmatchedBrackets, _parse_lenient, parse_bracketed, render_bracketed

SYSTEM_PROMPT = "You are a professional linguist."
AUTH_TOKEN_ENV = "BACKPARSE_LLM_TOKEN"


class BackgenError(Exception):
    pass


class EndpointUnreachable(BackgenError):
    pass


class Status(Enum):
    ACCEPTED = "Accepted"
    UNMATCHED_BRACKETS = "UnmatchedBrackets"
    STRUCTURE_MISMATCH = "StructureMismatch"
    KEYWORD_ALTERED = "KeywordAltered"
    SLOT_UNFILLED = "SlotUnfilled"
    MULTI_TOKEN_SLOT = "MultiTokenSlot"


@dataclass(frozen=True)
class ValidationReport:
    status: Status
    detail: str = ""


@dataclass(frozen=True)
class DemonstrationPair:
    masked_render: str
    full_render: str


@dataclass
class BackGenRecord:
    rec_id: object
    masked_render: str
    llm_raw: str
    status: Status
    detail: str = ""
    tree: Optional[Tree] = None
    domain: Optional[str] = None


def build_backgen_prompt(masked: MaskedTree, demos=(), model="gpt-4", temperature=1.0) -> dict:
    """Chat request: linguist system prompt + demonstrations + masked tree."""
    blocks = [SYSTEM_PROMPT]
    for demo in demos:
        blocks.append("Demonstration:\n%s\n%s" % (demo.masked_render, demo.full_render))
    return {
        "model": model,
        "temperature": temperature,
        "messages": [
            {"role": "system", "content": "\n\n".join(blocks)},
            {"role": "user", "content": render_masked(masked)},
        ],
    }


def validate_backgen_output(masked: MaskedTree, llm_raw: str):
    """Strict validation; returns (ValidationReport, Tree or None).

    Check order: brackets, skeleton, kept keywords, slot filling.
    """
    text = llm_raw.strip()
    try:
        candidate = parse_masked(text)
    except UnmatchedBrackets as exc:
        return ValidationReport(Status.UNMATCHED_BRACKETS, str(exc)), None
    except BackgenError as exc:  # pragma: no cover - defensive
        return ValidationReport(Status.UNMATCHED_BRACKETS, str(exc)), None
    except Exception as exc:
        # leaf with several tokens parses as BadToken; report it as an
        # overfull slot after the bracket check has passed structurally
        if "tokens under" in str(exc):
            return ValidationReport(Status.MULTI_TOKEN_SLOT, str(exc)), None
        return ValidationReport(Status.UNMATCHED_BRACKETS, str(exc)), None

    if skeleton_signature(candidate.tree) != skeleton_signature(masked.tree):
        return ValidationReport(Status.STRUCTURE_MISMATCH, "skeleton differs"), None

    kept_words = masked_words(masked)
    out_words = masked_words(candidate)
    for t in sorted(masked.kept_indices):
        if out_words[t - 1] != kept_words[t - 1]:
            return ValidationReport(
                Status.KEYWORD_ALTERED,
                "word %d: kept %r, got %r" % (t, kept_words[t - 1], out_words[t - 1]),
            ), None

    for t, word in enumerate(out_words, start=1):
        if word is None or word == "":
            return ValidationReport(Status.SLOT_UNFILLED, "slot %d unfilled" % t), None

    tree = parse_bracketed(text)
    return ValidationReport(Status.ACCEPTED), tree


def select_demos(masked: MaskedTree, pool, count: int) -> list[DemonstrationPair]:
    """Nearest-length demonstrations from the pool; stable on pool order."""
    n = masked.n
    ranked = sorted(pool, key=lambda d: abs(parse_masked(d.masked_render).n - n))
    return list(ranked[:count])


class MockLLM:
    """Deterministic offline chat client.

    Answers with the full tree stored for the masked render (the "oracle"
    table), optionally corrupting a seeded fraction of responses.
    """

    def __init__(self, oracle: dict, corrupt_rate: float = 0.0, seed: int = 0,
                 corruption: str = "mixed"):
        self.oracle = dict(oracle)
        self.corrupt_rate = corrupt_rate
        self.seed = seed
        self.corruption = corruption
        self.requests = 0

    def complete(self, request: dict) -> str:
        self.requests += 1
        masked_render = request["messages"][-1]["content"]
        answer = self.oracle.get(masked_render)
        if answer is None:
            return masked_render  # echoes the unfilled tree: rejected as SlotUnfilled
        key = hashlib.md5(("%d:%d:%s" % (self.seed, self.requests, masked_render))
                          .encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(key[:8], "little"))
        if rng.random() < self.corrupt_rate:
            return corrupt(answer, self.corruption, rng)
        return answer


def corrupt(rendered: str, kind: str, rng: random.Random) -> str:
    """Seeded corruptions mirroring the observed LLM failure modes."""
    if kind == "mixed":
        kind = rng.choice(["brackets", "keyword", "unfilled", "skeleton"])
    if kind == "brackets":
        return rendered.rstrip()[:-1]
    if kind == "keyword":
        toks = rendered.split()
        word_positions = [t for t, tok in enumerate(toks) if tok.endswith(")") and not tok.startswith("(")]
        t = rng.choice(word_positions)
        stripped = toks[t].rstrip(")")
        tail = toks[t][len(stripped):]
        toks[t] = "corrupted%d%s" % (rng.randrange(1000), tail)
        return " ".join(toks)
    if kind == "unfilled":
        toks = rendered.split()
        word_positions = [t for t, tok in enumerate(toks) if tok.endswith(")") and not tok.startswith("(")]
        t = rng.choice(word_positions)
        stripped = toks[t].rstrip(")")
        toks[t] = toks[t][len(stripped):]
        return " ".join(toks)
    if kind == "skeleton":
        return "(X (XX oops))"
    raise BackgenError("unknown corruption kind: %r" % kind)


class HttpLLM:
    """Minimal chat-completions client over HTTP."""

    def __init__(self, endpoint: str, model: str = "gpt-4", temperature: float = 1.0,
                 timeout: float = 60.0, max_attempts: int = 3, backoff: float = 2.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff

    def complete(self, request: dict) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = "Bearer %s" % token
        payload = dict(request, model=self.model, temperature=self.temperature)
        last_error = None
        for attempt in range(self.max_attempts):
            try:
                resp = requests.post("%s/chat/completions" % self.endpoint,
                                     json=payload, headers=headers, timeout=self.timeout)
                if resp.status_code == 429:
                    time.sleep(self.backoff * (attempt + 1))
                    continue
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
                time.sleep(self.backoff * (attempt + 1))
        raise EndpointUnreachable("giving up on %s: %s" % (self.endpoint, last_error))


@dataclass
class BatchSummary:
    total: int = 0
    accepted: int = 0
    by_status: dict = field(default_factory=dict)

    def add(self, status: Status) -> None:
        self.total += 1
        if status is Status.ACCEPTED:
            self.accepted += 1
        self.by_status[status.value] = self.by_status.get(status.value, 0) + 1


def backgen_batch(masked_records, client, demo_pool=(), num_demos=2, retries=2,
                  model="gpt-4", temperature=1.0):
    """Back-generate every masked record; returns (records, summary).

    masked_records are dicts with id / masked_render (masking module
    output).  Rejected responses are retried up to `retries` times with a
    fresh sample; only accepted trees carry a result tree.
    """
    out = []
    summary = BatchSummary()
    for rec in masked_records:
        masked = parse_masked(rec["masked_render"])
        demos = select_demos(masked, demo_pool, num_demos)
        request = build_backgen_prompt(masked, demos, model=model, temperature=temperature)
        report, tree, raw = None, None, ""
        for _attempt in range(retries + 1):
            raw = client.complete(request)
            report, tree = validate_backgen_output(masked, raw)
            if report.status is Status.ACCEPTED:
                break
        record = BackGenRecord(
            rec_id=rec.get("id"),
            masked_render=rec["masked_render"],
            llm_raw=raw,
            status=report.status,
            detail=report.detail,
            tree=tree,
            domain=rec.get("domain"),
        )
        summary.add(report.status)
        out.append(record)
    return out, summary


def write_backgen_outputs(records, treebank_path, audit_path=None) -> None:
    """Accepted trees to the treebank file; full audit log as JSON lines."""
    with open(treebank_path, "w", encoding="utf-8") as f:
        for rec in records:
            if rec.status is Status.ACCEPTED:
                f.write(render_bracketed(rec.tree) + "\n")
    if audit_path:
        with open(audit_path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps({
                    "id": rec.rec_id,
                    "status": rec.status.value,
                    "detail": rec.detail,
                    "raw": rec.llm_raw,
                }, ensure_ascii=False) + "\n")


def build_parse_prompt(sentence, demos=(), model="gpt-4", temperature=1.0) -> dict:
    """Direct-parsing baseline prompt with bracketed tree demonstrations."""
    blocks = [SYSTEM_PROMPT,
              "Produce the bracketed constituency parse of the given sentence."]
    for tree in demos:
        blocks.append("%s\n%s" % (" ".join(tree.words()), render_bracketed(tree)))
    return {
        "model": model,
        "temperature": temperature,
        "messages": [
            {"role": "system", "content": "\n\n".join(blocks)},
            {"role": "user", "content": " ".join(sentence.words)},
        ],
    }


def parse_llm_parse_output(sentence, llm_raw: str):
    """Validate a direct-parsing response: brackets and exact yield."""
    try:
        tree = parse_bracketed(llm_raw.strip())
    except UnmatchedBrackets as exc:
        return ValidationReport(Status.UNMATCHED_BRACKETS, str(exc)), None
    except Exception as exc:
        return ValidationReport(Status.STRUCTURE_MISMATCH, str(exc)), None
    if tuple(tree.words()) != tuple(sentence.words):
        return ValidationReport(Status.STRUCTURE_MISMATCH, "yield differs from input"), None
    return ValidationReport(Status.ACCEPTED), tree
