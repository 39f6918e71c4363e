"""Prompt construction and offline scoring of language-model responses.

Responses never come from a live service: callers collect them elsewhere and
feed back line-delimited records.  For tagging, responses echo the sentence
with entities wrapped in a configurable HTML tag; parsing recovers spans by
aligning each highlighted substring to the original token sequence.  For
relation instances, responses map to labels by case-insensitive containment
of the label name, with a reserved abstain label for everything unmapped.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .evaluation import EntitySpan, EvalReport, re_report, score_ner
from .tasks import NerItem, ReItem

ABSTAIN_LABEL = "<abstain>"

NER_TEMPLATE = (
    "Task: the task is to extract {etype} entities in a sentence\n"
    "Input: the input is a sentence.\n"
    "Output: the output is an HTML that highlights all the {etype} entities in "
    "the sentence. The highlighting should only use HTML tags <{tag}> and "
    "</{tag}> and no other tags.\n"
)

RE_TEMPLATE = (
    "Task: the task is to determine the {domain} relation between two entities "
    "in a sentence\n"
    "Input: the input is a sentence followed by the two entity mentions.\n"
    "Output: the output is the name of the relation between the two entities.\n"
)

# stock one-shot exemplar for disease tagging; tags are substituted at render time
EXEMPLAR_SENTENCE = (
    "In summary, inactivation of the murine ATP7B gene produces a form of "
    "cirrhotic liver disease that resembles Wilson disease in humans and toxic "
    "milk phenotype in the mouse"
)
_EXEMPLAR_ENTITIES = ("cirrhotic liver disease", "Wilson disease")


def default_ner_exemplar(tag: str) -> tuple[str, str]:
    """(input, highlighted output) pair for one-shot disease prompts."""
    highlighted = EXEMPLAR_SENTENCE
    for ent in _EXEMPLAR_ENTITIES:
        highlighted = highlighted.replace(ent, f"<{tag}>{ent}</{tag}>")
    return EXEMPLAR_SENTENCE, highlighted


@dataclass(frozen=True)
class PromptSpec:
    """How to phrase one request.

    ``entity_type`` is the entity noun for tagging prompts ("disease") and
    the relation domain for relation prompts ("gene-disease"); ``tag`` is the
    HTML tag name the response must use, always spelled explicitly in the
    prompt because it has no meaningful default.
    """

    task: str  # "ner" or "re"
    entity_type: str
    tag: str
    shot: str = "zero"  # "zero" or "one"
    exemplar: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if self.task not in ("ner", "re"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.entity_type:
            raise ValueError("entity_type must be non-empty")
        if self.task == "ner" and not re.fullmatch(r"[A-Za-z][A-Za-z0-9]*", self.tag):
            raise ValueError(f"tag {self.tag!r} is not a usable HTML tag name")
        if self.shot not in ("zero", "one"):
            raise ValueError(f"shot must be 'zero' or 'one', got {self.shot!r}")
        if self.shot == "one" and self.exemplar is None:
            raise ValueError("one-shot prompts need an exemplar")


def build_prompt(spec: PromptSpec, text: str) -> str:
    """Template lines, the optional Example block, then the query input."""
    if not text:
        raise ValueError("empty input text")
    if spec.task == "ner":
        prompt = NER_TEMPLATE.format(etype=spec.entity_type, tag=spec.tag)
    else:
        prompt = RE_TEMPLATE.format(domain=spec.entity_type)
    if spec.shot == "one":
        ex_in, ex_out = spec.exemplar
        prompt += f"Example:\nInput: {ex_in}\nOutput: {ex_out}\n"
    return prompt + f"Input: {text}"


@dataclass
class HighlightDiagnostics:
    """Tally of recovery events while parsing one batch of responses."""

    dropped: int = 0
    unclosed: int = 0
    nested: int = 0
    stray_close: int = 0

    def add(self, other: "HighlightDiagnostics") -> None:
        self.dropped += other.dropped
        self.unclosed += other.unclosed
        self.nested += other.nested
        self.stray_close += other.stray_close


def _highlight_regions(response: str, tag: str, diag: HighlightDiagnostics) -> list[str]:
    """Text between <tag>...</tag> pairs.  Nested opens flatten into the
    enclosing region, stray closes are ignored, an unclosed open runs to the
    end of the response."""
    regions: list[str] = []
    depth = 0
    start = 0
    for m in re.finditer(rf"</?{re.escape(tag)}>", response):
        is_close = m.group(0).startswith("</")
        if not is_close:
            if depth == 0:
                start = m.end()
            else:
                diag.nested += 1
            depth += 1
        else:
            if depth == 0:
                diag.stray_close += 1
                continue
            depth -= 1
            if depth == 0:
                regions.append(response[start : m.start()])
    if depth > 0:
        diag.unclosed += 1
        regions.append(response[start:])
    # drop any flattened inner markers left inside a region
    pattern = re.compile(rf"</?{re.escape(tag)}>")
    return [pattern.sub(" ", r) for r in regions]


def _find_subsequence(haystack: Sequence[str], needle: Sequence[str], start: int) -> int:
    n = len(needle)
    for i in range(start, len(haystack) - n + 1):
        if list(haystack[i : i + n]) == list(needle):
            return i
    return -1


def parse_highlights(
    response: str,
    tokens: Sequence[str],
    entity_label: str,
    tag: str,
    diagnostics: HighlightDiagnostics | None = None,
    casefold: bool = False,
) -> list[EntitySpan]:
    """Spans for the highlighted regions of one response.

    Each region is whitespace-tokenized and aligned to the original sentence
    by its longest contiguous token run that appears there, searching left to
    right past the previous match; regions with no token match are dropped
    and counted.  ``casefold`` switches to case-insensitive alignment (off by
    default; kept for sensitivity checks).
    """
    diag = diagnostics if diagnostics is not None else HighlightDiagnostics()
    haystack = [t.casefold() for t in tokens] if casefold else list(tokens)
    spans: list[EntitySpan] = []
    cursor = 0
    for region in _highlight_regions(response, tag, diag):
        words = region.split()
        if casefold:
            words = [w.casefold() for w in words]
        placed = False
        for n in range(len(words), 0, -1):
            for off in range(0, len(words) - n + 1):
                needle = words[off : off + n]
                at = _find_subsequence(haystack, needle, cursor)
                if at < 0 and cursor > 0:
                    at = _find_subsequence(haystack, needle, 0)
                if at >= 0:
                    spans.append(EntitySpan(entity_label, at, at + n - 1))
                    cursor = at + n
                    placed = True
                    break
            if placed:
                break
        if not placed:
            diag.dropped += 1
    return spans


def render_highlights(tokens: Sequence[str], spans: Sequence[EntitySpan], tag: str) -> str:
    """Echo the sentence with span tokens wrapped in <tag>...</tag>."""
    opens = {s.start: s for s in spans}
    closes = {s.end for s in spans}
    parts = []
    for i, tok in enumerate(tokens):
        piece = tok
        if i in opens:
            piece = f"<{tag}>{piece}"
        if i in closes:
            piece = f"{piece}</{tag}>"
        parts.append(piece)
    return " ".join(parts)


def sample_test_subset(items: Sequence, n: int, seed: int) -> list:
    """Uniform sample without replacement; n equal to the set size shuffles."""
    if n < 1:
        raise ValueError("subset size must be >= 1")
    if n > len(items):
        raise ValueError(f"cannot sample {n} items from {len(items)}")
    order = np.random.default_rng(seed).permutation(len(items))
    return [items[i] for i in order[:n]]


@dataclass
class ResponseRecord:
    id: int
    response: str


def write_responses(records: Iterable[ResponseRecord]) -> str:
    return "".join(
        json.dumps({"id": r.id, "response": r.response}, sort_keys=True) + "\n"
        for r in records
    )


def read_responses(text: str | bytes) -> list[ResponseRecord]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    records = []
    seen: set[int] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = ResponseRecord(id=int(obj["id"]), response=str(obj["response"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: bad response record ({exc})") from None
        if rec.id in seen:
            raise ValueError(f"line {lineno}: duplicate response id {rec.id}")
        seen.add(rec.id)
        records.append(rec)
    return records


@dataclass
class LlmScore:
    report: EvalReport
    diagnostics: HighlightDiagnostics = field(default_factory=HighlightDiagnostics)


def score_ner_responses(
    subset: Sequence[NerItem],
    records: Sequence[ResponseRecord],
    entity_label: str,
    tag: str,
    casefold: bool = False,
) -> LlmScore:
    """Score highlight responses against the gold subset; ids index the
    subset in order.  Gold spans collapse to the single prompted entity type,
    matching what the responses can express."""
    by_id = {r.id: r for r in records}
    missing = [i for i in range(len(subset)) if i not in by_id]
    if missing:
        raise ValueError(f"missing responses for ids {missing}")
    diag = HighlightDiagnostics()
    gold, pred = [], []
    for i, item in enumerate(subset):
        gold.append([EntitySpan(entity_label, s.start, s.end) for s in item.gold_spans])
        pred.append(
            parse_highlights(
                by_id[i].response, item.sentence.tokens, entity_label, tag,
                diagnostics=diag, casefold=casefold,
            )
        )
    return LlmScore(report=score_ner(gold, pred), diagnostics=diag)


def map_relation_response(response: str, labels: Sequence[str]) -> str:
    """Case-insensitive containment of the label name; longest label wins,
    anything unmapped becomes the abstain label."""
    low = response.casefold()
    for label in sorted(labels, key=lambda l: (-len(l), l)):
        if label.casefold() in low:
            return label
    return ABSTAIN_LABEL


def score_re_responses(
    subset: Sequence[ReItem], records: Sequence[ResponseRecord], labels: Sequence[str]
) -> LlmScore:
    by_id = {r.id: r for r in records}
    missing = [i for i in range(len(subset)) if i not in by_id]
    if missing:
        raise ValueError(f"missing responses for ids {missing}")
    gold = [item.instance.label for item in subset]
    pred = [map_relation_response(by_id[i].response, labels) for i in range(len(subset))]
    return LlmScore(report=re_report(gold, pred))
