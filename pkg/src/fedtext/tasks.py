"""Glue between corpora, models, and scoring.

A Task owns the model spec plus the vocabularies built from the training
split, pre-encodes items once, and exposes the loss/predict/score calls the
federation loop needs without knowing about tags or spans itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import evaluation, models
from .corpus import (
    RelationInstance,
    TaggedSentence,
    Vocab,
    build_relation_index,
    build_tag_index,
    truncate,
)
from .evaluation import EvalReport, decode_bio
from .models import ModelSpec, RelationExample, TagExample
from .params import ParamVector, validate_layout


@dataclass(frozen=True)
class NerItem:
    sentence: TaggedSentence
    enc: TagExample
    gold_spans: tuple[evaluation.EntitySpan, ...]


@dataclass(frozen=True)
class ReItem:
    instance: RelationInstance
    enc: RelationExample


@dataclass
class Task:
    kind: str  # "ner" or "re"
    spec: ModelSpec
    vocab: Vocab
    label_names: list[str]
    max_tokens: int = 512

    @property
    def selection_metric(self) -> str:
        """Dev metric used to pick the best round."""
        return "strict_f1" if self.kind == "ner" else "macro_f1"

    # -- encoding ----------------------------------------------------------
    def prepare(self, items: Sequence[TaggedSentence] | Sequence[RelationInstance]) -> list:
        if self.kind == "ner":
            return [self._prepare_sentence(s) for s in items]
        return [self._prepare_instance(r) for r in items]

    def _prepare_sentence(self, sent: TaggedSentence) -> NerItem:
        sent = truncate(sent, self.max_tokens)
        label_ids = np.array(
            [self._label_id(tag) for tag in sent.labels], dtype=np.intp
        )
        enc = TagExample(self.vocab.encode(sent.tokens), label_ids)
        return NerItem(sent, enc, tuple(decode_bio(sent.labels)))

    def _prepare_instance(self, inst: RelationInstance) -> ReItem:
        if max(inst.span1[1], inst.span2[1]) >= self.max_tokens:
            raise ValueError("entity span falls outside the token limit")
        kept = RelationInstance(
            inst.tokens[: self.max_tokens], inst.span1, inst.span2, inst.label
        )
        enc = RelationExample(
            self.vocab.encode(kept.tokens), kept.span1, kept.span2, self._label_id(kept.label)
        )
        return ReItem(kept, enc)

    def _label_id(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise ValueError(f"label {name!r} not present in the training split") from None

    # -- training and scoring ---------------------------------------------
    def init_params(self, seed: int) -> ParamVector:
        return models.init_params(self.spec, seed)

    def loss_and_grad(self, w: ParamVector, items: Sequence) -> models.LossGrad:
        return models.loss_and_grad(self.spec, w, [it.enc for it in items])

    def predict_spans(self, w: ParamVector, item: NerItem) -> list[evaluation.EntitySpan]:
        ids = models.predict_tags(self.spec, w, item.enc.token_ids)
        return decode_bio([self.label_names[i] for i in ids])

    def predict_label(self, w: ParamVector, item: ReItem) -> str:
        return self.label_names[models.predict_relation(self.spec, w, item.enc)]

    def predict_tag_names(self, w: ParamVector, item: NerItem) -> list[str]:
        ids = models.predict_tags(self.spec, w, item.enc.token_ids)
        return [self.label_names[i] for i in ids]

    def evaluate(self, w: ParamVector, items: Sequence) -> EvalReport:
        if self.kind == "ner":
            gold = [list(it.gold_spans) for it in items]
            pred = [self.predict_spans(w, it) for it in items]
            return evaluation.score_ner(gold, pred)
        gold = [it.instance.label for it in items]
        pred = [self.predict_label(w, it) for it in items]
        return evaluation.re_report(gold, pred)

    def dev_scores(self, w: ParamVector, items: Sequence) -> dict[str, float]:
        report = self.evaluate(w, items)
        if self.kind == "ner":
            return {"strict_f1": report.strict_macro_f1, "lenient_f1": report.lenient_macro_f1}
        return {"macro_f1": report.strict_macro_f1}


def build_ner_task(
    train: Sequence[TaggedSentence],
    kind: str = "rnn_crf_tagger",
    embed_dim: int = 16,
    hidden_dim: int = 24,
    window_radius: int = 0,
    max_tokens: int = 512,
) -> Task:
    if not train:
        raise ValueError("cannot build a task from an empty training split")
    vocab = Vocab.build(s.tokens for s in train)
    labels = build_tag_index(train)
    spec = ModelSpec(
        kind=kind,
        vocab_size=len(vocab),
        label_count=len(labels),
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        window_radius=window_radius,
    )
    return Task(kind="ner", spec=spec, vocab=vocab, label_names=labels, max_tokens=max_tokens)


def build_re_task(
    train: Sequence[RelationInstance],
    embed_dim: int = 16,
    hidden_dim: int = 16,
    max_tokens: int = 512,
) -> Task:
    if not train:
        raise ValueError("cannot build a task from an empty training split")
    vocab = Vocab.build(r.tokens for r in train)
    labels = build_relation_index(train)
    spec = ModelSpec(
        kind="relation_classifier",
        vocab_size=len(vocab),
        label_count=len(labels),
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
    )
    return Task(kind="re", spec=spec, vocab=vocab, label_names=labels, max_tokens=max_tokens)


# ---------------------------------------------------------------------------
# model bundles: weights plus everything needed to run them elsewhere

def save_bundle(path, task: Task, w: ParamVector) -> None:
    meta = {
        "kind": task.kind,
        "spec": task.spec.__dict__,
        "labels": task.label_names,
        "max_tokens": task.max_tokens,
        "layout": {k: list(v) for k, v in w.layout.items()},
    }
    np.savez(
        path,
        values=w.values,
        tokens=np.array(task.vocab.tokens[1:], dtype=object),
        meta=np.array(json.dumps(meta, sort_keys=True)),
    )


def load_bundle(path) -> tuple[Task, ParamVector]:
    with np.load(path, allow_pickle=True) as data:
        meta = json.loads(str(data["meta"]))
        values = data["values"]
        tokens = [str(t) for t in data["tokens"]]
    spec = ModelSpec(**meta["spec"])
    # JSON round-trips sort the keys; restore the canonical offset order
    pairs = sorted(meta["layout"].items(), key=lambda kv: kv[1][0])
    layout = {k: (int(a), int(b)) for k, (a, b) in pairs}
    validate_layout(layout, values.size)
    task = Task(
        kind=meta["kind"],
        spec=spec,
        vocab=Vocab(tokens),
        label_names=list(meta["labels"]),
        max_tokens=int(meta["max_tokens"]),
    )
    return task, ParamVector(values, layout)
