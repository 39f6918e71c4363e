"""Desk-scale models over flat parameter vectors.

Three kinds share one interface:

* ``window_tagger``     per-token softmax over concatenated context-window
                        embeddings (out-of-range positions contribute zeros)
* ``rnn_crf_tagger``    bidirectional single-layer tanh RNN, concatenated
                        states projected to emissions, linear-chain CRF on top
* ``relation_classifier``  mean-pooled token embeddings with two learned
                        span-marker vectors added at the entity positions,
                        then a tanh hidden layer and a softmax head

Losses are mean-per-item negative log-likelihood and every gradient is exact
(checked against central finite differences in the test suite).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import crf
from .params import Layout, ParamVector

MODEL_KINDS = ("window_tagger", "rnn_crf_tagger", "relation_classifier")


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to lay out and run one model; parameter count is a
    pure function of these fields."""

    kind: str
    vocab_size: int
    label_count: int
    embed_dim: int
    hidden_dim: int = 1
    window_radius: int = 0  # window_tagger only

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name in ("vocab_size", "label_count", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.window_radius < 0:
            raise ValueError("window_radius must be >= 0")


@dataclass(frozen=True)
class TagExample:
    """One encoded sentence: parallel int arrays of token and label ids."""

    token_ids: np.ndarray
    label_ids: np.ndarray


@dataclass(frozen=True)
class RelationExample:
    """One encoded relation instance: token ids, two inclusive entity spans,
    and a gold label id."""

    token_ids: np.ndarray
    span1: tuple[int, int]
    span2: tuple[int, int]
    label_id: int


@dataclass
class LossGrad:
    loss: float
    grad: ParamVector


def segment_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Ordered segment name -> array shape for the given model kind."""
    V, L = spec.vocab_size, spec.label_count
    d, h, r = spec.embed_dim, spec.hidden_dim, spec.window_radius
    if spec.kind == "window_tagger":
        return {
            "embed": (V, d),
            "out_w": ((2 * r + 1) * d, L),
            "out_b": (L,),
        }
    if spec.kind == "rnn_crf_tagger":
        return {
            "embed": (V, d),
            "rnn_fw_x": (d, h),
            "rnn_fw_h": (h, h),
            "rnn_fw_b": (h,),
            "rnn_bw_x": (d, h),
            "rnn_bw_h": (h, h),
            "rnn_bw_b": (h,),
            "emit_w": (2 * h, L),
            "emit_b": (L,),
            "crf_trans": (L, L),
        }
    return {
        "embed": (V, d),
        "marker1": (d,),
        "marker2": (d,),
        "hidden_w": (d, h),
        "hidden_b": (h,),
        "out_w": (h, L),
        "out_b": (L,),
    }


def param_layout(spec: ModelSpec) -> Layout:
    layout: Layout = {}
    offset = 0
    for name, shape in segment_shapes(spec).items():
        length = int(np.prod(shape))
        layout[name] = (offset, length)
        offset += length
    return layout


def param_count(spec: ModelSpec) -> int:
    return sum(length for _, length in param_layout(spec).values())


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Deterministic init: each segment uniform(-s, s) with
    s = sqrt(6 / (fan_in + fan_out)); the CRF transition table starts at zero."""
    rng = np.random.default_rng(seed)
    w = ParamVector(np.zeros(param_count(spec)), param_layout(spec))
    for name, shape in segment_shapes(spec).items():
        if name == "crf_trans":
            continue
        if len(shape) == 2:
            fan_in, fan_out = shape
        else:
            fan_in = fan_out = shape[0]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w.segment(name)[:] = rng.uniform(-s, s, size=int(np.prod(shape)))
    return w


def _check_weights(spec: ModelSpec, w: ParamVector) -> None:
    if w.layout != param_layout(spec):
        raise ValueError("weight layout does not match the model spec")


def _check_token_ids(spec: ModelSpec, token_ids: np.ndarray) -> None:
    if token_ids.ndim != 1 or token_ids.size < 1:
        raise ValueError("token_ids must be a non-empty 1-D array")
    if token_ids.min() < 0 or token_ids.max() >= spec.vocab_size:
        raise ValueError("token id out of range for the model vocabulary")


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# window tagger

def _window_features(spec: ModelSpec, embed: np.ndarray, token_ids: np.ndarray) -> np.ndarray:
    T, d, r = token_ids.size, spec.embed_dim, spec.window_radius
    X = embed[token_ids]
    F = np.zeros((T, (2 * r + 1) * d))
    for k, off in enumerate(range(-r, r + 1)):
        lo, hi = max(0, -off), min(T, T - off)
        F[lo:hi, k * d : (k + 1) * d] = X[lo + off : hi + off]
    return F


def _window_loss_grad(spec: ModelSpec, w: ParamVector, item: TagExample, grad: ParamVector) -> float:
    embed = w.segment("embed", segment_shapes(spec)["embed"])
    out_w = w.segment("out_w", segment_shapes(spec)["out_w"])
    out_b = w.segment("out_b")
    T, d, r = item.token_ids.size, spec.embed_dim, spec.window_radius

    F = _window_features(spec, embed, item.token_ids)
    probs = _softmax_rows(F @ out_w + out_b)
    gold = probs[np.arange(T), item.label_ids]
    loss = float(-np.log(gold).sum())

    d_logits = probs
    d_logits[np.arange(T), item.label_ids] -= 1.0
    grad.segment("out_b")[:] += d_logits.sum(axis=0)
    grad.segment("out_w", out_w.shape)[:] += F.T @ d_logits
    dF = d_logits @ out_w.T
    dX = np.zeros((T, d))
    for k, off in enumerate(range(-r, r + 1)):
        lo, hi = max(0, -off), min(T, T - off)
        dX[lo + off : hi + off] += dF[lo:hi, k * d : (k + 1) * d]
    np.add.at(grad.segment("embed", embed.shape), item.token_ids, dX)
    return loss


def _window_logits(spec: ModelSpec, w: ParamVector, token_ids: np.ndarray) -> np.ndarray:
    embed = w.segment("embed", segment_shapes(spec)["embed"])
    out_w = w.segment("out_w", segment_shapes(spec)["out_w"])
    F = _window_features(spec, embed, token_ids)
    return F @ out_w + w.segment("out_b")


# ---------------------------------------------------------------------------
# bidirectional RNN + CRF

def _rnn_states(
    pre: np.ndarray, w_hh: np.ndarray, reverse: bool
) -> np.ndarray:
    """Run a tanh recurrence over pre-computed input projections."""
    T, h = pre.shape
    states = np.empty((T, h))
    prev = np.zeros(h)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        prev = np.tanh(pre[t] + prev @ w_hh)
        states[t] = prev
    return states


def _rnn_backward(
    d_states: np.ndarray,
    states: np.ndarray,
    X: np.ndarray,
    w_x: np.ndarray,
    w_hh: np.ndarray,
    reverse: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT through one direction; returns (dX, d_w_x, d_w_hh, d_b)."""
    T, h = states.shape
    d_w_x = np.zeros_like(w_x)
    d_w_hh = np.zeros_like(w_hh)
    d_b = np.zeros(h)
    dX = np.zeros_like(X)
    carry = np.zeros(h)
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        g = (d_states[t] + carry) * (1.0 - states[t] ** 2)
        prev_idx = t + 1 if reverse else t - 1
        prev = states[prev_idx] if 0 <= prev_idx < T else np.zeros(h)
        d_w_x += np.outer(X[t], g)
        d_w_hh += np.outer(prev, g)
        d_b += g
        dX[t] = g @ w_x.T
        carry = g @ w_hh.T
    return dX, d_w_x, d_w_hh, d_b


def _rnn_emissions(
    spec: ModelSpec, w: ParamVector, token_ids: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    shapes = segment_shapes(spec)
    seg = {name: w.segment(name, shape) for name, shape in shapes.items()}
    X = seg["embed"][token_ids]
    fw = _rnn_states(X @ seg["rnn_fw_x"] + seg["rnn_fw_b"], seg["rnn_fw_h"], reverse=False)
    bw = _rnn_states(X @ seg["rnn_bw_x"] + seg["rnn_bw_b"], seg["rnn_bw_h"], reverse=True)
    H = np.concatenate([fw, bw], axis=1)
    emissions = H @ seg["emit_w"] + seg["emit_b"]
    cache = {"X": X, "fw": fw, "bw": bw, "H": H, **seg}
    return emissions, cache


def _rnn_crf_loss_grad(
    spec: ModelSpec, w: ParamVector, item: TagExample, grad: ParamVector
) -> float:
    h = spec.hidden_dim
    emissions, c = _rnn_emissions(spec, w, item.token_ids)
    loss, d_em, d_trans = crf.nll_and_grads(emissions, c["crf_trans"], item.label_ids)

    grad.segment("crf_trans", c["crf_trans"].shape)[:] += d_trans
    grad.segment("emit_b")[:] += d_em.sum(axis=0)
    grad.segment("emit_w", c["emit_w"].shape)[:] += c["H"].T @ d_em
    dH = d_em @ c["emit_w"].T

    dX_f, d_wx_f, d_wh_f, d_b_f = _rnn_backward(
        dH[:, :h], c["fw"], c["X"], c["rnn_fw_x"], c["rnn_fw_h"], reverse=False
    )
    dX_b, d_wx_b, d_wh_b, d_b_b = _rnn_backward(
        dH[:, h:], c["bw"], c["X"], c["rnn_bw_x"], c["rnn_bw_h"], reverse=True
    )
    grad.segment("rnn_fw_x", d_wx_f.shape)[:] += d_wx_f
    grad.segment("rnn_fw_h", d_wh_f.shape)[:] += d_wh_f
    grad.segment("rnn_fw_b")[:] += d_b_f
    grad.segment("rnn_bw_x", d_wx_b.shape)[:] += d_wx_b
    grad.segment("rnn_bw_h", d_wh_b.shape)[:] += d_wh_b
    grad.segment("rnn_bw_b")[:] += d_b_b
    np.add.at(grad.segment("embed", c["embed"].shape), item.token_ids, dX_f + dX_b)
    return loss


# ---------------------------------------------------------------------------
# relation classifier

def _check_span(span: tuple[int, int], T: int, which: str) -> None:
    s, e = span
    if not (0 <= s <= e < T):
        raise ValueError(f"{which} [{s}, {e}] out of range for a {T}-token sentence")


def _relation_forward(
    spec: ModelSpec, w: ParamVector, item: RelationExample
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    shapes = segment_shapes(spec)
    seg = {name: w.segment(name, shape) for name, shape in shapes.items()}
    T = item.token_ids.size
    _check_span(item.span1, T, "span1")
    _check_span(item.span2, T, "span2")

    pooled = seg["embed"][item.token_ids].sum(axis=0)
    len1 = item.span1[1] - item.span1[0] + 1
    len2 = item.span2[1] - item.span2[0] + 1
    pooled = (pooled + len1 * seg["marker1"] + len2 * seg["marker2"]) / T
    hidden = np.tanh(pooled @ seg["hidden_w"] + seg["hidden_b"])
    logits = hidden @ seg["out_w"] + seg["out_b"]
    cache = {"pooled": pooled, "hidden": hidden, "len1": len1, "len2": len2, **seg}
    return logits, cache


def _relation_loss_grad(
    spec: ModelSpec, w: ParamVector, item: RelationExample, grad: ParamVector
) -> float:
    logits, c = _relation_forward(spec, w, item)
    probs = _softmax_rows(logits)
    loss = float(-np.log(probs[item.label_id]))

    d_logits = probs
    d_logits[item.label_id] -= 1.0
    grad.segment("out_b")[:] += d_logits
    grad.segment("out_w", c["out_w"].shape)[:] += np.outer(c["hidden"], d_logits)
    d_hidden = (d_logits @ c["out_w"].T) * (1.0 - c["hidden"] ** 2)
    grad.segment("hidden_b")[:] += d_hidden
    grad.segment("hidden_w", c["hidden_w"].shape)[:] += np.outer(c["pooled"], d_hidden)

    T = item.token_ids.size
    d_pooled = (d_hidden @ c["hidden_w"].T) / T
    grad.segment("marker1")[:] += c["len1"] * d_pooled
    grad.segment("marker2")[:] += c["len2"] * d_pooled
    np.add.at(
        grad.segment("embed", c["embed"].shape),
        item.token_ids,
        np.broadcast_to(d_pooled, (T, spec.embed_dim)),
    )
    return loss


# ---------------------------------------------------------------------------
# public interface

Batch = Sequence[TagExample] | Sequence[RelationExample]


def _validate_item(spec: ModelSpec, item: TagExample | RelationExample) -> None:
    _check_token_ids(spec, item.token_ids)
    if spec.kind == "relation_classifier":
        if not isinstance(item, RelationExample):
            raise ValueError("relation_classifier expects RelationExample items")
        if not 0 <= item.label_id < spec.label_count:
            raise ValueError(f"label id {item.label_id} out of range")
    else:
        if not isinstance(item, TagExample):
            raise ValueError(f"{spec.kind} expects TagExample items")
        if item.label_ids.shape != item.token_ids.shape:
            raise ValueError("token and label arrays differ in length")
        if item.label_ids.min() < 0 or item.label_ids.max() >= spec.label_count:
            raise ValueError("label id out of range")


def loss_and_grad(spec: ModelSpec, w: ParamVector, batch: Batch) -> LossGrad:
    """Mean per-item NLL over the batch and the matching exact gradient."""
    _check_weights(spec, w)
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    grad = w.zeros_like()
    total = 0.0
    for item in batch:
        _validate_item(spec, item)
        if spec.kind == "window_tagger":
            total += _window_loss_grad(spec, w, item, grad)
        elif spec.kind == "rnn_crf_tagger":
            total += _rnn_crf_loss_grad(spec, w, item, grad)
        else:
            total += _relation_loss_grad(spec, w, item, grad)
    grad.values /= len(batch)
    return LossGrad(loss=total / len(batch), grad=grad)


def predict_tags(spec: ModelSpec, w: ParamVector, token_ids: np.ndarray) -> np.ndarray:
    """Label ids for one sentence; ties break toward the lowest label index."""
    _check_weights(spec, w)
    token_ids = np.asarray(token_ids)
    _check_token_ids(spec, token_ids)
    if spec.kind == "window_tagger":
        return _window_logits(spec, w, token_ids).argmax(axis=1)
    if spec.kind == "rnn_crf_tagger":
        emissions, cache = _rnn_emissions(spec, w, token_ids)
        return crf.viterbi(emissions, cache["crf_trans"])
    raise ValueError(f"{spec.kind} does not tag sentences")


def predict_relation(spec: ModelSpec, w: ParamVector, item: RelationExample) -> int:
    """Argmax relation label id; ties break toward the lowest index."""
    _check_weights(spec, w)
    if spec.kind != "relation_classifier":
        raise ValueError(f"{spec.kind} does not classify relations")
    _check_token_ids(spec, item.token_ids)
    logits, _ = _relation_forward(spec, w, item)
    return int(logits.argmax())
