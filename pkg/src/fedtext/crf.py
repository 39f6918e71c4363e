"""Linear-chain CRF recursions over dense score matrices.

A path y_1..y_T scores sum_t emissions[t, y_t] + sum_{t>=1} transitions[y_{t-1}, y_t].
The log-partition runs the forward recursion in log space with a per-step max
subtraction, so it stays finite for any finite inputs.  Gradients of the
sentence negative log-likelihood come from forward-backward marginals.
"""
from __future__ import annotations

import numpy as np


def _check_scores(emissions: np.ndarray, transitions: np.ndarray) -> None:
    if emissions.ndim != 2 or emissions.shape[0] < 1 or emissions.shape[1] < 1:
        raise ValueError(f"emissions must be (T, L) with T, L >= 1, got {emissions.shape}")
    L = emissions.shape[1]
    if transitions.shape != (L, L):
        raise ValueError(
            f"transitions must be ({L}, {L}) to match emissions, got {transitions.shape}"
        )
    if not (np.isfinite(emissions).all() and np.isfinite(transitions).all()):
        raise ValueError("CRF scores must be finite")


def _lse(scores: np.ndarray, axis: int) -> np.ndarray:
    # log-sum-exp with max subtraction; inputs are finite by contract
    m = scores.max(axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.exp(scores - m).sum(axis=axis))
    return out


def path_score(emissions: np.ndarray, transitions: np.ndarray, labels: np.ndarray) -> float:
    """Score of one label path: emission terms plus consecutive-pair transitions."""
    T = emissions.shape[0]
    score = float(emissions[np.arange(T), labels].sum())
    if T > 1:
        score += float(transitions[labels[:-1], labels[1:]].sum())
    return score


def log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """Log of the sum of exp(path score) over all L**T label paths."""
    _check_scores(emissions, transitions)
    alpha = emissions[0].astype(np.float64)
    for t in range(1, emissions.shape[0]):
        alpha = emissions[t] + _lse(alpha[:, None] + transitions, axis=0)
    return float(_lse(alpha, axis=0))


def nll_and_grads(
    emissions: np.ndarray, transitions: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sentence NLL (logZ - gold score) and its gradients w.r.t. both score matrices.

    d nll / d emissions[t, j] = P(y_t = j) - [gold y_t = j]
    d nll / d transitions[i, j] = E[# i -> j steps] - #gold i -> j steps
    with expectations under the CRF distribution, via forward-backward.
    """
    _check_scores(emissions, transitions)
    T, L = emissions.shape
    labels = np.asarray(labels)
    if labels.shape != (T,):
        raise ValueError(f"labels must be ({T},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= L:
        raise ValueError("label id out of range for CRF")

    alpha = np.empty((T, L))
    alpha[0] = emissions[0]
    for t in range(1, T):
        alpha[t] = emissions[t] + _lse(alpha[t - 1][:, None] + transitions, axis=0)
    log_z = float(_lse(alpha[T - 1], axis=0))

    beta = np.zeros((T, L))
    for t in range(T - 2, -1, -1):
        beta[t] = _lse(transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)

    d_emissions = np.exp(alpha + beta - log_z)
    d_emissions[np.arange(T), labels] -= 1.0

    d_transitions = np.zeros((L, L))
    for t in range(1, T):
        d_transitions += np.exp(
            alpha[t - 1][:, None] + transitions + (emissions[t] + beta[t])[None, :] - log_z
        )
    if T > 1:
        np.subtract.at(d_transitions, (labels[:-1], labels[1:]), 1.0)

    nll = log_z - path_score(emissions, transitions, labels)
    return nll, d_emissions, d_transitions


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Highest-scoring label path; ties break toward the lowest label index."""
    _check_scores(emissions, transitions)
    T, L = emissions.shape
    delta = emissions[0].astype(np.float64)
    back = np.empty((T, L), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, None] + transitions  # cand[i, j]: best-so-far ending i, step to j
        back[t] = cand.argmax(axis=0)  # argmax takes the first maximum, i.e. lowest index
        delta = emissions[t] + cand[back[t], np.arange(L)]
    path = np.empty(T, dtype=np.intp)
    path[T - 1] = delta.argmax()
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path
