"""FedAvg/FedProx round loop plus centralized and single-client baselines.

One round: every client copies the server weights, runs R epochs of
mini-batch updates on its own shard (optionally with the proximal penalty
anchored at the round-start weights), and the server takes the data-weighted
average of the results.  Client work depends only on (server weights, shard,
per-round seed), so execution order and scheduling never change the result;
the baselines reuse the same loop with a single client, which makes the
K=1 / centralized equivalence hold bit for bit.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .models import ModelSpec
from .optim import (
    OptimizerState,
    ProximalTerm,
    Schedule,
    apply_step,
    init_optimizer,
    lr_at,
    proximal_augment,
)
from .params import ParamVector, require_same_layout
from .tasks import Task


@dataclass(frozen=True)
class FederationConfig:
    spec: ModelSpec
    clients: int
    rounds: int
    batch_size: int
    local_epochs: int = 1
    mu: float = 0.0
    optimizer: str = "adam"
    base_lr: float = 1e-3
    warmup_frac: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.clients < 1:
            raise ValueError("clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must lie in [0, 1)")


def client_rng(seed: int, client_id: int, round_idx: int) -> np.random.Generator:
    """Fresh per-(client, round) generator; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence((seed, client_id, round_idx)))


@dataclass
class ClientState:
    id: int
    data: list
    weights: ParamVector
    opt: OptimizerState
    schedule: Schedule

    @property
    def n(self) -> int:
        return len(self.data)


@dataclass
class ServerState:
    weights: ParamVector
    round_idx: int = 0


@dataclass
class RunResult:
    best_weights: ParamVector
    final_weights: ParamVector
    best_round: int  # 0-based index into the histories
    round_losses: list[list[float]]  # per client, one entry per round
    epoch_losses: list[list[float]]  # per client, one entry per local epoch
    dev_history: list[dict[str, float]]
    weight_history: list[ParamVector]
    round_log: list[dict]
    wall_time: float

    def loss_curve(self, client: int = 0) -> list[float]:
        return self.epoch_losses[client]


def aggregate(weighted: Sequence[tuple[ParamVector, int]]) -> ParamVector:
    """Data-weighted average sum_k (n_k / n) w_k in the given order."""
    if not weighted:
        raise ValueError("nothing to aggregate")
    first = weighted[0][0]
    total = 0
    for w, n_k in weighted:
        require_same_layout(first, w, "aggregate")
        if n_k <= 0:
            raise ValueError("client example counts must be positive")
        total += n_k
    out = np.zeros(first.size)
    for w, n_k in weighted:
        out += (n_k / total) * w.values
    result = ParamVector(out, first.layout)
    result.check_finite("aggregated weights")
    return result


def _client_schedule(cfg: FederationConfig, n_items: int) -> Schedule:
    steps_per_epoch = math.ceil(n_items / cfg.batch_size)
    total = cfg.rounds * cfg.local_epochs * steps_per_epoch
    return Schedule(
        base_lr=cfg.base_lr,
        warmup_steps=int(round(cfg.warmup_frac * total)),
        total_steps=total,
    )


def local_update(
    task: Task,
    client: ClientState,
    global_weights: ParamVector,
    cfg: FederationConfig,
    round_idx: int,
) -> list[float]:
    """Train the client in place for one round; returns per-epoch mean losses.

    The proximal anchor is the round-start server weights; the recorded loss
    includes the penalty, so at mu = 0 it is the plain training loss.
    """
    weights = global_weights.copy()
    prox = ProximalTerm(cfg.mu, global_weights)
    rng = client_rng(cfg.seed, client.id, round_idx)
    opt = client.opt
    epoch_losses = []
    for _ in range(cfg.local_epochs):
        order = rng.permutation(client.n)
        batch_losses = []
        for lo in range(0, client.n, cfg.batch_size):
            batch = [client.data[i] for i in order[lo : lo + cfg.batch_size]]
            lg = task.loss_and_grad(weights, batch)
            lg = proximal_augment(lg, weights, prox)
            lr = lr_at(client.schedule, opt.step_count)
            opt, weights = apply_step(opt, weights, lg.grad, lr)
            batch_losses.append(lg.loss)
        epoch_losses.append(float(np.mean(batch_losses)))
    client.weights = weights
    client.opt = opt
    return epoch_losses


def _run_rounds(
    task: Task,
    cfg: FederationConfig,
    partitions: Sequence[Sequence],
    dev: Sequence,
    execution_order: Sequence[int] | None = None,
    max_workers: int = 1,
) -> RunResult:
    if cfg.clients != len(partitions):
        raise ValueError(
            f"config says {cfg.clients} clients but {len(partitions)} partitions given"
        )
    for i, part in enumerate(partitions):
        if not part:
            raise ValueError(f"partition {i} is empty")
    if not dev:
        raise ValueError("dev set is empty")
    order = list(execution_order) if execution_order is not None else list(range(cfg.clients))
    if sorted(order) != list(range(cfg.clients)):
        raise ValueError("execution_order must be a permutation of the client ids")

    start = time.perf_counter()
    server = ServerState(weights=task.init_params(cfg.seed))
    clients = [
        ClientState(
            id=i,
            data=list(part),
            weights=server.weights.copy(),
            opt=init_optimizer(cfg.optimizer, server.weights),
            schedule=_client_schedule(cfg, len(part)),
        )
        for i, part in enumerate(partitions)
    ]

    epoch_losses: list[list[float]] = [[] for _ in clients]
    round_losses: list[list[float]] = [[] for _ in clients]
    dev_history: list[dict[str, float]] = []
    weight_history: list[ParamVector] = []
    round_log: list[dict] = []

    for t in range(cfg.rounds):
        def run_one(cid: int) -> list[float]:
            return local_update(task, clients[cid], server.weights, cfg, t)

        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                futures = {cid: pool.submit(run_one, cid) for cid in order}
                losses_by_id = {cid: fut.result() for cid, fut in futures.items()}
        else:
            losses_by_id = {cid: run_one(cid) for cid in order}

        for c in clients:
            per_epoch = losses_by_id[c.id]
            epoch_losses[c.id].extend(per_epoch)
            round_losses[c.id].append(float(np.mean(per_epoch)))

        server.weights = aggregate([(c.weights, c.n) for c in clients])
        server.round_idx = t + 1
        scores = task.dev_scores(server.weights, dev)
        dev_history.append(scores)
        weight_history.append(server.weights)
        round_log.append(
            {
                "round": t + 1,
                "client_loss": [round_losses[c.id][-1] for c in clients],
                **scores,
            }
        )

    metric = task.selection_metric
    best_round = max(range(cfg.rounds), key=lambda t: (dev_history[t][metric], -t))
    return RunResult(
        best_weights=weight_history[best_round],
        final_weights=server.weights,
        best_round=best_round,
        round_losses=round_losses,
        epoch_losses=epoch_losses,
        dev_history=dev_history,
        weight_history=weight_history,
        round_log=round_log,
        wall_time=time.perf_counter() - start,
    )


def run_federated(
    task: Task,
    cfg: FederationConfig,
    partitions: Sequence[Sequence],
    dev: Sequence,
    execution_order: Sequence[int] | None = None,
    max_workers: int = 1,
) -> RunResult:
    """T rounds of FedAvg (mu = 0) or FedProx (mu > 0) with full participation."""
    return _run_rounds(task, cfg, partitions, dev, execution_order, max_workers)


def run_centralized(task: Task, cfg: FederationConfig, pooled: Sequence, dev: Sequence) -> RunResult:
    """One worker, the pooled data, rounds x local_epochs epochs, no penalty.

    Implemented as the same round loop with a single client, so under sgd it
    is update-for-update identical to a one-client federated run.
    """
    solo = replace(cfg, clients=1, mu=0.0)
    return _run_rounds(task, solo, [pooled], dev)


def run_single_client(
    task: Task, cfg: FederationConfig, partitions: Sequence[Sequence], dev: Sequence
) -> list[RunResult]:
    """Independent per-partition baselines: centralized training on each shard."""
    if not partitions:
        raise ValueError("no partitions given")
    return [run_centralized(task, cfg, part, dev) for part in partitions]
