"""Simulated federation: C clients, one server, head-only exchange.

Encoder parameters (embeddings + aggregation weights) never leave their
client.  The only values that cross the client boundary are head-module
snapshots and scalar evaluation scores; ``current_scope`` tracks whose
state the orchestrator is allowed to touch so tests can audit the
boundary structurally.

Five regimes are supported: purely local training, federated head
averaging (optionally with last-layer fine-tuning), and adaptive-group
averaging where clients first cross-evaluate each other's heads and only
federate within mutually compatible groups.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import EmptyInput, ShapeMismatch
from .evalstats import evaluate_client, pooled_auc
from .kg import EdgeSplit, KnowledgeGraph, RelationType, SplitPart, Triple, split_edges
from .nn import AdamState, HeadModule, adam_step, init_adam
from .sage import Direction, ModelParams, init_model, loss_and_grads
from .seeding import derive_seed, mix


class Variant(Enum):
    LOCAL = "LocalM"
    FLAVG = "FLavg"
    FLAVG_FT = "FLavgFT"
    ADAP_FLAVG = "AdapFLavg"
    ADAP_FLAVG_FT = "AdapFLavgFT"

    @property
    def finetunes(self) -> bool:
        return self in (Variant.FLAVG_FT, Variant.ADAP_FLAVG_FT)

    @property
    def adaptive(self) -> bool:
        return self in (Variant.ADAP_FLAVG, Variant.ADAP_FLAVG_FT)


@dataclass
class FederationConfig:
    rounds: int
    local_epochs_per_round: int
    variant: Variant
    adapfl_delta: float = 0.02
    finetune_epochs: int | None = None  # defaults to local_epochs_per_round

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs_per_round < 0:
            raise ValueError("local_epochs_per_round must be >= 0")
        if self.adapfl_delta < 0:
            raise ValueError("adapfl_delta must be >= 0")

    @property
    def ft_epochs(self) -> int:
        return (
            self.finetune_epochs
            if self.finetune_epochs is not None
            else self.local_epochs_per_round
        )


@dataclass
class ClientState:
    """One country: its graph, splits, parameters, and optimizer state."""

    id: str
    kg: KnowledgeGraph
    split: EdgeSplit
    params: ModelParams
    adam: AdamState
    seed: int
    epochs_done: int = 0
    total_optimizer_steps: int = 0
    loss_trace: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    client_id: str
    variant: Variant
    train_loss: float
    val_auc: dict[RelationType, float]


@dataclass(frozen=True)
class GroupingResult:
    cross_eval: np.ndarray
    groups: tuple[tuple[str, ...], ...]


@dataclass
class FederationResult:
    clients: list["ClientState"]
    records: list["RoundRecord"]
    grouping: GroupingResult | None


_SERVER = "<server>"
_active_scope: contextvars.ContextVar[str | None] = contextvars.ContextVar(
    "fgsim_active_scope", default=None
)


def current_scope() -> str | None:
    """Whose state the orchestrator is currently operating on."""
    return _active_scope.get()


@contextlib.contextmanager
def _scope(owner: str):
    token = _active_scope.set(owner)
    try:
        yield
    finally:
        _active_scope.reset(token)


def make_client(
    client_id: str,
    kg: KnowledgeGraph,
    *,
    dim: int = 32,
    k_layers: int = 2,
    k_sample: int = 10,
    learning_rate: float = 0.01,
    direction: Direction = Direction.BOTH,
    final_activation: str = "relu",
    split_ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    split_seed: int | None = None,
    negatives_mode: str = "tail",
) -> ClientState:
    """Build a fully initialized client deterministically from its seed.

    ``split_seed`` pins the edge split independently of the model seed, so
    repetitions can reinitialize parameters over a fixed data partition.
    """
    split = split_edges(
        kg,
        ratios=split_ratios,
        seed=split_seed if split_seed is not None else derive_seed(seed, "split"),
        negatives_mode=negatives_mode,
    )
    params = init_model(
        kg,
        dim=dim,
        k_layers=k_layers,
        k_sample=k_sample,
        seed=derive_seed(seed, "init"),
        direction=direction,
        final_activation=final_activation,
    )
    adam = init_adam(params.as_dict(), learning_rate)
    return ClientState(id=client_id, kg=kg, split=split, params=params, adam=adam, seed=seed)


def _train_batch(client: ClientState) -> list[tuple[Triple, int]]:
    batch: list[tuple[Triple, int]] = []
    for relation in RelationType:
        for t in client.split.positives[SplitPart.TRAIN].get(relation, ()):
            batch.append((t, 1))
        for t in client.split.negatives[SplitPart.TRAIN].get(relation, ()):
            batch.append((t, 0))
    return batch


def local_train(client: ClientState, epochs: int) -> ClientState:
    """Full-batch training: one loss/gradient pass + Adam step per epoch.

    Neighbor samples are redrawn each epoch from a seed derived from the
    client seed and a global epoch counter, so chunking a budget into
    rounds does not change the trajectory.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    with _scope(client.id):
        batch = _train_batch(client)
        tensors = client.params.as_dict()
        for _ in range(epochs):
            epoch_seed = mix(client.seed, 0x5A3E, client.epochs_done)
            loss, grads = loss_and_grads(
                client.params.encoder, client.params.head, client.kg, batch, epoch_seed
            )
            tensors, client.adam = adam_step(tensors, grads, client.adam)
            client.params = client.params.with_tensors(tensors)
            client.epochs_done += 1
            client.total_optimizer_steps += 1
            client.loss_trace.append(loss)
    return client


def average_heads(heads: list[HeadModule]) -> HeadModule:
    """Unweighted elementwise mean of every weight and bias."""
    if not heads:
        raise EmptyInput("cannot average zero heads")
    first = heads[0]
    for other in heads[1:]:
        for i in range(3):
            if (
                other.weights[i].shape != first.weights[i].shape
                or other.biases[i].shape != first.biases[i].shape
            ):
                raise ShapeMismatch("heads differ in layer shapes")
        if other.final_activation != first.final_activation:
            raise ShapeMismatch("heads differ in final activation")
    return HeadModule(
        weights=[np.mean([h.weights[i] for h in heads], axis=0) for i in range(3)],
        biases=[np.mean([h.biases[i] for h in heads], axis=0) for i in range(3)],
        final_activation=first.final_activation,
    )


def fine_tune_last_layer(client: ClientState, epochs: int) -> ClientState:
    """Adapt only the head's last layer; everything else stays bit-identical.

    Uses fresh Adam moments for the two tuned tensors; the client's main
    optimizer state is untouched.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    tuned = ("head.2.W", "head.2.b")
    with _scope(client.id):
        batch = _train_batch(client)
        sub = {name: client.params.as_dict()[name] for name in tuned}
        ft_adam = init_adam(sub, client.adam.learning_rate)
        for _ in range(epochs):
            epoch_seed = mix(client.seed, 0x5A3E, client.epochs_done)
            loss, grads = loss_and_grads(
                client.params.encoder, client.params.head, client.kg, batch, epoch_seed
            )
            sub, ft_adam = adam_step(sub, {name: grads[name] for name in tuned}, ft_adam)
            tensors = client.params.as_dict()
            tensors.update(sub)
            client.params = client.params.with_tensors(tensors)
            client.epochs_done += 1
            client.total_optimizer_steps += 1
            client.loss_trace.append(loss)
    return client


def cross_evaluate(clients: list[ClientState]) -> np.ndarray:
    """M[i][j]: client i's validation ROC-AUC using client j's head.

    Each entry is computed with client i's own encoder and data; only the
    head snapshot crosses the boundary, and only a scalar comes back.
    """
    n = len(clients)
    matrix = np.zeros((n, n))
    head_snapshots = []
    for client in clients:
        with _scope(client.id):
            head_snapshots.append(client.params.head.copy())
    for i, client in enumerate(clients):
        with _scope(client.id):
            for j in range(n):
                matrix[i, j] = pooled_auc(client, SplitPart.VALID, head=head_snapshots[j])
    return matrix


def form_groups(matrix: np.ndarray, delta: float) -> list[list[int]]:
    """Connected components of the mutual-compatibility relation.

    Clients i and j are compatible when each scores within ``delta`` of its
    own-head validation score while using the other's head.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if matrix[i, j] >= matrix[i, i] - delta and matrix[j, i] >= matrix[j, j] - delta:
                parent[find(i)] = find(j)
    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(find(i), []).append(i)
    return sorted(components.values(), key=lambda group: group[0])


def run_federation(clients: list[ClientState], config: FederationConfig) -> FederationResult:
    """Run one regime over the given clients.

    Per round every client trains locally, then the server averages head
    snapshots (within adaptive groups when applicable) and broadcasts the
    result back.  Adaptive variants first spend a full local budget, use it
    to cross-evaluate and group once, and restart head training from each
    group's averaged pre-trained head.  Fine-tuning variants adapt the last
    head layer after the final round.  Round records carry the last
    training loss of the round plus per-relation validation ROC-AUC.
    """
    if not clients:
        raise EmptyInput("need at least one client")
    _check_head_shapes(clients)
    records: list[RoundRecord] = []
    grouping: GroupingResult | None = None
    round_counter = 0

    groups: list[list[int]] = [list(range(len(clients)))]
    if config.variant.adaptive:
        for _ in range(config.rounds):
            round_counter += 1
            for client in clients:
                local_train(client, config.local_epochs_per_round)
                records.append(_round_record(client, round_counter, config.variant))
        matrix = cross_evaluate(clients)
        groups = form_groups(matrix, config.adapfl_delta)
        grouping = GroupingResult(
            cross_eval=matrix,
            groups=tuple(tuple(clients[i].id for i in group) for group in groups),
        )
        with _scope(_SERVER):
            _exchange_heads(clients, groups)

    for _ in range(config.rounds):
        round_counter += 1
        for client in clients:
            local_train(client, config.local_epochs_per_round)
            records.append(_round_record(client, round_counter, config.variant))
        if config.variant is not Variant.LOCAL:
            with _scope(_SERVER):
                _exchange_heads(clients, groups)

    if config.variant.finetunes:
        round_counter += 1
        for client in clients:
            fine_tune_last_layer(client, config.ft_epochs)
            records.append(_round_record(client, round_counter, config.variant))
    return FederationResult(clients=clients, records=records, grouping=grouping)


def _exchange_heads(clients: list[ClientState], groups: list[list[int]]) -> None:
    """Average head snapshots within each group and broadcast back."""
    for group in groups:
        averaged = average_heads([clients[i].params.head for i in group])
        for i in group:
            clients[i].params = ModelParams(
                encoder=clients[i].params.encoder, head=averaged.copy()
            )


def _round_record(client: ClientState, round_index: int, variant: Variant) -> RoundRecord:
    with _scope(client.id):
        val = evaluate_client(client, SplitPart.VALID)
        train_loss = client.loss_trace[-1] if client.loss_trace else float("nan")
    return RoundRecord(
        round_index=round_index,
        client_id=client.id,
        variant=variant,
        train_loss=train_loss,
        val_auc={relation: pair.roc_auc for relation, pair in val.items()},
    )


def _check_head_shapes(clients: list[ClientState]) -> None:
    first = clients[0].params.head
    for client in clients[1:]:
        head = client.params.head
        for i in range(3):
            if head.weights[i].shape != first.weights[i].shape:
                raise ShapeMismatch(
                    f"client {client.id}: head layer {i} shape {head.weights[i].shape} "
                    f"!= {first.weights[i].shape}"
                )
