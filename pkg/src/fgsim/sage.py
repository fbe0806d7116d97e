"""GraphSAGE-style encoder over a typed knowledge graph.

Each node starts from a learnable embedding row.  Every layer draws a
fixed-size neighbor sample per node, averages the node's own previous
representation with its sampled neighbors', applies a learned linear map,
and clips through ReLU.  A pair of final representations is scored by the
shared head: sigmoid(f(h_head) . f(h_tail)).

Forward and backward passes are written out explicitly (no autodiff);
gradients flow through the scorer, the head, the mean aggregations, and
into exactly the embedding rows touched by the sampled computation graphs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch
from .kg import Direction, KnowledgeGraph, Triple
from .nn import HeadModule, _backward_from_cache, _head_forward_cache, bce_loss, init_head
from .seeding import mix

# Sigmoid saturates past this point; matching the BCE probability clamp,
# the loss gradient is exactly zero there.
_CLAMP_LOGIT = -np.log(1e-12)


@dataclass
class EncoderParams:
    """Client-local encoder state: embeddings plus one weight per layer."""

    embeddings: np.ndarray
    layers: list[np.ndarray]
    k_sample: int
    direction: Direction = Direction.BOTH

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def k_layers(self) -> int:
        return len(self.layers)

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            embeddings=self.embeddings.copy(),
            layers=[w.copy() for w in self.layers],
            k_sample=self.k_sample,
            direction=self.direction,
        )


@dataclass
class ModelParams:
    """Full per-client parameter set: local encoder + shareable head."""

    encoder: EncoderParams
    head: HeadModule

    def as_dict(self) -> dict[str, np.ndarray]:
        tensors = {"emb": self.encoder.embeddings}
        for i, w in enumerate(self.encoder.layers):
            tensors[f"sage.{i}.W"] = w
        for i in range(3):
            tensors[f"head.{i}.W"] = self.head.weights[i]
            tensors[f"head.{i}.b"] = self.head.biases[i]
        return tensors

    def with_tensors(self, tensors: dict[str, np.ndarray]) -> "ModelParams":
        """Same hyperparameters, new tensor values."""
        encoder = replace(
            self.encoder,
            embeddings=tensors["emb"],
            layers=[tensors[f"sage.{i}.W"] for i in range(self.encoder.k_layers)],
        )
        head = HeadModule(
            weights=[tensors[f"head.{i}.W"] for i in range(3)],
            biases=[tensors[f"head.{i}.b"].reshape(-1) for i in range(3)],
            final_activation=self.head.final_activation,
        )
        return ModelParams(encoder=encoder, head=head)

    def copy(self) -> "ModelParams":
        return ModelParams(encoder=self.encoder.copy(), head=self.head.copy())


def init_model(
    kg: KnowledgeGraph,
    dim: int,
    k_layers: int,
    k_sample: int,
    seed: int,
    direction: Direction = Direction.BOTH,
    final_activation: str = "relu",
) -> ModelParams:
    """Fresh parameters for one client, fully determined by the seed."""
    rng = np.random.default_rng(seed)
    embeddings = rng.normal(0.0, 1.0, size=(kg.num_nodes, dim))
    layers = [rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, dim)) for _ in range(k_layers)]
    encoder = EncoderParams(
        embeddings=embeddings, layers=layers, k_sample=k_sample, direction=direction
    )
    head = init_head(dim, seed=mix(seed, 0xEAD), final_activation=final_activation)
    return ModelParams(encoder=encoder, head=head)


def sample_neighborhood(
    kg: KnowledgeGraph, node: int, k_sample: int, direction: Direction, seed: int
) -> tuple[int, ...]:
    """Uniform sample (without replacement) of up to k distinct neighbors."""
    nbrs = kg.distinct_neighbors(node, direction)
    if len(nbrs) <= k_sample:
        return nbrs
    rng = random.Random(seed)
    return tuple(rng.sample(nbrs, k_sample))


def _aggregation_matrix(
    kg: KnowledgeGraph, params: EncoderParams, layer: int, seed: int
) -> sp.csr_matrix:
    """Row v averages v itself with its sampled neighbors at this layer."""
    n = kg.num_nodes
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for v in range(n):
        sampled = sample_neighborhood(
            kg, v, params.k_sample, params.direction, seed=mix(seed, layer, v)
        )
        weight = 1.0 / (1 + len(sampled))
        rows.append(v)
        cols.append(v)
        vals.append(weight)
        for u in sampled:
            rows.append(v)
            cols.append(u)
            vals.append(weight)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _forward_all(params: EncoderParams, kg: KnowledgeGraph, seed: int):
    """All-node representations per layer, with caches for backprop."""
    if params.embeddings.shape[0] != kg.num_nodes:
        raise DimensionMismatch(
            f"embedding table has {params.embeddings.shape[0]} rows; graph has {kg.num_nodes} nodes"
        )
    h = params.embeddings
    agg_mats = []
    aggregated = []
    masks = []
    hs = [h]
    for layer, w in enumerate(params.layers):
        if w.shape[1] != h.shape[1]:
            raise DimensionMismatch(
                f"layer {layer} expects input dim {w.shape[1]}, got {h.shape[1]}"
            )
        a = _aggregation_matrix(kg, params, layer, seed)
        m = a @ h
        z = m @ w.T
        mask = z > 0.0
        h = np.where(mask, z, 0.0)
        agg_mats.append(a)
        aggregated.append(m)
        masks.append(mask)
        hs.append(h)
    return hs, agg_mats, aggregated, masks


def encode(
    params: EncoderParams, kg: KnowledgeGraph, nodes: Sequence[int], seed: int
) -> np.ndarray:
    """Final-layer representations for the requested nodes."""
    hs, _, _, _ = _forward_all(params, kg, seed)
    return hs[-1][np.asarray(nodes, dtype=np.intp)].copy()


def _encoder_backward(
    d_final: np.ndarray,
    params: EncoderParams,
    caches,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Propagate output-representation gradients down to embeddings."""
    _, agg_mats, aggregated, masks = caches
    d_h = d_final
    layer_grads: list[np.ndarray] = [np.zeros_like(w) for w in params.layers]
    for layer in reversed(range(params.k_layers)):
        d_z = d_h * masks[layer]
        layer_grads[layer] = d_z.T @ aggregated[layer]
        d_h = agg_mats[layer].T @ (d_z @ params.layers[layer])
    return d_h, layer_grads


def _sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def score_links(
    encoder_out_head: np.ndarray, encoder_out_tail: np.ndarray, head_module: HeadModule
) -> float:
    """sigmoid(f(h_head) . f(h_tail)) for one pair of representations."""
    hi = np.asarray(encoder_out_head, dtype=np.float64)
    hj = np.asarray(encoder_out_tail, dtype=np.float64)
    if hi.shape != hj.shape:
        raise DimensionMismatch(f"representation shapes differ: {hi.shape} vs {hj.shape}")
    fi, _ = _head_forward_cache(head_module, hi)
    fj, _ = _head_forward_cache(head_module, hj)
    return float(_sigmoid(np.array([fi @ fj]))[0])


def score_pairs(
    params: EncoderParams,
    head: HeadModule,
    kg: KnowledgeGraph,
    triples: Sequence[Triple],
    seed: int,
) -> np.ndarray:
    """Predicted probabilities for a batch of (head, relation, tail) triples."""
    hs, _, _, _ = _forward_all(params, kg, seed)
    final = hs[-1]
    heads = np.fromiter((t.head for t in triples), dtype=np.intp, count=len(triples))
    tails = np.fromiter((t.tail for t in triples), dtype=np.intp, count=len(triples))
    f_all, _ = _head_forward_cache(head, final)
    return _sigmoid(np.einsum("ij,ij->i", f_all[heads], f_all[tails]))


def loss_and_grads(
    params: EncoderParams,
    head: HeadModule,
    kg: KnowledgeGraph,
    batch: Sequence[tuple[Triple, int]],
    seed: int,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over the batch plus exact gradients for every tensor.

    Embedding rows outside all sampled computation graphs get zero
    gradient; where the probability clamp saturates, so does the gradient
    (keeping analytic and finite-difference values consistent).
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    caches = _forward_all(params, kg, seed)
    final = caches[0][-1]
    heads = np.fromiter((t.head for t, _ in batch), dtype=np.intp, count=len(batch))
    tails = np.fromiter((t.tail for t, _ in batch), dtype=np.intp, count=len(batch))
    labels = np.fromiter((y for _, y in batch), dtype=np.float64, count=len(batch))

    x_heads = final[heads]
    x_tails = final[tails]
    f_heads, cache_h = _head_forward_cache(head, x_heads)
    f_tails, cache_t = _head_forward_cache(head, x_tails)
    logits = np.einsum("ij,ij->i", f_heads, f_tails)
    probs = _sigmoid(logits)
    loss = bce_loss(probs, labels)

    d_logit = (probs - labels) / len(batch)
    d_logit[np.abs(logits) > _CLAMP_LOGIT] = 0.0
    d_f_heads = d_logit[:, None] * f_tails
    d_f_tails = d_logit[:, None] * f_heads
    head_grads_h, d_x_heads = _backward_from_cache(head, cache_h, d_f_heads)
    head_grads_t, d_x_tails = _backward_from_cache(head, cache_t, d_f_tails)

    d_final = np.zeros_like(final)
    np.add.at(d_final, heads, d_x_heads)
    np.add.at(d_final, tails, d_x_tails)
    d_emb, layer_grads = _encoder_backward(d_final, params, caches)

    grads = {"emb": d_emb}
    for i, g in enumerate(layer_grads):
        grads[f"sage.{i}.W"] = g
    for i in range(3):
        grads[f"head.{i}.W"] = head_grads_h[i][0] + head_grads_t[i][0]
        grads[f"head.{i}.b"] = head_grads_h[i][1] + head_grads_t[i][1]
    return loss, grads
