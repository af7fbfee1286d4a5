"""Dominance embeddings for star subgraphs.

A single-head graph-attention encoder maps a star (center + 1-hop
neighbors) to a non-negative vector ``o``. Training enforces the
containment constraint: for every proper substructure ``s`` of a star
``g``, ``o(s) <= o(g)`` element-wise. The squared hinge

    L = sum ||max(0, o(s) - o(g))||_2^2

is zero exactly when the constraint holds on every training pair.
Element-wise order on these vectors is then a sound pruning test for
structural containment during path matching.

Two backends share the embedding contract:

* ``GatModel`` — the trained encoder (plain mini-batch gradient descent,
  analytic gradients, deterministic under a seed).
* ``CountOracle`` — a training-free surrogate that buckets leaf labels
  by hash and counts them; removing leaves can only decrease counts, so
  dominance holds by construction. It decouples matcher-correctness
  tests from training quality.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, KgmatchError, StateMismatchError
from .graph import Graph, StarSubgraph, enumerate_substructures, star_subgraph

LEAKY_SLOPE = 0.2


@dataclass
class ModelParams:
    w_in: np.ndarray  # (F_hidden, F)
    attn: np.ndarray  # (2*F_hidden,)
    w_out: np.ndarray  # (d, F_hidden)
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_in.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w_out.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.w_in.copy(), self.attn.copy(), self.w_out.copy(), dict(self.meta))

    def to_json(self) -> dict:
        return {
            "F": self.input_dim,
            "F_hidden": self.hidden_dim,
            "d": self.out_dim,
            "W_in": self.w_in.tolist(),
            "a": self.attn.tolist(),
            "W_out": self.w_out.tolist(),
            "meta": self.meta,
        }

    def save(self, path: str | FsPath) -> None:
        FsPath(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @staticmethod
    def from_json(obj: Mapping) -> "ModelParams":
        p = ModelParams(
            np.asarray(obj["W_in"], dtype=float),
            np.asarray(obj["a"], dtype=float),
            np.asarray(obj["W_out"], dtype=float),
            dict(obj.get("meta", {})),
        )
        if p.attn.shape != (2 * p.hidden_dim,):
            raise StateMismatchError("attention vector length must be 2*F_hidden")
        return p

    @staticmethod
    def load(path: str | FsPath) -> "ModelParams":
        return ModelParams.from_json(json.loads(FsPath(path).read_text(encoding="utf-8")))


def init_params(
    input_dim: int, hidden_dim: int = 32, out_dim: int = 8, seed: int = 0
) -> ModelParams:
    rng = np.random.default_rng(seed)
    scale_in = 1.0 / math.sqrt(input_dim)
    scale_out = 1.0 / math.sqrt(hidden_dim)
    return ModelParams(
        rng.standard_normal((hidden_dim, input_dim)) * scale_in,
        rng.standard_normal(2 * hidden_dim) * scale_out,
        rng.standard_normal((out_dim, hidden_dim)) * scale_out,
        {"seed": seed},
    )


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    max_epochs: int = 5000
    batch_size: int = 16
    tolerance: float = 1e-6
    seed: int = 0
    hidden_dim: int = 32
    out_dim: int = 8
    substructure_cap: int = 32

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise InputError("learning rate must be positive")
        if self.tolerance < 0:
            raise InputError("loss tolerance must be non-negative")


# -- forward / backward ----------------------------------------------------


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def gat_node_update(
    center_x: np.ndarray, leaf_xs: np.ndarray, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """One attention update of the star center: returns (x'_center, alpha).

    Attention scores are LeakyReLU(a^T [W x_center || W x_leaf]),
    softmax-normalized over the leaves. A leafless star attends to
    itself with weight 1.
    """
    fh = params.hidden_dim
    z_c = params.w_in @ center_x
    if leaf_xs.size == 0:
        return _relu(z_c), np.ones(0)
    z_l = leaf_xs @ params.w_in.T  # (n_leaves, F_hidden)
    a_l, a_r = params.attn[:fh], params.attn[fh:]
    raw = a_l @ z_c + z_l @ a_r
    scores = np.where(raw > 0, raw, LEAKY_SLOPE * raw)
    scores = scores - scores.max()
    expw = np.exp(scores)
    alpha = expw / expw.sum()
    return _relu(alpha @ z_l), alpha


class _StarCache:
    """Forward intermediates needed for the backward pass."""

    __slots__ = (
        "center_x", "leaf_xs", "z_c", "z_l", "u", "alpha", "m", "hc", "rc", "y", "pre_out", "out",
    )


def _forward_star(
    center_x: np.ndarray, leaf_xs: np.ndarray, params: ModelParams
) -> _StarCache:
    c = _StarCache()
    c.center_x = center_x
    c.leaf_xs = leaf_xs
    fh = params.hidden_dim
    c.z_c = params.w_in @ center_x
    if leaf_xs.size == 0:
        c.z_l = np.zeros((0, fh))
        c.u = np.zeros(0)
        c.alpha = np.zeros(0)
        c.m = c.z_c
        c.hc = _relu(c.z_c)
        c.rc = None
        c.y = c.hc
    else:
        c.z_l = leaf_xs @ params.w_in.T
        a_l, a_r = params.attn[:fh], params.attn[fh:]
        c.u = a_l @ c.z_c + c.z_l @ a_r
        scores = np.where(c.u > 0, c.u, LEAKY_SLOPE * c.u)
        scores = scores - scores.max()
        expw = np.exp(scores)
        c.alpha = expw / expw.sum()
        c.m = c.alpha @ c.z_l
        c.hc = _relu(c.m)
        # every leaf's only in-star neighbor is the center, so each
        # updated leaf representation is relu(W_in x_center)
        c.rc = _relu(c.z_c)
        c.y = c.hc + len(leaf_xs) * c.rc
    c.pre_out = params.w_out @ c.y
    c.out = _relu(c.pre_out)
    return c


def _backward_star(
    cache: _StarCache, g_out: np.ndarray, params: ModelParams, grads: dict[str, np.ndarray]
) -> None:
    fh = params.hidden_dim
    g_pre = g_out * (cache.pre_out > 0)
    grads["w_out"] += np.outer(g_pre, cache.y)
    g_y = params.w_out.T @ g_pre
    if cache.leaf_xs.size == 0:
        g_zc = g_y * (cache.z_c > 0)
        grads["w_in"] += np.outer(g_zc, cache.center_x)
        return
    n = len(cache.leaf_xs)
    g_zc = n * g_y * (cache.z_c > 0)  # through the leaf updates
    g_m = g_y * (cache.m > 0)
    g_alpha = cache.z_l @ g_m
    g_zl = np.outer(cache.alpha, g_m)
    # softmax + leaky-relu scoring
    g_scores = cache.alpha * (g_alpha - float(cache.alpha @ g_alpha))
    g_u = g_scores * np.where(cache.u > 0, 1.0, LEAKY_SLOPE)
    a_l, a_r = params.attn[:fh], params.attn[fh:]
    grads["attn"][:fh] += g_u.sum() * cache.z_c
    grads["attn"][fh:] += g_u @ cache.z_l
    g_zc = g_zc + g_u.sum() * a_l
    g_zl = g_zl + np.outer(g_u, a_r)
    grads["w_in"] += np.outer(g_zc, cache.center_x)
    grads["w_in"] += g_zl.T @ cache.leaf_xs


def star_embedding(
    star: StarSubgraph, inputs: Mapping[str, np.ndarray], params: ModelParams
) -> np.ndarray:
    """Dominance embedding of a star under the trained encoder.

    A vertex's own embedding is defined as the embedding of its full
    star; substructures reuse the same forward with a leaf subset.
    """
    center_x = np.asarray(inputs[star.center], dtype=float)
    leaf_ids = sorted(star.leaves)
    leaf_xs = (
        np.stack([np.asarray(inputs[v], dtype=float) for v in leaf_ids])
        if leaf_ids
        else np.zeros((0, params.input_dim))
    )
    return _forward_star(center_x, leaf_xs, params).out


# -- loss and training -------------------------------------------------------

TrainPair = tuple[StarSubgraph, StarSubgraph]  # (full star, proper substructure)


def _check_pair(full: StarSubgraph, sub: StarSubgraph) -> None:
    if sub.center != full.center or not sub.leaves < full.leaves:
        raise InputError(
            f"substructure of {full.center!r} must share the center and drop leaves"
        )


def dominance_loss(
    pairs: Sequence[TrainPair], inputs: Mapping[str, np.ndarray], params: ModelParams
) -> float:
    """Squared hinge over all pairs; zero iff o(sub) <= o(full) everywhere."""
    total = 0.0
    for full, sub in pairs:
        _check_pair(full, sub)
        o_full = star_embedding(full, inputs, params)
        o_sub = star_embedding(sub, inputs, params)
        viol = np.maximum(0.0, o_sub - o_full)
        total += float(viol @ viol)
    return total


def _pair_loss_and_grads(
    pairs: Sequence[TrainPair],
    inputs: Mapping[str, np.ndarray],
    params: ModelParams,
    grads: dict[str, np.ndarray],
) -> float:
    total = 0.0
    for full, sub in pairs:
        cf = _forward_star(
            np.asarray(inputs[full.center], dtype=float),
            _leaf_matrix(full, inputs, params),
            params,
        )
        cs = _forward_star(
            np.asarray(inputs[sub.center], dtype=float),
            _leaf_matrix(sub, inputs, params),
            params,
        )
        viol = np.maximum(0.0, cs.out - cf.out)
        total += float(viol @ viol)
        if viol.any():
            _backward_star(cs, 2.0 * viol, params, grads)
            _backward_star(cf, -2.0 * viol, params, grads)
    return total


def _leaf_matrix(
    star: StarSubgraph, inputs: Mapping[str, np.ndarray], params: ModelParams
) -> np.ndarray:
    ids = sorted(star.leaves)
    if not ids:
        return np.zeros((0, params.input_dim))
    return np.stack([np.asarray(inputs[v], dtype=float) for v in ids])


def loss_gradients(
    pairs: Sequence[TrainPair], inputs: Mapping[str, np.ndarray], params: ModelParams
) -> tuple[float, dict[str, np.ndarray]]:
    """Analytic gradients of the hinge loss w.r.t. all parameters."""
    for full, sub in pairs:
        _check_pair(full, sub)
    grads = {
        "w_in": np.zeros_like(params.w_in),
        "attn": np.zeros_like(params.attn),
        "w_out": np.zeros_like(params.w_out),
    }
    loss = _pair_loss_and_grads(pairs, inputs, params, grads)
    return loss, grads


def finite_difference_gradients(
    pairs: Sequence[TrainPair],
    inputs: Mapping[str, np.ndarray],
    params: ModelParams,
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central finite differences over every parameter entry (test oracle)."""
    out: dict[str, np.ndarray] = {}
    for name in ("w_in", "attn", "w_out"):
        arr = getattr(params, name)
        grad = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = dominance_loss(pairs, inputs, params)
            flat[i] = orig - step
            down = dominance_loss(pairs, inputs, params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def training_pairs(
    g: Graph, cap: int = 32, seed: int = 0
) -> list[TrainPair]:
    """All (star, substructure) pairs over the graph, capped per star."""
    pairs: list[TrainPair] = []
    for vid in sorted(g.vertices):
        star = star_subgraph(g, vid)
        if not star.leaves:
            continue
        for sub in enumerate_substructures(star, cap=cap, seed=seed):
            pairs.append((star, sub))
    return pairs


@dataclass
class TrainResult:
    params: ModelParams
    epochs_run: int
    final_loss: float
    max_violation: float
    converged: bool
    loss_history: list[float] = field(default_factory=list)


def _max_violation(
    pairs: Sequence[TrainPair], inputs: Mapping[str, np.ndarray], params: ModelParams
) -> float:
    worst = 0.0
    for full, sub in pairs:
        diff = star_embedding(sub, inputs, params) - star_embedding(full, inputs, params)
        worst = max(worst, float(diff.max(initial=0.0)))
    return worst


def train(
    g: Graph, inputs: Mapping[str, np.ndarray], cfg: TrainConfig
) -> TrainResult:
    """Mini-batch gradient descent to zero the dominance hinge.

    The pair set is shuffled once up front; batches are fixed across
    epochs, so a fixed seed reproduces the run bit for bit. Stops when
    the full-dataset epoch loss drops to ``cfg.tolerance``; otherwise
    returns the best parameters seen with ``converged=False``.
    """
    if len(g.vertices) == 0:
        raise InputError("cannot train on an empty graph")
    pairs = training_pairs(g, cap=cfg.substructure_cap, seed=cfg.seed)
    if not pairs:
        raise InputError("graph has no stars with leaves; nothing to train on")
    input_dim = len(next(iter(inputs.values())))
    params = init_params(input_dim, cfg.hidden_dim, cfg.out_dim, seed=cfg.seed)

    order = list(range(len(pairs)))
    random.Random(cfg.seed).shuffle(order)
    batches = [
        [pairs[i] for i in order[k : k + cfg.batch_size]]
        for k in range(0, len(order), cfg.batch_size)
    ]

    best = params.copy()
    best_loss = math.inf
    history: list[float] = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        for batch in batches:
            loss, grads = loss_gradients(batch, inputs, params)
            if math.isnan(loss):
                raise KgmatchError(f"training diverged (NaN loss) at epoch {epoch}")
            params.w_in -= cfg.learning_rate * grads["w_in"]
            params.attn -= cfg.learning_rate * grads["attn"]
            params.w_out -= cfg.learning_rate * grads["w_out"]
        epoch_loss = dominance_loss(pairs, inputs, params)
        if math.isnan(epoch_loss):
            raise KgmatchError(f"training diverged (NaN loss) at epoch {epoch}")
        history.append(epoch_loss)
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best = params.copy()
        if epoch_loss <= cfg.tolerance:
            break
    converged = best_loss <= cfg.tolerance
    best.meta.update(
        {"seed": cfg.seed, "epochs": epoch, "final_loss": best_loss, "converged": converged}
    )
    return TrainResult(
        params=best,
        epochs_run=epoch,
        final_loss=best_loss,
        max_violation=_max_violation(pairs, inputs, best),
        converged=converged,
        loss_history=history,
    )


# -- path-level embeddings ----------------------------------------------------


def path_dominance_embedding(
    vertex_ids: Sequence[str], node_embeddings: Mapping[str, np.ndarray]
) -> np.ndarray:
    """Position-ordered concatenation of per-vertex dominance embeddings."""
    parts = []
    for vid in vertex_ids:
        if vid not in node_embeddings:
            raise InputError(f"no dominance embedding for path vertex {vid!r}")
        parts.append(np.asarray(node_embeddings[vid], dtype=float))
    return np.concatenate(parts)


# -- embedder backends ---------------------------------------------------------


def _bucket(label: str, buckets: int) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


class NodeEmbedder:
    """Maps a star (center label + leaf labels) to a dominance embedding.

    Star embeddings depend only on labels and leaf multiplicity, so a
    label-preserving injection of one star into another maps to the
    corresponding substructure embedding exactly.
    """

    out_dim: int

    def embed_star(self, center_label: str, leaf_labels: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def embed_graph_vertex(self, g: Graph, vid: str) -> np.ndarray:
        labels = sorted(g.label(n) for n in g.adjacency[vid])
        return self.embed_star(g.label(vid), labels)


class CountOracle(NodeEmbedder):
    """Training-free surrogate: leaf-label bucket counts + a center flag.

    Dimension ``k < d-1`` counts leaves whose label hashes to bucket k;
    the last dimension is the constant center-presence flag. Dropping a
    leaf strictly decreases exactly one bucket, so every substructure's
    vector is dominated by its star's.
    """

    def __init__(self, out_dim: int = 8):
        if out_dim < 2:
            raise InputError("count oracle needs >= 2 dimensions")
        self.out_dim = out_dim

    def embed_star(self, center_label: str, leaf_labels: Sequence[str]) -> np.ndarray:
        vec = np.zeros(self.out_dim)
        for lab in leaf_labels:
            vec[_bucket(lab, self.out_dim - 1)] += 1.0
        vec[self.out_dim - 1] = 1.0
        return vec


class GatEmbedder(NodeEmbedder):
    """Trained-model backend; input embeddings come from a label provider."""

    def __init__(self, params: ModelParams, label_provider) -> None:
        self.params = params
        self.provider = label_provider
        self.out_dim = params.out_dim

    def embed_star(self, center_label: str, leaf_labels: Sequence[str]) -> np.ndarray:
        center_x = self.provider.embed(center_label)
        ordered = sorted(leaf_labels)
        leaf_xs = (
            np.stack([self.provider.embed(lab) for lab in ordered])
            if ordered
            else np.zeros((0, self.params.input_dim))
        )
        return _forward_star(center_x, leaf_xs, self.params).out


def count_oracle_embedding(vid: str, g: Graph, out_dim: int = 8) -> np.ndarray:
    """Count-oracle dominance embedding of a data vertex's full star."""
    return CountOracle(out_dim).embed_graph_vertex(g, vid)


def graph_dominance_embeddings(g: Graph, embedder: NodeEmbedder) -> dict[str, np.ndarray]:
    return {vid: embedder.embed_graph_vertex(g, vid) for vid in g.vertices}
