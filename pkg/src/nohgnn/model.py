"""Stacked high-order message-passing layers and the link decoder.

Each layer multiplies the sparse aggregation tensor into the node tensor and
then into a per-layer weight tensor, both under the configured mode-3
transform; hidden layers apply ReLU and the final layer stays linear. The
decoder concatenates the two endpoint rows and maps 2F -> F -> 1 with a ReLU
hidden layer and a sigmoid output.
"""

from __future__ import annotations

import numpy as np

from nohgnn.errors import NumericError, ParameterError
from nohgnn.tape import Node, ParamStore, Tape, xavier_uniform
from nohgnn.tensor3 import SlicePattern, Transform

ACTIVATIONS = ("relu", "linear")

LAYER_NOISE_SCALE = 0.05


def init_model_params(
    store: ParamStore,
    n_nodes: int,
    dim: int,
    t_slots: int,
    n_layers: int,
    rng: np.random.Generator,
) -> None:
    """Register the node embedding, per-layer weight tensors, and decoder.

    The embedding and decoder are Xavier-uniform with zero biases; each
    layer's weight stack starts at the identity plus small Xavier noise.
    Near-identity propagation weights keep early-layer outputs on the scale
    of their inputs, so the squared-norm penalty cannot shrink every layer
    toward zero faster than the data signal grows. Everything is drawn in a
    fixed creation order so a given seed always produces the same values.
    """
    if n_layers < 1:
        raise ParameterError(f"layer count must be >= 1, got {n_layers}")
    if dim < 1 or n_nodes < 1 or t_slots < 1:
        raise ParameterError(
            f"n_nodes, dim, t_slots must be >= 1, got {n_nodes}, {dim}, {t_slots}"
        )
    store.add("embed.e", xavier_uniform(rng, n_nodes, dim, (n_nodes, dim)))
    eye = np.broadcast_to(np.eye(dim), (t_slots, dim, dim))
    for layer in range(1, n_layers + 1):
        noise = xavier_uniform(rng, dim, dim, (t_slots, dim, dim))
        store.add(f"layer{layer}.w", eye + LAYER_NOISE_SCALE * noise)
    store.add("dec.w1", xavier_uniform(rng, 2 * dim, dim, (2 * dim, dim)))
    store.add("dec.b1", np.zeros(dim))
    store.add("dec.w2", xavier_uniform(rng, dim, 1, (dim, 1)))
    store.add("dec.b2", np.zeros(1))


def propagate(
    tape: Tape, pattern: SlicePattern, weights: Node, h: Node, tf: Transform
) -> Node:
    """Aggregation tensor times node tensor under the transform.

    With the identity transform each slice multiplies independently. Under a
    mixing transform the sparse values are scattered onto the union support,
    transformed tube-wise, multiplied slice-wise against the transformed node
    tensor, and transformed back; the full dense N x N x T tensor is never
    materialized.
    """
    if tf.is_identity:
        return tape.spmm(pattern, weights, h)
    u_indptr, u_indices, _ = pattern.union
    p_stack = tape.scatter_to_union(weights, pattern)
    p_hat = tape.mode3(p_stack, tf.m)
    h_hat = tape.mode3(h, tf.m)
    prod = tape.spmm_shared(u_indptr, u_indices, p_hat, h_hat)
    return tape.mode3(prod, tf.minv)


def weight_product(tape: Tape, h: Node, w: Node, tf: Transform) -> Node:
    """Node tensor times a (T, F, F) weight stack under the transform."""
    if tf.is_identity:
        return tape.matmul(h, w)
    h_hat = tape.mode3(h, tf.m)
    w_hat = tape.mode3(w, tf.m)
    return tape.mode3(tape.matmul(h_hat, w_hat), tf.minv)


def forward(
    tape: Tape,
    leaves: dict[str, Node],
    pattern: SlicePattern,
    p_weights: Node,
    tf: Transform,
    n_layers: int,
    activation: str = "relu",
) -> Node:
    """Run the layer stack and return the (T, N, F) embedding node.

    ``activation`` is "relu" for the real model (hidden layers only; the last
    layer stays linear) or "linear" to bypass every nonlinearity in oracle
    tests.
    """
    if activation not in ACTIVATIONS:
        raise ParameterError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
    if n_layers < 1:
        raise ParameterError(f"layer count must be >= 1, got {n_layers}")
    h = tape.replicate(leaves["embed.e"], pattern.t_slots)
    for layer in range(1, n_layers + 1):
        spread = propagate(tape, pattern, p_weights, h, tf)
        h = weight_product(tape, spread, leaves[f"layer{layer}.w"], tf)
        if activation == "relu" and layer < n_layers:
            h = tape.relu(h)
        if not np.all(np.isfinite(h.value)):
            raise NumericError(f"layer {layer} produced non-finite activations")
    return h


def decode(
    tape: Tape,
    leaves: dict[str, Node],
    h: Node,
    pairs: np.ndarray,
) -> Node:
    """Link probabilities for (i, j, t) rows from the final embeddings."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    t_slots, n_nodes, dim = h.value.shape
    if len(pairs) == 0:
        raise ParameterError("decode needs at least one pair")
    if pairs.min() < 0 or pairs[:, :2].max() >= n_nodes or pairs[:, 2].max() >= t_slots:
        raise ParameterError("pair indices out of range")
    flat = tape.reshape(h, (t_slots * n_nodes, dim))
    rows_i = tape.gather_rows(flat, pairs[:, 2] * n_nodes + pairs[:, 0])
    rows_j = tape.gather_rows(flat, pairs[:, 2] * n_nodes + pairs[:, 1])
    both = tape.concat(rows_i, rows_j)
    hidden = tape.relu(tape.add(tape.matmul(both, leaves["dec.w1"]), leaves["dec.b1"]))
    logits = tape.add(tape.matmul(hidden, leaves["dec.w2"]), leaves["dec.b2"])
    return tape.sigmoid(tape.reshape(logits, (len(pairs),)))
