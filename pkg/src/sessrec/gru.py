"""The recurrent scoring network.

One or more GRU layers over 1-of-N (or discounted weighted-sum) session
input, with a tanh-activated linear output layer scoring items. Forward
stepping works on session-parallel mini-batches; the backward pass produces
gradients with the hidden state carried in from the previous step treated
as constant (truncated backpropagation, horizon one), output-weight
gradients restricted to the sampled score columns, and input-weight
gradients restricted to the rows of items present in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MiniBatch
from .linalg import make_rng, sigmoid, tanh_map, uniform_init
from .optim import dropout_mask

__all__ = [
    "HyperParams",
    "GruLayerParams",
    "NetworkParams",
    "HiddenState",
    "ForwardCache",
    "init_network",
    "gru_cell",
    "forward_step",
    "backward_step",
    "score_all",
    "apply_input_discounted",
]

INPUT_MODES = ("one_hot", "discounted_sum")


@dataclass
class HyperParams:
    """Training configuration. Defaults follow the best TOP1 parametrization
    on the e-commerce click data: batch 50, dropout 0.5, lr 0.01, momentum 0."""

    hidden_size: int = 100
    n_layers: int = 1
    batch_width: int = 50
    dropout_rate: float = 0.5
    learning_rate: float = 0.01
    momentum: float = 0.0
    loss_kind: str = "top1"
    optimizer_kind: str = "adagrad"
    rmsprop_decay: float = 0.9
    epochs: int = 10
    seed: int = 42
    input_mode: str = "one_hot"
    input_decay: float = 1.0
    deep_input: bool = False
    use_bias: bool = False
    init_scale: float | None = None

    def __post_init__(self):
        if self.hidden_size < 1 or self.n_layers < 1 or self.batch_width < 1:
            raise ValueError("hidden_size, n_layers and batch_width must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate out of [0, 1): {self.dropout_rate}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0: {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum out of [0, 1): {self.momentum}")
        if self.loss_kind not in ("top1", "bpr", "xent"):
            raise ValueError(f"unknown loss: {self.loss_kind}")
        if self.optimizer_kind not in ("adagrad", "rmsprop"):
            raise ValueError(f"unknown optimizer: {self.optimizer_kind}")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"unknown input mode: {self.input_mode}")
        if not 0.0 < self.input_decay <= 1.0:
            raise ValueError(f"input_decay out of (0, 1]: {self.input_decay}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class GruLayerParams:
    """Gate matrices of one layer.

    ``W_*`` map the layer input (item rows for the first layer, lower hidden
    state -- optionally with item rows appended -- for deeper layers) to the
    hidden space; ``U_*`` are the recurrent matrices. Biases are optional
    and absent by default.
    """

    W_z: np.ndarray
    W_r: np.ndarray
    W: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U: np.ndarray
    b_z: np.ndarray | None = None
    b_r: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]


@dataclass
class NetworkParams:
    n_items: int
    layers: list[GruLayerParams]
    W_out: np.ndarray  # (n_items, hidden of last layer)
    b_out: np.ndarray | None
    hyper: HyperParams

    def named_params(self):
        """(name, array) pairs for every trainable parameter."""
        out = []
        for i, lp in enumerate(self.layers):
            for nm in ("W_z", "W_r", "W", "U_z", "U_r", "U", "b_z", "b_r", "b"):
                arr = getattr(lp, nm)
                if arr is not None:
                    out.append((f"layers.{i}.{nm}", arr))
        out.append(("W_out", self.W_out))
        if self.b_out is not None:
            out.append(("b_out", self.b_out))
        return out


class HiddenState:
    """Per-layer hidden activations, one row per active session lane."""

    def __init__(self, layers: list[np.ndarray]):
        self.layers = layers

    @classmethod
    def zeros(cls, n_layers: int, width: int, hidden: int) -> "HiddenState":
        return cls([np.zeros((width, hidden)) for _ in range(n_layers)])

    @property
    def width(self) -> int:
        return self.layers[0].shape[0]

    def reorder(self, prev_lanes: np.ndarray) -> "HiddenState":
        """Realign lane rows after the batcher replaced or dropped lanes."""
        return HiddenState([h[prev_lanes] for h in self.layers])


def init_network(n_items: int, hyper: HyperParams) -> NetworkParams:
    """Seeded network initialization; same hyperparameters give the same net."""
    rng = make_rng(hyper.seed)
    h = hyper.hidden_size
    layers = []
    for i in range(hyper.n_layers):
        if i == 0:
            in_dim = n_items
        else:
            in_dim = h + (n_items if hyper.deep_input else 0)
        def w(r, c):
            return uniform_init(r, c, rng, scale=hyper.init_scale)
        lp = GruLayerParams(
            W_z=w(in_dim, h), W_r=w(in_dim, h), W=w(in_dim, h),
            U_z=w(h, h), U_r=w(h, h), U=w(h, h),
        )
        if hyper.use_bias:
            lp.b_z = np.zeros(h)
            lp.b_r = np.zeros(h)
            lp.b = np.zeros(h)
        layers.append(lp)
    W_out = uniform_init(n_items, h, rng, scale=hyper.init_scale)
    b_out = np.zeros(n_items) if hyper.use_bias else None
    return NetworkParams(n_items, layers, W_out, b_out, hyper)


def gru_cell(x_row: np.ndarray, h_prev: np.ndarray, p: GruLayerParams) -> np.ndarray:
    """Single-vector GRU step: gated interpolation of h_prev and a candidate."""
    x = np.asarray(x_row, dtype=np.float64)
    h = np.asarray(h_prev, dtype=np.float64)
    bz = 0.0 if p.b_z is None else p.b_z
    br = 0.0 if p.b_r is None else p.b_r
    bc = 0.0 if p.b is None else p.b
    z = sigmoid(x @ p.W_z + h @ p.U_z + bz)
    r = sigmoid(x @ p.W_r + h @ p.U_r + br)
    c = np.tanh(x @ p.W + (r * h) @ p.U + bc)
    return (1.0 - z) * h + z * c


@dataclass
class _LayerCache:
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray
    h: np.ndarray
    h_dropped: np.ndarray
    mask: np.ndarray


@dataclass
class ForwardCache:
    """Intermediates of one forward step, needed by backward_step."""

    items: np.ndarray
    input_vectors: np.ndarray | None  # (B, n_items), discounted mode only
    sampled_columns: np.ndarray
    layer: list[_LayerCache] = field(default_factory=list)
    linear_scores: np.ndarray | None = None  # pre-tanh output scores
    scores: np.ndarray | None = None


def _input_feed(
    lp: GruLayerParams,
    layer_idx: int,
    items: np.ndarray,
    input_vectors: np.ndarray | None,
    lower: np.ndarray | None,
    deep_input: bool,
    hidden: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """W_z/W_r/W contributions of the layer input for a whole batch."""
    feeds = []
    for W in (lp.W_z, lp.W_r, lp.W):
        if layer_idx == 0:
            if input_vectors is not None:
                f = input_vectors @ W
            else:
                f = W[items]  # 1-of-N input: plain row lookup
        else:
            f = lower @ W[:hidden]
            if deep_input:
                if input_vectors is not None:
                    f = f + input_vectors @ W[hidden:]
                else:
                    f = f + W[hidden + items]
        feeds.append(f)
    return feeds[0], feeds[1], feeds[2]


def forward_step(
    params: NetworkParams,
    batch: MiniBatch,
    h: HiddenState,
    sampled_columns: np.ndarray | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
    input_vectors: np.ndarray | None = None,
) -> tuple[np.ndarray, HiddenState, ForwardCache]:
    """Advance every lane one event and score the sampled items.

    Hidden rows flagged in ``batch.reset_mask`` are zeroed (all layers)
    before stepping. Scores are ``tanh(h_last . W_out[cols].T)``; the
    pre-activation scores are kept on the returned cache for losses that
    consume linear scores. With ``sampled_columns=None`` the full vocabulary
    is scored.

    ``input_vectors`` carries the normalized discounted-sum input rows and
    is required in that mode; in 1-of-N mode the batch's item indices are
    used directly as row lookups.
    """
    hyper = params.hyper
    items = np.asarray(batch.inputs, dtype=np.intp)
    if items.size and items.max() >= params.n_items:
        raise IndexError(f"input item index out of vocabulary: {items.max()}")
    if sampled_columns is None:
        cols = np.arange(params.n_items, dtype=np.intp)
    else:
        cols = np.asarray(sampled_columns, dtype=np.intp)
        if cols.size and cols.max() >= params.n_items:
            raise IndexError(f"sampled column out of vocabulary: {cols.max()}")
    if hyper.input_mode == "discounted_sum":
        if input_vectors is None:
            raise ValueError("discounted_sum input mode requires input_vectors")
    else:
        input_vectors = None
    if training and hyper.dropout_rate > 0.0 and rng is None:
        raise ValueError("training with dropout requires an rng")

    cache = ForwardCache(items=items, input_vectors=input_vectors, sampled_columns=cols)
    lower: np.ndarray | None = None
    new_layers: list[np.ndarray] = []
    for li, lp in enumerate(params.layers):
        h_prev = h.layers[li].copy()
        h_prev[batch.reset_mask] = 0.0
        f_z, f_r, f_c = _input_feed(
            lp, li, items, input_vectors, lower, hyper.deep_input, lp.hidden_size
        )
        if lp.b_z is not None:
            f_z = f_z + lp.b_z
            f_r = f_r + lp.b_r
            f_c = f_c + lp.b
        z = sigmoid(f_z + h_prev @ lp.U_z)
        r = sigmoid(f_r + h_prev @ lp.U_r)
        c = np.tanh(f_c + (r * h_prev) @ lp.U)
        h_new = (1.0 - z) * h_prev + z * c
        mask = dropout_mask(h_new.shape, hyper.dropout_rate, rng, training=training)
        h_dropped = h_new * mask
        cache.layer.append(_LayerCache(h_prev, z, r, c, h_new, h_dropped, mask))
        new_layers.append(h_new)
        lower = h_dropped

    linear = lower @ params.W_out[cols].T
    if params.b_out is not None:
        linear = linear + params.b_out[cols]
    cache.linear_scores = linear
    cache.scores = np.tanh(linear)
    return cache.scores, HiddenState(new_layers), cache


def backward_step(
    params: NetworkParams,
    cache: ForwardCache,
    dscores: np.ndarray,
    on_preactivation: bool = False,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every parameter.

    ``dscores`` is the loss gradient on the step's scores: on the tanh
    outputs by default, or on the pre-activation scores when
    ``on_preactivation`` is set (cross-entropy). The hidden state carried in
    from the previous step is treated as constant. Output-weight gradient
    rows outside the sampled columns, and input-weight gradient rows for
    items absent from the batch, are exactly zero.
    """
    if cache.scores is None:
        raise ValueError("forward cache is incomplete; run forward_step first")
    hyper = params.hyper
    cols = cache.sampled_columns
    items = cache.items
    if on_preactivation:
        d_lin = np.asarray(dscores, dtype=np.float64)
    else:
        d_lin = np.asarray(dscores, dtype=np.float64) * (1.0 - cache.scores**2)

    grads: dict[str, np.ndarray] = {}
    last = cache.layer[-1].h_dropped
    g_wout = np.zeros_like(params.W_out)
    np.add.at(g_wout, cols, d_lin.T @ last)
    grads["W_out"] = g_wout
    if params.b_out is not None:
        g_bout = np.zeros_like(params.b_out)
        np.add.at(g_bout, cols, d_lin.sum(axis=0))
        grads["b_out"] = g_bout

    d_hd = d_lin @ params.W_out[cols]  # grad on the dropped output of the top layer
    for li in range(len(params.layers) - 1, -1, -1):
        lp = params.layers[li]
        lc = cache.layer[li]
        dh = d_hd * lc.mask
        dz = dh * (lc.c - lc.h_prev)
        dc = dh * lc.z
        da_c = dc * (1.0 - lc.c**2)
        da_z = dz * lc.z * (1.0 - lc.z)
        dr = (da_c @ lp.U.T) * lc.h_prev
        da_r = dr * lc.r * (1.0 - lc.r)

        pre = f"layers.{li}."
        grads[pre + "U"] = (lc.r * lc.h_prev).T @ da_c
        grads[pre + "U_z"] = lc.h_prev.T @ da_z
        grads[pre + "U_r"] = lc.h_prev.T @ da_r
        if lp.b_z is not None:
            grads[pre + "b_z"] = da_z.sum(axis=0)
            grads[pre + "b_r"] = da_r.sum(axis=0)
            grads[pre + "b"] = da_c.sum(axis=0)

        hdim = lp.hidden_size
        for nm, da in (("W_z", da_z), ("W_r", da_r), ("W", da_c)):
            g = np.zeros_like(getattr(lp, nm))
            if li == 0:
                if cache.input_vectors is not None:
                    g += cache.input_vectors.T @ da
                else:
                    np.add.at(g, items, da)
            else:
                g[:hdim] = cache.layer[li - 1].h_dropped.T @ da
                if hyper.deep_input:
                    if cache.input_vectors is not None:
                        g[hdim:] += cache.input_vectors.T @ da
                    else:
                        np.add.at(g, hdim + items, da)
            grads[pre + nm] = g

        if li > 0:
            d_hd = (
                da_z @ lp.W_z[:hdim].T
                + da_r @ lp.W_r[:hdim].T
                + da_c @ lp.W[:hdim].T
            )
    return grads


def score_all(params: NetworkParams, h_lane: np.ndarray) -> np.ndarray:
    """Scores over the full vocabulary for one lane's top-layer hidden row."""
    s = np.asarray(h_lane, dtype=np.float64) @ params.W_out.T
    if params.b_out is not None:
        s = s + params.b_out
    return np.tanh(s)


def apply_input_discounted(
    session_prefix, decay: float, n_items: int
) -> np.ndarray:
    """Discounted weighted-sum input vector over a session prefix.

    The event ``k`` steps in the past gets weight ``decay**k``; weights of
    duplicate items add up and the vector is scaled to unit Euclidean norm.
    """
    prefix = np.asarray(session_prefix, dtype=np.intp)
    if prefix.size == 0:
        raise ValueError("session prefix must be non-empty")
    if not 0.0 < decay <= 1.0:
        raise ValueError(f"decay out of (0, 1]: {decay}")
    v = np.zeros(n_items)
    weights = decay ** np.arange(len(prefix) - 1, -1, -1, dtype=np.float64)
    np.add.at(v, prefix, weights)
    return v / np.linalg.norm(v)
