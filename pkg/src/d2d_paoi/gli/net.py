"""Geographic-location network: conv feature extraction, per-link dense head,
feedback inference, and the analytic peak-AoI loss with exact gradients.

Arrays with a leading batch axis hold one entry per layout; link-level
arrays are concatenated over the batch with ``LinkBatch.owner`` recording
which layout each row belongs to.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal
from scipy.special import expit

from ..analytics import SUCC_FLOOR, LinkGeometry, interference_survival, link_geometry, objective_grad, paoi_constant
from ..model import ChannelParams, Layout, TrafficParams, distance_matrix
from .grid import GridSpec, accumulate, cell_indices

N_FEATURES = 8


@dataclass(frozen=True)
class NetConfig:
    resolution: int = 150
    conv_filter_sizes: tuple[int, int, int] = (11, 11, 11)
    hidden_sizes: tuple[int, int] = (30, 30)
    feedback_rounds: int = 3
    input_feature_count: int = N_FEATURES
    seed: int = 0
    distance_scale: float = 80.0
    p_floor: float = 1e-4
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30

    def __post_init__(self):
        object.__setattr__(self, "conv_filter_sizes", tuple(int(c) for c in self.conv_filter_sizes))
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if len(self.conv_filter_sizes) != 3 or any(c < 1 or c % 2 == 0 for c in self.conv_filter_sizes):
            raise ValueError("need three odd convolution filter sizes")
        if len(self.hidden_sizes) != 2 or min(self.hidden_sizes) < 1:
            raise ValueError("need two positive hidden sizes")
        if self.feedback_rounds < 1:
            raise ValueError("feedback_rounds must be >= 1")
        if self.input_feature_count != N_FEATURES:
            raise ValueError(f"input_feature_count must be {N_FEATURES}")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not self.distance_scale > 0:
            raise ValueError("distance_scale must be > 0")


@dataclass
class NetParams:
    conv_w: list[np.ndarray]
    conv_b: np.ndarray
    fc_w: list[np.ndarray]  # (8, h1), (h1, h2), (h2, 1)
    fc_b: list[np.ndarray]  # (h1,), (h2,), (1,)

    def tensors(self) -> list[np.ndarray]:
        """Flat list in serialization order."""
        return [*self.conv_w, self.conv_b, self.fc_w[0], self.fc_b[0], self.fc_w[1], self.fc_b[1],
                self.fc_w[2], self.fc_b[2]]

    @classmethod
    def from_tensors(cls, ts) -> NetParams:
        ts = [np.array(t, dtype=np.float64) for t in ts]
        return cls(ts[0:3], ts[3], [ts[4], ts[6], ts[8]], [ts[5], ts[7], ts[9]])

    def copy(self) -> NetParams:
        return NetParams.from_tensors(self.tensors())

    def zeros_like(self) -> NetParams:
        return NetParams.from_tensors([np.zeros_like(t) for t in self.tensors()])

    def check(self, cfg: NetConfig) -> None:
        expected = param_shapes(cfg)
        got = [t.shape for t in self.tensors()]
        if got != expected:
            raise ValueError(f"parameter shapes {got} do not match config {expected}")
        if not all(np.all(np.isfinite(t)) for t in self.tensors()):
            raise ValueError("non-finite parameters")


def param_shapes(cfg: NetConfig) -> list[tuple[int, ...]]:
    c1, c2, c3 = cfg.conv_filter_sizes
    h1, h2 = cfg.hidden_sizes
    return [(c1, c1), (c2, c2), (c3, c3), (3,), (N_FEATURES, h1), (h1,), (h1, h2), (h2,), (h2, 1), (1,)]


def init_params(cfg: NetConfig) -> NetParams:
    """Glorot-uniform weights from ``cfg.seed``; small positive conv biases."""
    rng = np.random.default_rng(cfg.seed)
    conv_w = []
    for c in cfg.conv_filter_sizes:
        lim = np.sqrt(6.0 / (2 * c * c))
        conv_w.append(rng.uniform(-lim, lim, size=(c, c)))
    sizes = [N_FEATURES, *cfg.hidden_sizes, 1]
    fc_w = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        fc_w.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
    fc_b = [np.zeros(s) for s in sizes[1:]]
    return NetParams(conv_w, np.full(3, 0.01), fc_w, fc_b)


# -- operation counting -----------------------------------------------------------

class OpCounter(Counter):
    """Multiply-accumulate tallies keyed by stage ('conv', 'fc')."""


def inference_op_count(cfg: NetConfig, n_links: int) -> dict[str, int]:
    R = cfg.resolution
    h1, h2 = cfg.hidden_sizes
    f = cfg.feedback_rounds
    return {
        "conv": f * 2 * R * R * sum(c * c for c in cfg.conv_filter_sizes),
        "fc": f * n_links * (N_FEATURES * h1 + h1 * h2 + h2),
    }


# -- layouts prepared for the network ---------------------------------------------

@dataclass
class LinkBatch:
    """Everything about a batch of layouts the network needs, computed once."""

    n_layouts: int
    resolution: int
    owner: np.ndarray  # (M,) layout index of each link
    tx_cell: np.ndarray  # (M, 2)
    rx_cell: np.ndarray  # (M, 2)
    dist_feature: np.ndarray  # (M,)
    offsets: np.ndarray  # (B + 1,) link row ranges per layout
    geometry: list[LinkGeometry] | None = field(default=None)

    def layout_slice(self, b: int) -> slice:
        return slice(self.offsets[b], self.offsets[b + 1])


def prepare_batch(layouts, cfg: NetConfig, ch: ChannelParams | None = None) -> LinkBatch:
    tx_cells, rx_cells, dists, owners, geos = [], [], [], [], []
    for b, lay in enumerate(layouts):
        gs = GridSpec(cfg.resolution, lay.side_length)
        tx_cells.append(cell_indices(lay.tx_pos, gs))
        rx_cells.append(cell_indices(lay.rx_pos, gs))
        dists.append(lay.direct_distances() / cfg.distance_scale)
        owners.append(np.full(lay.n_links, b, dtype=np.int64))
        if ch is not None:
            geos.append(link_geometry(distance_matrix(lay), ch))
    counts = [len(o) for o in owners]
    return LinkBatch(
        n_layouts=len(counts),
        resolution=cfg.resolution,
        owner=np.concatenate(owners),
        tx_cell=np.concatenate(tx_cells),
        rx_cell=np.concatenate(rx_cells),
        dist_feature=np.concatenate(dists),
        offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        geometry=geos if ch is not None else None,
    )


def subset(batch: LinkBatch, idx) -> LinkBatch:
    rows = [np.arange(batch.offsets[b], batch.offsets[b + 1]) for b in idx]
    counts = [len(r) for r in rows]
    rows = np.concatenate(rows)
    return LinkBatch(
        n_layouts=len(idx),
        resolution=batch.resolution,
        owner=np.repeat(np.arange(len(idx)), counts),
        tx_cell=batch.tx_cell[rows],
        rx_cell=batch.rx_cell[rows],
        dist_feature=batch.dist_feature[rows],
        offsets=np.concatenate([[0], np.cumsum(counts)]).astype(np.int64),
        geometry=[batch.geometry[b] for b in idx] if batch.geometry is not None else None,
    )


# -- forward pieces -----------------------------------------------------------------

def batch_grids(batch: LinkBatch, p: np.ndarray) -> np.ndarray:
    """(B, 2, R, R): channel 0 the transmitter grid, channel 1 the receiver grid."""
    R = batch.resolution
    grids = np.zeros((batch.n_layouts, 2, R, R))
    np.add.at(grids, (batch.owner, 0, batch.tx_cell[:, 0], batch.tx_cell[:, 1]), p)
    np.add.at(grids, (batch.owner, 1, batch.rx_cell[:, 0], batch.rx_cell[:, 1]), p)
    return grids


def correlate_same(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Centered, zero-padded cross-correlation over the last two axes."""
    k = kernel[::-1, ::-1].reshape((1,) * (x.ndim - 2) + kernel.shape)
    return signal.fftconvolve(x, k, mode="same", axes=(-2, -1))


def conv_forward(grids: np.ndarray, params: NetParams, counter: OpCounter | None = None):
    """Three ReLU conv layers shared by the tx and rx stacks.

    Returns ``(acts, pre)``: the three layer outputs and their pre-activations.
    """
    acts, pre = [], []
    x = grids
    for K, b in zip(params.conv_w, params.conv_b):
        z = correlate_same(x, K) + b
        x = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(x)
        if counter is not None:
            counter["conv"] += int(np.prod(x.shape)) * K.size
    return acts, pre


def gather_link_features(acts, batch: LinkBatch, prev_p: np.ndarray) -> np.ndarray:
    """(M, 8): tx-stack maps at each link's receiver cell, rx-stack maps at its
    transmitter cell, the previous access probability, normalized link length."""
    o = batch.owner
    rr, rc = batch.rx_cell[:, 0], batch.rx_cell[:, 1]
    tr_, tc = batch.tx_cell[:, 0], batch.tx_cell[:, 1]
    cols = [a[o, 0, rr, rc] for a in acts] + [a[o, 1, tr_, tc] for a in acts]
    return np.column_stack(cols + [prev_p, batch.dist_feature])


def fc_forward(features: np.ndarray, params: NetParams, counter: OpCounter | None = None):
    """Shared per-link dense head. Returns ``(p, cache)``."""
    z1 = features @ params.fc_w[0] + params.fc_b[0]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.fc_w[1] + params.fc_b[1]
    h2 = np.maximum(z2, 0.0)
    out = (h2 @ params.fc_w[2])[:, 0] + params.fc_b[2][0]
    p = expit(out)
    if counter is not None:
        counter["fc"] += features.shape[0] * sum(w.size for w in params.fc_w)
    return p, (features, z1, h1, z2, h2)


def feedback_round(batch: LinkBatch, prev_p: np.ndarray, params: NetParams, counter=None):
    grids = batch_grids(batch, prev_p)
    acts, pre = conv_forward(grids, params, counter)
    feats = gather_link_features(acts, batch, prev_p)
    p, fc_cache = fc_forward(feats, params, counter)
    return p, (grids, acts, pre, fc_cache)


def policies_before_final_round(batch: LinkBatch, params: NetParams, cfg: NetConfig) -> np.ndarray:
    p = np.full(len(batch.owner), 0.5)
    for _ in range(cfg.feedback_rounds - 1):
        p, _ = feedback_round(batch, p, params)
    return p


def infer_batch(batch: LinkBatch, params: NetParams, cfg: NetConfig, counter=None) -> np.ndarray:
    p = np.full(len(batch.owner), 0.5)
    for _ in range(cfg.feedback_rounds):
        p, _ = feedback_round(batch, p, params, counter)
    return np.clip(p, cfg.p_floor, 1.0)


def infer(layout: Layout, params: NetParams, cfg: NetConfig, gs: GridSpec | None = None,
          counter: OpCounter | None = None) -> np.ndarray:
    """Policy for one layout after ``cfg.feedback_rounds`` feedback passes."""
    if gs is not None and gs.resolution != cfg.resolution:
        raise ValueError(f"grid resolution {gs.resolution} does not match network resolution {cfg.resolution}")
    params.check(cfg)
    return infer_batch(prepare_batch([layout], cfg), params, cfg, counter)


# -- loss and backpropagation ---------------------------------------------------------

def _tree_sum(items):
    """Sum in a fixed pairwise order so results do not depend on batching."""
    items = list(items)
    while len(items) > 1:
        nxt = [items[k] + items[k + 1] for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def layout_loss(p: np.ndarray, geo: LinkGeometry, tr: TrafficParams):
    """Mean peak AoI of one layout with succ clamped at SUCC_FLOOR, and d/dp."""
    K = paoi_constant(tr)
    succ = p * interference_survival(p, geo)
    loss = float(np.mean(K / np.maximum(succ, SUCC_FLOOR))) + tr.slot_duration
    return loss, objective_grad(p, geo, K, surrogate=False)


def _conv_backward(d_acts, acts, pre, grids, params: NetParams):
    """Per-layout kernel/bias gradients, shape (B, ...), from gradients at each layer output."""
    d_w = [None] * 3
    d_b = [None] * 3
    upstream = np.zeros_like(d_acts[2])
    for k in (2, 1, 0):
        dz = (d_acts[k] + upstream) * (pre[k] > 0)
        inp = grids if k == 0 else acts[k - 1]
        c = params.conv_w[k].shape[0]
        r = c // 2
        padded = np.pad(inp, ((0, 0), (0, 0), (r, r), (r, r)))
        per = signal.fftconvolve(padded, dz[..., ::-1, ::-1], mode="valid", axes=(-2, -1))
        d_w[k] = per[:, 0] + per[:, 1]
        d_b[k] = dz.sum(axis=(1, 2, 3))
        if k > 0:
            kern = params.conv_w[k].reshape((1, 1) + params.conv_w[k].shape)
            upstream = signal.fftconvolve(dz, kern, mode="same", axes=(-2, -1))
    return d_w, d_b


def loss_and_gradients(batch: LinkBatch, params: NetParams, cfg: NetConfig, tr: TrafficParams,
                       prev_p: np.ndarray | None = None, reduction: str = "mean"):
    """Batch loss and parameter gradients through the final feedback round.

    Policies feeding the final round are treated as constants; pass
    ``prev_p`` to fix them explicitly (otherwise they are recomputed by the
    earlier rounds). Returns ``(loss, grads, info)``.
    """
    if batch.geometry is None:
        raise ValueError("batch was prepared without channel parameters")
    if prev_p is None:
        prev_p = policies_before_final_round(batch, params, cfg)
    p, (grids, acts, pre, fc_cache) = feedback_round(batch, prev_p, params)
    feats, z1, h1, z2, h2 = fc_cache

    losses = np.empty(batch.n_layouts)
    d_p = np.empty_like(p)
    for b in range(batch.n_layouts):
        s = batch.layout_slice(b)
        losses[b], d_p[s] = layout_loss(p[s], batch.geometry[b], tr)
    clamped = False
    for b in range(batch.n_layouts):
        s = batch.layout_slice(b)
        clamped |= bool(np.any(p[s] * interference_survival(p[s], batch.geometry[b]) < SUCC_FLOOR))

    # dense head, per link
    d_out = d_p * p * (1.0 - p)
    d_h2 = d_out[:, None] * params.fc_w[2][:, 0][None, :]
    d_z2 = d_h2 * (z2 > 0)
    d_h1 = d_z2 @ params.fc_w[1].T
    d_z1 = d_h1 * (z1 > 0)
    d_feat = d_z1 @ params.fc_w[0].T

    per_layout_fc = []
    for b in range(batch.n_layouts):
        s = batch.layout_slice(b)
        per_layout_fc.append([
            feats[s].T @ d_z1[s], d_z1[s].sum(axis=0),
            h1[s].T @ d_z2[s], d_z2[s].sum(axis=0),
            h2[s].T @ d_out[s][:, None], np.array([d_out[s].sum()]),
        ])

    # scatter feature gradients back onto the maps they were read from
    o = batch.owner
    d_acts = [np.zeros_like(a) for a in acts]
    for k in range(3):
        np.add.at(d_acts[k], (o, 0, batch.rx_cell[:, 0], batch.rx_cell[:, 1]), d_feat[:, k])
        np.add.at(d_acts[k], (o, 1, batch.tx_cell[:, 0], batch.tx_cell[:, 1]), d_feat[:, 3 + k])
    d_w, d_b = _conv_backward(d_acts, acts, pre, grids, params)

    per_layout = []
    for b in range(batch.n_layouts):
        fc = per_layout_fc[b]
        per_layout.append([d_w[0][b], d_w[1][b], d_w[2][b], np.array([d_b[0][b], d_b[1][b], d_b[2][b]]),
                           fc[0], fc[1], fc[2], fc[3], fc[4], fc[5]])
    total = [_tree_sum(t[k] for t in per_layout) for k in range(10)]
    loss = _tree_sum(list(losses))
    if reduction == "mean":
        total = [t / batch.n_layouts for t in total]
        loss = loss / batch.n_layouts
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    info = {"per_layout_loss": losses, "clamped": clamped, "policy": p}
    return float(loss), NetParams.from_tensors(total), info


def batch_loss(batch: LinkBatch, params: NetParams, cfg: NetConfig, tr: TrafficParams,
               prev_p: np.ndarray | None = None) -> float:
    """Forward-only version of ``loss_and_gradients`` (mean reduction)."""
    if prev_p is None:
        prev_p = policies_before_final_round(batch, params, cfg)
    p, _ = feedback_round(batch, prev_p, params)
    losses = [layout_loss(p[batch.layout_slice(b)], batch.geometry[b], tr)[0] for b in range(batch.n_layouts)]
    return float(_tree_sum(losses) / batch.n_layouts)


def with_resolution(cfg: NetConfig, resolution: int) -> NetConfig:
    return replace(cfg, resolution=resolution)
