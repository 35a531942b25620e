"""Desk-scale point decoder with hand-derived backpropagation.

The real pipeline extracts support/query features with a CNN backbone and
an RPN; here a synthetic feature grid stands in for the backbone and
proposals are caller-supplied anchors, which keeps the decoder itself small
enough to verify against finite differences.

Per decoder layer, with support point features S as queries and (reduced)
RoI features T as keys/values:

    S' = LN(S + SelfAttn(S))
    S^ = LN(FFN' + LN(S' + CrossAttn(S', T)))     FFN' = FFN(LN(...))

i.e. the usual post-norm residual sublayers: self-attention, cross-attention
and the feed-forward block each add their input back before normalization.
Without the residual paths the stack provably collapses all rows to a common
vector at small init (uniform attention mixes rows, LN then cancels scale),
which makes per-point regression untrainable.

Attention is single-head scaled dot product.  The point head maps each
refined feature row to an (dx, dy) anchor-normalized offset; points come out
through the anchor decoding p = (A_cx + dx*A_w, A_cy + dy*A_h).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .codecs import Anchor, anchor_decode, OffsetSet
from .geometry import PointSequence
from .sapl import LossBreakdown, SaplConfig, point_loss


class DecoderError(ValueError):
    """Shape mismatch or non-finite state in the decoder."""


@dataclass(frozen=True)
class DecoderConfig:
    d: int = 32            # feature width shared by S and reduced T
    d_ff: int = 64
    n_layers: int = 2
    roi_grid: int = 7      # G = roi_grid ** 2 samples per proposal
    posemb_temperature: float = 100.0
    ln_eps: float = 1e-12

    def __post_init__(self) -> None:
        if self.d < 4 or self.d % 4 != 0:
            raise DecoderError(f"feature width must be a positive multiple of 4, got {self.d}")
        if self.n_layers < 1:
            raise DecoderError(f"need at least one layer, got {self.n_layers}")
        if self.roi_grid < 1:
            raise DecoderError(f"roi grid side must be >= 1, got {self.roi_grid}")

    @property
    def g(self) -> int:
        return self.roi_grid ** 2


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """H x W x d grid of feature vectors, finite everywhere."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise DecoderError(f"expected (H, W, d) grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DecoderError("grid contains NaN or Inf")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def synthetic_feature_grid(height: int, width: int, channels: int, seed: int) -> FeatureGrid:
    """Stand-in for backbone features: a fixed-seed random grid."""
    rng = np.random.default_rng(seed)
    return FeatureGrid(rng.standard_normal((height, width, channels)))


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class LayerParams:
    self_wq: np.ndarray
    self_wk: np.ndarray
    self_wv: np.ndarray
    self_wo: np.ndarray
    cross_wq: np.ndarray
    cross_wk: np.ndarray
    cross_wv: np.ndarray
    cross_wo: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ln1_scale: np.ndarray
    ln1_bias: np.ndarray
    ln2_scale: np.ndarray
    ln2_bias: np.ndarray
    ln3_scale: np.ndarray
    ln3_bias: np.ndarray


@dataclass
class DecoderParams:
    config: DecoderConfig
    layers: list[LayerParams]
    reduce_w: np.ndarray   # d -> d map applied to raw RoI features
    reduce_b: np.ndarray
    head_w1: np.ndarray
    head_b1: np.ndarray
    head_w2: np.ndarray    # d -> 2 offsets
    head_b2: np.ndarray

    def named_arrays(self):
        """Stable (name, array) iteration over every trainable tensor."""
        for li, layer in enumerate(self.layers):
            for fname in layer.__dataclass_fields__:
                yield f"layer{li}.{fname}", getattr(layer, fname)
        yield "reduce_w", self.reduce_w
        yield "reduce_b", self.reduce_b
        yield "head_w1", self.head_w1
        yield "head_b1", self.head_b1
        yield "head_w2", self.head_w2
        yield "head_b2", self.head_b2


def init_params(config: DecoderConfig = DecoderConfig(), seed: int = 0) -> DecoderParams:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) projections, identity layer norms."""
    rng = np.random.default_rng(seed)
    d, dff = config.d, config.d_ff
    bound = 1.0 / math.sqrt(d)

    def mat(rows, cols):
        return rng.uniform(-bound, bound, size=(rows, cols))

    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerParams(
                self_wq=mat(d, d), self_wk=mat(d, d), self_wv=mat(d, d), self_wo=mat(d, d),
                cross_wq=mat(d, d), cross_wk=mat(d, d), cross_wv=mat(d, d), cross_wo=mat(d, d),
                ffn_w1=mat(d, dff), ffn_b1=np.zeros(dff),
                ffn_w2=mat(dff, d), ffn_b2=np.zeros(d),
                ln1_scale=np.ones(d), ln1_bias=np.zeros(d),
                ln2_scale=np.ones(d), ln2_bias=np.zeros(d),
                ln3_scale=np.ones(d), ln3_bias=np.zeros(d),
            )
        )
    return DecoderParams(
        config=config,
        layers=layers,
        reduce_w=mat(d, d),
        reduce_b=np.zeros(d),
        head_w1=mat(d, d),
        head_b1=np.zeros(d),
        head_w2=mat(d, 2),
        head_b2=np.zeros(2),
    )


# ---------------------------------------------------------------------------
# Feature sampling
# ---------------------------------------------------------------------------


def position_embedding(xy: np.ndarray, d: int, temperature: float = 100.0) -> np.ndarray:
    """Fixed sinusoidal embedding of 2-D positions into d channels.

    Channels split evenly between x and y; within each half, sin/cos pairs
    over geometrically spaced frequencies.
    """
    xy = np.asarray(xy, dtype=np.float64)
    half = d // 2
    n_freq = half // 2
    freqs = temperature ** (-np.arange(n_freq) / max(n_freq, 1))
    out = np.empty((xy.shape[0], d))
    for axis in range(2):
        arg = xy[:, axis : axis + 1] * freqs[None, :]
        out[:, axis * half : axis * half + n_freq] = np.sin(arg)
        out[:, axis * half + n_freq : (axis + 1) * half] = np.cos(arg)
    return out


def bilinear_sample(grid: FeatureGrid, xy: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of grid vectors at (x, y), clamped at edges.

    Grid cell (row r, col c) holds the value at position x=c, y=r.
    """
    v = grid.values
    h, w = v.shape[0], v.shape[1]
    x = np.clip(np.asarray(xy, dtype=np.float64)[:, 0], 0.0, w - 1.0)
    y = np.clip(np.asarray(xy, dtype=np.float64)[:, 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    return (
        v[y0, x0] * (1 - fx) * (1 - fy)
        + v[y0, x1] * fx * (1 - fy)
        + v[y1, x0] * (1 - fx) * fy
        + v[y1, x1] * fx * fy
    )


def embed_support_points(
    grid: FeatureGrid,
    pts: PointSequence,
    config: DecoderConfig = DecoderConfig(),
    add_position: bool = True,
) -> np.ndarray:
    """One feature row per support point: bilinear content + position code."""
    if grid.channels != config.d:
        raise DecoderError(f"grid has {grid.channels} channels, config.d = {config.d}")
    feats = bilinear_sample(grid, pts.points)
    if add_position:
        feats = feats + position_embedding(pts.points, config.d, config.posemb_temperature)
    return feats


def roi_lattice(anchor: Anchor, side: int) -> np.ndarray:
    """Row-major (x, y) sample positions of a side x side lattice in the anchor."""
    jj, ii = np.meshgrid(np.arange(side), np.arange(side))
    xs = anchor.cx - anchor.w / 2.0 + (jj.ravel() + 0.5) * anchor.w / side
    ys = anchor.cy - anchor.h / 2.0 + (ii.ravel() + 0.5) * anchor.h / side
    return np.column_stack([xs, ys])


def roi_features(
    grid: FeatureGrid,
    anchor: Anchor,
    config: DecoderConfig = DecoderConfig(),
    add_position: bool = True,
) -> np.ndarray:
    """Pooled proposal features: bilinear samples on a fixed interior lattice.

    The position code uses the lattice coordinate (col, row), not the image
    position, so proposals of different sizes share one positional layout.
    """
    if grid.channels != config.d:
        raise DecoderError(f"grid has {grid.channels} channels, config.d = {config.d}")
    side = config.roi_grid
    feats = bilinear_sample(grid, roi_lattice(anchor, side))
    if add_position:
        jj, ii = np.meshgrid(np.arange(side), np.arange(side))
        lattice_xy = np.column_stack([jj.ravel(), ii.ravel()]).astype(np.float64)
        feats = feats + position_embedding(lattice_xy, config.d, config.posemb_temperature)
    return feats


# ---------------------------------------------------------------------------
# Forward / backward building blocks
# ---------------------------------------------------------------------------


def _ln_forward(x, scale, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x - mu) / sigma
    return xhat * scale + bias, (xhat, sigma, scale)


def _ln_backward(dy, cache):
    xhat, sigma, scale = cache
    dscale = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * scale
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) / sigma
    return dx, dscale, dbias


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _attn_forward(q_in, kv_in, wq, wk, wv, wo):
    d = wq.shape[0]
    q = q_in @ wq
    k = kv_in @ wk
    v = kv_in @ wv
    scores = q @ k.T / math.sqrt(d)
    attn = _softmax(scores)
    heads = attn @ v
    out = heads @ wo
    return out, (q_in, kv_in, q, k, v, attn, heads)


def _attn_backward(dout, cache, wq, wk, wv, wo):
    q_in, kv_in, q, k, v, attn, heads = cache
    d = wq.shape[0]
    dwo = heads.T @ dout
    dheads = dout @ wo.T
    dattn = dheads @ v.T
    dv = attn.T @ dheads
    dscores = (dattn - (dattn * attn).sum(axis=1, keepdims=True)) * attn
    dq = dscores @ k / math.sqrt(d)
    dk = dscores.T @ q / math.sqrt(d)
    dwq = q_in.T @ dq
    dwk = kv_in.T @ dk
    dwv = kv_in.T @ dv
    dq_in = dq @ wq.T
    dkv_in = dk @ wk.T + dv @ wv.T
    return dq_in, dkv_in, dwq, dwk, dwv, dwo


def decoder_forward(
    params: DecoderParams,
    support: np.ndarray,
    roi: np.ndarray,
    with_cache: bool = False,
):
    """Run the L decoder layers; returns the refined K x d support features.

    With ``with_cache=True`` also returns the intermediates needed for the
    backward pass (including the raw attention weights and pre-affine layer
    norm statistics).
    """
    cfg = params.config
    s = np.asarray(support, dtype=np.float64)
    t = np.asarray(roi, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != cfg.d:
        raise DecoderError(f"support features must be (K, {cfg.d}), got {s.shape}")
    if t.ndim != 2 or t.shape[1] != cfg.d:
        raise DecoderError(f"roi features must be (G, {cfg.d}), got {t.shape}")
    caches = []
    x = s
    for layer in params.layers:
        sa_out, sa_cache = _attn_forward(
            x, x, layer.self_wq, layer.self_wk, layer.self_wv, layer.self_wo
        )
        x1, ln1_cache = _ln_forward(x + sa_out, layer.ln1_scale, layer.ln1_bias, cfg.ln_eps)
        ca_out, ca_cache = _attn_forward(
            x1, t, layer.cross_wq, layer.cross_wk, layer.cross_wv, layer.cross_wo
        )
        x2, ln2_cache = _ln_forward(x1 + ca_out, layer.ln2_scale, layer.ln2_bias, cfg.ln_eps)
        ff_pre = x2 @ layer.ffn_w1 + layer.ffn_b1
        ff_act = np.maximum(ff_pre, 0.0)
        ff_out = ff_act @ layer.ffn_w2 + layer.ffn_b2
        x3, ln3_cache = _ln_forward(x2 + ff_out, layer.ln3_scale, layer.ln3_bias, cfg.ln_eps)
        caches.append((sa_cache, ln1_cache, ca_cache, ln2_cache, (x2, ff_pre, ff_act), ln3_cache))
        x = x3
    if with_cache:
        return x, caches
    return x


def _decoder_backward(params: DecoderParams, caches, dout):
    """Backprop through the decoder stack.

    Returns (d support, d roi, {param name: grad}).
    """
    grads = {}
    dt_total = None
    dx = dout
    for li in reversed(range(len(params.layers))):
        layer = params.layers[li]
        sa_cache, ln1_cache, ca_cache, ln2_cache, ffn_cache, ln3_cache = caches[li]
        pre = f"layer{li}."

        dr3, g_scale, g_bias = _ln_backward(dx, ln3_cache)
        grads[pre + "ln3_scale"] = g_scale
        grads[pre + "ln3_bias"] = g_bias

        # r3 = x2 + FFN(x2): gradient reaches x2 along both paths.
        x2, ff_pre, ff_act = ffn_cache
        grads[pre + "ffn_w2"] = ff_act.T @ dr3
        grads[pre + "ffn_b2"] = dr3.sum(axis=0)
        dff_act = dr3 @ layer.ffn_w2.T
        dff_pre = dff_act * (ff_pre > 0.0)
        grads[pre + "ffn_w1"] = x2.T @ dff_pre
        grads[pre + "ffn_b1"] = dff_pre.sum(axis=0)
        dx2 = dr3 + dff_pre @ layer.ffn_w1.T

        dr2, g_scale, g_bias = _ln_backward(dx2, ln2_cache)
        grads[pre + "ln2_scale"] = g_scale
        grads[pre + "ln2_bias"] = g_bias

        dx1_attn, dt, dwq, dwk, dwv, dwo = _attn_backward(
            dr2, ca_cache, layer.cross_wq, layer.cross_wk, layer.cross_wv, layer.cross_wo
        )
        grads[pre + "cross_wq"] = dwq
        grads[pre + "cross_wk"] = dwk
        grads[pre + "cross_wv"] = dwv
        grads[pre + "cross_wo"] = dwo
        dt_total = dt if dt_total is None else dt_total + dt
        dx1 = dr2 + dx1_attn

        dr1, g_scale, g_bias = _ln_backward(dx1, ln1_cache)
        grads[pre + "ln1_scale"] = g_scale
        grads[pre + "ln1_bias"] = g_bias

        dq_in, dkv_in, dwq, dwk, dwv, dwo = _attn_backward(
            dr1, sa_cache, layer.self_wq, layer.self_wk, layer.self_wv, layer.self_wo
        )
        grads[pre + "self_wq"] = dwq
        grads[pre + "self_wk"] = dwk
        grads[pre + "self_wv"] = dwv
        grads[pre + "self_wo"] = dwo
        dx = dr1 + dq_in + dkv_in
    return dx, dt_total, grads


def point_head(params: DecoderParams, refined: np.ndarray, anchor: Anchor, cyclic: bool = False):
    """Offsets via the head MLP, then anchor decoding to image coordinates."""
    z_pre = refined @ params.head_w1 + params.head_b1
    z = np.maximum(z_pre, 0.0)
    offsets = z @ params.head_w2 + params.head_b2
    pts = anchor_decode(OffsetSet(offsets), anchor, cyclic=cyclic)
    return pts, (refined, z_pre, z, offsets)


def _point_head_backward(params: DecoderParams, cache, dpoints, anchor: Anchor):
    refined, z_pre, z, _ = cache
    doff = np.column_stack([dpoints[:, 0] * anchor.w, dpoints[:, 1] * anchor.h])
    grads = {
        "head_w2": z.T @ doff,
        "head_b2": doff.sum(axis=0),
    }
    dz = doff @ params.head_w2.T
    dz_pre = dz * (z_pre > 0.0)
    grads["head_w1"] = refined.T @ dz_pre
    grads["head_b1"] = dz_pre.sum(axis=0)
    drefined = dz_pre @ params.head_w1.T
    return drefined, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """One synthetic episode: support grid + points, query grid + proposal."""

    support_grid: FeatureGrid
    support_points: PointSequence
    query_grid: FeatureGrid
    anchor: Anchor
    gt_points: PointSequence


def forward_batch(params: DecoderParams, batch: Batch):
    """Full forward pass from grids to predicted points (with caches)."""
    cfg = params.config
    support = embed_support_points(batch.support_grid, batch.support_points, cfg)
    roi_raw = roi_features(batch.query_grid, batch.anchor, cfg)
    roi_red = roi_raw @ params.reduce_w + params.reduce_b
    refined, caches = decoder_forward(params, support, roi_red, with_cache=True)
    pred, head_cache = point_head(params, refined, batch.anchor, cyclic=batch.gt_points.cyclic)
    return pred, (roi_raw, caches, head_cache)


def loss_and_grads(params: DecoderParams, batch: Batch, cfg: SaplConfig):
    """Point loss of the decoded prediction plus gradients for every tensor."""
    if len(batch.support_points) != len(batch.gt_points):
        raise DecoderError(
            f"support has {len(batch.support_points)} points, gt has {len(batch.gt_points)}"
        )
    pred, (roi_raw, caches, head_cache) = forward_batch(params, batch)
    breakdown = point_loss(pred, batch.gt_points, cfg)
    if not math.isfinite(breakdown.total):
        raise DecoderError(
            f"non-finite loss: l1={breakdown.l1_term}, sapl={breakdown.sapl_term}"
        )
    drefined, grads = _point_head_backward(
        params, head_cache, breakdown.per_point_grad, batch.anchor
    )
    _, dt, dec_grads = _decoder_backward(params, caches, drefined)
    grads.update(dec_grads)
    grads["reduce_w"] = roi_raw.T @ dt
    grads["reduce_b"] = dt.sum(axis=0)
    return breakdown, grads


def train_step(
    params: DecoderParams,
    batch: Batch,
    cfg: SaplConfig = SaplConfig(),
    lr: float = 0.1,
) -> tuple[DecoderParams, LossBreakdown]:
    """One SGD update on the combined point loss.  lr = 0 leaves params as-is."""
    breakdown, grads = loss_and_grads(params, batch, cfg)
    if lr != 0.0:
        for name, arr in params.named_arrays():
            arr -= lr * grads[name]
    return params, breakdown


def batch_kink_margins(params: DecoderParams, batch: Batch, cfg: SaplConfig) -> float:
    """Smallest distance from the loss evaluation point to a non-smooth spot.

    Finite differencing is only trustworthy away from the L1 kinks (equal
    coordinates, equal angle sines) and the ReLU corners; gradcheck batches
    are redrawn until this margin is comfortable.
    """
    from .sapl import _hop_geometry, _hop_indices  # internal reuse by design

    pred, (roi_raw, caches, head_cache) = forward_batch(params, batch)
    p, g = pred.points, batch.gt_points.points
    margins = [float(np.abs(p - g).min())]
    k = p.shape[0]
    for n in range(1, cfg.n_hops + 1):
        triples = _hop_indices(k, n, pred.cyclic if cfg.cyclic is None else cfg.cyclic)
        if triples is None:
            continue
        idx, im, ip = triples
        tp, *_ = _hop_geometry(p, idx, im, ip, cfg.degeneracy_eps)
        tg, *_ = _hop_geometry(g, idx, im, ip, cfg.degeneracy_eps)
        margins.append(float(np.abs(np.sin(tp / 2) - np.sin(tg / 2)).min()))
        margins.append(float(min(tp.min(), tg.min())))
    for layer_cache in caches:
        margins.append(float(np.abs(layer_cache[4][1]).min()))  # FFN pre-activations
    margins.append(float(np.abs(head_cache[1]).min()))  # head pre-activations
    return min(margins)


def gradcheck_batch(
    config: DecoderConfig,
    cfg: SaplConfig,
    seed: int,
    n_points: int = 4,
    grid_size: int = 8,
    min_margin: float = 1e-3,
) -> tuple[DecoderParams, Batch]:
    """Deterministic params + batch whose loss is smooth around the probe."""
    for attempt in range(64):
        s = seed + 1009 * attempt
        params = init_params(config, seed=s)
        batch = make_toy_batch(config, seed=s, n_points=n_points, grid_size=grid_size)
        if batch_kink_margins(params, batch, cfg) >= min_margin:
            return params, batch
    raise DecoderError("could not find a kink-free gradcheck batch")


def parameter_gradcheck(
    params: DecoderParams,
    batch: Batch,
    cfg: SaplConfig = SaplConfig(),
    h: float = 1e-5,
    perturb: float = 0.0,
) -> float:
    """Full-parameter central-difference check of the analytic gradients.

    Returns max |analytic - numeric| over all entries, scaled by the largest
    gradient magnitude.  ``perturb`` injects a deliberate error into the
    analytic side (negative-control hook for the CLI gradcheck command).
    """

    def loss_value() -> float:
        pred, _ = forward_batch(params, batch)
        return point_loss(pred, batch.gt_points, cfg).total

    _, grads = loss_and_grads(params, batch, cfg)
    worst_abs = 0.0
    scale = max(
        (np.abs(g).max() for g in grads.values() if g.size),
        default=0.0,
    )
    scale = max(scale, 1e-12)
    for name, arr in params.named_arrays():
        analytic = grads[name] + perturb
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = loss_value()
            flat[idx] = orig - h
            fm = loss_value()
            flat[idx] = orig
            numeric = (fp - fm) / (2.0 * h)
            worst_abs = max(worst_abs, abs(analytic.reshape(-1)[idx] - numeric))
    return worst_abs / scale


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_checkpoint(params: DecoderParams, path, extra: dict | None = None) -> None:
    """Binary dump of every tensor plus a JSON config header; bit-exact."""
    header = {
        "config": {
            "d": params.config.d,
            "d_ff": params.config.d_ff,
            "n_layers": params.config.n_layers,
            "roi_grid": params.config.roi_grid,
            "posemb_temperature": params.config.posemb_temperature,
            "ln_eps": params.config.ln_eps,
        },
        "extra": extra or {},
    }
    arrays = {name.replace(".", "__"): arr for name, arr in params.named_arrays()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[DecoderParams, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        cfg = DecoderConfig(**header["config"])
        params = init_params(cfg, seed=0)
        for name, arr in params.named_arrays():
            arr[...] = data[name.replace(".", "__")]
    return params, header["extra"]


# ---------------------------------------------------------------------------
# Synthetic training episode
# ---------------------------------------------------------------------------


def make_toy_batch(
    config: DecoderConfig = DecoderConfig(),
    seed: int = 0,
    n_points: int = 16,
    grid_size: int = 16,
) -> Batch:
    """A fixed-seed episode: star-shaped target points inside one anchor."""
    rng = np.random.default_rng(seed)
    support_grid = FeatureGrid(rng.standard_normal((grid_size, grid_size, config.d)))
    query_grid = FeatureGrid(rng.standard_normal((grid_size, grid_size, config.d)))
    c = (grid_size - 1) / 2.0
    anchor = Anchor(c, c, grid_size * 0.75, grid_size * 0.75)
    ang = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    radius = np.where(np.arange(n_points) % 2 == 0, 0.42, 0.22) * grid_size
    radius = radius * (1.0 + 0.08 * rng.standard_normal(n_points))
    gt = np.column_stack([c + radius * np.cos(ang), c + radius * np.sin(ang)])
    sup = np.column_stack([c + radius * np.cos(ang + 0.1), c + radius * np.sin(ang + 0.1)])
    return Batch(
        support_grid=support_grid,
        support_points=PointSequence(sup, cyclic=True),
        query_grid=query_grid,
        anchor=anchor,
        gt_points=PointSequence(gt, cyclic=True),
    )
