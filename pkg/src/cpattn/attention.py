"""Masked multi-head attention and a small pre-norm ViT with exact reverse-mode gradients.

Everything is float64 numpy. Activations carry a leading batch axis internally;
the public single-example helpers accept and return unbatched arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .mask import AttentionMask

_GELU_C = math.sqrt(2.0 / math.pi)


def _bits(mask) -> np.ndarray:
    if isinstance(mask, AttentionMask):
        return mask.bits
    return np.asarray(mask, dtype=bool)


def _softmax_masked(scores: np.ndarray, bits: np.ndarray) -> np.ndarray:
    s = np.where(bits, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def attention_scores(Q: np.ndarray, K: np.ndarray) -> np.ndarray:
    return Q @ np.swapaxes(K, -1, -2) / math.sqrt(Q.shape[-1])


def attention_weights(Q: np.ndarray, K: np.ndarray, mask) -> np.ndarray:
    """Row-stochastic weights; masked pairs are excluded from the softmax (weight exactly 0)."""
    return _softmax_masked(attention_scores(Q, K), _bits(mask))


def masked_attention(Q, K, V, mask, check: bool = False) -> np.ndarray:
    Q, K, V = (np.asarray(a, dtype=np.float64) for a in (Q, K, V))
    bits = _bits(mask)
    T = Q.shape[-2]
    if K.shape != Q.shape or V.shape[-2] != T or bits.shape != (T, T):
        raise ShapeError(f"Q{Q.shape} K{K.shape} V{V.shape} mask{bits.shape} are inconsistent")
    for a in (Q, K, V):
        if not np.isfinite(a).all():
            raise NumericError("non-finite attention input")
    if not bits.any(axis=-1).all():
        raise ParameterError("every mask row needs at least one allowed entry")
    w = attention_weights(Q, K, bits)
    if check:
        if np.any(w[..., ~bits] != 0.0):
            raise NumericError("masked pair received attention weight")
        if not np.allclose(w.sum(axis=-1), 1.0, rtol=0.0, atol=1e-9):
            raise NumericError("attention rows do not sum to 1")
    return w @ V


def reference_attention(Q, K, V) -> np.ndarray:
    """Plain softmax attention without any mask."""
    s = attention_scores(np.asarray(Q, float), np.asarray(K, float))
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return (e / e.sum(axis=-1, keepdims=True)) @ np.asarray(V, float)


@dataclass(frozen=True)
class AttentionParams:
    """Per-head projections stacked on axis 0: ``w_q[i]`` is Z x d_k; ``w_o`` is (h*d_k) x Z."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.w_q.shape[2]

    def validate(self, Z: int) -> None:
        h, z, dk = self.w_q.shape
        if z != Z or self.w_k.shape != (h, z, dk) or self.w_v.shape != (h, z, dk):
            raise ShapeError("head projections must all be h x Z x d_k")
        if self.w_o.shape != (h * dk, Z):
            raise ShapeError(f"output projection must be {(h * dk, Z)}, got {self.w_o.shape}")


def multi_head(x: np.ndarray, params: AttentionParams, mask) -> np.ndarray:
    """Concatenate masked heads and project back to width Z. Every head sees the same mask."""
    x = np.asarray(x, dtype=np.float64)
    params.validate(x.shape[-1])
    heads = [
        masked_attention(x @ params.w_q[i], x @ params.w_k[i], x @ params.w_v[i], mask)
        for i in range(params.heads)
    ]
    return np.concatenate(heads, axis=-1) @ params.w_o


# ---------------------------------------------------------------------------
# toy ViT


@dataclass(frozen=True)
class ModelConfig:
    patch_count: int = 16
    patch_dim: int = 8
    dim: int = 32
    heads: int = 4
    head_dim: int = 8
    depth: int = 2
    mlp_ratio: int = 2
    classes: int = 4
    norm_eps: float = 1e-6

    def __post_init__(self):
        for name in ("patch_count", "patch_dim", "dim", "heads", "head_dim", "depth", "classes"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")


@dataclass(frozen=True)
class EmbeddingBatch:
    """Patch embeddings (P x Z, or B x P x Z) and the classification token."""

    patches: np.ndarray
    cls: np.ndarray

    @property
    def dim(self) -> int:
        return self.patches.shape[-1]


@dataclass
class ToyViT:
    config: ModelConfig
    params: dict[str, np.ndarray]
    seed: int = 0

    def copy(self) -> "ToyViT":
        return ToyViT(self.config, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def attention_params(self, block: int) -> AttentionParams:
        p = self.params
        pre = f"blocks.{block}.attn."
        return AttentionParams(p[pre + "q"], p[pre + "k"], p[pre + "v"], p[pre + "out"])


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    Z, h, dk, H = cfg.dim, cfg.heads, cfg.head_dim, cfg.dim * cfg.mlp_ratio
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (cfg.patch_dim, Z),
        "patch_embed.bias": (Z,),
        "pos_embed": (cfg.patch_count, Z),
        "cls_token": (Z,),
    }
    for b in range(cfg.depth):
        pre = f"blocks.{b}."
        shapes.update(
            {
                pre + "norm1.gain": (Z,),
                pre + "attn.q": (h, Z, dk),
                pre + "attn.k": (h, Z, dk),
                pre + "attn.v": (h, Z, dk),
                pre + "attn.out": (h * dk, Z),
                pre + "norm2.gain": (Z,),
                pre + "mlp.fc1.weight": (Z, H),
                pre + "mlp.fc1.bias": (H,),
                pre + "mlp.fc2.weight": (H, Z),
                pre + "mlp.fc2.bias": (Z,),
            }
        )
    shapes["norm.gain"] = (Z,)
    shapes["head.weight"] = (Z, cfg.classes)
    shapes["head.bias"] = (cfg.classes,)
    return shapes


def init_toy_vit(cfg: ModelConfig, seed: int = 0) -> ToyViT:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("gain"):
            params[name] = np.ones(shape)
        elif name.endswith("bias"):
            params[name] = np.zeros(shape)
        elif name in ("pos_embed", "cls_token"):
            params[name] = rng.normal(0.0, 0.5, shape)
        else:
            fan_in = shape[-2]
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), shape)
    return ToyViT(cfg, params, seed)


def zero_toy_vit(cfg: ModelConfig) -> ToyViT:
    return ToyViT(cfg, {k: np.zeros(s) for k, s in param_shapes(cfg).items()}, 0)


def embed(model: ToyViT, raw_patches: np.ndarray) -> EmbeddingBatch:
    """Linear patch embedding of raw patch vectors (P x D or B x P x D)."""
    raw = np.asarray(raw_patches, dtype=np.float64)
    cfg = model.config
    if raw.shape[-2:] != (cfg.patch_count, cfg.patch_dim):
        raise ShapeError(f"raw patches {raw.shape} do not match ({cfg.patch_count}, {cfg.patch_dim})")
    p = model.params
    return EmbeddingBatch(raw @ p["patch_embed.weight"] + p["patch_embed.bias"], p["cls_token"])


# -- primitives with backward ------------------------------------------------


def _rms_fwd(x, gain, eps):
    r = np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)
    nrm = x / r
    return nrm * gain, (nrm, r, gain)


def _rms_bwd(dy, cache):
    nrm, r, gain = cache
    dgain = (dy * nrm).reshape(-1, nrm.shape[-1]).sum(axis=0)
    dn = dy * gain
    dx = (dn - nrm * (dn * nrm).mean(axis=-1, keepdims=True)) / r
    return dx, dgain


def _gelu_fwd(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u**3))
    return 0.5 * u * (1.0 + t), (u, t)


def _gelu_bwd(dy, cache):
    u, t = cache
    dt = _GELU_C * (1.0 + 3 * 0.044715 * u * u)
    return dy * (0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * dt)


def _mha_fwd(x, p, pre, bits, h, dk):
    # x: (B, T, Z) -> q, k, v: (B, h, T, dk)
    xe = x[:, None]
    q = xe @ p[pre + "q"]
    k = xe @ p[pre + "k"]
    v = xe @ p[pre + "v"]
    a = _softmax_masked(q @ np.swapaxes(k, -1, -2) / math.sqrt(dk), bits)
    o = a @ v
    B, _, T, _ = o.shape
    oc = np.swapaxes(o, 1, 2).reshape(B, T, h * dk)
    return oc @ p[pre + "out"], (x, q, k, v, a, oc)


def _mha_bwd(dy, cache, p, pre, h, dk, grads):
    x, q, k, v, a, oc = cache
    B, T, Z = x.shape
    grads[pre + "out"] = oc.reshape(-1, h * dk).T @ dy.reshape(-1, Z)
    doc = dy @ p[pre + "out"].T
    do = np.swapaxes(doc.reshape(B, T, h, dk), 1, 2)
    da = do @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(a, -1, -2) @ do
    ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) / math.sqrt(dk)
    dq = ds @ k
    dkk = np.swapaxes(ds, -1, -2) @ q
    xt = np.swapaxes(x, -1, -2)[:, None]  # (B, 1, Z, T)
    grads[pre + "q"] = (xt @ dq).sum(axis=0)
    grads[pre + "k"] = (xt @ dkk).sum(axis=0)
    grads[pre + "v"] = (xt @ dv).sum(axis=0)
    dx = (
        dq @ np.swapaxes(p[pre + "q"], -1, -2)
        + dkk @ np.swapaxes(p[pre + "k"], -1, -2)
        + dv @ np.swapaxes(p[pre + "v"], -1, -2)
    ).sum(axis=1)
    return dx


def _forward(model: ToyViT, patches: np.ndarray, cls: np.ndarray, bits: np.ndarray):
    cfg, p = model.config, model.params
    B, P, Z = patches.shape
    if P != cfg.patch_count or Z != cfg.dim or cls.shape != (Z,):
        raise ShapeError(f"embeddings {patches.shape} / cls {cls.shape} do not fit {cfg}")
    if bits.shape != (P + 1, P + 1):
        raise ShapeError(f"mask must be {(P + 1, P + 1)}, got {bits.shape}")
    x = np.empty((B, P + 1, Z))
    x[:, :P] = patches + p["pos_embed"]
    x[:, P] = cls
    caches = []
    for b in range(cfg.depth):
        pre = f"blocks.{b}."
        h1, c1 = _rms_fwd(x, p[pre + "norm1.gain"], cfg.norm_eps)
        att, ca = _mha_fwd(h1, p, pre + "attn.", bits, cfg.heads, cfg.head_dim)
        x = x + att
        h2, c2 = _rms_fwd(x, p[pre + "norm2.gain"], cfg.norm_eps)
        u = h2 @ p[pre + "mlp.fc1.weight"] + p[pre + "mlp.fc1.bias"]
        g, cg = _gelu_fwd(u)
        x = x + g @ p[pre + "mlp.fc2.weight"] + p[pre + "mlp.fc2.bias"]
        caches.append((c1, ca, c2, h2, cg, g))
    hf, cf = _rms_fwd(x[:, P], p["norm.gain"], cfg.norm_eps)
    logits = hf @ p["head.weight"] + p["head.bias"]
    return logits, (caches, cf, hf, B, P, Z)


def _backward(model: ToyViT, cache, dlogits: np.ndarray, param_grads: bool = True):
    """Returns (grads by parameter name, gradient w.r.t. the patch embeddings)."""
    cfg, p = model.config, model.params
    caches, cf, hf, B, P, Z = cache
    grads: dict[str, np.ndarray] = {}
    grads["head.weight"] = hf.T @ dlogits
    grads["head.bias"] = dlogits.sum(axis=0)
    dhf = dlogits @ p["head.weight"].T
    dcls_final, grads["norm.gain"] = _rms_bwd(dhf, cf)
    dx = np.zeros((B, P + 1, Z))
    dx[:, P] = dcls_final
    for b in reversed(range(cfg.depth)):
        pre = f"blocks.{b}."
        c1, ca, c2, h2, cg, g = caches[b]
        # MLP residual branch
        grads[pre + "mlp.fc2.weight"] = g.reshape(-1, g.shape[-1]).T @ dx.reshape(-1, Z)
        grads[pre + "mlp.fc2.bias"] = dx.reshape(-1, Z).sum(axis=0)
        du = _gelu_bwd(dx @ p[pre + "mlp.fc2.weight"].T, cg)
        grads[pre + "mlp.fc1.weight"] = h2.reshape(-1, Z).T @ du.reshape(-1, du.shape[-1])
        grads[pre + "mlp.fc1.bias"] = du.reshape(-1, du.shape[-1]).sum(axis=0)
        dh2 = du @ p[pre + "mlp.fc1.weight"].T
        dxn, grads[pre + "norm2.gain"] = _rms_bwd(dh2, c2)
        dx = dx + dxn
        # attention residual branch
        dh1 = _mha_bwd(dx, ca, p, pre + "attn.", cfg.heads, cfg.head_dim, grads)
        dxn, grads[pre + "norm1.gain"] = _rms_bwd(dh1, c1)
        dx = dx + dxn
    dpatches = dx[:, :P]
    if param_grads:
        grads["pos_embed"] = dpatches.sum(axis=0)
        grads["cls_token"] = dx[:, P].sum(axis=0)
    return grads, dpatches


def _as_batch(patches: np.ndarray) -> tuple[np.ndarray, bool]:
    a = np.asarray(patches, dtype=np.float64)
    if a.ndim == 2:
        return a[None], True
    if a.ndim == 3:
        return a, False
    raise ShapeError(f"patch embeddings must be 2-D or 3-D, got {a.shape}")


def toy_vit_forward(batch: EmbeddingBatch, model: ToyViT, mask) -> np.ndarray:
    """Class logits read from the classification token after the final norm."""
    x, single = _as_batch(batch.patches)
    logits, _ = _forward(model, x, np.asarray(batch.cls, float), _bits(mask))
    return logits[0] if single else logits


def logit_gradients(
    model: ToyViT, batch: EmbeddingBatch, mask, class_index
) -> np.ndarray:
    """d logit[class] / d patch embeddings; ``class_index`` may be per-example for a batch."""
    x, single = _as_batch(batch.patches)
    logits, cache = _forward(model, x, np.asarray(batch.cls, float), _bits(mask))
    C = logits.shape[-1]
    idx = np.broadcast_to(np.asarray(class_index), (x.shape[0],))
    if np.any(idx < 0) or np.any(idx >= C):
        raise ParameterError(f"class index out of range for {C} classes")
    dlogits = np.zeros_like(logits)
    dlogits[np.arange(x.shape[0]), idx] = 1.0
    _, dpatches = _backward(model, cache, dlogits, param_grads=False)
    return dpatches[0] if single else dpatches


def patch_gradients(model: ToyViT, batch: EmbeddingBatch, mask, class_index: int) -> np.ndarray:
    return logit_gradients(model, batch, mask, class_index)


def importance_weights(grads: np.ndarray) -> np.ndarray:
    """Signed mean of each patch's gradient over the embedding dimension."""
    g = np.asarray(grads, dtype=np.float64)
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradients")
    return g.mean(axis=-1)


def loss_and_grads(model: ToyViT, raw: np.ndarray, labels: np.ndarray, mask):
    """Mean cross-entropy over the batch, parameter gradients, and logits."""
    p = model.params
    emb = raw @ p["patch_embed.weight"] + p["patch_embed.bias"]
    logits, cache = _forward(model, emb, p["cls_token"], _bits(mask))
    B = raw.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grads, demb = _backward(model, cache, dlogits)
    grads["patch_embed.weight"] = raw.reshape(-1, raw.shape[-1]).T @ demb.reshape(-1, demb.shape[-1])
    grads["patch_embed.bias"] = demb.reshape(-1, demb.shape[-1]).sum(axis=0)
    return float(loss), grads, logits


def predict(model: ToyViT, raw: np.ndarray, mask) -> np.ndarray:
    return toy_vit_forward(embed(model, raw), model, mask).argmax(axis=-1)


# ---------------------------------------------------------------------------
# checkpoints and raw tensors


def save_checkpoint(model: ToyViT, path: str | Path) -> None:
    """Flat little-endian f64 blob plus ``<path>.json`` manifest of names, shapes, offsets."""
    path = Path(path)
    entries, offset, chunks = [], 0, []
    for name in sorted(model.params):
        a = np.ascontiguousarray(model.params[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
        chunks.append(a.ravel().tobytes())
    path.write_bytes(b"".join(chunks))
    manifest = {"format": "cpattn-f64", "seed": model.seed, "config": asdict(model.config), "tensors": entries}
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> ToyViT:
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text())
    cfg = ModelConfig(**manifest["config"])
    flat = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = param_shapes(cfg)
    params = {}
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        params[e["name"]] = flat[e["offset"] : e["offset"] + size].reshape(shape).astype(np.float64)
    if {k: v.shape for k, v in params.items()} != expected:
        raise ShapeError(f"{path}: tensors do not match config {cfg}")
    return ToyViT(cfg, params, int(manifest.get("seed", 0)))


def write_tensor(a: np.ndarray, path: str | Path) -> None:
    """One JSON header line ``{"dtype": "<f8", "shape": [...]}`` then raw row-major f64 bytes."""
    a = np.ascontiguousarray(a, dtype="<f8")
    header = json.dumps({"dtype": "<f8", "shape": list(a.shape)}).encode() + b"\n"
    Path(path).write_bytes(header + a.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParameterError(f"{path}: missing JSON header line")
    header = json.loads(data[:nl])
    if header.get("dtype", "<f8") != "<f8":
        raise ParameterError(f"{path}: only <f8 tensors are supported")
    shape = tuple(header["shape"])
    a = np.frombuffer(data[nl + 1 :], dtype="<f8")
    if a.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeError(f"{path}: payload has {a.size} values, header says {shape}")
    return a.reshape(shape).copy()
