"""The span-spotting encoder model.

A small transformer encoder produces contextual token representations; the
mask token's representation passes through a dense+GELU+layer-norm head, and
two bilinear forms score every token as the answer start or end. Forward and
backward passes are hand-written in numpy (float64); gradient correctness is
pinned by finite-difference tests.

Input framings (built by :mod:`spanspot.model.framing`):

* self-supervised: ``[CLS] masked-passage [SEP]``
* inference / supervised: ``[CLS] passage [SEP] masked-question [SEP]``

Candidate answer positions are the non-special tokens of the first segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import Vocabulary
from . import nn
from .framing import FramedInstance

INIT_STD = 0.02
ACTIVATION_NAME = "gelu_tanh"
_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_seq: int = 384
    dropout: float = 0.1
    seed: int = 0
    max_answer_length: int = 10

    def __post_init__(self) -> None:
        if min(self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.ffn_dim) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.max_seq < 16:
            raise ValueError("max_seq must be >= 16")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_answer_length < 1:
            raise ValueError("max_answer_length must be >= 1")


@dataclass
class EncodedSequence:
    """Per-token representations plus the mask position and candidate mask."""

    representations: np.ndarray  # (L, d_model)
    mask_position: int
    candidate_mask: np.ndarray  # (L,) bool, True at valid answer positions


@dataclass
class _Cache:
    """Everything the backward pass needs from one batched forward."""

    ids: np.ndarray
    key_mask: np.ndarray
    emb_drop: object
    layers: list[dict] = field(default_factory=list)
    heads: dict | None = None


class SpotterModel:
    """Encoder + mask head + bilinear start/end scorers."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        params: dict[str, np.ndarray] | None = None,
    ) -> None:
        if config.vocab_size != len(vocab):
            raise ValueError(
                f"config.vocab_size={config.vocab_size} does not match vocabulary size {len(vocab)}"
            )
        self.config = config
        self.vocab = vocab
        self.params = params if params is not None else self._init_params()

    # ------------------------------------------------------------------ setup

    def _init_params(self) -> dict[str, np.ndarray]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        d, f = cfg.d_model, cfg.ffn_dim
        p: dict[str, np.ndarray] = {}

        def normal(*shape: int) -> np.ndarray:
            return rng.normal(0.0, INIT_STD, shape)

        p["tok_emb"] = normal(cfg.vocab_size, d)
        p["pos_emb"] = normal(cfg.max_seq, d)
        for layer in range(cfg.n_layers):
            pre = f"layer{layer}."
            for name in ("wq", "wk", "wv", "wo"):
                p[pre + f"attn.{name}"] = normal(d, d)
                p[pre + f"attn.{name[1]}b"] = np.zeros(d)
            p[pre + "ln1.gamma"] = np.ones(d)
            p[pre + "ln1.beta"] = np.zeros(d)
            p[pre + "ffn.w1"] = normal(d, f)
            p[pre + "ffn.b1"] = np.zeros(f)
            p[pre + "ffn.w2"] = normal(f, d)
            p[pre + "ffn.b2"] = np.zeros(d)
            p[pre + "ln2.gamma"] = np.ones(d)
            p[pre + "ln2.beta"] = np.zeros(d)
        p["mask_head.w"] = normal(d, d)
        p["mask_head.b"] = np.zeros(d)
        p["mask_head.ln.gamma"] = np.ones(d)
        p["mask_head.ln.beta"] = np.zeros(d)
        p["w_start"] = normal(d, d)
        p["w_end"] = normal(d, d)
        return p

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def check_finite(self) -> None:
        for name, tensor in self.params.items():
            if not np.isfinite(tensor).all():
                raise FloatingPointError(f"parameter {name} contains non-finite values")

    # ---------------------------------------------------------------- encoder

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        b, l, d = x.shape
        h = self.config.n_heads
        return x.reshape(b, l, h, d // h).transpose(0, 2, 1, 3)

    def _merge_heads(self, x: np.ndarray) -> np.ndarray:
        b, h, l, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)

    def _forward_encoder(
        self, ids: np.ndarray, key_mask: np.ndarray, rng: np.random.Generator | None
    ) -> tuple[np.ndarray, _Cache]:
        p = self.params
        drop_p = self.config.dropout
        length = ids.shape[1]
        x = p["tok_emb"][ids] + p["pos_emb"][:length][None, :, :]
        x, emb_drop = nn.dropout(x, drop_p, rng)
        cache = _Cache(ids=ids, key_mask=key_mask, emb_drop=emb_drop)
        for layer in range(self.config.n_layers):
            x, layer_cache = self._layer_forward(layer, x, key_mask, rng)
            cache.layers.append(layer_cache)
        return x, cache

    def _layer_forward(
        self, layer: int, x: np.ndarray, key_mask: np.ndarray, rng: np.random.Generator | None
    ) -> tuple[np.ndarray, dict]:
        p = self.params
        pre = f"layer{layer}."
        drop_p = self.config.dropout
        dh = self.config.d_model // self.config.n_heads
        scale = 1.0 / np.sqrt(dh)

        q = x @ p[pre + "attn.wq"] + p[pre + "attn.qb"]
        k = x @ p[pre + "attn.wk"] + p[pre + "attn.kb"]
        v = x @ p[pre + "attn.wv"] + p[pre + "attn.vb"]
        qh, kh, vh = self._split_heads(q), self._split_heads(k), self._split_heads(v)
        scores = (qh @ kh.swapaxes(-1, -2)) * scale
        scores = np.where(key_mask[:, None, None, :], scores, -np.inf)
        attn = nn.masked_softmax_last(scores)
        ctx = self._merge_heads(attn @ vh)
        attn_out = ctx @ p[pre + "attn.wo"] + p[pre + "attn.ob"]
        attn_out, drop1 = nn.dropout(attn_out, drop_p, rng)
        x1, ln1_cache = nn.layer_norm(x + attn_out, p[pre + "ln1.gamma"], p[pre + "ln1.beta"])

        h_pre = x1 @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]
        h_act = nn.gelu(h_pre)
        ffn_out = h_act @ p[pre + "ffn.w2"] + p[pre + "ffn.b2"]
        ffn_out, drop2 = nn.dropout(ffn_out, drop_p, rng)
        x2, ln2_cache = nn.layer_norm(x1 + ffn_out, p[pre + "ln2.gamma"], p[pre + "ln2.beta"])

        return x2, dict(
            x=x, qh=qh, kh=kh, vh=vh, attn=attn, ctx=ctx, drop1=drop1, ln1=ln1_cache,
            x1=x1, h_pre=h_pre, h_act=h_act, drop2=drop2, ln2=ln2_cache, scale=scale,
        )

    def _layer_backward(
        self, layer: int, d_out: np.ndarray, c: dict, grads: dict[str, np.ndarray]
    ) -> np.ndarray:
        p = self.params
        pre = f"layer{layer}."

        d_x2in, dg2, db2 = nn.layer_norm_grad(d_out, c["ln2"])
        grads[pre + "ln2.gamma"] += dg2
        grads[pre + "ln2.beta"] += db2
        d_x1 = d_x2in.copy()
        d_ffn = nn.dropout_grad(d_x2in, c["drop2"])

        grads[pre + "ffn.w2"] += np.einsum("blf,bld->fd", c["h_act"], d_ffn)
        grads[pre + "ffn.b2"] += d_ffn.sum(axis=(0, 1))
        d_act = d_ffn @ p[pre + "ffn.w2"].T
        d_hpre = d_act * nn.gelu_grad(c["h_pre"])
        grads[pre + "ffn.w1"] += np.einsum("bld,blf->df", c["x1"], d_hpre)
        grads[pre + "ffn.b1"] += d_hpre.sum(axis=(0, 1))
        d_x1 += d_hpre @ p[pre + "ffn.w1"].T

        d_x1in, dg1, db1 = nn.layer_norm_grad(d_x1, c["ln1"])
        grads[pre + "ln1.gamma"] += dg1
        grads[pre + "ln1.beta"] += db1
        d_x = d_x1in.copy()
        d_attn_out = nn.dropout_grad(d_x1in, c["drop1"])

        grads[pre + "attn.wo"] += np.einsum("bld,ble->de", c["ctx"], d_attn_out)
        grads[pre + "attn.ob"] += d_attn_out.sum(axis=(0, 1))
        d_ctx = self._split_heads(d_attn_out @ p[pre + "attn.wo"].T)

        d_attn = d_ctx @ c["vh"].swapaxes(-1, -2)
        d_vh = c["attn"].swapaxes(-1, -2) @ d_ctx
        attn = c["attn"]
        d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True))
        d_scores *= c["scale"]
        d_qh = d_scores @ c["kh"]
        d_kh = d_scores.swapaxes(-1, -2) @ c["qh"]

        d_q = self._merge_heads(d_qh)
        d_k = self._merge_heads(d_kh)
        d_v = self._merge_heads(d_vh)
        x_in = c["x"]
        grads[pre + "attn.wq"] += np.einsum("bld,ble->de", x_in, d_q)
        grads[pre + "attn.qb"] += d_q.sum(axis=(0, 1))
        grads[pre + "attn.wk"] += np.einsum("bld,ble->de", x_in, d_k)
        grads[pre + "attn.kb"] += d_k.sum(axis=(0, 1))
        grads[pre + "attn.wv"] += np.einsum("bld,ble->de", x_in, d_v)
        grads[pre + "attn.vb"] += d_v.sum(axis=(0, 1))
        d_x += d_q @ p[pre + "attn.wq"].T
        d_x += d_k @ p[pre + "attn.wk"].T
        d_x += d_v @ p[pre + "attn.wv"].T
        return d_x

    def _backward_encoder(
        self, d_x: np.ndarray, cache: _Cache, grads: dict[str, np.ndarray]
    ) -> None:
        for layer in range(self.config.n_layers - 1, -1, -1):
            d_x = self._layer_backward(layer, d_x, cache.layers[layer], grads)
        d_x = nn.dropout_grad(d_x, cache.emb_drop)
        d = self.config.d_model
        np.add.at(grads["tok_emb"], cache.ids.reshape(-1), d_x.reshape(-1, d))
        grads["pos_emb"][: d_x.shape[1]] += d_x.sum(axis=0)

    # ------------------------------------------------------------------ heads

    def _mask_head_forward(self, x_mask: np.ndarray) -> tuple[np.ndarray, dict]:
        p = self.params
        h = x_mask @ p["mask_head.w"] + p["mask_head.b"]
        g = nn.gelu(h)
        x_bar, ln_cache = nn.layer_norm(g, p["mask_head.ln.gamma"], p["mask_head.ln.beta"])
        return x_bar, dict(x_mask=x_mask, h=h, ln=ln_cache)

    def _mask_head_backward(
        self, d_xbar: np.ndarray, c: dict, grads: dict[str, np.ndarray]
    ) -> np.ndarray:
        d_g, dg, db = nn.layer_norm_grad(d_xbar, c["ln"])
        grads["mask_head.ln.gamma"] += dg
        grads["mask_head.ln.beta"] += db
        d_h = d_g * nn.gelu_grad(c["h"])
        grads["mask_head.w"] += c["x_mask"].T @ d_h
        grads["mask_head.b"] += d_h.sum(axis=0)
        return d_h @ self.params["mask_head.w"].T

    def _span_logits_batch(
        self, x_enc: np.ndarray, x_bar: np.ndarray, cand: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict]:
        p = self.params
        xw_s = x_enc @ p["w_start"]
        xw_e = x_enc @ p["w_end"]
        sl = np.einsum("bld,bd->bl", xw_s, x_bar)
        el = np.einsum("bld,bd->bl", xw_e, x_bar)
        sl = np.where(cand, sl, -np.inf)
        el = np.where(cand, el, -np.inf)
        return sl, el, dict(x_enc=x_enc, x_bar=x_bar)

    def _span_logits_backward(
        self, d_sl: np.ndarray, d_el: np.ndarray, c: dict, grads: dict[str, np.ndarray]
    ) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        x_enc, x_bar = c["x_enc"], c["x_bar"]
        d_x = np.zeros_like(x_enc)
        d_xbar = np.zeros_like(x_bar)
        for d_logits, w_name in ((d_sl, "w_start"), (d_el, "w_end")):
            w = p[w_name]
            t = np.einsum("bl,bld->bd", d_logits, x_enc)  # sum_l d_logit * x_l
            grads[w_name] += np.einsum("bd,be->de", t, x_bar)
            d_xbar += t @ w
            d_x += d_logits[:, :, None] * (x_bar @ w.T)[:, None, :]
        return d_x, d_xbar

    # ------------------------------------------------------------- public ops

    def encode(
        self, token_ids: Sequence[int] | np.ndarray, mask_position: int | None = None
    ) -> EncodedSequence:
        """Run the encoder over one sequence (evaluation mode, no dropout)."""
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("token_ids must be a non-empty 1-D sequence")
        if ids.shape[0] > self.config.max_seq:
            raise ValueError(
                f"sequence length {ids.shape[0]} exceeds max_seq {self.config.max_seq}; "
                "window the input first"
            )
        mask_positions = np.nonzero(ids == self.vocab.mask_id)[0]
        if mask_positions.size != 1:
            raise ValueError(
                f"input must contain exactly one mask token, found {mask_positions.size}"
            )
        found = int(mask_positions[0])
        if mask_position is not None and mask_position != found:
            raise ValueError(f"mask_position {mask_position} does not match input ({found})")
        key_mask = (ids != self.vocab.pad_id)[None, :]
        x, _ = self._forward_encoder(ids[None, :], key_mask, rng=None)
        return EncodedSequence(
            representations=x[0],
            mask_position=found,
            candidate_mask=self.candidate_mask_for_ids(ids),
        )

    def candidate_mask_for_ids(self, ids: np.ndarray) -> np.ndarray:
        """Valid answer positions: first-segment tokens that are not specials.

        The first segment runs from after a leading [CLS] to the first [SEP].
        [UNK] counts as a real word; [PAD]/[CLS]/[SEP]/[MASK] never do.
        """
        v = self.vocab
        n = ids.shape[0]
        seps = np.nonzero(ids == v.sep_id)[0]
        seg_end = int(seps[0]) if seps.size else n
        cand = np.zeros(n, dtype=bool)
        start = 1 if n > 0 and ids[0] == v.cls_id else 0
        for i in range(start, seg_end):
            cand[i] = int(ids[i]) not in (v.pad_id, v.cls_id, v.sep_id, v.mask_id)
        return cand

    def mask_head(self, x_mask: np.ndarray) -> np.ndarray:
        """layer_norm(gelu(W x + b)) applied to one mask representation."""
        x_bar, _ = self._mask_head_forward(np.asarray(x_mask, dtype=np.float64)[None, :])
        return x_bar[0]

    def span_logits(
        self, encoded: EncodedSequence, x_bar: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear start/end logits; non-candidate positions are -inf."""
        sl, el, _ = self._span_logits_batch(
            encoded.representations[None, :, :],
            np.asarray(x_bar, dtype=np.float64)[None, :],
            encoded.candidate_mask[None, :],
        )
        return sl[0], el[0]

    def instance_logits(self, framed: FramedInstance) -> tuple[np.ndarray, np.ndarray]:
        """Encode one framed instance and return its start/end logits."""
        encoded = self.encode(framed.ids)
        x_bar = self.mask_head(encoded.representations[framed.mask_position])
        sl, el, _ = self._span_logits_batch(
            encoded.representations[None, :, :],
            x_bar[None, :],
            framed.candidate_mask[None, :],
        )
        return sl[0], el[0]

    # ------------------------------------------------------------- batch loss

    def _assemble_batch(self, batch: Sequence[FramedInstance]):
        if not batch:
            raise ValueError("batch must be non-empty")
        lengths = [f.ids.shape[0] for f in batch]
        max_len = max(lengths)
        if max_len > self.config.max_seq:
            raise ValueError(f"batch sequence length {max_len} exceeds max_seq")
        b = len(batch)
        ids = np.full((b, max_len), self.vocab.pad_id, dtype=np.int64)
        cand = np.zeros((b, max_len), dtype=bool)
        mask_pos = np.zeros(b, dtype=np.int64)
        gold = np.zeros((b, 2), dtype=np.int64)
        for i, framed in enumerate(batch):
            if framed.gold is None:
                raise ValueError(f"instance {framed.passage_id} has no gold span")
            n = lengths[i]
            ids[i, :n] = framed.ids
            cand[i, :n] = framed.candidate_mask
            mask_pos[i] = framed.mask_position
            gs, ge = framed.gold
            if not (0 <= gs <= ge < n) or not (cand[i, gs] and cand[i, ge]):
                raise ValueError(
                    f"instance {framed.passage_id}: gold span ({gs},{ge}) outside candidates"
                )
            gold[i] = (gs, ge)
        key_mask = ids != self.vocab.pad_id
        return ids, key_mask, cand, mask_pos, gold

    def loss(self, batch: Sequence[FramedInstance]) -> float:
        """Mean negative base-2 log-likelihood of the gold start/end positions."""
        loss, _ = self._forward_loss(batch, rng=None)
        return loss

    def loss_and_grads(
        self, batch: Sequence[FramedInstance], dropout_rng: np.random.Generator | None = None
    ) -> tuple[float, dict[str, np.ndarray]]:
        loss, state = self._forward_loss(batch, rng=dropout_rng)
        grads = self.zero_grads()
        self._backward_loss(state, grads)
        return loss, grads

    def _forward_loss(self, batch: Sequence[FramedInstance], rng: np.random.Generator | None):
        ids, key_mask, cand, mask_pos, gold = self._assemble_batch(batch)
        b = ids.shape[0]
        rows = np.arange(b)

        x_enc, enc_cache = self._forward_encoder(ids, key_mask, rng)
        x_mask = x_enc[rows, mask_pos]
        x_bar, head_cache = self._mask_head_forward(x_mask)
        sl, el, span_cache = self._span_logits_batch(x_enc, x_bar, cand)

        logp_s, prob_s = nn.log_softmax_rows(sl)
        logp_e, prob_e = nn.log_softmax_rows(el)
        per_instance = -(logp_s[rows, gold[:, 0]] + logp_e[rows, gold[:, 1]]) / _LN2
        loss = float(per_instance.mean())
        state = dict(
            enc_cache=enc_cache, head_cache=head_cache, span_cache=span_cache,
            prob_s=prob_s, prob_e=prob_e, cand=cand, mask_pos=mask_pos, gold=gold,
        )
        return loss, state

    def _backward_loss(self, state: dict, grads: dict[str, np.ndarray]) -> None:
        prob_s, prob_e = state["prob_s"], state["prob_e"]
        gold, mask_pos = state["gold"], state["mask_pos"]
        b = prob_s.shape[0]
        rows = np.arange(b)

        d_sl = prob_s.copy()
        d_sl[rows, gold[:, 0]] -= 1.0
        d_sl /= b * _LN2
        d_el = prob_e.copy()
        d_el[rows, gold[:, 1]] -= 1.0
        d_el /= b * _LN2

        d_x, d_xbar = self._span_logits_backward(d_sl, d_el, state["span_cache"], grads)
        d_xmask = self._mask_head_backward(d_xbar, state["head_cache"], grads)
        np.add.at(d_x, (rows, mask_pos), d_xmask)
        self._backward_encoder(d_x, state["enc_cache"], grads)
