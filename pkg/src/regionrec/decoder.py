"""Toy pre-norm transformer decoder with pluggable visibility masks.

The attention implementation never reads a masked key: every query row
gathers only its visible positions (as contiguous runs) before computing
scores and the weighted value sum.  Masked key/value content therefore
cannot perturb any other position's output, not even in the last floating
point bit — which is what turns the cascade-mask independence claims into
exact, testable identities.  Fully masked rows emit the zero vector.

Decoding fills pre-allocated output slots in a fixed layout (padding rows
and columns stay dead until a slot is filled), so absolute positions do not
depend on the decode schedule.  The first token of chunk i is predicted
from the logits at the last position of mask segment i — the only existing
row whose visible set is exactly the information chunk i may use.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .attnmask import (
    MASK,
    OUT,
    SEP,
    TEXT,
    IMAGE,
    AttentionMaskMatrix,
    CascadeConfig,
    SequenceLayout,
    build_cascade_mask,
    canonical_layout,
)
from .prng import Xoshiro256StarStar
from .prompt import OUTPUT_SLOTS, PromptBatch

PAD, START, SEP_TOKEN, END = "<pad>", "<start>", "<sep>", "<end>"
SPECIALS = (PAD, START, SEP_TOKEN, END)

_LN_EPS = 1e-5
_MAGIC = b"DEC0"


def make_vocab(words) -> tuple[str, ...]:
    """Vocab with the four specials first (pad=0, start=1, sep=2, end=3)."""
    out = list(SPECIALS)
    for w in words:
        if w in out:
            raise ValueError(f"duplicate vocab entry {w!r}")
        out.append(w)
    return tuple(out)


def _quantized_uniform(rng: Xoshiro256StarStar, fan_in: int, shape) -> np.ndarray:
    a = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-a, a, shape).astype(np.float32).astype(np.float64)


@dataclass(frozen=True)
class LayerWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class DecoderParams:
    """All decoder weights plus the vocabulary.

    Weight tensors are drawn in a fixed order (embed, positions, adapter,
    then per layer wq, wk, wv, wo, w1, w2, then the output head) as uniform
    [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the package PRNG and rounded to
    float32; layernorm scales start at one, shifts at zero.
    """

    vocab: tuple[str, ...]
    dim: int
    heads: int
    layers: int
    positional_mode: str
    max_len: int
    enc_dim: int
    embed: np.ndarray = field(repr=False)
    pos: np.ndarray = field(repr=False)
    adapter: np.ndarray = field(repr=False)
    blocks: tuple[LayerWeights, ...] = field(repr=False)
    ln_f_g: np.ndarray = field(repr=False)
    ln_f_b: np.ndarray = field(repr=False)
    head: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.positional_mode not in ("absolute", "none"):
            raise ValueError("positional_mode must be 'absolute' or 'none'")
        for special in SPECIALS:
            if special not in self.vocab:
                raise ValueError(f"config error: vocabulary missing special {special!r}")

    def token_id(self, token: str) -> int:
        try:
            return self.vocab.index(token)
        except ValueError:
            raise ValueError(f"vocab error: unknown token {token!r}") from None

    @property
    def pad_id(self) -> int:
        return self.vocab.index(PAD)

    @property
    def end_id(self) -> int:
        return self.vocab.index(END)

    @property
    def sep_id(self) -> int:
        return self.vocab.index(SEP_TOKEN)

    @classmethod
    def seeded(
        cls,
        seed: int,
        vocab,
        dim: int = 32,
        heads: int = 2,
        layers: int = 2,
        enc_dim: int = 16,
        positional_mode: str = "absolute",
        max_len: int = 2048,
    ) -> "DecoderParams":
        vocab = tuple(vocab)
        rng = Xoshiro256StarStar(seed)
        v = len(vocab)
        embed = _quantized_uniform(rng, dim, (v, dim))
        if positional_mode == "absolute":
            pos = _quantized_uniform(rng, dim, (max_len, dim))
        else:
            pos = np.zeros((0, dim))
        adapter = _quantized_uniform(rng, enc_dim, (enc_dim, dim))
        blocks = []
        for _ in range(layers):
            blocks.append(
                LayerWeights(
                    ln1_g=np.ones(dim),
                    ln1_b=np.zeros(dim),
                    wq=_quantized_uniform(rng, dim, (dim, dim)),
                    wk=_quantized_uniform(rng, dim, (dim, dim)),
                    wv=_quantized_uniform(rng, dim, (dim, dim)),
                    wo=_quantized_uniform(rng, dim, (dim, dim)),
                    ln2_g=np.ones(dim),
                    ln2_b=np.zeros(dim),
                    w1=_quantized_uniform(rng, dim, (dim, 4 * dim)),
                    w2=_quantized_uniform(rng, 4 * dim, (4 * dim, dim)),
                )
            )
        head = _quantized_uniform(rng, dim, (dim, v))
        return cls(
            vocab=vocab,
            dim=dim,
            heads=heads,
            layers=layers,
            positional_mode=positional_mode,
            max_len=max_len,
            enc_dim=enc_dim,
            embed=embed,
            pos=pos,
            adapter=adapter,
            blocks=tuple(blocks),
            ln_f_g=np.ones(dim),
            ln_f_b=np.zeros(dim),
            head=head,
            seed=seed,
        )


@dataclass(frozen=True)
class TokenSequence:
    """Mixed stream aligned with a layout: vocab ids or injected vectors.

    ``ids[p] >= 0`` means position p carries a vocab token; ``ids[p] == -1``
    means the injected vector at row p feeds the adapter instead.
    """

    ids: np.ndarray = field(repr=False)
    injected: np.ndarray = field(repr=False)
    layout: SequenceLayout = None

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).copy()
        injected = np.asarray(self.injected, dtype=np.float64).copy()
        if injected.ndim != 2 or injected.shape[0] != ids.shape[0]:
            raise ValueError("injected must be (n, enc_dim) aligned with ids")
        if self.layout is not None and self.layout.n != ids.shape[0]:
            raise ValueError("sequence length does not match layout")
        ids.flags.writeable = False
        injected.flags.writeable = False
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "injected", injected)

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    def with_ids(self, ids: np.ndarray) -> "TokenSequence":
        return TokenSequence(ids=ids, injected=self.injected, layout=self.layout)


@dataclass(frozen=True)
class DecodeResult:
    """Per-object labels and log-probabilities from one multi-mask pass."""

    labels: tuple[str, ...]
    stepwise_logprobs: tuple[tuple[float, ...], ...]
    per_object_logprob: tuple[float, ...]
    total_logprob_joint: float

    def __post_init__(self):
        if len(self.labels) != len(self.per_object_logprob):
            raise ValueError("labels and per_object_logprob lengths differ")
        for steps, total in zip(self.stepwise_logprobs, self.per_object_logprob):
            if abs(sum(steps) - total) > 1e-12 * max(1.0, abs(total)):
                raise ValueError("per_object_logprob must equal the sum of its steps")

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "stepwise_logprobs": [list(s) for s in self.stepwise_logprobs],
                "per_object_logprob": list(self.per_object_logprob),
                "total_logprob_joint": self.total_logprob_joint,
            },
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _visible_runs(bits: np.ndarray) -> list[list[tuple[int, int]]]:
    """Per-row visible index set as contiguous [start, end) runs."""
    runs_per_row = []
    for row in bits:
        idx = np.flatnonzero(row)
        if idx.size == 0:
            runs_per_row.append([])
            continue
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [idx.size - 1]))
        runs_per_row.append([(int(idx[s]), int(idx[e]) + 1) for s, e in zip(starts, ends)])
    return runs_per_row


def _attention(x_norm: np.ndarray, block: LayerWeights, heads: int, runs) -> np.ndarray:
    """Index-skipping multi-head attention.

    Keys outside a query's visible runs are never touched by any arithmetic,
    so their content cannot reach the output.  Rows with no visible keys
    produce the zero vector.
    """
    n, dim = x_norm.shape
    dh = dim // heads
    scale = 1.0 / np.sqrt(dh)
    q = (x_norm @ block.wq).reshape(n, heads, dh)
    k = (x_norm @ block.wk).reshape(n, heads, dh)
    v = (x_norm @ block.wv).reshape(n, heads, dh)

    out = np.zeros((n, dim))
    for qi in range(n):
        row_runs = runs[qi]
        if not row_runs:
            continue
        scores = [np.einsum("hd,mhd->hm", q[qi], k[s:e]) * scale for s, e in row_runs]
        sc = np.concatenate(scores, axis=1)  # (heads, m_total)
        sc -= sc.max(axis=1, keepdims=True)
        e_sc = np.exp(sc)
        w = e_sc / e_sc.sum(axis=1, keepdims=True)
        acc = np.zeros((heads, dh))
        offset = 0
        for s, e in row_runs:
            m = e - s
            acc += np.einsum("hm,mhd->hd", w[:, offset : offset + m], v[s:e])
            offset += m
        out[qi] = acc.reshape(dim)
    return out @ block.wo


def embed_sequence(seq: TokenSequence, params: DecoderParams) -> np.ndarray:
    """Vocab embeddings and adapter-projected injections, plus positions."""
    n = seq.n
    if n > params.max_len and params.positional_mode == "absolute":
        raise ValueError(f"sequence length {n} exceeds max_len {params.max_len}")
    ids = seq.ids
    if ids.max(initial=-1) >= len(params.vocab):
        raise ValueError("vocab error: token id out of range")
    x = np.empty((n, params.dim))
    id_rows = ids >= 0
    x[id_rows] = params.embed[ids[id_rows]]
    if (~id_rows).any():
        x[~id_rows] = seq.injected[~id_rows] @ params.adapter
    if params.positional_mode == "absolute":
        x = x + params.pos[:n]
    return x


def forward_hidden(seq: TokenSequence, mask: AttentionMaskMatrix, params: DecoderParams) -> np.ndarray:
    """Final-layernormed hidden states (n, dim) under the visibility mask."""
    if seq.n != mask.n:
        raise ValueError(f"shape error: sequence length {seq.n} != mask size {mask.n}")
    if not np.isfinite(seq.injected).all():
        raise ValueError("numeric error: non-finite injected values")
    x = embed_sequence(seq, params)
    runs = _visible_runs(mask.bits)
    for block in params.blocks:
        x = x + _attention(_layer_norm(x, block.ln1_g, block.ln1_b), block, params.heads, runs)
        h = _layer_norm(x, block.ln2_g, block.ln2_b)
        x = x + _gelu(h @ block.w1) @ block.w2
    return _layer_norm(x, params.ln_f_g, params.ln_f_b)


def forward(seq: TokenSequence, mask: AttentionMaskMatrix, params: DecoderParams) -> np.ndarray:
    """Per-position logits under the given visibility mask."""
    return forward_hidden(seq, mask, params) @ params.head


# ---------------------------------------------------------------------------
# Sequence assembly
# ---------------------------------------------------------------------------


def assemble_sequence(
    layout: SequenceLayout,
    params: DecoderParams,
    image_values: np.ndarray,
    mask_values: dict[int, np.ndarray],
    text_ids,
    output_ids: dict[int, list[int]] | None = None,
) -> TokenSequence:
    """Build the mixed token stream for a layout.

    ``image_values``/``mask_values`` are injected feature rows; separators
    get the sep token; output slots are padded beyond the provided gold ids.
    """
    output_ids = output_ids or {}
    n = layout.n
    ids = np.full(n, params.pad_id, dtype=np.int64)
    injected = np.zeros((n, params.enc_dim))
    pos = 0
    text_ids = list(text_ids)
    for seg in layout.segments:
        span = slice(pos, pos + seg.length)
        if seg.kind == IMAGE:
            if image_values.shape != (seg.length, params.enc_dim):
                raise ValueError("shape error: image segment does not match injected values")
            ids[span] = -1
            injected[span] = image_values
        elif seg.kind == TEXT:
            if len(text_ids) != seg.length:
                raise ValueError("shape error: text segment length mismatch")
            ids[span] = text_ids
        elif seg.kind == SEP:
            ids[span] = params.sep_id
        elif seg.kind == MASK:
            vals = mask_values[seg.index]
            if vals.shape != (seg.length, params.enc_dim):
                raise ValueError(f"shape error: mask segment {seg.index} mismatch")
            ids[span] = -1
            injected[span] = vals
        else:  # OUT
            gold = list(output_ids.get(seg.index, []))
            if len(gold) > seg.length:
                raise ValueError(f"output chunk {seg.index} overflows its slots")
            ids[pos : pos + len(gold)] = gold
        pos += seg.length
    return TokenSequence(ids=ids, injected=injected, layout=layout)


def encode_label(label: str, params: DecoderParams) -> list[int]:
    """Whitespace-tokenised label to ids, with the trailing end token."""
    return [params.token_id(w) for w in label.split()] + [params.end_id]


# ---------------------------------------------------------------------------
# Multi-slot greedy decoding
# ---------------------------------------------------------------------------


def _chunk_spans(layout: SequenceLayout) -> dict[int, tuple[int, int]]:
    spans = {}
    pos = 0
    for seg in layout.segments:
        if seg.kind == OUT:
            spans[seg.index] = (pos, pos + seg.length)
        pos += seg.length
    return spans


def _mask_last_positions(layout: SequenceLayout) -> dict[int, int]:
    last = {}
    pos = 0
    for seg in layout.segments:
        if seg.kind == MASK:
            last[seg.index] = pos + seg.length - 1
        pos += seg.length
    return last


def _runtime_mask(base_bits: np.ndarray, unfilled: np.ndarray) -> AttentionMaskMatrix:
    """Dead rows and columns for output slots that hold no token yet."""
    bits = base_bits.copy()
    if unfilled.size:
        bits[unfilled, :] = False
        bits[:, unfilled] = False
    return AttentionMaskMatrix(n=bits.shape[0], bits=bits)


def decode_objects(
    batch: PromptBatch,
    text_ids,
    params: DecoderParams,
    config: CascadeConfig | None = None,
    max_label_len: int = OUTPUT_SLOTS,
    schedule: str = "round_robin",
) -> DecodeResult:
    """Greedy-decode every object's label in one multi-slot pass.

    Output chunks are pre-allocated with ``max_label_len`` slots so absolute
    positions are schedule-independent; generation for chunk i stops at the
    end token or when its slots run out.
    """
    if config is None:
        config = CascadeConfig.full_cascade()
    if schedule not in ("round_robin", "sequential"):
        raise ValueError(f"unknown schedule {schedule!r}")
    grid = batch.image_tokens
    if grid.dim != params.enc_dim:
        raise ValueError("shape error: encoder dim does not match adapter input")
    k = batch.num_masks
    mask_lens = [ts.count for ts in batch.mask_token_sets]
    layout = canonical_layout(grid.rows * grid.cols, len(list(text_ids)), mask_lens, max_label_len)
    seq = assemble_sequence(
        layout,
        params,
        image_values=grid.tokens(),
        mask_values={ts.mask_index: ts.tokens for ts in batch.mask_token_sets},
        text_ids=text_ids,
    )
    base = build_cascade_mask(layout, config)
    spans = _chunk_spans(layout)
    anchors = _mask_last_positions(layout)

    ids = seq.ids.copy()
    fill = [0] * k
    done = [False] * k
    steps: list[list[float]] = [[] for _ in range(k)]
    words: list[list[str]] = [[] for _ in range(k)]

    def step(i: int) -> None:
        start, stop = spans[i]
        unfilled = np.concatenate(
            [np.arange(spans[j][0] + fill[j], spans[j][1]) for j in range(k)]
        )
        eff = _runtime_mask(base.bits, unfilled)
        logits = forward(seq.with_ids(ids), eff, params)
        anchor = start + fill[i] - 1 if fill[i] > 0 else anchors[i]
        lp = log_softmax(logits[anchor])
        tok = int(np.argmax(logits[anchor]))
        ids[start + fill[i]] = tok
        fill[i] += 1
        steps[i].append(float(lp[tok]))
        if tok == params.end_id or fill[i] == stop - start:
            done[i] = True
        if tok != params.end_id:
            words[i].append(params.vocab[tok])

    if schedule == "round_robin":
        while not all(done):
            for i in range(k):
                if not done[i]:
                    step(i)
    else:
        for i in range(k):
            while not done[i]:
                step(i)

    per_object = tuple(float(sum(s)) for s in steps)
    return DecodeResult(
        labels=tuple(" ".join(w) for w in words),
        stepwise_logprobs=tuple(tuple(s) for s in steps),
        per_object_logprob=per_object,
        total_logprob_joint=float(sum(per_object)),
    )


# ---------------------------------------------------------------------------
# Isolation, teacher forcing, joint probability
# ---------------------------------------------------------------------------


def isolate_single_mask(
    seq: TokenSequence,
    layout: SequenceLayout,
    keep: int,
    config: CascadeConfig | None = None,
    pad_id: int = 0,
) -> tuple[TokenSequence, AttentionMaskMatrix]:
    """Pad out every other object's mask and output tokens and kill their
    rows and columns; positions (and hence position embeddings) are kept.

    ``pad_id`` defaults to 0, which is where make_vocab puts the pad token.
    """
    if config is None:
        config = CascadeConfig.full_cascade()
    k = layout.num_objects
    if not 0 <= keep < k:
        raise IndexError(f"keep {keep} out of range for K={k}")
    if k > 1:
        drop = np.concatenate(
            [layout.positions(kind, j) for j in range(k) if j != keep for kind in (MASK, OUT)]
        )
    else:
        drop = np.asarray([], dtype=np.int64)

    ids = seq.ids.copy()
    injected = seq.injected.copy()
    base = build_cascade_mask(layout, config)
    bits = base.bits.copy()
    if drop.size:
        ids[drop] = pad_id
        injected[drop] = 0.0
        bits[drop, :] = False
        bits[:, drop] = False
    return (
        TokenSequence(ids=ids, injected=injected, layout=layout),
        AttentionMaskMatrix(n=layout.n, bits=bits),
    )


def teacher_forced_loss(
    seq: TokenSequence,
    mask: AttentionMaskMatrix,
    params: DecoderParams,
) -> float:
    """Mean cross-entropy over output-chunk token positions.

    Targets are the filled tokens of each output chunk (trailing pad slots
    are ignored); the first token of chunk i is predicted from the last
    position of mask segment i, later ones from their predecessor slot.
    Every chunk's filled part must end with the end token.
    """
    layout = seq.layout
    if layout is None:
        raise ValueError("sequence must carry its layout")
    anchors = _mask_last_positions(layout)
    spans = _chunk_spans(layout)
    pairs: list[tuple[int, int]] = []
    for i, (start, stop) in sorted(spans.items()):
        chunk_ids = seq.ids[start:stop]
        filled = np.flatnonzero(chunk_ids != params.pad_id)
        if filled.size == 0:
            raise ValueError(f"precondition violation: output chunk {i} is empty")
        if filled.size != filled[-1] + 1:
            raise ValueError(f"output chunk {i} has pad gaps")
        if chunk_ids[filled[-1]] != params.end_id:
            raise ValueError(f"precondition violation: chunk {i} does not end with {END!r}")
        pred = anchors[i]
        for offset in range(filled[-1] + 1):
            pairs.append((pred, int(chunk_ids[offset])))
            pred = start + offset
    if not pairs:
        raise ValueError("precondition violation: no output positions")
    logits = forward(seq, mask, params)
    total = 0.0
    for pred_pos, target in pairs:
        total -= float(log_softmax(logits[pred_pos])[target])
    return total / len(pairs)


def joint_logprob(result: DecodeResult) -> float:
    """Joint log-probability: the sum of per-object log-probabilities."""
    return float(sum(result.per_object_logprob))


# ---------------------------------------------------------------------------
# Serialisation: 8-byte core header (magic "DEC0", u16 dim, u8 heads,
# u8 layers), a 16-byte extension (u32 vocab size, u32 max_len, u32 enc_dim,
# u32 flags bit0 = absolute positions), then all tensors as little-endian
# float32 in draw order.  The vocabulary ships as a JSON array alongside.
# ---------------------------------------------------------------------------


def _tensors_in_order(params: DecoderParams):
    yield params.embed
    if params.positional_mode == "absolute":
        yield params.pos
    yield params.adapter
    for b in params.blocks:
        for t in (b.ln1_g, b.ln1_b, b.wq, b.wk, b.wv, b.wo, b.ln2_g, b.ln2_b, b.w1, b.w2):
            yield t
    yield params.ln_f_g
    yield params.ln_f_b
    yield params.head


def save_decoder_params(params: DecoderParams, blob_path, vocab_path) -> None:
    with open(blob_path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HBB", params.dim, params.heads, params.layers))
        flags = 1 if params.positional_mode == "absolute" else 0
        fh.write(struct.pack("<IIII", len(params.vocab), params.max_len, params.enc_dim, flags))
        for tensor in _tensors_in_order(params):
            fh.write(np.asarray(tensor).astype("<f4").tobytes())
    with open(vocab_path, "w", encoding="ascii") as fh:
        json.dump(list(params.vocab), fh)
        fh.write("\n")


def load_decoder_params(blob_path, vocab_path) -> DecoderParams:
    with open(vocab_path, "r", encoding="ascii") as fh:
        vocab = tuple(json.load(fh))
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    dim, heads, layers = struct.unpack("<HBB", blob[4:8])
    vocab_size, max_len, enc_dim, flags = struct.unpack("<IIII", blob[8:24])
    if vocab_size != len(vocab):
        raise ValueError("vocab size does not match blob header")
    positional_mode = "absolute" if flags & 1 else "none"
    data = np.frombuffer(blob[24:], dtype="<f4").astype(np.float64)

    cursor = [0]

    def take(shape):
        size = int(np.prod(shape))
        out = data[cursor[0] : cursor[0] + size].reshape(shape)
        cursor[0] += size
        return out

    v = vocab_size
    embed = take((v, dim))
    pos = take((max_len, dim)) if positional_mode == "absolute" else np.zeros((0, dim))
    adapter = take((enc_dim, dim))
    blocks = []
    for _ in range(layers):
        blocks.append(
            LayerWeights(
                ln1_g=take((dim,)),
                ln1_b=take((dim,)),
                wq=take((dim, dim)),
                wk=take((dim, dim)),
                wv=take((dim, dim)),
                wo=take((dim, dim)),
                ln2_g=take((dim,)),
                ln2_b=take((dim,)),
                w1=take((dim, 4 * dim)),
                w2=take((4 * dim, dim)),
            )
        )
    ln_f_g = take((dim,))
    ln_f_b = take((dim,))
    head = take((dim, v))
    if cursor[0] != data.size:
        raise ValueError("trailing bytes in decoder blob")
    return DecoderParams(
        vocab=vocab,
        dim=dim,
        heads=heads,
        layers=layers,
        positional_mode=positional_mode,
        max_len=max_len,
        enc_dim=enc_dim,
        embed=embed,
        pos=pos,
        adapter=adapter,
        blocks=tuple(blocks),
        ln_f_g=ln_f_g,
        ln_f_b=ln_f_b,
        head=head,
    )
