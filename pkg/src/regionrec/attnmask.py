"""Sequence layout modelling and cascade attention-mask construction.

A layout is an ordered list of typed segments over one decoding sequence:
one image segment, an optional text segment, per-object mask segments,
separators, and per-object output chunks.  The mask builder starts from the
causal lower triangle and removes visibility according to three decoupling
rules:

1. mask segments do not see other mask segments;
2. output chunks do not see earlier output chunks;
3. with both decouplings active (the full cascade), an output chunk sees
   only the image, the text, its own mask segment, and its own prior
   tokens — nothing else, separators included.

Separator rows attend to nothing; their attention output is defined as the
zero vector downstream.  Matrices are plain dense boolean arrays at this
scale.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

IMAGE = "image"
TEXT = "text"
SEP = "sep"
MASK = "mask"
OUT = "out"

_KIND_CODE = {IMAGE: 0, TEXT: 1, SEP: 2, MASK: 3, OUT: 4}


@dataclass(frozen=True)
class Segment:
    kind: str
    length: int
    index: int | None = None

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind in (MASK, OUT):
            if self.index is None or self.index < 0:
                raise ValueError(f"{self.kind} segment needs a non-negative index")
            if self.length < (1 if self.kind == MASK else 0):
                raise ValueError(f"{self.kind} segment length too small")
        else:
            if self.index is not None:
                raise ValueError(f"{self.kind} segment must not carry an index")
            if self.length < 1:
                raise ValueError(f"{self.kind} segment length must be >= 1")

    def label(self) -> str:
        if self.kind in (MASK, OUT):
            return f"{self.kind}{self.index}"
        return self.kind


@dataclass(frozen=True)
class SequenceLayout:
    """Typed segmentation of one token sequence."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        if sum(1 for s in segments if s.kind == IMAGE) != 1:
            raise ValueError("layout needs exactly one image segment")
        if sum(1 for s in segments if s.kind == TEXT) > 1:
            raise ValueError("layout allows at most one text segment")
        mask_ids = [s.index for s in segments if s.kind == MASK]
        out_ids = [s.index for s in segments if s.kind == OUT]
        if mask_ids != sorted(set(mask_ids)) or mask_ids != list(range(len(mask_ids))):
            raise ValueError("mask segments must appear once each, in order 0..K-1")
        if out_ids != list(range(len(out_ids))):
            raise ValueError("output chunks must appear once each, in order 0..K-1")
        if len(mask_ids) != len(out_ids):
            raise ValueError("mask and output segment counts differ")
        first_out = next((i for i, s in enumerate(segments) if s.kind == OUT), len(segments))
        if any(s.kind == MASK for s in segments[first_out:]):
            raise ValueError("all mask segments must precede all output chunks")

    @property
    def n(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def num_objects(self) -> int:
        return sum(1 for s in self.segments if s.kind == MASK)

    def position_kinds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-position (kind code, instance index or -1) arrays."""
        kinds = np.empty(self.n, dtype=np.int8)
        insts = np.full(self.n, -1, dtype=np.int32)
        pos = 0
        for seg in self.segments:
            kinds[pos : pos + seg.length] = _KIND_CODE[seg.kind]
            if seg.index is not None:
                insts[pos : pos + seg.length] = seg.index
            pos += seg.length
        return kinds, insts

    def positions(self, kind: str, index: int | None = None) -> np.ndarray:
        """Positions of all tokens of a kind (optionally one instance)."""
        out = []
        pos = 0
        for seg in self.segments:
            if seg.kind == kind and (index is None or seg.index == index):
                out.extend(range(pos, pos + seg.length))
            pos += seg.length
        return np.asarray(out, dtype=np.int64)

    def header(self) -> str:
        return " ".join(f"{s.label()}:{s.length}" for s in self.segments)


def parse_layout_header(header: str) -> SequenceLayout:
    """Parse the dump-format header, e.g. ``image:2 text:1 mask0:2 sep:1 out0:1``."""
    segments = []
    for token in header.split():
        m = re.fullmatch(r"(image|text|sep|mask(\d+)|out(\d+)):(\d+)", token)
        if not m:
            raise ValueError(f"bad layout token {token!r}")
        length = int(m.group(4))
        if m.group(2) is not None:
            segments.append(Segment(MASK, length, int(m.group(2))))
        elif m.group(3) is not None:
            segments.append(Segment(OUT, length, int(m.group(3))))
        else:
            segments.append(Segment(m.group(1), length))
    return SequenceLayout(tuple(segments))


def canonical_layout(
    image_len: int,
    text_len: int,
    mask_lens: list[int],
    output_lens,
) -> SequenceLayout:
    """The decode-time layout: image, text, each mask followed by one
    separator, then the output chunks.

    ``output_lens`` may be one int (same slot count per object) or a list.
    """
    k = len(mask_lens)
    if isinstance(output_lens, int):
        output_lens = [output_lens] * k
    if len(output_lens) != k:
        raise ValueError("output_lens must match the number of masks")
    segments = [Segment(IMAGE, image_len)]
    if text_len > 0:
        segments.append(Segment(TEXT, text_len))
    for i, m in enumerate(mask_lens):
        segments.append(Segment(MASK, m, i))
        segments.append(Segment(SEP, 1))
    for i, o in enumerate(output_lens):
        segments.append(Segment(OUT, o, i))
    return SequenceLayout(tuple(segments))


@dataclass(frozen=True)
class CascadeConfig:
    """Which decoupling rules are active.

    (True, True) is the full cascade; (True, False) decouples only the mask
    segments; (False, True) only the output chunks; (False, False) is the
    plain causal baseline.  ``output_sees_mask`` ablates mask visibility away
    from output chunks entirely.
    """

    region_decouple: bool = True
    output_decouple: bool = True
    output_sees_mask: bool = True

    @classmethod
    def full_cascade(cls) -> "CascadeConfig":
        return cls(True, True, True)

    @classmethod
    def region_variant(cls) -> "CascadeConfig":
        return cls(True, False, True)

    @classmethod
    def output_variant(cls) -> "CascadeConfig":
        return cls(False, True, True)

    @classmethod
    def plain_causal(cls) -> "CascadeConfig":
        return cls(False, False, True)


@dataclass(frozen=True)
class AttentionMaskMatrix:
    """n x n visibility matrix: bits[q, k] means query q may attend key k."""

    n: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.n, self.n):
            raise ValueError("bits must be n x n")
        if np.triu(bits, 1).any():
            raise ValueError("attention mask exceeds the causal triangle")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def visible_pairs(self) -> int:
        return int(self.bits.sum())


def build_cascade_mask(layout: SequenceLayout, config: CascadeConfig) -> AttentionMaskMatrix:
    """Construct the visibility matrix for a layout under a config.

    Starts from the causal lower triangle, then removes mask-to-other-mask
    attention, output-to-earlier-output attention, and (full cascade) limits
    output rows to image + text + own mask + own prior tokens.  Separator
    rows are zeroed last.
    """
    n = layout.n
    kinds, insts = layout.position_kinds()
    bits = np.tril(np.ones((n, n), dtype=bool))

    mask_cols = kinds == _KIND_CODE[MASK]
    full = config.region_decouple and config.output_decouple

    if config.region_decouple:
        for i in range(layout.num_objects):
            rows = layout.positions(MASK, i)
            other = mask_cols & (insts != i)
            if rows.size and other.any():
                bits[np.ix_(rows, np.flatnonzero(other))] = False

    for i in range(layout.num_objects):
        rows = layout.positions(OUT, i)
        if not rows.size:
            continue
        if full:
            allowed = (kinds == _KIND_CODE[IMAGE]) | (kinds == _KIND_CODE[TEXT])
            allowed |= (kinds == _KIND_CODE[OUT]) & (insts == i)
            if config.output_sees_mask:
                allowed |= mask_cols & (insts == i)
            bits[rows] &= allowed[None, :]
        else:
            if config.output_decouple:
                earlier = (kinds == _KIND_CODE[OUT]) & (insts < i) & (insts >= 0)
                if earlier.any():
                    bits[np.ix_(rows, np.flatnonzero(earlier))] = False
            if not config.output_sees_mask and mask_cols.any():
                bits[np.ix_(rows, np.flatnonzero(mask_cols))] = False

    sep_rows = layout.positions(SEP)
    if sep_rows.size:
        bits[sep_rows] = False

    return AttentionMaskMatrix(n=n, bits=bits)


def to_additive(mask: AttentionMaskMatrix) -> np.ndarray:
    """Visibility to additive form: True -> 0.0, False -> -inf.

    Downstream attention must give exactly zero weight to -inf entries.
    """
    return np.where(mask.bits, 0.0, -np.inf)


def _pair_visible(kinds, insts, config: CascadeConfig, q: int, k: int) -> bool:
    """Single (query, key) visibility under the segment rules."""
    if k > q:
        return False
    qk, qi = int(kinds[q]), int(insts[q])
    kk, ki = int(kinds[k]), int(insts[k])
    if qk == _KIND_CODE[SEP]:
        return False
    if config.region_decouple and qk == _KIND_CODE[MASK] and kk == _KIND_CODE[MASK] and ki != qi:
        return False
    if qk == _KIND_CODE[OUT]:
        if config.region_decouple and config.output_decouple:
            if kk in (_KIND_CODE[IMAGE], _KIND_CODE[TEXT]):
                return True
            if kk == _KIND_CODE[MASK]:
                return config.output_sees_mask and ki == qi
            if kk == _KIND_CODE[OUT]:
                return ki == qi
            return False
        if config.output_decouple and kk == _KIND_CODE[OUT] and 0 <= ki < qi:
            return False
        if not config.output_sees_mask and kk == _KIND_CODE[MASK]:
            return False
    return True


def extend_for_decode(
    mask: AttentionMaskMatrix,
    layout: SequenceLayout,
    new_token_owner: int,
    config: CascadeConfig | None = None,
) -> tuple[AttentionMaskMatrix, SequenceLayout]:
    """Grow output chunk ``new_token_owner`` by one token.

    The new row/column is inserted at the chunk's end and filled by the same
    per-pair rules the batch builder uses, so chaining extensions always
    matches a from-scratch rebuild on the grown layout.  Under the full
    cascade the new row sees exactly image, text, its own mask segment, and
    its own chunk including itself, and every existing row gains a false
    column.
    """
    if config is None:
        config = CascadeConfig.full_cascade()
    k = layout.num_objects
    if not 0 <= new_token_owner < k:
        raise IndexError(f"owner {new_token_owner} out of range for K={k}")

    segments = []
    insert_at = None
    pos = 0
    for seg in layout.segments:
        if seg.kind == OUT and seg.index == new_token_owner:
            segments.append(Segment(OUT, seg.length + 1, seg.index))
            insert_at = pos + seg.length
        else:
            segments.append(seg)
        pos += seg.length
    grown = SequenceLayout(tuple(segments))

    n = layout.n
    p = insert_at
    old = mask.bits
    bits = np.zeros((n + 1, n + 1), dtype=bool)
    bits[:p, :p] = old[:p, :p]
    bits[:p, p + 1 :] = old[:p, p:]
    bits[p + 1 :, :p] = old[p:, :p]
    bits[p + 1 :, p + 1 :] = old[p:, p:]

    kinds, insts = grown.position_kinds()
    for j in range(n + 1):
        bits[p, j] = _pair_visible(kinds, insts, config, p, j)
    for q in range(n + 1):
        if q != p:
            bits[q, p] = _pair_visible(kinds, insts, config, q, p)

    return AttentionMaskMatrix(n=n + 1, bits=bits), grown


def dump_attention_mask(mask: AttentionMaskMatrix, layout: SequenceLayout) -> str:
    """Bit-exact ASCII dump: layout header line, then one 0/1 row per query."""
    rows = ["".join("1" if b else "0" for b in row) for row in mask.bits]
    return "\n".join([layout.header()] + rows)


def parse_attention_dump(text: str) -> tuple[AttentionMaskMatrix, SequenceLayout]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    layout = parse_layout_header(lines[0])
    bits = np.array([[c == "1" for c in ln.strip()] for ln in lines[1:]], dtype=bool)
    return AttentionMaskMatrix(n=bits.shape[0], bits=bits), layout
