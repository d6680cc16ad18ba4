"""Mask2Token assembly: geometry + encoder + grid selection per mask.

The per-mask pipeline is: tight bbox -> context crop window (scale >= 1) ->
bilinear crop to the encoder input side -> encode -> downsample the mask to
the token grid -> select the features at active cells in row-major order.
The global image is square-stretched through the same bilinear path and
encoded with the same weights, so crop features and global features live in
one embedding space.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderParams, FeatureGrid, GRID_SIDE, encode
from .maskio import BinaryMask, RasterImage
from .region import context_crop_window, downsample_to_grid, extract_and_resize, resize_image, tight_bbox

MAX_MASKS = 30
CONTEXT_SCALE = 2.0
OUTPUT_SLOTS = 8

_MAGIC = b"MTS0"


@dataclass(frozen=True)
class MaskTokenSet:
    """Features selected for one mask, with grid-cell provenance."""

    tokens: np.ndarray = field(repr=False)  # (count, dim)
    grid_indices: np.ndarray = field(repr=False)  # (count, 2) as (row, col)
    mask_index: int = 0

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.float64)
        idx = np.asarray(self.grid_indices, dtype=np.int64)
        if tokens.ndim != 2 or idx.shape != (tokens.shape[0], 2):
            raise ValueError("tokens and grid_indices are inconsistent")
        if tokens.shape[0] < 1:
            raise ValueError("token set must be non-empty")
        # strict row-major ordering of provenance cells
        keys = idx[:, 0].astype(np.int64) * (2**20) + idx[:, 1]
        if not (np.diff(keys) > 0).all():
            raise ValueError("grid_indices must be strictly increasing row-major")
        tokens = tokens.copy()
        tokens.flags.writeable = False
        idx = idx.copy()
        idx.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "grid_indices", idx)

    @property
    def count(self) -> int:
        return int(self.tokens.shape[0])


@dataclass(frozen=True)
class PromptBatch:
    """Global image tokens plus the ordered per-mask token sets."""

    image_tokens: FeatureGrid
    mask_token_sets: tuple[MaskTokenSet, ...]
    context_scale: float

    def __post_init__(self):
        sets = tuple(self.mask_token_sets)
        object.__setattr__(self, "mask_token_sets", sets)
        if not 1 <= len(sets):
            raise ValueError("batch needs at least one mask")
        for i, ts in enumerate(sets):
            if ts.mask_index != i:
                raise ValueError("mask_index values must be 0..K-1 in order")

    @property
    def num_masks(self) -> int:
        return len(self.mask_token_sets)


def mask2token(
    image: RasterImage,
    mask: BinaryMask,
    params: EncoderParams,
    scale: float = CONTEXT_SCALE,
    grid: int = GRID_SIDE,
    mask_index: int = 0,
) -> MaskTokenSet:
    """Run the full per-mask pipeline and select active-cell features."""
    bbox = tight_bbox(mask)
    window = context_crop_window(bbox, scale, image.width, image.height)
    input_side = params.patch_side * grid
    crop = extract_and_resize(image, window, input_side)
    feats = encode(crop, params)
    gm = downsample_to_grid(mask, window, grid, grid)
    idx = np.argwhere(gm.active)
    tokens = feats.values[gm.active]
    return MaskTokenSet(tokens=tokens, grid_indices=idx, mask_index=mask_index)


def encode_global(image: RasterImage, params: EncoderParams, grid: int = GRID_SIDE) -> FeatureGrid:
    """Square-stretch the whole image to the encoder input and encode it."""
    side = params.patch_side * grid
    return encode(resize_image(image, side, side), params)


def build_prompt_batch(
    image: RasterImage,
    masks: list[BinaryMask],
    params: EncoderParams,
    scale: float = CONTEXT_SCALE,
    max_masks: int = MAX_MASKS,
    grid: int = GRID_SIDE,
    parallel: bool = False,
) -> PromptBatch:
    """Encode the global image once and every mask independently.

    Mask order is preserved; the parallel path must produce bit-identical
    results to the sequential one (per-mask work is pure).
    """
    if not masks:
        raise ValueError("need at least one mask")
    if len(masks) > max_masks:
        raise ValueError(f"capacity error: {len(masks)} masks exceeds max_masks={max_masks}")

    image_tokens = encode_global(image, params, grid)

    def one(i_mask):
        i, m = i_mask
        return mask2token(image, m, params, scale=scale, grid=grid, mask_index=i)

    if parallel:
        with ThreadPoolExecutor() as pool:
            sets = list(pool.map(one, enumerate(masks)))
    else:
        sets = [one(im) for im in enumerate(masks)]
    return PromptBatch(image_tokens=image_tokens, mask_token_sets=tuple(sets), context_scale=scale)


@dataclass(frozen=True)
class SequenceBudget:
    """Per-segment token counts for the canonical decode layout."""

    image_tokens: int
    text_tokens: int
    mask_tokens: tuple[int, ...]
    separators: int
    output_slots: tuple[int, ...]

    @property
    def total(self) -> int:
        return (
            self.image_tokens
            + self.text_tokens
            + sum(self.mask_tokens)
            + self.separators
            + sum(self.output_slots)
        )


def token_budget(batch: PromptBatch, text_len: int, output_slots: int = OUTPUT_SLOTS) -> SequenceBudget:
    """Token accounting for the canonical layout: one separator per mask,
    ``output_slots`` positions reserved per object."""
    grid = batch.image_tokens
    k = batch.num_masks
    return SequenceBudget(
        image_tokens=grid.rows * grid.cols,
        text_tokens=text_len,
        mask_tokens=tuple(ts.count for ts in batch.mask_token_sets),
        separators=k,
        output_slots=tuple([output_slots] * k),
    )


# ---------------------------------------------------------------------------
# Dump format: JSON descriptor plus a sidecar float32 blob with an 8-byte
# header (magic "MTS0", u16 count, u16 dim).
# ---------------------------------------------------------------------------


def dump_token_set(token_set: MaskTokenSet, json_path, blob_path) -> None:
    with open(blob_path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HH", token_set.count, token_set.tokens.shape[1]))
        fh.write(token_set.tokens.astype("<f4").tobytes())
    doc = {
        "mask_index": token_set.mask_index,
        "count": token_set.count,
        "dim": int(token_set.tokens.shape[1]),
        "grid_indices": token_set.grid_indices.tolist(),
    }
    with open(json_path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_token_set(json_path, blob_path) -> MaskTokenSet:
    with open(json_path, "r", encoding="ascii") as fh:
        doc = json.load(fh)
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    count, dim = struct.unpack("<HH", blob[4:8])
    tokens = np.frombuffer(blob[8:], dtype="<f4").astype(np.float64).reshape(count, dim)
    return MaskTokenSet(
        tokens=tokens,
        grid_indices=np.asarray(doc["grid_indices"], dtype=np.int64),
        mask_index=doc["mask_index"],
    )
