"""Deterministic toy vision encoder: linear patch projection to a token grid.

One ``EncoderParams`` instance is shared between the global image and every
mask crop, so identical pixel content maps to identical features no matter
which path produced it.  Weights are drawn from the package PRNG
(xoshiro256**, see prng.py) as uniform [-a, a] with a = 1/sqrt(fan_in), then
rounded to float32 so the serialised form reproduces in-memory values
exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .maskio import RasterImage
from .prng import Xoshiro256StarStar

GRID_SIDE = 16
PATCH_SIDE = 28
INPUT_SIDE = PATCH_SIDE * GRID_SIDE  # 448

_MAGIC = b"ENC0"


@dataclass(frozen=True)
class FeatureGrid:
    """rows x cols x dim feature tensor; values must be finite."""

    rows: int
    cols: int
    dim: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.rows, self.cols, self.dim):
            raise ValueError("values shape does not match rows x cols x dim")
        if not np.isfinite(values).all():
            raise ValueError("feature grid contains non-finite values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def tokens(self) -> np.ndarray:
        """Row-major (rows*cols, dim) view of the grid."""
        return self.values.reshape(self.rows * self.cols, self.dim)


@dataclass(frozen=True)
class EncoderParams:
    """Linear patch-projection weights.

    ``projection`` has shape (patch_side**2 * channels, dim); a patch is
    flattened row-major with channels fastest, divided by 255, and matrix-
    multiplied.  ``seed`` is None for parameters loaded from file.
    """

    patch_side: int
    dim: int
    channels: int
    projection: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=np.float64)
        fan_in = self.patch_side * self.patch_side * self.channels
        if proj.shape != (fan_in, self.dim):
            raise ValueError(f"projection shape {proj.shape} != {(fan_in, self.dim)}")
        proj = proj.copy()
        proj.flags.writeable = False
        object.__setattr__(self, "projection", proj)

    @classmethod
    def seeded(
        cls, seed: int, patch_side: int = PATCH_SIDE, dim: int = 16, channels: int = 1
    ) -> "EncoderParams":
        fan_in = patch_side * patch_side * channels
        a = 1.0 / np.sqrt(fan_in)
        rng = Xoshiro256StarStar(seed)
        proj = rng.uniform(-a, a, (fan_in, dim)).astype(np.float32).astype(np.float64)
        return cls(patch_side=patch_side, dim=dim, channels=channels, projection=proj, seed=seed)


def encode(image: RasterImage, params: EncoderParams) -> FeatureGrid:
    """Project each patch of a square image onto the feature grid.

    Deterministic: same params and pixels give bit-identical grids.
    """
    if image.width != image.height:
        raise ValueError(f"shape error: encoder input must be square, got {image.width}x{image.height}")
    if image.width % params.patch_side != 0:
        raise ValueError(
            f"shape error: side {image.width} not divisible by patch {params.patch_side}"
        )
    if image.channels != params.channels:
        raise ValueError(f"shape error: image channels {image.channels} != {params.channels}")
    g = image.width // params.patch_side
    p = params.patch_side
    scaled = image.data / 255.0
    patches = (
        scaled.reshape(g, p, g, p, params.channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(g * g, p * p * params.channels)
    )
    values = patches @ params.projection
    return FeatureGrid(rows=g, cols=g, dim=params.dim, values=values.reshape(g, g, params.dim))


# ---------------------------------------------------------------------------
# Serialisation: 8-byte header (magic "ENC0", u16 patch_side, u16 dim) then
# the projection as little-endian float32, row-major.  Channel count is
# recovered from the payload length.
# ---------------------------------------------------------------------------


def save_encoder_params(params: EncoderParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HH", params.patch_side, params.dim))
        fh.write(params.projection.astype("<f4").tobytes())


def load_encoder_params(path) -> EncoderParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    patch_side, dim = struct.unpack("<HH", blob[4:8])
    payload = np.frombuffer(blob[8:], dtype="<f4").astype(np.float64)
    if payload.size % dim != 0:
        raise ValueError("payload length not divisible by dim")
    fan_in = payload.size // dim
    if fan_in % (patch_side * patch_side) != 0:
        raise ValueError("payload length inconsistent with patch size")
    channels = fan_in // (patch_side * patch_side)
    return EncoderParams(
        patch_side=patch_side,
        dim=dim,
        channels=channels,
        projection=payload.reshape(fan_in, dim),
    )
