"""Image and mask data types with bit-exact file I/O, plus the area-ratio filter.

File formats:

* PGM ``P5`` (binary) and ``P2`` (ASCII), maxval <= 255.  Masks travel as
  PGM with foreground 255 / background 0 and are thresholded at >= 128 on
  the way back in.
* Uncompressed run-length JSON ``{"size": [h, w], "counts": [...]}`` in
  column-major order, first run counting false pixels.
* Mask record collections as JSON lines, one object per line:
  ``{"image_id": ..., "label": ..., "rle": {...}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RasterImage:
    """Row-major intensity raster, values in [0, 255], 1 or 3 channels.

    ``data`` has shape (height, width, channels) and dtype float64 so that
    resampled images keep sub-integer precision; file I/O rounds.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {data.shape} != {(self.height, self.width, self.channels)}"
            )
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    def plane(self, c: int = 0) -> np.ndarray:
        return self.data[:, :, c]


@dataclass(frozen=True)
class BinaryMask:
    """2-D boolean raster; empty masks are rejected at construction."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(f"bits shape {bits.shape} != {(self.height, self.width)}")
        if not bits.any():
            raise ValueError("mask has no true bits")
        object.__setattr__(self, "bits", _readonly(bits))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "BinaryMask":
        arr = np.asarray(arr, dtype=bool)
        h, w = arr.shape
        return cls(width=w, height=h, bits=arr)

    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )


@dataclass(frozen=True)
class MaskRecord:
    """A mask bound to its source image and optional category label."""

    mask: BinaryMask
    image_id: str
    label: str | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def _pgm_tokens(buf: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments.

    Returns (token, offset-after-token) so the binary payload start is known.
    """
    i = 0
    n = len(buf)
    while i < n:
        c = buf[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            j = i
            while j < n and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
                j += 1
            yield buf[i:j].decode("ascii", errors="replace"), j
            i = j


def read_pgm(path) -> RasterImage:
    """Read a P5 (binary) or P2 (ASCII) PGM file with maxval <= 255."""
    with open(path, "rb") as fh:
        buf = fh.read()

    tokens = _pgm_tokens(buf)

    def next_token(what: str):
        try:
            return next(tokens)
        except StopIteration:
            raise ValueError(f"pgm parse error: missing {what}") from None

    magic, _ = next_token("magic")
    if magic not in ("P5", "P2"):
        raise ValueError(f"pgm parse error: bad magic {magic!r}")

    def int_field(what: str):
        tok, off = next_token(what)
        try:
            val = int(tok)
        except ValueError:
            raise ValueError(f"pgm parse error: bad {what} {tok!r}") from None
        return val, off

    width, _ = int_field("width")
    height, _ = int_field("height")
    maxval, off = int_field("maxval")
    if width < 1 or height < 1:
        raise ValueError("pgm parse error: non-positive width/height")
    if not (0 < maxval <= 255):
        raise ValueError(f"pgm parse error: maxval {maxval} outside 1..255")

    npix = width * height
    if magic == "P5":
        # exactly one whitespace byte separates maxval from the payload
        data = buf[off + 1 : off + 1 + npix]
        if len(data) != npix:
            raise ValueError(f"pgm length error: expected {npix} bytes, got {len(data)}")
        arr = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
    else:
        vals = []
        for tok, _ in tokens:
            try:
                vals.append(int(tok))
            except ValueError:
                raise ValueError(f"pgm parse error: bad pixel value {tok!r}") from None
        if len(vals) != npix:
            raise ValueError(f"pgm length error: expected {npix} values, got {len(vals)}")
        arr = np.asarray(vals, dtype=np.float64)
        if arr.size and (arr.min() < 0 or arr.max() > maxval):
            raise ValueError("pgm parse error: pixel value outside 0..maxval")

    return RasterImage(width=width, height=height, channels=1, data=arr.reshape(height, width, 1))


def write_pgm(image: RasterImage, path, binary: bool = True) -> None:
    """Write a single-channel image as P5 (default) or P2."""
    if image.channels != 1:
        raise ValueError("pgm supports single-channel images only")
    vals = np.clip(np.rint(image.plane()), 0, 255).astype(np.uint8)
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(vals.tobytes())
        else:
            fh.write("\n".join(" ".join(str(v) for v in row) for row in vals).encode("ascii"))
            fh.write(b"\n")


def mask_to_image(mask: BinaryMask) -> RasterImage:
    """Encode a mask as a 0/255 grayscale raster."""
    return RasterImage.from_array(np.where(mask.bits, 255.0, 0.0))


def mask_from_image(image: RasterImage) -> BinaryMask:
    """Threshold a grayscale raster at >= 128."""
    return BinaryMask.from_array(image.plane() >= 128.0)


# ---------------------------------------------------------------------------
# Run-length encoding
# ---------------------------------------------------------------------------


def mask_from_rle(rle) -> BinaryMask:
    """Decode uncompressed RLE (column-major, leading false-run).

    Accepts the JSON text or an already-parsed dict.
    """
    obj = json.loads(rle) if isinstance(rle, (str, bytes)) else rle
    try:
        h, w = (int(v) for v in obj["size"])
        counts = [int(c) for c in obj["counts"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"rle parse error: {exc}") from None
    if any(c < 0 for c in counts):
        raise ValueError("rle value error: negative count")
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"rle length error: counts sum {total} != {h * w}")
    values = np.arange(len(counts)) % 2 == 1  # runs alternate false, true, ...
    flat = np.repeat(values, counts)
    return BinaryMask(width=w, height=h, bits=flat.reshape((h, w), order="F"))


def mask_to_rle(mask: BinaryMask) -> str:
    """Encode to uncompressed RLE JSON text (round-trips bit-exactly)."""
    flat = mask.bits.ravel(order="F")
    # run boundaries; leading false-run is emitted even when zero-length
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return json.dumps({"size": [mask.height, mask.width], "counts": counts})


# ---------------------------------------------------------------------------
# Record collections (JSON lines)
# ---------------------------------------------------------------------------


def record_to_json(record: MaskRecord) -> str:
    return json.dumps(
        {
            "image_id": record.image_id,
            "label": record.label,
            "rle": json.loads(mask_to_rle(record.mask)),
        }
    )


def record_from_json(line: str) -> MaskRecord:
    obj = json.loads(line)
    return MaskRecord(
        mask=mask_from_rle(obj["rle"]),
        image_id=obj["image_id"],
        label=obj.get("label"),
    )


def write_records(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for record in records:
            fh.write(record_to_json(record) + "\n")


def read_records(path) -> list[MaskRecord]:
    records = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_json(line))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"record error at line {lineno}: {exc}") from None
    return records


# ---------------------------------------------------------------------------
# Area-ratio filter
# ---------------------------------------------------------------------------


def area_ratio_filter(
    records: list[MaskRecord],
    image_area_by_id: dict[str, int],
    min_ratio: float,
) -> tuple[list[MaskRecord], list[MaskRecord]]:
    """Partition records into (kept, dropped) by mask-area / image-area >= min_ratio.

    Input order is preserved in both outputs.
    """
    if not 0.0 <= min_ratio <= 1.0:
        raise ValueError("min_ratio must be within [0, 1]")
    kept, dropped = [], []
    for record in records:
        if record.image_id not in image_area_by_id:
            raise KeyError(f"no image area for image_id {record.image_id!r}")
        area = image_area_by_id[record.image_id]
        if record.mask.area() / area >= min_ratio:
            kept.append(record)
        else:
            dropped.append(record)
    return kept, dropped
