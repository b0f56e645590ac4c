"""Dataset scanning, deterministic ordering, and manifest files.

Files sort by the integer value of the first digit run anywhere in the
stem (files without digits come last), with the lowercase name breaking
ties; so scene2 precedes scene10 and both precede sceneA.  Manifests are
small CSVs with header `id,input,gt,mask` holding POSIX-style paths, and
round-trip byte-stably.

Evaluation images may carry an all-black calibration rectangle.  Its
mask comes from an explicit mask image when the record names one, else
from detection: the union of the black boxes found in the input and the
ground truth.  A mask claiming more than half the frame is rejected.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError, SuspiciousMaskError
from .images import ImageBuffer, load_image
from .metrics import detect_black_box

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

MANIFEST_HEADER = ["id", "input", "gt", "mask"]

MAX_MASK_FRACTION = 0.5

_DIGIT_RUN = re.compile(r"\d+")


@dataclass(frozen=True)
class PairRecord:
    """One evaluation item: input image, optional ground truth and mask.

    Unpaired corpora leave ``gt`` as None; metrics are skipped for them.
    """

    id: str
    input: Path
    gt: Path | None = None
    mask: Path | None = None


def order_key(name: str) -> tuple[int, int, str]:
    """Sort key: first digit run as an integer, digitless names last."""
    stem = Path(name).stem
    m = _DIGIT_RUN.search(stem)
    if m is None:
        return (1, 0, name.lower())
    return (0, int(m.group()), name.lower())


def _image_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise DatasetError(f"no image files ({'/'.join(IMAGE_SUFFIXES)}) in {directory}")
    return sorted(files, key=lambda p: order_key(p.name))


def scan_unpaired(input_dir) -> list[Path]:
    """Image files in a directory, in evaluation order."""
    return _image_files(Path(input_dir))


def unpaired_records(input_dir) -> list[PairRecord]:
    """PairRecords without ground truth, for outputs-only runs."""
    return [PairRecord(id=p.stem, input=p) for p in scan_unpaired(input_dir)]


def scan_paired(input_dir, gt_dir, mask_dir=None, allow_unmatched: bool = False) -> list[PairRecord]:
    """Stem-match inputs against ground truths (and optionally masks).

    Files without a partner on the other side are orphans: the scan fails
    listing both directions unless ``allow_unmatched``, which keeps the
    matched pairs only.  Masks are optional per stem either way.
    """
    inputs = _image_files(Path(input_dir))
    gts = {p.stem: p for p in _image_files(Path(gt_dir))}
    orphan_inputs = [p.name for p in inputs if p.stem not in gts]
    input_stems = {p.stem for p in inputs}
    orphan_gts = sorted(
        (p.name for s, p in gts.items() if s not in input_stems), key=order_key
    )
    if (orphan_inputs or orphan_gts) and not allow_unmatched:
        raise DatasetError(
            f"unmatched files: inputs without ground truth {orphan_inputs}, "
            f"ground truths without input {orphan_gts}"
        )
    masks = {}
    if mask_dir is not None:
        masks = {p.stem: p for p in _image_files(Path(mask_dir))}
    records = [
        PairRecord(id=p.stem, input=p, gt=gts[p.stem], mask=masks.get(p.stem))
        for p in inputs
        if p.stem in gts
    ]
    if not records:
        raise DatasetError(f"no stem matches {input_dir} against {gt_dir}")
    return records


def select_first_n(records: list, n: int) -> list:
    """Deterministic evaluation subset: the first n items."""
    if n < 0:
        raise DatasetError(f"cannot select {n} items")
    if n > len(records):
        raise DatasetError(f"asked for {n} items but only {len(records)} available")
    return list(records[:n])


def write_manifest(records: list[PairRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.id,
                    r.input.as_posix(),
                    r.gt.as_posix() if r.gt else "",
                    r.mask.as_posix() if r.mask else "",
                ]
            )


def read_manifest(path) -> list[PairRecord]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DatasetError(f"manifest header must be {MANIFEST_HEADER}, got {header}")
        records = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != 4:
                raise DatasetError(f"manifest line {lineno}: expected 4 fields, got {len(row)}")
            rid, inp, gt, mask = row
            records.append(
                PairRecord(
                    id=rid,
                    input=Path(inp),
                    gt=Path(gt) if gt else None,
                    mask=Path(mask) if mask else None,
                )
            )
    if not records:
        raise DatasetError(f"manifest {path} lists no items")
    return records


def _rect_mask(shape: tuple[int, int], rect) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if rect is not None:
        top, left, h, w = rect
        mask[top : top + h, left : left + w] = True
    return mask


def load_awb_record(record: PairRecord) -> tuple[ImageBuffer, ImageBuffer, np.ndarray]:
    """Load a pair plus its calibration-box mask (True = masked out).

    Explicit mask image (any nonzero pixel counts) takes precedence;
    otherwise the mask is the union of the black boxes detected in the
    input and the ground truth.  No box at all yields an empty mask.
    """
    if record.gt is None:
        raise DatasetError(f"{record.id}: white-balance evaluation needs ground truth")
    inp = load_image(record.input)
    gt = load_image(record.gt)
    if (inp.height, inp.width) != (gt.height, gt.width):
        raise DatasetError(
            f"{record.id}: input is {inp.height}x{inp.width} "
            f"but ground truth is {gt.height}x{gt.width}"
        )
    shape = (inp.height, inp.width)
    if record.mask is not None:
        mask = np.any(load_image(record.mask).pixels != 0, axis=2)
        if mask.shape != shape:
            raise DatasetError(f"{record.id}: mask shape {mask.shape} does not match {shape}")
    else:
        mask = _rect_mask(shape, detect_black_box(inp.pixels)) | _rect_mask(
            shape, detect_black_box(gt.pixels)
        )
    fraction = mask.mean()
    if fraction > MAX_MASK_FRACTION:
        raise SuspiciousMaskError(
            f"{record.id}: mask covers {fraction:.1%} of the frame "
            f"(limit {MAX_MASK_FRACTION:.0%}); refusing to evaluate"
        )
    log.debug("%s: mask covers %.2f%% of the frame", record.id, 100.0 * fraction)
    return inp, gt, mask
