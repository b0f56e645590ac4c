"""Batch evaluation: paired metrics, ablations, and alignment studies.

Every runner walks a record list in dataset order, derives each image's
renormalization seed as ``cfg.seed + index``, and writes CSV artifacts
that are byte-identical across reruns.  Per-image degenerate-input
failures are collected and reported, not raised: one black frame must
not kill a 500-image sweep.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backends import DenoiserBackend
from .codec import LatentCodec
from .datasets import PairRecord, load_awb_record
from .errors import ConfigurationError, DegenerateChannelError, DegenerateInputError
from .images import load_image, save_image
from .metrics import angular_mae, delta_e76, mse, psnr, ssim, write_report
from .pipeline import PipelineConfig, enhance

log = logging.getLogger(__name__)

# named configuration variants, as overrides on a base config
VARIANTS: dict[str, dict] = {
    "final": {},
    "no-sa": {"tap": {"block_scope": frozenset()}},
    "res": {"tap": {"feature_kind": "residual"}},
    "sa-sampling": {"feature_source": "sampling"},
    "sd-decoder": {"decoder_variant": "default"},
    "avg-input": {"intensity_threshold": None},
    "avg-60": {"intensity_threshold": 60.0},
}

PAIRED_METRICS = ("psnr", "ssim")

LPIPS_NOTE = "out-of-scope"

_DEGENERATE = (DegenerateInputError, DegenerateChannelError)


def variant_config(base: PipelineConfig, name: str) -> PipelineConfig:
    if name not in VARIANTS:
        raise ConfigurationError(f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}")
    overrides = dict(VARIANTS[name])
    tap_overrides = overrides.pop("tap", None)
    if tap_overrides is not None:
        overrides["tap"] = dataclasses.replace(base.tap, **tap_overrides)
    return dataclasses.replace(base, **overrides)


@dataclass
class EvalResult:
    rows: list[tuple[str, str, float]] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    report_path: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def run_eval(records: list[PairRecord], cfg: PipelineConfig, out_dir,
             codec: LatentCodec, backend: DenoiserBackend,
             save_outputs: bool = True) -> EvalResult:
    """Enhance every input, compare to ground truth, write report.csv.

    Records without ground truth (unpaired corpora) get outputs only;
    their absence from the metric rows is not a failure.
    """
    out_dir = Path(out_dir)
    output_dir = out_dir / "outputs"
    if save_outputs:
        output_dir.mkdir(parents=True, exist_ok=True)
    result = EvalResult()
    for index, record in enumerate(records):
        img_cfg = dataclasses.replace(cfg, seed=cfg.seed + index)
        try:
            out = enhance(load_image(record.input), img_cfg, codec, backend)
        except _DEGENERATE as exc:
            log.warning("skipping %s: %s", record.id, exc)
            result.failures.append((record.id, str(exc)))
            continue
        log.debug(
            "%s: output channel means %s", record.id,
            out.pixels.reshape(-1, 3).mean(axis=0).round(2),
        )
        if save_outputs:
            save_image(out, output_dir / f"{record.id}.png")
        if record.gt is None:
            continue
        gt = load_image(record.gt)
        result.rows.extend(
            [(record.id, "psnr", psnr(out.pixels, gt.pixels)),
             (record.id, "ssim", ssim(out.pixels, gt.pixels))]
        )
    result.report_path = out_dir / "report.csv"
    write_report(result.rows, result.report_path)
    return result


def run_awb_eval(records: list[PairRecord], cfg: PipelineConfig, out_dir,
                 codec: LatentCodec, backend: DenoiserBackend,
                 enhance_enabled: bool = True) -> EvalResult:
    """Color-balance evaluation outside the calibration box.

    Reports per image, over unmasked pixels: the mean RGB angular error,
    the mean Lab distance, the mean squared error, and the fraction of
    the frame evaluated.  The probe is the enhanced output by default, or
    the raw input with enhance_enabled=False (the uncorrected baseline).
    """
    out_dir = Path(out_dir)
    result = EvalResult()
    for index, record in enumerate(records):
        try:
            inp, gt, mask = load_awb_record(record)
            if enhance_enabled:
                img_cfg = dataclasses.replace(cfg, seed=cfg.seed + index)
                probe = enhance(inp, img_cfg, codec, backend).pixels
            else:
                probe = inp.pixels
            rows = [
                (record.id, "angular_mae", angular_mae(probe, gt.pixels, mask)),
                (record.id, "delta_e76", delta_e76(probe, gt.pixels, mask)),
                (record.id, "mse", mse(probe, gt.pixels, mask)),
                (record.id, "mask_coverage", 1.0 - float(mask.mean())),
            ]
        except _DEGENERATE as exc:
            log.warning("skipping %s: %s", record.id, exc)
            result.failures.append((record.id, str(exc)))
            continue
        result.rows.extend(rows)
    result.report_path = out_dir / "awb_report.csv"
    write_report(result.rows, result.report_path)
    return result


def run_ablation(records: list[PairRecord], base_cfg: PipelineConfig, out_dir,
                 codec: LatentCodec, backend: DenoiserBackend,
                 variants: list[str] | None = None) -> dict[str, EvalResult]:
    """Run named variants over the same records; write per-variant reports
    plus a summary.csv of metric means (LPIPS column marked out-of-scope).
    """
    if variants is None:
        variants = list(VARIANTS)
    if not variants:
        raise ConfigurationError("ablation needs at least one variant")
    out_dir = Path(out_dir)
    results: dict[str, EvalResult] = {}
    for name in variants:
        cfg = variant_config(base_cfg, name)
        results[name] = run_eval(records, cfg, out_dir / name, codec, backend)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("variant," + ",".join(PAIRED_METRICS) + ",lpips\n")
        for name in variants:
            means = []
            for metric in PAIRED_METRICS:
                vals = [v for _, m, v in results[name].rows if m == metric]
                means.append(repr(sum(vals) / len(vals)) if vals else "nan")
            fh.write(f"{name},{','.join(means)},{LPIPS_NOTE}\n")
    return results


def channel_alignment_modes(latent_channels: int) -> list[str]:
    return [f"ch{c}" for c in range(latent_channels)] + ["full", "none"]


def _mode_config(base: PipelineConfig, mode: str) -> PipelineConfig:
    if mode == "full":
        return dataclasses.replace(base, adain_enabled=True, adain_channel_mask=None)
    if mode == "none":
        return dataclasses.replace(base, adain_enabled=False)
    return dataclasses.replace(
        base, adain_enabled=True, adain_channel_mask=(int(mode[2:]),)
    )


def run_channel_alignment(records: list[PairRecord], cfg: PipelineConfig, out_dir,
                          codec: LatentCodec, backend: DenoiserBackend) -> dict:
    """Renormalize single latent channels, all, or none; histogram outputs.

    Writes histograms.csv (mode,channel,bin,count: 256 bins of the uint8
    outputs per RGB channel) and means.csv (mode,channel,mean).  Returns
    {mode: (3, 256) histogram array}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    modes = channel_alignment_modes(backend.latent_channels)
    histograms: dict[str, np.ndarray] = {}
    failures: list[tuple[str, str]] = []
    for mode in modes:
        mode_cfg = _mode_config(cfg, mode)
        hist = np.zeros((3, 256), dtype=np.int64)
        for index, record in enumerate(records):
            img_cfg = dataclasses.replace(mode_cfg, seed=mode_cfg.seed + index)
            try:
                out = enhance(load_image(record.input), img_cfg, codec, backend)
            except _DEGENERATE as exc:
                log.warning("skipping %s in mode %s: %s", record.id, mode, exc)
                failures.append((f"{mode}/{record.id}", str(exc)))
                continue
            for c in range(3):
                hist[c] += np.bincount(out.pixels[:, :, c].ravel(), minlength=256)
        histograms[mode] = hist
    with open(out_dir / "histograms.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("mode,channel,bin,count\n")
        for mode in modes:
            for c in range(3):
                for b in range(256):
                    fh.write(f"{mode},{c},{b},{histograms[mode][c, b]}\n")
    with open(out_dir / "means.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("mode,channel,mean\n")
        bins = np.arange(256, dtype=np.float64)
        for mode in modes:
            for c in range(3):
                total = histograms[mode][c].sum()
                mean = float((histograms[mode][c] * bins).sum() / total) if total else float("nan")
                fh.write(f"{mode},{c},{mean!r}\n")
    return {"modes": modes, "histograms": histograms, "failures": failures}
