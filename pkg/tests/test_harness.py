"""Batch runners: reports, ablations, alignment histograms, failure policy."""

import dataclasses
import math

import numpy as np
import pytest

from relume.backends import build_toy_backend
from relume.codec import build_toy_codec
from relume.datasets import (
    PairRecord,
    load_awb_record,
    read_manifest,
    scan_paired,
    write_manifest,
)
from relume.errors import ConfigurationError
from relume.harness import (
    VARIANTS,
    channel_alignment_modes,
    run_ablation,
    run_awb_eval,
    run_channel_alignment,
    run_eval,
    variant_config,
)
from relume.images import ImageBuffer, load_image, save_image
from relume.metrics import angular_mae, delta_e76, mse, read_report
from relume.pipeline import PipelineConfig
from relume.synthetic import write_boxed_corpus, write_paired_corpus

# reconstruction ceiling measured pre-freeze (see test_pipeline)
TAU_REC = 0.18

CODEC = build_toy_codec()
BACKEND = build_toy_backend(seed=0, latent_channels=12, spatial=16)


def _corpus(tmp_path, count=2, boxed=False, **kwargs):
    writer = write_boxed_corpus if boxed else write_paired_corpus
    input_dir, gt_dir = writer(tmp_path / "corpus", count=count, **kwargs)
    return scan_paired(input_dir, gt_dir)


def _means(rows):
    out = {}
    for img, metric, value in rows:
        out.setdefault(metric, []).append(value)
    return {m: sum(v) / len(v) for m, v in out.items()}


def test_variant_table_matches_config_deltas():
    base = PipelineConfig(seed=3)
    assert set(VARIANTS) == {
        "final", "no-sa", "res", "sa-sampling", "sd-decoder", "avg-input", "avg-60",
    }
    assert variant_config(base, "final") == base
    assert variant_config(base, "no-sa").tap.block_scope == frozenset()
    assert variant_config(base, "res").tap.feature_kind == "residual"
    assert variant_config(base, "sa-sampling").feature_source == "sampling"
    assert variant_config(base, "sd-decoder").decoder_variant == "default"
    assert variant_config(base, "avg-input").intensity_threshold is None
    assert variant_config(base, "avg-60").intensity_threshold == 60.0
    with pytest.raises(ConfigurationError):
        variant_config(base, "final2")


def test_run_eval_report_shape_and_outputs(tmp_path):
    records = _corpus(tmp_path, count=2)
    result = run_eval(records, PipelineConfig(seed=0), tmp_path / "run", CODEC, BACKEND)
    assert result.ok
    for r in records:
        assert (tmp_path / "run" / "outputs" / f"{r.id}.png").is_file()
    back = read_report(result.report_path)
    per_image = [row for row in back if row[0] != "__mean__"]
    assert [(img, m) for img, m, _ in per_image] == [
        (r.id, m) for r in records for m in ("psnr", "ssim")
    ]
    # aggregates recomputable from the per-image rows
    want = _means(per_image)
    got = {m: v for img, m, v in back if img == "__mean__"}
    for metric, value in got.items():
        assert abs(value - want[metric]) < 1e-9
    assert all(math.isfinite(v) for _, _, v in back)


def test_run_eval_unpaired_outputs_only(tmp_path):
    records = _corpus(tmp_path, count=2)
    unpaired = [dataclasses.replace(r, gt=None) for r in records]
    result = run_eval(unpaired, PipelineConfig(seed=0), tmp_path / "run", CODEC, BACKEND)
    assert result.ok
    assert result.rows == []
    assert read_report(result.report_path) == []
    for r in records:
        assert (tmp_path / "run" / "outputs" / f"{r.id}.png").is_file()


def test_run_eval_skips_degenerate_records(tmp_path):
    records = _corpus(tmp_path, count=2)
    black = tmp_path / "black.png"
    save_image(ImageBuffer(pixels=np.zeros((32, 32, 3), dtype=np.uint8)), black)
    records = [PairRecord(id="allblack", input=black, gt=records[0].gt)] + records
    result = run_eval(records, PipelineConfig(seed=0), tmp_path / "run", CODEC, BACKEND)
    assert not result.ok
    assert [rid for rid, _ in result.failures] == ["allblack"]
    assert {img for img, _, _ in result.rows} == {r.id for r in records[1:]}
    assert result.report_path.is_file()


def test_run_eval_reruns_byte_identical(tmp_path):
    records = _corpus(tmp_path, count=2)
    cfg = PipelineConfig(seed=4)
    a = run_eval(records, cfg, tmp_path / "a", CODEC, BACKEND)
    b = run_eval(records, cfg, tmp_path / "b", CODEC, BACKEND)
    assert a.report_path.read_bytes() == b.report_path.read_bytes()
    for r in records:
        pa = (tmp_path / "a" / "outputs" / f"{r.id}.png").read_bytes()
        pb = (tmp_path / "b" / "outputs" / f"{r.id}.png").read_bytes()
        assert pa == pb


def test_run_eval_identity_ish_psnr_floor(tmp_path):
    # gt == input on bright scenes; adain off + injection on reconstructs
    # within TAU_REC, which bounds psnr from below
    input_dir, gt_dir = write_paired_corpus(tmp_path / "corpus", count=2)
    records = [
        dataclasses.replace(r, input=r.gt) for r in scan_paired(input_dir, gt_dir)
    ]
    cfg = PipelineConfig(seed=0, adain_enabled=False)
    result = run_eval(records, cfg, tmp_path / "run", CODEC, BACKEND)
    assert result.ok
    for record in records:
        gt255 = load_image(record.gt).pixels.astype(np.float64)
        floor = 10.0 * math.log10(255.0**2 / (TAU_REC**2 * np.mean(gt255**2)))
        got = {m: v for img, m, v in result.rows if img == record.id}
        assert got["psnr"] >= floor


def test_run_awb_eval_baseline_matches_direct_metrics(tmp_path):
    records = _corpus(tmp_path, count=2, boxed=True)
    result = run_awb_eval(
        records, PipelineConfig(seed=0), tmp_path / "awb", CODEC, BACKEND,
        enhance_enabled=False,
    )
    assert result.ok
    assert result.report_path.name == "awb_report.csv"
    for record in records:
        inp, gt, mask = load_awb_record(record)
        got = {m: v for img, m, v in result.rows if img == record.id}
        assert got["angular_mae"] == angular_mae(inp.pixels, gt.pixels, mask)
        assert got["delta_e76"] == delta_e76(inp.pixels, gt.pixels, mask)
        assert got["mse"] == mse(inp.pixels, gt.pixels, mask)
        assert got["mask_coverage"] == 1.0 - mask.mean()
        assert got["mask_coverage"] < 1.0  # the box is really excluded


def test_run_awb_eval_enhanced_runs(tmp_path):
    records = _corpus(tmp_path, count=1, boxed=True)
    result = run_awb_eval(records, PipelineConfig(seed=0), tmp_path / "awb", CODEC, BACKEND)
    assert result.ok
    metrics = {m for _, m, _ in result.rows}
    assert metrics == {"angular_mae", "delta_e76", "mse", "mask_coverage"}


def test_run_ablation_summary_and_direction(tmp_path):
    records = _corpus(tmp_path, count=6)
    results = run_ablation(
        records, PipelineConfig(seed=0), tmp_path / "abl", CODEC, BACKEND,
        variants=["final", "no-sa"],
    )
    assert set(results) == {"final", "no-sa"}
    for name in ("final", "no-sa"):
        assert (tmp_path / "abl" / name / "report.csv").is_file()
    lines = (tmp_path / "abl" / "summary.csv").read_text().splitlines()
    assert lines[0] == "variant,psnr,ssim,lpips"
    assert all(line.endswith(",out-of-scope") for line in lines[1:])
    # injection strictly helps the mean (the ablation table's ordering)
    assert _means(results["final"].rows)["psnr"] > _means(results["no-sa"].rows)["psnr"]
    with pytest.raises(ConfigurationError):
        run_ablation(records, PipelineConfig(), tmp_path / "x", CODEC, BACKEND, variants=[])
    with pytest.raises(ConfigurationError):
        run_ablation(records, PipelineConfig(), tmp_path / "x", CODEC, BACKEND, variants=["nope"])


def test_channel_alignment_histograms(tmp_path):
    records = _corpus(tmp_path, count=2)
    out = run_channel_alignment(records, PipelineConfig(seed=0), tmp_path / "ca", CODEC, BACKEND)
    modes = channel_alignment_modes(BACKEND.latent_channels)
    assert out["modes"] == modes
    assert len(modes) == BACKEND.latent_channels + 2
    total = len(records) * 32 * 32
    for mode in modes:
        hist = out["histograms"][mode]
        assert hist.shape == (3, 256)
        assert (hist.sum(axis=1) == total).all()
    header = (tmp_path / "ca" / "histograms.csv").read_text().splitlines()[0]
    assert header == "mode,channel,bin,count"
    means_lines = (tmp_path / "ca" / "means.csv").read_text().splitlines()
    assert means_lines[0] == "mode,channel,mean"
    assert len(means_lines) == 1 + 3 * len(modes)
    for line in means_lines[1:]:
        mode, channel, mean = line.split(",")
        assert 0.0 <= float(mean) <= 255.0
    assert not out["failures"]


def test_manifest_driven_round_trip(tmp_path):
    records = _corpus(tmp_path, count=2)
    manifest = tmp_path / "manifest.csv"
    write_manifest(records, manifest)
    result = run_eval(read_manifest(manifest), PipelineConfig(seed=0),
                      tmp_path / "run", CODEC, BACKEND)
    assert result.ok and len(result.rows) == 4
