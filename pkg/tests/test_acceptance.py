"""Acceptance gate: ten numbered criteria, one verdict line each.

Every tolerance here is pinned; loosening one is a contract change, not a
test fix.  The verdict fixture prints `criterion NN <label>: PASS|FAIL`
and the conftest summary hook repeats all lines at the end of the run.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from relume.backends import LinearDenoiser, TapConfig, build_toy_backend
from relume.cli import EXIT_OK, main
from relume.codec import build_toy_codec, encode
from relume.color import srgb_to_lab
from relume.datasets import order_key, scan_paired, select_first_n, write_manifest
from relume.errors import DegenerateInputError
from relume.harness import run_channel_alignment
from relume.images import ImageBuffer
from relume.metrics import (
    angular_mae,
    delta_e76,
    delta_e_lab,
    detect_black_box,
    mse,
    psnr,
    ssim,
)
from relume.pipeline import (
    PipelineConfig,
    adain,
    adain_to_reference,
    denoise_with_injection,
    draw_style_latent,
    invert,
    preprocess,
)
from relume.schedule import (
    LatentState,
    build_schedule,
    ddim_invert_step,
    ddim_sample_step,
)
from relume.synthetic import dark_scene, write_paired_corpus

TAU_REC = 0.18

EMPTY_TAP = TapConfig(block_scope=frozenset())

CODEC = build_toy_codec()
BACKEND = build_toy_backend(seed=0, latent_channels=12, spatial=16)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_criterion_01_schedule_inverse_pair(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_pair = 0.0
    triples = 0
    for kind in ("linear-beta", "external-subsampled", "cosine"):
        sched = build_schedule(kind, 25)
        for _ in range(400):
            t = int(rng.integers(0, sched.T))
            z = LatentState(data=rng.standard_normal((12, 4, 4)), t=t)
            eps = rng.standard_normal(z.data.shape)
            back = ddim_sample_step(ddim_invert_step(z, eps, sched), eps, sched)
            worst_pair = max(worst_pair, _rel(back.data, z.data))
            triples += 1

    sched = build_schedule("linear-beta", 25)
    z = LatentState(data=rng.standard_normal((12, 4, 4)), t=0)
    zero = np.zeros(z.data.shape)
    up = z
    for _ in range(sched.T):
        up = ddim_invert_step(up, zero, sched)
    down = up
    for _ in range(sched.T):
        down = ddim_sample_step(down, zero, sched)
    elapsed = time.perf_counter() - start

    verdict(1, "schedule-inverse-pair", [
        ("at least 1000 triples", triples >= 1000),
        ("pairwise round trip <= 1e-12", worst_pair <= 1e-12),
        ("zero-noise full round trip <= 1e-10", _rel(down.data, z.data) <= 1e-10),
        ("runtime < 5 s", elapsed < 5.0),
    ])


def test_criterion_02_linear_trajectory_oracle(verdict):
    sched = build_schedule("linear-beta", 25)
    coeffs = [0.1 + 0.02 * t for t in range(25)]
    backend = LinearDenoiser(coeffs)
    img = ImageBuffer(pixels=np.full((32, 32, 3), 128, dtype=np.uint8))
    pre = preprocess(img, 30.0, granularity=2)
    z0 = encode(CODEC, pre)
    z, _ = invert(pre, CODEC, backend, sched, TapConfig())

    # the independent recurrence: with eps linear in z every element is
    # scaled by the same factor each step
    amp = 1.0
    ab = sched.alpha_bar
    for j in range(sched.T):
        scale = math.sqrt(ab[j + 1] / ab[j])
        coef = (math.sqrt(1.0 / ab[j + 1] - 1.0) - math.sqrt(1.0 / ab[j] - 1.0)) * math.sqrt(ab[j + 1])
        amp = scale * amp + coef * (coeffs[j] * amp)

    expected = amp * z0.data
    scalearr = np.abs(expected)
    err = np.abs(z.data - expected)
    ok = bool(np.all(err <= 1e-9 * np.maximum(scalearr, 1e-300)))
    verdict(2, "linear-backend-trajectory", [
        ("element-wise match <= 1e-9 relative", ok),
        ("terminal timestep", z.t == sched.T),
    ])


def test_criterion_03_adain_contract(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        data = rng.standard_normal((12, 6, 6)) * rng.uniform(0.5, 2.0) + rng.uniform(-1, 1)
        ref = rng.standard_normal((12, 6, 6)) * rng.uniform(0.5, 2.0) + rng.uniform(-1, 1)
        out = adain_to_reference(LatentState(data=data, t=25), ref)
        for c in range(12):
            worst = max(worst, abs(out.data[c].mean() - ref[c].mean()))
            worst = max(worst, abs(out.data[c].std() - ref[c].std()))

    hand = adain_to_reference(
        LatentState(data=np.array([[[1.0, 2.0], [3.0, 4.0]]]), t=25),
        np.array([[[-1.0, 1.0], [-1.0, 1.0]]]),
    )
    oracle = np.array([-1.3416407864998738, -0.4472135954999579,
                       0.4472135954999579, 1.3416407864998738])
    hand_err = float(np.abs(hand.data.ravel() - oracle).max())

    shared = draw_style_latent((12, 6, 6), seed=77)
    ident = adain(LatentState(data=shared.copy(), t=25), seed=77)

    verdict(3, "adain-contract", [
        ("moment match <= 1e-6 on 100 latents", worst <= 1e-6),
        ("2x2 hand oracle <= 1e-4", hand_err <= 1e-4),
        ("shared-seed identity exact", bool(np.array_equal(ident.data, shared))),
    ])


def test_criterion_04_record_replay_fidelity(verdict):
    sched = build_schedule("linear-beta", 25)
    tap = TapConfig()
    within = True
    strictly_better = True
    worst = 0.0
    for seed in range(100, 120):
        pre = preprocess(ImageBuffer(pixels=dark_scene(seed)), 30.0, granularity=4)
        z, cache = invert(pre, CODEC, BACKEND, sched, tap)
        on = denoise_with_injection(z, cache, CODEC, BACKEND, sched, tap)
        off = denoise_with_injection(z, cache, CODEC, BACKEND, sched, EMPTY_TAP)
        ref = pre.as_float01()
        e_on = _rel(on.as_float01(), ref)
        e_off = _rel(off.as_float01(), ref)
        worst = max(worst, e_on)
        within = within and e_on <= TAU_REC
        strictly_better = strictly_better and e_on < e_off
    verdict(4, "record-replay-fidelity", [
        (f"reconstruction <= tau_rec={TAU_REC} on all 20 scenes (worst {worst:.4f})", within),
        ("injection strictly beats no-injection on every scene", strictly_better),
    ])


def test_criterion_05_preprocess_contract(verdict):
    lifted = preprocess(
        ImageBuffer(pixels=np.full((16, 16, 3), 15, dtype=np.uint8)), 30.0, granularity=4
    )
    exact = bool(np.all(lifted.pixels == np.float64(15) / 255 * 2))

    bright = np.random.default_rng(8).integers(40, 250, size=(16, 16, 3)).astype(np.uint8)
    passed = preprocess(ImageBuffer(pixels=bright), 30.0, granularity=4)
    bitwise = passed.pixels.dtype == np.uint8 and bool(np.array_equal(passed.pixels, bright))

    try:
        preprocess(ImageBuffer(pixels=np.zeros((8, 8, 3), dtype=np.uint8)), 30.0, granularity=4)
        raised = False
    except DegenerateInputError:
        raised = True

    verdict(5, "preprocess-contract", [
        ("uniform-15 lifts to uniform-30 exactly", exact),
        ("above-threshold input passes through bitwise", bitwise),
        ("all-zero input raises the degenerate error", raised),
    ])


def test_criterion_06_metric_oracles(verdict):
    a0 = np.zeros((8, 8, 3), dtype=np.uint8)
    p1 = psnr(a0, np.ones((8, 8, 3), dtype=np.uint8))
    p255 = psnr(a0, np.full((8, 8, 3), 255, dtype=np.uint8))

    lab_a = np.array([[50.0, 10.0, -5.0]])
    de = float(delta_e_lab(lab_a, lab_a + np.array([0.0, 3.0, 4.0]))[0])

    red = np.full((4, 4, 3), [200, 0, 0], dtype=np.uint8)
    green = np.full((4, 4, 3), [0, 200, 0], dtype=np.uint8)
    yellow = np.full((4, 4, 3), [150, 150, 0], dtype=np.uint8)
    ang90 = angular_mae(red, green)
    ang45 = angular_mae(red, yellow)
    base = np.random.default_rng(21).integers(1, 128, size=(8, 8, 3)).astype(np.uint8)
    ang0 = angular_mae(base, (base.astype(np.float64) * 2.0) / 255.0)

    rng = np.random.default_rng(31)
    sa = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
    sb = np.clip(sa.astype(np.int64) + rng.integers(-25, 26, size=sa.shape), 0, 255).astype(np.uint8)
    luma = np.array([0.299, 0.587, 0.114])
    ya, yb = sa.astype(np.float64) @ luma, sb.astype(np.float64) @ luma
    r = np.arange(11) - 5.0
    g = np.exp(-(r**2) / (2 * 1.5**2))
    k = np.outer(g, g)
    k /= k.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(32 - 10):
        for j in range(32 - 10):
            wa, wb = ya[i : i + 11, j : j + 11], yb[i : i + 11, j : j + 11]
            mu_a, mu_b = (k * wa).sum(), (k * wb).sum()
            va = (k * (wa - mu_a) ** 2).sum()
            vb = (k * (wb - mu_b) ** 2).sum()
            cov = (k * (wa - mu_a) * (wb - mu_b)).sum()
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2)))

    white = srgb_to_lab(np.array([1.0, 1.0, 1.0]))

    verdict(6, "metric-oracles", [
        ("uniform-1 PSNR = 48.1308 dB", abs(p1 - 48.1308) <= 5e-5),
        ("uniform-255 PSNR = 0 dB", p255 == 0.0),
        ("delta-E 3-4-5 = 5.0", abs(de - 5.0) <= 1e-12),
        ("angular 90 deg", abs(ang90 - 90.0) <= 1e-9),
        ("angular 45 deg", abs(ang45 - 45.0) <= 1e-9),
        ("angular 0 deg under pure gain", abs(ang0) <= 1e-9),
        ("SSIM matches brute force <= 1e-9", abs(ssim(sa, sb) - np.mean(vals)) <= 1e-9),
        ("Lab white point within 0.01", bool(np.abs(white - (100.0, 0.0, 0.0)).max() <= 0.01)),
    ])


def test_criterion_07_awb_synthetic_tint(verdict):
    rng = np.random.default_rng(17)
    base = rng.integers(5, 201, size=(32, 32, 3)).astype(np.uint8)
    gains = np.array([1.25, 0.9, 0.7])
    tinted = base.astype(np.float64) * gains  # max 251.25: no clipping
    tinted_u8 = np.rint(tinted).astype(np.uint8)

    flat_a = base.reshape(-1, 3).astype(np.float64)
    flat_b = tinted_u8.reshape(-1, 3).astype(np.float64)
    bf_mse = float(np.mean((flat_a - flat_b) ** 2))
    angles = []
    labs = []
    for pa, pb in zip(flat_a, flat_b):
        dot = float(pa @ pb) / (np.linalg.norm(pa) * np.linalg.norm(pb))
        angles.append(math.degrees(math.acos(min(1.0, max(-1.0, dot)))))
        la = srgb_to_lab(pa / 255.0)
        lb = srgb_to_lab(pb / 255.0)
        labs.append(float(np.linalg.norm(la - lb)))
    bf_mae = float(np.mean(angles))
    bf_de = float(np.mean(labs))

    mse_ok = abs(mse(base, tinted_u8) - bf_mse) <= 1e-9
    mae_ok = abs(angular_mae(base, tinted_u8) - bf_mae) <= 1e-9
    de_ok = abs(delta_e76(base, tinted_u8) - bf_de) <= 1e-9

    # black-box exclusion: burn an exact-zero 16x16 box into both sides,
    # recover it, and check the masked metrics equal brute force over the
    # surviving pixels
    boxed_a = base.copy()
    boxed_b = tinted_u8.copy()
    boxed_a[4:20, 6:22] = 0
    boxed_b[4:20, 6:22] = 0
    found = detect_black_box(boxed_a.astype(np.uint8))
    mask = np.zeros((32, 32), dtype=bool)
    mask[4:20, 6:22] = True
    keep = ~mask.ravel()
    kept_a = boxed_a.reshape(-1, 3).astype(np.float64)[keep]
    kept_b = boxed_b.reshape(-1, 3).astype(np.float64)[keep]
    bf_masked_mse = float(np.mean((kept_a - kept_b) ** 2))
    masked_ok = abs(mse(boxed_a, boxed_b, mask) - bf_masked_mse) <= 1e-9

    verdict(7, "awb-synthetic-tint", [
        ("MSE matches brute force <= 1e-9", mse_ok),
        ("angular MAE matches brute force <= 1e-9", mae_ok),
        ("delta-E matches brute force <= 1e-9", de_ok),
        ("black box recovered exactly", found == (4, 6, 16, 16)),
        ("masked metric equals unmasked-region brute force", masked_ok),
    ])


def test_criterion_08_dataset_ordering(verdict, tmp_path):
    names = ["img10", "img2", "imgA"]
    ordered = sorted(names, key=order_key)

    input_dir, gt_dir = write_paired_corpus(tmp_path / "c", count=5)
    records = scan_paired(input_dir, gt_dir)
    prefix = all(select_first_n(records, n) == records[:n] for n in range(len(records) + 1))

    m1, m2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
    write_manifest(scan_paired(input_dir, gt_dir), m1)
    write_manifest(scan_paired(input_dir, gt_dir), m2)

    verdict(8, "dataset-ordering", [
        ("numeric-then-lexicographic order", ordered == ["img2", "img10", "imgA"]),
        ("select_first_n is a prefix", prefix),
        ("manifests byte-identical across scans", m1.read_bytes() == m2.read_bytes()),
    ])


def test_criterion_09_end_to_end_determinism(verdict, tmp_path):
    input_dir, gt_dir = write_paired_corpus(tmp_path / "c", count=4)
    manifest = tmp_path / "manifest.csv"
    write_manifest(scan_paired(input_dir, gt_dir), manifest)
    outs = []
    for run in ("r1", "r2"):
        code = main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / run), "--seed", "0"])
        assert code == EXIT_OK
        outs.append(tmp_path / run)
    reports_equal = (outs[0] / "report.csv").read_bytes() == (outs[1] / "report.csv").read_bytes()
    names = sorted(p.name for p in (outs[0] / "outputs").iterdir())
    images_equal = bool(names) and all(
        (outs[0] / "outputs" / n).read_bytes() == (outs[1] / "outputs" / n).read_bytes()
        for n in names
    )
    verdict(9, "end-to-end-determinism", [
        ("reports byte-identical", reports_equal),
        ("output images byte-identical", images_equal),
    ])


def test_criterion_10_channel_alignment_direction(verdict, tmp_path):
    input_dir, gt_dir = write_paired_corpus(tmp_path / "c", count=6)
    records = scan_paired(input_dir, gt_dir)
    out = run_channel_alignment(records, PipelineConfig(seed=0), tmp_path / "ca",
                                CODEC, BACKEND)

    means: dict[str, list[float]] = {}
    for line in (tmp_path / "ca" / "means.csv").read_text().splitlines()[1:]:
        mode, channel, value = line.split(",")
        means.setdefault(mode, []).append(float(value))

    def gap(mode: str) -> float:
        m = means[mode]
        return max(abs(m[i] - m[j]) for i in range(3) for j in range(i + 1, 3))

    # pre-freeze measurement: full 11.610 vs none 15.638 on this exact
    # corpus and seed; the criterion is the direction, not the values
    verdict(10, "channel-alignment-direction", [
        ("no failures", not out["failures"]),
        (f"gap(full)={gap('full'):.3f} <= gap(none)={gap('none'):.3f}",
         gap("full") <= gap("none")),
    ])
