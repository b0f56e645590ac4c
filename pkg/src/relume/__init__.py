"""Zero-shot low-light image enhancement by diffusion latent inversion.

Pure-numpy reference pipeline: noise schedules, a deterministic
inversion/sampling step pair, attention feature record/replay, channelwise
latent statistics alignment, color metrics, and an evaluation harness.
"""

from .backends import (
    AttentionCache,
    LayerInfo,
    LinearDenoiser,
    TapConfig,
    ToyDenoiser,
    build_linear_backend,
    build_toy_backend,
    load_cache,
    load_external_backend,
    save_cache,
)
from .codec import LatentCodec, build_toy_codec, decode, encode
from .color import lab_to_srgb, srgb_to_lab, srgb_to_xyz, xyz_to_srgb
from .datasets import (
    PairRecord,
    load_awb_record,
    order_key,
    read_manifest,
    scan_paired,
    scan_unpaired,
    select_first_n,
    unpaired_records,
    write_manifest,
)
from .errors import (
    CacheMissError,
    ConfigurationError,
    ContractError,
    DatasetError,
    DegenerateChannelError,
    DegenerateInputError,
    PaddingError,
    RelumeError,
    StepOverflowError,
    StepUnderflowError,
    SuspiciousMaskError,
)
from .harness import (
    VARIANTS,
    EvalResult,
    channel_alignment_modes,
    run_ablation,
    run_awb_eval,
    run_channel_alignment,
    run_eval,
    variant_config,
)
from .images import ImageBuffer, load_image, save_image
from .metrics import (
    angular_errors,
    angular_mae,
    delta_e76,
    delta_e_lab,
    detect_black_box,
    largest_true_rectangle,
    mse,
    psnr,
    read_report,
    ssim,
    write_report,
)
from .pipeline import (
    PipelineConfig,
    adain,
    adain_to_reference,
    config_from_text,
    denoise_with_injection,
    draw_style_latent,
    enhance,
    invert,
    load_config_file,
    preprocess,
)
from .schedule import (
    LatentState,
    NoiseSchedule,
    build_schedule,
    ddim_invert_step,
    ddim_sample_step,
    dump_schedule,
    load_schedule,
)
from .synthetic import (
    dark_scene,
    scene_pair,
    write_boxed_corpus,
    write_paired_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionCache",
    "CacheMissError",
    "ConfigurationError",
    "ContractError",
    "DatasetError",
    "DegenerateChannelError",
    "DegenerateInputError",
    "EvalResult",
    "ImageBuffer",
    "LatentCodec",
    "LatentState",
    "LayerInfo",
    "LinearDenoiser",
    "NoiseSchedule",
    "PaddingError",
    "PairRecord",
    "PipelineConfig",
    "RelumeError",
    "StepOverflowError",
    "StepUnderflowError",
    "SuspiciousMaskError",
    "TapConfig",
    "ToyDenoiser",
    "VARIANTS",
    "adain",
    "adain_to_reference",
    "angular_errors",
    "angular_mae",
    "build_linear_backend",
    "build_schedule",
    "build_toy_backend",
    "build_toy_codec",
    "channel_alignment_modes",
    "config_from_text",
    "dark_scene",
    "ddim_invert_step",
    "ddim_sample_step",
    "decode",
    "delta_e76",
    "delta_e_lab",
    "denoise_with_injection",
    "detect_black_box",
    "draw_style_latent",
    "dump_schedule",
    "encode",
    "enhance",
    "invert",
    "lab_to_srgb",
    "largest_true_rectangle",
    "load_awb_record",
    "load_cache",
    "load_config_file",
    "load_external_backend",
    "load_image",
    "load_schedule",
    "mse",
    "order_key",
    "preprocess",
    "psnr",
    "read_manifest",
    "read_report",
    "run_ablation",
    "run_awb_eval",
    "run_channel_alignment",
    "run_eval",
    "save_cache",
    "save_image",
    "scan_paired",
    "scan_unpaired",
    "select_first_n",
    "srgb_to_lab",
    "srgb_to_xyz",
    "ssim",
    "unpaired_records",
    "variant_config",
    "write_boxed_corpus",
    "write_manifest",
    "write_paired_corpus",
    "write_report",
    "xyz_to_srgb",
    "__version__",
]
