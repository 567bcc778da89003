"""Shape-aware inpainting mask generation from superpixel pseudo-segments."""

from .evalkit import MetricReport, apply_mask, diffusion_inpaint, psnr, score, ssim
from .felz import LabelMap, PixelGraph, SegParams, build_graph, segment
from .imgio import FloatImage, GrayImage, gaussian_blur, load_image, save_image
from .maskgen import (
    EvalMaskKind,
    Mask,
    MaskPolicy,
    eval_mask,
    generate_training_mask,
    load_irregular_mask,
    perturb,
    render_ps,
    render_square,
    sample_segments,
)
from .pipeline import DatasetManifest, PipelineConfig, derive_seed, run_pipeline, split_patients
from .pseg import (
    PseudoSegment,
    PseudoSegmentSet,
    WeightBias,
    compute_stats,
    merge_pseudosegments,
    weight_biases,
)
from .region import BinaryImage, Region, binarize, bounded_region, opening, sample_point_inside

__version__ = "0.1.0"
