"""Deterministic image degradation pipelines and a re-identification harness."""

__version__ = "0.1.0"

from .errors import GenerationError, ParameterError, TrainingError, ValidationError
from .kernels import (
    BLUR_FAMILIES,
    DefocusSpec,
    GaussianBlurSpec,
    GeneralizedGaussianSpec,
    MotionBlurSpec,
    make_defocus_kernel,
    make_gaussian_kernel,
    make_generalized_gaussian_kernel,
    make_kernel,
    make_motion_kernel,
    sample_blur_spec,
)
from .imageops import (
    DownscaleSpec,
    JpegSpec,
    NoiseSpec,
    add_gaussian_noise,
    convolve,
    downscale,
    final_resample,
    jpeg_compress,
    upscale_bicubic,
)
from .pipeline import (
    DIVERSE,
    DIVERSE_PLUS,
    SIMPLE,
    OpTrace,
    PipelineRanges,
    apply_pipeline,
    degrade_batch,
    derive_subseed,
    execute_trace,
    plan_pipeline,
    read_traces,
    write_traces,
)
from .splitting import (
    ManifestRecord,
    SplitAssignment,
    SplitConfig,
    read_manifest,
    split_dataset,
    time_aware_split,
    validate_split,
)
from .embeddings import EmbeddingMatrix, read_embeddings, write_embeddings
from .metrics import (
    MetricsReport,
    RankedResult,
    cmc_curve,
    mean_average_precision,
    rank_k_accuracy,
    search,
    stratified_report,
)
from .curricular import (
    CosineBatch,
    CurricularState,
    LossParams,
    curricular_forward,
    curricular_grad,
    update_t,
)

__all__ = [name for name in dir() if not name.startswith("_")]
