"""Speaker diarization and verification backend toolkit.

Operates on precomputed (or synthetic) speaker embeddings: segmentation,
affinity construction, spectral / k-means clustering, iterative pseudo-label
purification, score normalization and fusion, and the DER/JER/EER/minDCF
evaluation suite.
"""

from .clustering import (
    AffinityMatrix,
    ClusterAssignment,
    assemble_affinity,
    cosine_scorer,
    estimate_speaker_count,
    format_affinity,
    kmeans,
    refine_affinity,
    spectral_cluster,
)
from .corpus import (
    EmbeddingSet,
    Manifest,
    ManifestEntry,
    Timeline,
    Trial,
    Turn,
    expand_speed_perturb,
    load_embedding_archive,
    parse_manifest,
    parse_rttm,
    parse_trials,
    save_embedding_archive,
    write_manifest,
    write_rttm,
)
from .embedmath import (
    ContrastiveBatch,
    asp_pool,
    cosine,
    gsp_pool,
    length_normalize,
    nt_xent_loss,
)
from .metrics import DcfConfig, DerBreakdown, der, eer, jer, min_dcf
from .pipeline import (
    PipelineConfig,
    SegmentRecord,
    run_diarize,
    run_pseudo_label,
    run_verify,
)
from .pseudolabel import (
    PurifyConfig,
    RoundStats,
    average_by_video,
    pseudo_label_round,
    purify,
)
from .scoring import (
    Cohort,
    NormConfig,
    TrialScore,
    as_norm,
    build_cohort,
    calibrate,
    cohort_scores,
    fuse,
    normalize_trials,
    score_trials,
)
from .timeline import (
    PosteriorTrack,
    Segment,
    SmoothingConfig,
    apply_overlap,
    label_segments,
    smooth_posteriors,
    uniform_segment,
)

__version__ = "0.1.0"
