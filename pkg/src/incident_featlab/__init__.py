"""Loop-detector incident detection with codebook-enhanced features.

Pipeline: load or generate incident units, head-trim so every interval has
full lookback, learn per-channel K-means codebooks from random patches,
pool triangle activations into enhanced feature vectors, train an RBF-SVM,
and score DR/FAR/MTTD/PI/CR under a persistence test.
"""

__version__ = "0.1.0"

from .datamodel import (
    CHANNELS,
    CSV_COLUMNS,
    ContextSet,
    ContextVector,
    DataError,
    Dataset,
    FeatureSet,
    IncidentUnit,
    IntervalRecord,
    PairConfig,
    ParseError,
    PreprocessConfig,
    UnlabeledSeries,
    ValidationError,
    assemble_context_vectors,
    assemble_raw_features,
    load_dataset,
    trim_head,
    write_dataset,
)
from .evaluation import (
    AlarmSeries,
    CvResult,
    Metrics,
    compute_metrics,
    compute_pi,
    cross_validate,
    default_grid,
    persistence_filter,
)
from .experiments import (
    ChannelLearnSpec,
    ExperimentReport,
    FeatureLearnConfig,
    MetricStats,
    RepeatResult,
    enhance_feature_set,
    evaluate_model,
    fit_codebooks,
    run_experiment,
    run_pair_grid,
    trend_summary,
)
from .featlearn import (
    ActivationVector,
    Codebook,
    KMeansConfig,
    Patch,
    PatchConfig,
    build_enhanced,
    encode_triangle,
    kmeans_fit,
    load_codebooks,
    pool_features,
    sample_patches,
    save_codebooks,
)
from .svm import (
    SvmHyperparams,
    SvmModel,
    TrainStatus,
    load_model,
    predict,
    rbf_kernel,
    save_model,
    train_svm,
)
from .synth import SynthConfig, generate_dataset
