"""Mean-bias MOS prediction toolkit.

Predicts mean opinion scores for synthesized speech with a two-subnet model:
a mean subnet regresses the utterance-level mean score from the spectrogram,
and a judge-conditioned bias subnet models each judge's deviation from it,
so every individual rating in a listening test becomes a training target.
Includes the clipped squared-error objective, repetitive batch padding, the
utterance-/system-level evaluation protocol, and a synthetic judge-bias
benchmark with known ground truth.
"""

from .batching import (
    TrainingBatch,
    TrainingTuple,
    expand_tuples,
    make_batches,
    repetitive_pad,
    zero_pad,
)
from .config import RunConfig
from .corpus import (
    Corpus,
    CorpusEntry,
    RatingRecord,
    StftConfig,
    bias_scores,
    compute_spectrogram,
    load_corpus,
    split_corpus,
)
from .errors import (
    AudioReadError,
    ConfigError,
    ManifestError,
    MosbenchError,
    TrainingDivergedError,
    UndefinedCorrelationError,
    ValidationError,
)
from .estimator import MBNetRegressor
from .evaluation import (
    CORRECT_JUDGES,
    INFERENCE_MODES,
    MEAN_ONLY,
    RANDOM_JUDGES,
    MetricBundle,
    MetricsReport,
    evaluate,
    mse,
    pearson_lcc,
    predict_utterance,
    spearman_srcc,
    system_aggregate,
)
from .model import (
    ArchConfig,
    BiasNet,
    ForwardOutput,
    MBNet,
    MeanNet,
    Predictor,
    build_model,
    freq_chain,
    load_checkpoint,
    save_checkpoint,
)
from .objective import LossConfig, clipped_mse, frame_loss, mbnet_loss
from .synthbench import (
    SynthSpec,
    SynthTruth,
    bias_recovery,
    export_corpus,
    generate_synthetic,
    load_truth,
    save_truth,
    snr_proxy,
)
from .training import (
    EpochRecord,
    MultiSeedReport,
    TrainConfig,
    TrainHistory,
    run_seeds,
    train,
)

__version__ = "0.1.0"
