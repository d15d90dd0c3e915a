"""whistlekit: detection of tonal dolphin whistles in spectrogram images.

Pipeline stages: WAV ingestion -> spectrogram -> vesselness ridge map ->
probabilistic Hough segments -> active-contour snakes -> geometric features
-> random-forest classification, with a CLI and a labeling web service.
"""

from .audio import AudioClip, AudioSnippet, load_audio, partition
from .features import (
    CSV_COLUMNS,
    CSV_HEADER,
    FeatureConfig,
    FeatureVector,
    avg_mass,
    build_feature_vector,
    centroid,
    compute_l,
    correlation_matrix,
    inertia,
    normalized_length,
    relative_mass,
)
from .forest import (
    DecisionTree,
    EvaluationReport,
    RandomForestModel,
    entropy,
    evaluate,
    fit_forest,
    fit_tree,
    gain_ratio,
    gini,
    gini_gain,
    grid_search,
    predict,
    report_from_confusion,
)
from .hough import (
    HoughConfig,
    LineSegment,
    hough_accumulate,
    hough_point_vote,
    probabilistic_hough,
)
from .pipeline import (
    ConfigError,
    InputError,
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    run_detect,
    run_extract,
    run_train,
)
from .ridge import FrangiConfig, binarize, eigen2x2, frangi, hessian_at_scale
from .snakes import Snake, SnakeConfig, evolve, init_snake, snake_energy
from .spectrogram import Spectrogram, StftConfig, compute_spectrogram

__version__ = "0.1.0"
