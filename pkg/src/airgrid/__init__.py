"""Fine-grained gridded air-quality inference fusing sparse reference
stations with dense low-cost sensor streams."""

__version__ = "0.1.0"

from .grid import (GridGraph, GridCell, Station, SplitPlan,  # noqa: F401
                   build_grid_graph, assign_stations, split_grids)
from .decompose import (Decomposition, stl_decompose,  # noqa: F401
                        normalize_trend, seasonality_psd)
from .interpolate import (haversine, idw, knn_interpolate,  # noqa: F401
                          generate_ss_labels, InterpolationField)
from .features import (FeatureSchema, FeatureTensor,  # noqa: F401
                       AdjacencyPair, assemble_features, fill_missing)
from .network import ModelConfig, STNetwork, positional_embedding  # noqa: F401
from .training import (TrainConfig, TrainingData, mae,  # noqa: F401
                       multitask_loss, train, feature_importance,
                       select_features, ImportanceReport)
from .evaluation import (MetricTriple, metrics, run_cv,  # noqa: F401
                         run_ablation, baseline, corrupt_and_fill,
                         missing_ratio_study)
from .pipeline import (GraphSTRegressor, PreparedData,  # noqa: F401
                       prepare, prepare_synth, build_training_data)
from .synth import SynthConfig, generate, make_grid  # noqa: F401
