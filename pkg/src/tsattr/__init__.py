"""Model-agnostic attribution and evaluation for multi-horizon forecasters."""

__version__ = "0.1.0"

from .panel import FeatureSpec, PanelError, TimeSeriesPanel, load_panel
from .preprocess import (PreprocessConfig, clip_outliers, interpolate_missing,
                         split_chronological, standardize)
from .windows import WindowSpec, WindowedInstance, make_windows
from .oracle import ForecastOracle, finite_diff_gradient, predict
from .models import ReferenceLinearModel, ReferenceMLP, fit_linear, fit_mlp
from .baselines import Baseline, bootstrap_baseline, gaussian_baseline, zero_baseline
from .attribution import (ALL_METHODS, AttributionTensor, MorrisConfig,
                          augmented_feature_occlusion, brute_force_relevance,
                          feature_ablation, feature_occlusion, feature_permutation,
                          gradient_shap, integrated_gradients, morris_sensitivity)
from .faithfulness import (FaithfulnessReport, MaskSpec, aopcr, comprehensiveness,
                           mask_instance, rank_cells, sufficiency)
from .metrics import mae, ndcg, r2_score, rmse, rmsle
from .groundtruth import (GroupTruth, SensitivityComparison, aggregate_group_attribution,
                          compare_to_truth, load_group_truth, normalize_shares,
                          rollup_to_periods)
from .synthetic import SyntheticTruthTask, generate_synthetic_truth
from .wire import ExternalModelHandle, ProtocolError, WireShape
