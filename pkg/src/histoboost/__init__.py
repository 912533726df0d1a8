"""Gradient-boosted decision-tree ensembles over deep-feature vectors.

Pipeline pieces: feature CSV ingestion and stratified splitting, histogram
GBDT training in three growth flavors (level-wise, leaf-wise, oblivious),
soft-voting ensembles, binary classification metrics with ROC/AUC, and
class-activation heatmaps computed from exported tensors.
"""

from .boosting import (
    BoostedModel,
    BoostParams,
    GossParams,
    ModelFormatError,
    goss_sample,
    initial_score,
    load_model,
    logistic_grad_hess,
    logloss,
    predict_proba,
    save_model,
    train_gbdt,
)
from .data import (
    BinnedMatrix,
    DataError,
    FeatureBins,
    LabeledDataset,
    bin_features,
    compute_bins,
    load_feature_matrix,
    read_tensor,
    save_feature_matrix,
    stratified_split,
    write_tensor,
)
from .ensemble import EnsembleModel, decide, soft_vote
from .gradcam import (
    cam,
    channel_weights,
    heatmap_from_tensors,
    normalize_upsample,
    overlay,
)
from .metrics import (
    ConfusionCounts,
    MagnificationEval,
    RocCurve,
    accuracy,
    auc,
    balanced_accuracy,
    confusion,
    evaluate,
    f1,
    mean_percent,
    render_percent,
    report,
    roc_curve,
)
from .tree import (
    SplitCandidate,
    Tree,
    TreeParams,
    best_split_histogram,
    grow_leaf_wise,
    grow_level_wise,
    grow_oblivious,
    leaf_weight,
    predict_tree,
    predict_tree_matrix,
)

__version__ = "0.1.0"
