"""Entropy-based out-of-distribution segmentation with meta classification.

The pipeline has two steps: a pixel classifier trained with an extra
uncertainty objective on proxy OoD data produces softmax maps whose
normalized entropy flags unknown objects when thresholded; connected
components of flagged pixels become OoD segment predictions, and a
logistic meta classifier over hand-crafted segment metrics removes the
false positives among them. The :mod:`oodseg.cli` module exposes every
stage as a subcommand over documented binary tensor formats.
"""

from .baselines import BASELINE_METHODS, MahalanobisScorer, baseline_heatmaps
from .dispersion import (DISPERSION_KINDS, entropy_normalized, heatmap,
                         max_softmax_score, probability_margin, variation_ratio)
from .evaluation import (SegmentErrorTable, f1_score, gather_scores,
                         miou_with_ood, road_miss_rate, segment_errors)
from .features import (FeatureRow, feature_names, feature_row,
                       interior_boundary, neighborhood_profile, num_features)
from .formats import (FORMAT_VERSION, IGNORE_LABEL, DatasetManifest,
                      FeatureMap, FormatError, HeatMap, LabelMap,
                      ManifestEntry, SoftmaxMap, load_features, load_heatmap,
                      load_labels, load_manifest, load_softmax,
                      store_features, store_heatmap, store_labels,
                      store_manifest, store_softmax, validate_pair)
from .lars import LarsPath, lars_path
from .meta import (LogisticMetaClassifier, LooResult, MetaDataset,
                   fit_logistic, loo_cross_validate, remove_fp)
from .metrics import (Curve, QuantileSummary, ScoredPixels, auprc, auroc,
                      fpr_at_tpr, pr_curve, quantile_summary, roc_curve)
from .model import (NumericalError, ToyModel, TrainConfig, gradient_check,
                    infer, loss_in, loss_out, overall_loss, train)
from .segments import (MatchResult, OoDPixelMask, OoDSegment,
                       connected_components, ground_truth_components,
                       match_segments, threshold_mask)
from .synthetic import (SceneConfig, SyntheticScene, assert_disjoint_families,
                        family_means, generate_dataset, generate_scene)

__version__ = "0.1.0"
