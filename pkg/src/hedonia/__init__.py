"""Hedonic house-price models with a learned visual proxy.

Attribute regressions (linear, additive, boosted trees and a small
perceptron) are combined with two tiny CNNs over street-level and aerial
images. The two-stage procedure trains the image branch on the residuals of
the attribute model, so its scalar output can enter an interpretable model as
one extra column.
"""

__version__ = "0.1.0"

from .boosting import GbtConfig, GbtModel, gbt_fit, gbt_predict
from .data import (ATTRIBUTES, DataError, HedonicDataset, NormalizationSpec, StreetRecord,
                   TransactionRecord, aggregate_to_streets, apply_normalization, build_dataset,
                   fit_normalization)
from .evaluation import (Metrics, compute_metrics, evaluate, normalize_for_plan, run_ablation,
                         run_generalization)
from .export import rank_images, score_map
from .gam import GamModel, gam_fit, partial_dependence, range_effect
from .models import (HybridChain, OlsModel, TrainConfig, full_model_fit, hybrid_linear_fit,
                     ols_fit, two_stage_train)
from .spatial import SplitPlan, make_split, street_features
from .synth import SynthConfig, synth_generate
