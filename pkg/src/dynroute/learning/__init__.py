from .features import (
    FeatureConfig,
    extract_features,
    extract_features_raw,
    feature_dim,
    fit_standardization,
    quantile_lower,
)
from .models import (
    PrizeModel,
    backprop,
    init_model,
    load_model,
    model_from_json_dict,
    model_to_json_dict,
    predict_prizes,
    save_model,
)
from .loss import (
    ExactInner,
    HgsInner,
    PerturbationConfig,
    PerturbedLoss,
    forcing_prizes,
    inner_for_sample,
    perturbed_loss_and_grad,
    regret_loss,
    target_vector,
)
from .train import TrainConfig, TrainResult, TrainingDiverged, train

__all__ = [
    "ExactInner",
    "FeatureConfig",
    "HgsInner",
    "PerturbationConfig",
    "PerturbedLoss",
    "PrizeModel",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "backprop",
    "extract_features",
    "extract_features_raw",
    "feature_dim",
    "fit_standardization",
    "forcing_prizes",
    "init_model",
    "inner_for_sample",
    "load_model",
    "model_from_json_dict",
    "model_to_json_dict",
    "perturbed_loss_and_grad",
    "predict_prizes",
    "quantile_lower",
    "regret_loss",
    "save_model",
    "target_vector",
    "train",
]
