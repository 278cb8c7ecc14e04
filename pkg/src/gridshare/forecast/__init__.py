"""Federated per-site demand forecasting."""

from .lstm import (
    LstmSpec,
    forward_batch,
    init_params,
    loss_and_grad,
    lstm_forward,
    lstm_gradients,
    unpack,
)
from .windows import (
    FeatureWindow,
    InsufficientHistoryError,
    SEQ_LEN_DEFAULT,
    STATIC_SIZE,
    SiteDataset,
    SiteStats,
    build_all_datasets,
    build_feature_window,
    build_site_dataset,
    static_features,
)
from .federated import (
    FederationError,
    FedRoundConfig,
    eval_metrics,
    evaluate_global,
    fedavg_aggregate,
    load_checkpoint,
    local_train,
    persistence_baseline,
    run_federated_training,
    save_checkpoint,
    site_metrics,
)

__all__ = [
    "LstmSpec", "forward_batch", "init_params", "loss_and_grad",
    "lstm_forward", "lstm_gradients", "unpack",
    "FeatureWindow", "InsufficientHistoryError", "SEQ_LEN_DEFAULT",
    "STATIC_SIZE", "SiteDataset", "SiteStats", "build_all_datasets",
    "build_feature_window", "build_site_dataset", "static_features",
    "FederationError", "FedRoundConfig", "eval_metrics", "evaluate_global",
    "fedavg_aggregate", "load_checkpoint", "local_train",
    "persistence_baseline", "run_federated_training", "save_checkpoint",
    "site_metrics",
]
