"""Federated training loop: local gradient descent plus FedAvg aggregation.

The federation is simulated in-process.  Coordinator and sites interact only
through broadcast parameter vectors and (update, sample-count) pairs, so a
wire transport could replace the in-process calls without touching the
algorithm.  All randomness derives from (seed, round, site) seed sequences,
making runs bitwise reproducible regardless of traversal order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .lstm import LstmSpec, forward_batch, init_params, loss_and_grad
from .windows import SiteDataset


class FederationError(RuntimeError):
    """Raised when a federated run cannot produce a model."""


@dataclass(frozen=True)
class FedRoundConfig:
    """Hyperparameters of one federated training run."""

    rounds: int = 10
    local_epochs: int = 3
    sequence_length: int = 16
    clients_per_round: float | int | None = None  # None = all available
    learning_rate: float = 0.05
    batch_size: int = 16
    seed: int = 0
    early_stop_patience: int | None = None  # rounds without val improvement

    def __post_init__(self):
        if self.rounds < 0 or self.local_epochs < 0:
            raise ValueError("rounds and local_epochs must be >= 0")
        if self.sequence_length < 1 or self.batch_size < 1:
            raise ValueError("sequence_length and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def local_train(
    spec: LstmSpec,
    global_params: np.ndarray,
    X: np.ndarray,
    S: np.ndarray,
    y: np.ndarray,
    epochs: int,
    lr: float,
    batch_size: int = 16,
    rng: np.random.Generator | None = None,
):
    """Mini-batch gradient descent from the broadcast weights.

    Returns (updated params, sample count).  Deterministic for a fixed rng
    state; epochs = 0 returns the broadcast weights unchanged.
    """
    n = len(y)
    if n == 0:
        raise FederationError("empty local dataset")
    if rng is None:
        rng = np.random.default_rng(0)
    params = global_params.copy()
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo: lo + batch_size]
            _, grad = loss_and_grad(spec, params, X[idx], S[idx], y[idx])
            params -= lr * grad
    return params, n


def fedavg_aggregate(updates: list) -> np.ndarray:
    """Sample-count weighted average of client parameter vectors."""
    if not updates:
        raise FederationError("no client updates to aggregate")
    shapes = {u[0].shape for u in updates}
    if len(shapes) != 1:
        raise FederationError(f"mismatched parameter shapes: {shapes}")
    total = float(sum(n for _, n in updates))
    if total <= 0:
        raise FederationError("total sample count is zero")
    out = np.zeros_like(updates[0][0])
    for params, n in updates:
        out += (n / total) * params
    return out


def eval_metrics(predictions, actuals) -> tuple[float, float]:
    """(MSE, MAE) over prediction/actual pairs."""
    predictions = np.asarray(predictions, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if predictions.shape != actuals.shape or predictions.size == 0:
        raise ValueError("predictions and actuals must be equal-length and nonempty")
    err = predictions - actuals
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def site_metrics(
    spec: LstmSpec, params: np.ndarray, dataset: SiteDataset, split: str = "val"
) -> tuple[float, float]:
    """Standardized (MSE, MAE) of the model on one site's split."""
    sl = slice(dataset.n_train, None) if split == "val" else slice(0, dataset.n_train)
    X, S, y = dataset.X[sl], dataset.S[sl], dataset.y[sl]
    if len(y) == 0:
        raise ValueError(f"site {dataset.site}: empty {split} split")
    preds, _ = forward_batch(spec, params, X, S)
    preds_kwh = preds * dataset.target_scale
    mean, std = dataset.stats.target_mean, dataset.stats.target_std
    return eval_metrics((preds_kwh - mean) / std, (y - mean) / std)


def evaluate_global(
    spec: LstmSpec, params: np.ndarray, datasets: dict, split: str = "val"
) -> dict:
    """Per-site standardized metrics plus their mean across sites."""
    per_site = {u: site_metrics(spec, params, d, split) for u, d in datasets.items()}
    mses = [m for m, _ in per_site.values()]
    maes = [a for _, a in per_site.values()]
    return {
        "per_site": per_site,
        "mse": float(np.mean(mses)),
        "mae": float(np.mean(maes)),
        "mse_min": float(np.min(mses)),
        "mse_max": float(np.max(mses)),
        "mae_min": float(np.min(maes)),
        "mae_max": float(np.max(maes)),
    }


def persistence_baseline(datasets: dict, split: str = "val") -> float:
    """Standardized MSE of predicting the last observed demand."""
    errs = []
    for d in datasets.values():
        sl = slice(d.n_train, None) if split == "val" else slice(0, d.n_train)
        std = d.stats.target_std
        errs.append(np.mean(((d.y_prev[sl] - d.y[sl]) / std) ** 2))
    return float(np.mean(errs))


def run_federated_training(
    datasets: dict,
    config: FedRoundConfig,
    spec: LstmSpec | None = None,
    initial_params: np.ndarray | None = None,
):
    """Full federated loop: select -> broadcast -> train -> aggregate.

    Returns (final params, per-round metrics).  metrics[0] describes the
    untrained initial model; metrics[r] the global model after round r.
    """
    if spec is None:
        first = next(iter(datasets.values()))
        spec = LstmSpec(sequence_length=config.sequence_length,
                        static_size=first.S.shape[1])
    available = sorted(u for u, d in datasets.items() if d.n_train > 0)
    if not available:
        raise FederationError("no sites with training data")

    if initial_params is None:
        init_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0)))
        params = init_params(spec, init_rng)
    else:
        params = initial_params.copy()

    def round_metrics(r):
        val = evaluate_global(spec, params, datasets, "val")
        train = evaluate_global(spec, params, datasets, "train")
        return {
            "round": r,
            "train_mse": train["mse"],
            "val_mse": val["mse"],
            "val_mae": val["mae"],
        }

    metrics = [round_metrics(0)]
    best_val = metrics[0]["val_mse"]
    stale = 0

    n_clients = config.clients_per_round
    for r in range(1, config.rounds + 1):
        select_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, 1, r))
        )
        if n_clients is None:
            selected = list(available)
        else:
            count = (
                max(1, int(round(n_clients * len(available))))
                if isinstance(n_clients, float) and n_clients <= 1.0
                else min(int(n_clients), len(available))
            )
            selected = sorted(
                select_rng.choice(available, size=count, replace=False).tolist()
            )
        if not selected:
            warnings.warn(f"round {r}: no available sites, skipping")
            continue
        updates = []
        for u in selected:
            d = datasets[u]
            site_rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, 2, r, int(u)))
            )
            Xt, St, yt = d.train_arrays()
            updates.append(
                local_train(
                    spec, params, Xt, St, yt,
                    epochs=config.local_epochs,
                    lr=config.learning_rate,
                    batch_size=config.batch_size,
                    rng=site_rng,
                )
            )
        params = fedavg_aggregate(updates)
        metrics.append(round_metrics(r))
        if config.early_stop_patience is not None:
            if metrics[-1]["val_mse"] < best_val - 1e-12:
                best_val = metrics[-1]["val_mse"]
                stale = 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break
    return params, metrics


# Checkpoint format: one JSON header line, then the raw little-endian float64
# parameter vector.


def save_checkpoint(path, spec: LstmSpec, params: np.ndarray) -> None:
    header = {
        "format": "gridshare-lstm",
        "version": 1,
        "input_size": spec.input_size,
        "hidden_size": spec.hidden_size,
        "static_size": spec.static_size,
        "head_hidden": spec.head_hidden,
        "sequence_length": spec.sequence_length,
        "n_params": spec.n_params,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(params, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[LstmSpec, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "gridshare-lstm":
            raise FederationError(f"{path}: not a model checkpoint")
        spec = LstmSpec(
            input_size=header["input_size"],
            hidden_size=header["hidden_size"],
            static_size=header["static_size"],
            head_hidden=header["head_hidden"],
            sequence_length=header["sequence_length"],
        )
        params = np.frombuffer(fh.read(), dtype="<f8").copy()
    if params.shape != (spec.n_params,):
        raise FederationError(f"{path}: parameter count mismatch")
    return spec, params
