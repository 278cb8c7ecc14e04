"""Feature windows: sliding KPI sequences plus static site features.

The forecaster input for a site at step t is the 16-sample KPI window
(throughput, success ratio) covering the preceding four hours, standardized
per site with training-split statistics, concatenated with an encoding of
the site's static configuration.  The target is the realized energy of the
following step, kept in physical kWh so the nonnegative output head is
meaningful; error metrics are reported on the standardized scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest import (
    ANTENNA_TAGS,
    CmRecord,
    Corpus,
    FREQ_BANDS_MHZ,
    HARDWARE_MODELS,
)

SEQ_LEN_DEFAULT = 16
STD_FLOOR = 1e-8
TRAIN_FRACTION = 0.8


class InsufficientHistoryError(ValueError):
    """Raised when fewer KPI samples exist than the window needs."""


STATIC_SIZE = len(HARDWARE_MODELS) + len(FREQ_BANDS_MHZ) + len(ANTENNA_TAGS) + 3


def static_features(cm: CmRecord) -> np.ndarray:
    """Fixed-length encoding of a site's static configuration."""
    hw = np.zeros(len(HARDWARE_MODELS))
    hw[HARDWARE_MODELS.index(cm.hardware_model)] = 1.0
    band = np.zeros(len(FREQ_BANDS_MHZ))
    band[FREQ_BANDS_MHZ.index(cm.freq_band_mhz)] = 1.0
    ant = np.zeros(len(ANTENNA_TAGS))
    ant[ANTENNA_TAGS.index(cm.antenna_tag)] = 1.0
    numeric = np.array(
        [cm.cell_count / 9.0, cm.power_params[0] / 1.5, cm.power_params[1] / 40.0]
    )
    return np.concatenate([hw, band, ant, numeric])


@dataclass(frozen=True)
class SiteStats:
    """Per-site standardization constants from the training split."""

    kpi_mean: np.ndarray  # (2,)
    kpi_std: np.ndarray  # (2,)
    target_mean: float
    target_std: float


@dataclass(frozen=True)
class FeatureWindow:
    """One forecaster input: standardized KPI window + static features."""

    kpi_sequence: np.ndarray  # (seq_len, 2)
    static: np.ndarray
    site: int
    t_end: int  # index of the last KPI sample in the window

    def __post_init__(self):
        if self.kpi_sequence.ndim != 2 or self.kpi_sequence.shape[1] != 2:
            raise ValueError("kpi_sequence must be (seq_len, 2)")


def build_feature_window(
    kpi_history: np.ndarray,
    cm: CmRecord,
    t: int,
    stats: SiteStats | None = None,
    seq_len: int = SEQ_LEN_DEFAULT,
) -> FeatureWindow:
    """Window of the last ``seq_len`` KPI samples ending at step t inclusive.

    ``kpi_history`` is an (n, 2) array of (throughput, success_ratio) rows.
    """
    if t + 1 < seq_len or t >= len(kpi_history):
        raise InsufficientHistoryError(
            f"site {cm.site}: need {seq_len} samples at or before step {t}, "
            f"have {min(t + 1, len(kpi_history))}"
        )
    window = np.array(kpi_history[t + 1 - seq_len: t + 1], dtype=float)
    if stats is not None:
        window = (window - stats.kpi_mean) / np.maximum(stats.kpi_std, STD_FLOOR)
    return FeatureWindow(
        kpi_sequence=window, static=static_features(cm), site=cm.site, t_end=t
    )


@dataclass
class SiteDataset:
    """All training windows of one site, chronological, pre-standardized.

    X: (N, seq_len, 2) standardized inputs; S: (N, static) features;
    y: (N,) physical kWh targets; y_prev: (N,) last observed demand in each
    window's span (the persistence baseline's prediction).
    """

    site: int
    X: np.ndarray
    S: np.ndarray
    y: np.ndarray
    y_prev: np.ndarray
    n_train: int
    stats: SiteStats

    @property
    def n_windows(self) -> int:
        return len(self.y)

    @property
    def target_scale(self) -> float:
        """Training targets are demand relative to the site's mean demand,
        which keeps them positive (matching the clamped output head) and on
        one scale across sites so FedAvg averages aligned tasks."""
        return max(self.stats.target_mean, STD_FLOOR)

    def train_arrays(self):
        sl = slice(0, self.n_train)
        return self.X[sl], self.S[sl], self.y[sl] / self.target_scale

    def val_arrays(self):
        sl = slice(self.n_train, None)
        return self.X[sl], self.S[sl], self.y[sl] / self.target_scale


def build_site_dataset(
    corpus: Corpus, site: int, seq_len: int = SEQ_LEN_DEFAULT
) -> SiteDataset:
    """Windows and targets for one site: target is the next step's energy."""
    k = corpus.site_index(site)
    kpi = np.stack([corpus.throughput[k], corpus.success_ratio[k]], axis=1)
    energy = corpus.energy[k]
    T = len(energy)
    ends = range(seq_len - 1, T - 1)
    n = len(ends)
    if n < 2:
        raise InsufficientHistoryError(f"site {site}: not enough history for windows")
    n_train = max(1, int(n * TRAIN_FRACTION))

    # Standardization statistics come from the chronological training split
    # only, so validation data never leaks into them.
    train_span = seq_len - 1 + n_train
    stats = SiteStats(
        kpi_mean=kpi[:train_span].mean(axis=0),
        kpi_std=kpi[:train_span].std(axis=0),
        target_mean=float(energy[1:train_span + 1].mean()),
        target_std=float(max(energy[1:train_span + 1].std(), STD_FLOOR)),
    )

    cm = corpus.cm[site]
    static = static_features(cm)
    X = np.empty((n, seq_len, 2))
    y = np.empty(n)
    y_prev = np.empty(n)
    kpi_std = (kpi - stats.kpi_mean) / np.maximum(stats.kpi_std, STD_FLOOR)
    for j, t in enumerate(ends):
        X[j] = kpi_std[t + 1 - seq_len: t + 1]
        y[j] = energy[t + 1]
        y_prev[j] = energy[t]
    S = np.tile(static, (n, 1))
    return SiteDataset(
        site=site, X=X, S=S, y=y, y_prev=y_prev, n_train=n_train, stats=stats
    )


def build_all_datasets(corpus: Corpus, seq_len: int = SEQ_LEN_DEFAULT) -> dict:
    return {u: build_site_dataset(corpus, u, seq_len) for u in corpus.site_ids}
