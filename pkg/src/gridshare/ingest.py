"""Synthetic corpus generation and file-based ingestion.

The simulator's data stands in for private operational measurements: per-site
KPIs correlated with a diurnal/weekly demand pattern, static configuration
records, a grid tariff series, and per-site solar harvest.  Everything is
deterministic per seed and round-trips exactly through CSV.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .domain import TimeGrid

SCHEMA_VERSION = 1

HARDWARE_MODELS = ("HW-A", "HW-B", "HW-C", "HW-D")
FREQ_BANDS_MHZ = (700, 1800, 3500)
ANTENNA_TAGS = ("ant32", "ant64")


class CorpusError(ValueError):
    """Raised when on-disk data violates the documented schemas."""


@dataclass(frozen=True)
class CmRecord:
    """Static configuration of a site (constant over a run)."""

    site: int
    hardware_model: str
    freq_band_mhz: int
    cell_count: int
    antenna_tag: str
    power_params: tuple  # two dimensionless configuration knobs

    def __post_init__(self):
        if not (3 <= self.cell_count <= 9):
            raise CorpusError(f"cell_count {self.cell_count} outside [3, 9]")
        if self.hardware_model not in HARDWARE_MODELS:
            raise CorpusError(f"unknown hardware model {self.hardware_model!r}")
        if self.freq_band_mhz not in FREQ_BANDS_MHZ:
            raise CorpusError(f"unknown frequency band {self.freq_band_mhz}")


@dataclass(eq=False)
class Corpus:
    """In-memory dataset: aligned per-site series plus static records.

    Array rows follow ``site_ids`` order; columns follow ``timestamps``.
    """

    site_ids: tuple
    timestamps: tuple  # ISO-8601 strings, 15-min aligned
    throughput: np.ndarray  # (U, T) Mbps
    success_ratio: np.ndarray  # (U, T) in [0, 1]
    energy: np.ndarray  # (U, T) kWh per step (ground-truth demand)
    solar: np.ndarray  # (U, T) kWh harvested per step
    price: np.ndarray  # (T,) euro/kWh
    cm: dict = field(default_factory=dict)  # site -> CmRecord

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    def site_index(self, site) -> int:
        return self.site_ids.index(site)


def corpus_equal(a: Corpus, b: Corpus) -> bool:
    return (
        a.site_ids == b.site_ids
        and a.timestamps == b.timestamps
        and np.array_equal(a.throughput, b.throughput)
        and np.array_equal(a.success_ratio, b.success_ratio)
        and np.array_equal(a.energy, b.energy)
        and np.array_equal(a.solar, b.solar)
        and np.array_equal(a.price, b.price)
        and a.cm == b.cm
    )


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic generator.

    Magnitudes are calibrated so a 6-cell site draws roughly 2-4 kWh per
    15-minute step, keeping a 50 kWh battery meaningful for multi-hour
    autonomy.  These are generator conventions, not measured truth.
    """

    base_load_per_cell: float = 0.30  # kWh/step per cell
    diurnal_amp_per_cell: float = 0.20
    weekly_amp: float = 0.08
    noise_sigma: float = 0.12  # relative demand noise per step
    throughput_scale: float = 8.0  # Mbps per kWh/step of signal
    throughput_noise: float = 0.05
    solar_peak_kwh: float = 0.85  # per site per step at clear-sky noon
    cloud_min: float = 0.5
    price_mode: str = "flat"  # "flat" or "two_band"
    day_price: float = 0.28
    night_price: float = 0.15


def _timestamps(grid: TimeGrid) -> tuple:
    start = datetime.fromisoformat(grid.start_epoch)
    step = timedelta(minutes=grid.step_minutes)
    return tuple((start + k * step).isoformat() for k in range(grid.horizon_steps))


def generate_cm_records(site_ids, seed: int) -> dict:
    records = {}
    for u in site_ids:
        rng = np.random.default_rng(np.random.SeedSequence((seed, 777, u)))
        records[u] = CmRecord(
            site=u,
            hardware_model=HARDWARE_MODELS[rng.integers(len(HARDWARE_MODELS))],
            freq_band_mhz=int(FREQ_BANDS_MHZ[rng.integers(len(FREQ_BANDS_MHZ))]),
            cell_count=int(rng.integers(3, 10)),
            antenna_tag=ANTENNA_TAGS[rng.integers(len(ANTENNA_TAGS))],
            power_params=(round(float(rng.uniform(0.5, 1.5)), 6),
                          round(float(rng.uniform(10.0, 40.0)), 6)),
        )
    return records


def generate_synthetic_dataset(
    site_ids,
    grid: TimeGrid,
    seed: int,
    config: GeneratorConfig = GeneratorConfig(),
) -> Corpus:
    """Seeded synthetic corpus: KPI + CM + price + solar.

    Demand is base load scaled by cell count plus a diurnal bell, a weekly
    modulation and i.i.d. relative noise; KPIs track the noiseless demand
    signal so they carry learnable predictive signal.  Solar is a clear-sky
    bell scaled by a per-site per-day cloud factor.  Per-site randomness is
    derived from (seed, site id), so a site's series does not depend on which
    other sites exist.
    """
    site_ids = tuple(site_ids)
    T = grid.horizon_steps
    hours = (np.arange(T) * grid.step_hours) % 24.0
    days = (np.arange(T) * grid.step_hours) / 24.0
    diurnal = 0.5 * (1.0 + np.sin(2.0 * np.pi * (hours - 9.0) / 24.0))
    weekly = 1.0 + config.weekly_amp * np.sin(2.0 * np.pi * days / 7.0)
    clear_sky = np.where(
        (hours >= 6.0) & (hours < 18.0),
        np.sin(np.pi * (hours - 6.0) / 12.0) ** 2,
        0.0,
    )

    cm = generate_cm_records(site_ids, seed)
    thr = np.empty((len(site_ids), T))
    succ = np.empty_like(thr)
    energy = np.empty_like(thr)
    solar = np.empty_like(thr)
    n_days = int(np.ceil(T * grid.step_hours / 24.0))
    for k, u in enumerate(site_ids):
        rng = np.random.default_rng(np.random.SeedSequence((seed, u)))
        cells = cm[u].cell_count
        signal = cells * (
            config.base_load_per_cell + config.diurnal_amp_per_cell * diurnal
        ) * weekly
        energy[k] = np.maximum(
            0.01, signal * (1.0 + config.noise_sigma * rng.standard_normal(T))
        )
        thr[k] = np.maximum(
            0.0,
            config.throughput_scale
            * signal
            * (1.0 + config.throughput_noise * rng.standard_normal(T)),
        )
        succ[k] = np.clip(
            0.99 - 0.03 * diurnal + 0.005 * rng.standard_normal(T), 0.0, 1.0
        )
        cloud_by_day = rng.uniform(config.cloud_min, 1.0, size=n_days)
        cloud = cloud_by_day[np.minimum(days.astype(int), n_days - 1)]
        solar[k] = config.solar_peak_kwh * clear_sky * cloud

    if config.price_mode == "flat":
        price = np.full(T, config.day_price)
    elif config.price_mode == "two_band":
        night = (hours < 7.0) | (hours >= 23.0)
        price = np.where(night, config.night_price, config.day_price)
    else:
        raise CorpusError(f"unknown price_mode {config.price_mode!r}")

    return Corpus(
        site_ids=site_ids,
        timestamps=_timestamps(grid),
        throughput=thr,
        success_ratio=succ,
        energy=energy,
        solar=solar,
        price=price.astype(float),
        cm=cm,
    )


# CSV schemas ---------------------------------------------------------------
#
# kpi.csv   : site,timestamp,throughput_mbps,success_ratio,energy_kwh
# cm.csv    : site,hardware_model,freq_band_mhz,cell_count,antenna_tag,
#             power_param_1,power_param_2
# price.csv : timestamp,price_eur_per_kwh
# solar.csv : site,timestamp,harvest_kwh
#
# Every file starts with a "# gridshare-<name> v1" schema line.  Floats are
# written with repr() so a write/load round-trip is bit-exact.


def _open_checked(path, name):
    fh = open(path, newline="")
    header = fh.readline().strip()
    expected = f"# gridshare-{name} v{SCHEMA_VERSION}"
    if header != expected:
        fh.close()
        raise CorpusError(f"{path}: expected schema header {expected!r}, got {header!r}")
    return fh


def write_corpus(corpus: Corpus, out_dir) -> dict:
    """Write the four corpus CSVs into ``out_dir``; returns the path map."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv")
             for name in ("kpi", "cm", "price", "solar")}

    with open(paths["kpi"], "w", newline="") as fh:
        fh.write(f"# gridshare-kpi v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["site", "timestamp", "throughput_mbps", "success_ratio", "energy_kwh"])
        for k, u in enumerate(corpus.site_ids):
            for t, ts in enumerate(corpus.timestamps):
                w.writerow([u, ts, repr(float(corpus.throughput[k, t])),
                            repr(float(corpus.success_ratio[k, t])),
                            repr(float(corpus.energy[k, t]))])

    with open(paths["cm"], "w", newline="") as fh:
        fh.write(f"# gridshare-cm v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["site", "hardware_model", "freq_band_mhz", "cell_count",
                    "antenna_tag", "power_param_1", "power_param_2"])
        for u in corpus.site_ids:
            r = corpus.cm[u]
            w.writerow([u, r.hardware_model, r.freq_band_mhz, r.cell_count,
                        r.antenna_tag, repr(r.power_params[0]), repr(r.power_params[1])])

    with open(paths["price"], "w", newline="") as fh:
        fh.write(f"# gridshare-price v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["timestamp", "price_eur_per_kwh"])
        for t, ts in enumerate(corpus.timestamps):
            w.writerow([ts, repr(float(corpus.price[t]))])

    with open(paths["solar"], "w", newline="") as fh:
        fh.write(f"# gridshare-solar v{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["site", "timestamp", "harvest_kwh"])
        for k, u in enumerate(corpus.site_ids):
            for t, ts in enumerate(corpus.timestamps):
                w.writerow([u, ts, repr(float(corpus.solar[k, t]))])

    return paths


def load_price_series(path) -> tuple:
    """(timestamps, prices) from price.csv; rejects negative prices."""
    timestamps, prices = [], []
    with _open_checked(path, "price") as fh:
        for row in csv.DictReader(fh):
            p = float(row["price_eur_per_kwh"])
            if p < 0:
                raise CorpusError(f"{path}: negative price {p} at {row['timestamp']}")
            timestamps.append(row["timestamp"])
            prices.append(p)
    if timestamps != sorted(timestamps):
        raise CorpusError(f"{path}: timestamps not monotonically increasing")
    return tuple(timestamps), np.array(prices)


def load_corpus(corpus_dir) -> Corpus:
    """Load and cross-validate the four corpus CSVs from a directory."""
    paths = {name: os.path.join(corpus_dir, f"{name}.csv")
             for name in ("kpi", "cm", "price", "solar")}
    for name, path in paths.items():
        if not os.path.exists(path):
            raise CorpusError(f"missing corpus file: {path}")

    ts_price, price = load_price_series(paths["price"])
    timestamps = ts_price
    ts_index = {ts: t for t, ts in enumerate(timestamps)}
    T = len(timestamps)

    cm = {}
    with _open_checked(paths["cm"], "cm") as fh:
        for row in csv.DictReader(fh):
            u = int(row["site"])
            cm[u] = CmRecord(
                site=u,
                hardware_model=row["hardware_model"],
                freq_band_mhz=int(row["freq_band_mhz"]),
                cell_count=int(row["cell_count"]),
                antenna_tag=row["antenna_tag"],
                power_params=(float(row["power_param_1"]), float(row["power_param_2"])),
            )
    site_ids = tuple(sorted(cm))
    site_index = {u: k for k, u in enumerate(site_ids)}
    U = len(site_ids)

    def read_series(path, name, columns):
        arrays = [np.full((U, T), np.nan) for _ in columns]
        with _open_checked(path, name) as fh:
            for row in csv.DictReader(fh):
                u = int(row["site"])
                if u not in site_index:
                    raise CorpusError(f"{path}: site {u} missing from cm.csv")
                ts = row["timestamp"]
                if ts not in ts_index:
                    raise CorpusError(f"{path}: timestamp {ts} missing from price.csv")
                for arr, col in zip(arrays, columns):
                    arr[site_index[u], ts_index[ts]] = float(row[col])
        for arr, col in zip(arrays, columns):
            holes = np.argwhere(np.isnan(arr))
            if holes.size:
                k, t = holes[0]
                raise CorpusError(
                    f"{path}: gap at site {site_ids[k]}, step {t} ({timestamps[t]})"
                )
        return arrays

    thr, succ, energy = read_series(
        paths["kpi"], "kpi", ["throughput_mbps", "success_ratio", "energy_kwh"]
    )
    (solar,) = read_series(paths["solar"], "solar", ["harvest_kwh"])

    if (thr < 0).any():
        raise CorpusError("kpi.csv: negative throughput")
    if ((succ < 0) | (succ > 1)).any():
        raise CorpusError("kpi.csv: success_ratio outside [0, 1]")
    if (solar < 0).any():
        raise CorpusError("solar.csv: negative harvest")

    return Corpus(
        site_ids=site_ids,
        timestamps=timestamps,
        throughput=thr,
        success_ratio=succ,
        energy=energy,
        solar=solar,
        price=price,
        cm=cm,
    )


# Price feeds ---------------------------------------------------------------


class PriceFeed:
    """Source of a grid-price series; implementations must be deterministic."""

    def series(self) -> tuple:
        """Return (timestamps, prices)."""
        raise NotImplementedError


class FilePriceFeed(PriceFeed):
    """Reads price.csv; the default, offline backend."""

    def __init__(self, path):
        self.path = path

    def series(self) -> tuple:
        return load_price_series(self.path)


class StubPriceClient(PriceFeed):
    """Stand-in for a live market API client.

    Returns a constant tariff; a real client would implement the same
    ``series()`` surface against a provider API.
    """

    def __init__(self, price: float, timestamps):
        if price < 0:
            raise CorpusError(f"negative price {price}")
        self.price = price
        self.timestamps = tuple(timestamps)

    def series(self) -> tuple:
        return self.timestamps, np.full(len(self.timestamps), self.price)


def price_feed(source, timestamps=None) -> PriceFeed:
    """Resolve a price source: a CSV path, or "stub:<price>" for the stub."""
    if isinstance(source, str) and source.startswith("stub:"):
        if timestamps is None:
            raise CorpusError("stub price feed needs timestamps")
        return StubPriceClient(float(source.split(":", 1)[1]), timestamps)
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        return FilePriceFeed(source)
    raise CorpusError(f"unresolvable price source: {source!r}")
