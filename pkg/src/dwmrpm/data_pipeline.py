"""Rainfall data handling: ingestion, cleaning, monthly aggregation,
min-max normalization, sliding-window sample construction, year-range
splits and synthetic data generation.

Two daily CSV layouts are understood:

  * ``wrd_station``: header ``station_id,latitude,longitude,date,rainfall_mm``
  * ``imd_grid``:    header ``lat,lon,date,rainfall_mm`` (a station id is
    synthesized as ``grid_<lat>_<lon>``)

Dates are ``YYYY-MM-DD``; a missing depth is an empty field or ``NA``.
Monthly caches round-trip bit-exactly: floats are written with ``repr``.
"""

from __future__ import annotations

import calendar
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    DegenerateRangeError,
    IngestionFailedError,
)

MONSOON_MONTHS = (6, 7, 8, 9)

# Rajasthan meteorological subdivision bounding box, decimal degrees.
RAJASTHAN_BOUNDS = ((23.058, 30.233), (69.45, 78.317))

WRD_HEADER = ["station_id", "latitude", "longitude", "date", "rainfall_mm"]
IMD_HEADER = ["lat", "lon", "date", "rainfall_mm"]
CACHE_HEADER = ["station_id", "latitude", "longitude", "year", "month",
                "rainfall_mm", "flag"]


@dataclass
class RainfallRecord:
    """One daily observation. ``rainfall_mm`` is None when missing."""

    station_id: str
    latitude: float
    longitude: float
    date: tuple  # (year, month, day)
    rainfall_mm: float | None
    zone: str | None = None


@dataclass
class MonthlySeries:
    """Gap-free chronological monthly totals for one station."""

    station_id: str
    latitude: float
    longitude: float
    start_year: int
    start_month: int
    values: np.ndarray
    flags: list  # "observed" | "imputed", parallel to values

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.flags) != self.values.shape[0]:
            raise ContractError("MonthlySeries: flags must parallel values")

    def __len__(self):
        return self.values.shape[0]

    def month_at(self, index: int) -> tuple:
        """(year, month) of the index-th entry."""
        total = (self.start_year * 12 + self.start_month - 1) + index
        return total // 12, total % 12 + 1


@dataclass(frozen=True)
class NormalizationParams:
    """Min-max scaling to [0, 100], fitted on training-split values only."""

    i_min: float
    i_max: float

    def __post_init__(self):
        if not self.i_max > self.i_min:
            raise DegenerateRangeError(
                f"normalization range is degenerate: [{self.i_min}, {self.i_max}]"
            )


@dataclass
class WindowSample:
    """One example: window of normalized months + raw coordinates, and its target."""

    inputs: np.ndarray   # window_months normalized values, oldest first, then lat, lon
    target: float        # normalized rainfall of the month right after the window
    station_id: str
    year: int
    month: int


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    train_years: tuple
    val_years: tuple
    test_years: tuple
    discarded: int = 0


@dataclass(frozen=True)
class CleanPolicy:
    max_missing_days: int = 5          # months above this get imputed
    max_imputed_fraction: float = 0.10  # stations above this are dropped
    min_years: int = 10                # shorter stations cannot form windows


@dataclass
class CleaningReport:
    excluded: list = field(default_factory=list)      # {station_id, reason}
    imputations: dict = field(default_factory=dict)   # station -> imputed month count
    imputed_totals: dict = field(default_factory=dict)  # station -> imputed mm sum
    observed_day_sums: dict = field(default_factory=dict)  # station -> mm over observed months
    malformed_rows: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "excluded_stations": self.excluded,
            "imputed_month_counts": dict(sorted(self.imputations.items())),
            "imputed_totals_mm": dict(sorted(self.imputed_totals.items())),
            "observed_day_sums_mm": dict(sorted(self.observed_day_sums.items())),
            "malformed_rows": self.malformed_rows,
        }


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _parse_date(text: str) -> tuple:
    parts = text.strip().split("-")
    if len(parts) != 3:
        raise ValueError(f"bad date {text!r}")
    year, month, day = (int(p) for p in parts)
    if not 1 <= month <= 12:
        raise ValueError(f"bad month in {text!r}")
    if not 1 <= day <= calendar.monthrange(year, month)[1]:
        raise ValueError(f"bad day in {text!r}")
    return year, month, day


def ingest_daily(path, fmt: str = "wrd_station", bounds=RAJASTHAN_BOUNDS):
    """Read a daily CSV; returns (records, row_issues).

    Malformed rows are skipped but reported; a negative depth yields a record
    with the missing marker plus a report entry. More than 10% malformed rows
    aborts with IngestionFailedError.
    """
    if fmt not in ("wrd_station", "imd_grid"):
        raise ContractError(f"unknown daily format {fmt!r}")
    expected = WRD_HEADER if fmt == "wrd_station" else IMD_HEADER

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionFailedError(f"{path}: empty file, expected header {expected}")
        if [h.strip() for h in header] != expected:
            raise IngestionFailedError(
                f"{path}: header {header} does not match {fmt} layout {expected}"
            )

        records = []
        issues = []
        total = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            total += 1
            try:
                if fmt == "wrd_station":
                    if len(row) != 5:
                        raise ValueError(f"expected 5 fields, got {len(row)}")
                    station, lat_s, lon_s, date_s, rain_s = (c.strip() for c in row)
                else:
                    if len(row) != 4:
                        raise ValueError(f"expected 4 fields, got {len(row)}")
                    lat_s, lon_s, date_s, rain_s = (c.strip() for c in row)
                    station = f"grid_{lat_s}_{lon_s}"
                lat = float(lat_s)
                lon = float(lon_s)
                date = _parse_date(date_s)
            except ValueError as exc:
                issues.append({"line": lineno, "reason": str(exc), "row": ",".join(row)})
                continue

            if bounds is not None:
                (lat_lo, lat_hi), (lon_lo, lon_hi) = bounds
                if not (lat_lo <= lat <= lat_hi and lon_lo <= lon <= lon_hi):
                    issues.append({
                        "line": lineno,
                        "reason": f"coordinates ({lat}, {lon}) outside bounds",
                        "row": ",".join(row),
                    })
                    continue

            if rain_s == "" or rain_s.upper() == "NA":
                rain = None
            else:
                try:
                    rain = float(rain_s)
                except ValueError:
                    issues.append({"line": lineno, "reason": f"bad rainfall {rain_s!r}",
                                   "row": ",".join(row)})
                    continue
                if rain < 0:
                    issues.append({"line": lineno, "reason": "negative value",
                                   "row": ",".join(row)})
                    rain = None
            records.append(RainfallRecord(station, lat, lon, date, rain))

        skipped = total - len(records)
        if total > 0 and skipped / total > 0.10:
            raise IngestionFailedError(
                f"{path}: {skipped}/{total} rows malformed (>10%)",
                report=issues,
            )
    return records, issues


# ---------------------------------------------------------------------------
# cleaning and monthly aggregation
# ---------------------------------------------------------------------------

def clean_and_aggregate(records, policy: CleanPolicy = CleanPolicy(),
                        malformed=()):
    """Aggregate daily records into gap-free monthly series.

    A month whose missing-day count stays within policy.max_missing_days is
    the plain sum of its observed days; beyond that the month is imputed with
    the station's climatological mean for that calendar month. Stations with
    too many imputed months, too little history, or a calendar month that was
    never observed (so no climatology exists) are excluded and reported.
    """
    by_station = {}
    for rec in records:
        by_station.setdefault(rec.station_id, []).append(rec)

    report = CleaningReport(malformed_rows=list(malformed))
    out = []
    for station_id in sorted(by_station):
        recs = by_station[station_id]
        lat, lon = recs[0].latitude, recs[0].longitude
        daily = {}
        for rec in recs:
            year, month, _day = rec.date
            daily.setdefault((year, month), []).append(rec.rainfall_mm)

        first = min(daily)
        last = max(daily)
        months = []
        key = first
        while key <= last:
            months.append(key)
            year, month = key
            key = (year, month + 1) if month < 12 else (year + 1, 1)

        observed_totals = {}
        needs_imputation = []
        for year, month in months:
            values = [v for v in daily.get((year, month), []) if v is not None]
            days = calendar.monthrange(year, month)[1]
            missing = days - len(values)
            if missing <= policy.max_missing_days:
                observed_totals[(year, month)] = sum(values)
            else:
                needs_imputation.append((year, month))

        climatology = {}
        missing_climatology = None
        for month in range(1, 13):
            if not any(m == month for (_y, m) in months):
                continue  # calendar month never inside this station's span
            samples = [observed_totals[key] for key in observed_totals if key[1] == month]
            if samples:
                climatology[month] = sum(samples) / len(samples)
            elif any(m == month for (_y, m) in needs_imputation):
                missing_climatology = month
                break
        if missing_climatology is not None:
            report.excluded.append({
                "station_id": station_id,
                "reason": f"no observed month {missing_climatology} to impute from",
            })
            continue

        if len(months) < policy.min_years * 12:
            report.excluded.append({
                "station_id": station_id,
                "reason": f"only {len(months)} months after cleaning; "
                          f"window construction impossible (< {policy.min_years} years)",
            })
            continue

        imputed_fraction = len(needs_imputation) / len(months)
        if imputed_fraction > policy.max_imputed_fraction:
            report.excluded.append({
                "station_id": station_id,
                "reason": f"{len(needs_imputation)}/{len(months)} months imputed "
                          f"(> {policy.max_imputed_fraction:.0%})",
            })
            continue

        values = np.empty(len(months))
        flags = []
        imputed_total = 0.0
        for i, (year, month) in enumerate(months):
            if (year, month) in observed_totals:
                values[i] = observed_totals[(year, month)]
                flags.append("observed")
            else:
                values[i] = climatology[month]
                imputed_total += climatology[month]
                flags.append("imputed")

        report.imputations[station_id] = len(needs_imputation)
        report.imputed_totals[station_id] = imputed_total
        report.observed_day_sums[station_id] = sum(observed_totals.values())
        out.append(MonthlySeries(station_id, lat, lon, first[0], first[1],
                                 values, flags))
    return out, report


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def fit_normalizer(train_series, max_year: int | None = None) -> NormalizationParams:
    """Global min/max over the training-split monthly values.

    ``max_year`` restricts fitting to months dated up to and including that
    year, which is how leakage from validation/test years is excluded when
    series spill past the training range.
    """
    lo, hi = np.inf, -np.inf
    count = 0
    for series in train_series:
        values = series.values
        if max_year is not None:
            years = np.array([series.month_at(i)[0] for i in range(len(series))])
            values = values[years <= max_year]
        if values.size == 0:
            continue
        lo = min(lo, float(values.min()))
        hi = max(hi, float(values.max()))
        count += values.size
    if count == 0:
        raise ContractError("fit_normalizer: no values to fit on")
    if hi == lo:
        raise DegenerateRangeError(f"all {count} training values equal {lo}")
    return NormalizationParams(lo, hi)


def normalize(value, params: NormalizationParams):
    """Map mm to the 0-100 training scale (values outside pass through unclamped)."""
    return (np.asarray(value, dtype=np.float64) - params.i_min) \
        / (params.i_max - params.i_min) * 100.0


def denormalize(value, params: NormalizationParams):
    return np.asarray(value, dtype=np.float64) * (params.i_max - params.i_min) \
        / 100.0 + params.i_min


# ---------------------------------------------------------------------------
# window construction and year splits
# ---------------------------------------------------------------------------

def build_windows(series: MonthlySeries, params: NormalizationParams,
                  window_months: int = 108):
    """Emit one sample per monsoon-month target that has a full window behind it.

    Inputs are the normalized preceding months, oldest first, then the raw
    latitude and longitude. Short series yield an empty list.
    """
    samples = []
    norm_values = normalize(series.values, params)
    for t in range(window_months, len(series)):
        year, month = series.month_at(t)
        if month not in MONSOON_MONTHS:
            continue
        inputs = np.empty(window_months + 2)
        inputs[:window_months] = norm_values[t - window_months:t]
        inputs[window_months] = series.latitude
        inputs[window_months + 1] = series.longitude
        samples.append(WindowSample(inputs, float(norm_values[t]),
                                    series.station_id, year, month))
    return samples


def split_by_years(samples, train_years, val_years, test_years) -> DatasetSplit:
    """Assign samples to splits by target year; inclusive ranges must be disjoint."""
    ranges = [tuple(train_years), tuple(val_years), tuple(test_years)]
    for lo, hi in ranges:
        if lo > hi:
            raise ContractError(f"year range {lo}:{hi} is empty")
    for i in range(3):
        for j in range(i + 1, 3):
            (a_lo, a_hi), (b_lo, b_hi) = ranges[i], ranges[j]
            if a_lo <= b_hi and b_lo <= a_hi:
                raise ContractError(
                    f"year ranges {ranges[i]} and {ranges[j]} overlap"
                )

    split = DatasetSplit([], [], [], *ranges)
    for sample in samples:
        if ranges[0][0] <= sample.year <= ranges[0][1]:
            split.train.append(sample)
        elif ranges[1][0] <= sample.year <= ranges[1][1]:
            split.validation.append(sample)
        elif ranges[2][0] <= sample.year <= ranges[2][1]:
            split.test.append(sample)
        else:
            split.discarded += 1
    return split


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

# Monsoon-peaked monthly means (mm), Jan..Dec.
DEFAULT_MONTHLY_PROFILE_MM = (4.0, 4.0, 4.0, 3.0, 9.0, 50.0, 160.0, 160.0,
                              65.0, 10.0, 2.0, 2.0)


@dataclass(frozen=True)
class SynthConfig:
    n_stations: int = 30
    start_year: int = 1957
    n_years: int = 40
    profile_mm: tuple = DEFAULT_MONTHLY_PROFILE_MM
    noise_scale: float = 0.35       # relative sd of the multiplicative noise
    dry_zero_prob: float = 0.35     # chance a dry month is exactly 0
    dry_threshold_mm: float = 20.0  # profile mean below this counts as dry
    lat_bounds: tuple = RAJASTHAN_BOUNDS[0]
    lon_bounds: tuple = RAJASTHAN_BOUNDS[1]


def generate_synthetic(cfg: SynthConfig = SynthConfig(), seed: int = 42):
    """Deterministic synthetic monthly series with a monsoon-peaked profile."""
    if cfg.n_stations <= 0 or cfg.n_years <= 0:
        raise ContractError("generate_synthetic: station count and year span must be positive")
    if len(cfg.profile_mm) != 12:
        raise ContractError("generate_synthetic: profile needs 12 monthly means")

    rng = np.random.default_rng(seed)
    series_list = []
    for i in range(cfg.n_stations):
        lat = rng.uniform(*cfg.lat_bounds)
        lon = rng.uniform(*cfg.lon_bounds)
        values = np.empty(cfg.n_years * 12)
        idx = 0
        for _year in range(cfg.n_years):
            for month in range(12):
                base = cfg.profile_mm[month]
                noise = rng.standard_normal()
                dry_draw = rng.random()
                if base < cfg.dry_threshold_mm and dry_draw < cfg.dry_zero_prob:
                    values[idx] = 0.0
                else:
                    values[idx] = base * max(0.0, 1.0 + cfg.noise_scale * noise)
                idx += 1
        series_list.append(MonthlySeries(
            f"synth_{i:03d}", lat, lon, cfg.start_year, 1,
            values, ["observed"] * values.size,
        ))
    return series_list


# ---------------------------------------------------------------------------
# monthly cache file
# ---------------------------------------------------------------------------

def monthly_cache_to_csv(series_list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CACHE_HEADER)
    for series in series_list:
        for i in range(len(series)):
            year, month = series.month_at(i)
            writer.writerow([
                series.station_id,
                repr(series.latitude),
                repr(series.longitude),
                year,
                month,
                repr(float(series.values[i])),
                series.flags[i],
            ])
    return buf.getvalue()


def save_monthly_cache(series_list, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(monthly_cache_to_csv(series_list))


def load_monthly_cache(path):
    """Inverse of save_monthly_cache; round-trips values bit-exactly."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CACHE_HEADER:
            raise IngestionFailedError(f"{path}: not a monthly cache (header {header})")
        rows = {}
        order = []
        for row in reader:
            station, lat_s, lon_s, year_s, month_s, value_s, flag = row
            if station not in rows:
                rows[station] = []
                order.append(station)
            rows[station].append((int(year_s), int(month_s), float(lat_s),
                                  float(lon_s), float(value_s), flag))

    series_list = []
    for station in order:
        entries = rows[station]
        entries.sort(key=lambda e: (e[0], e[1]))
        start_year, start_month = entries[0][0], entries[0][1]
        for i, (year, month, _la, _lo, _v, _f) in enumerate(entries):
            total = start_year * 12 + start_month - 1 + i
            if (year, month) != (total // 12, total % 12 + 1):
                raise ContractError(
                    f"{path}: station {station} has a gap near {year}-{month:02d}"
                )
        values = np.array([e[4] for e in entries])
        flags = [e[5] for e in entries]
        series_list.append(MonthlySeries(station, entries[0][2], entries[0][3],
                                         start_year, start_month, values, flags))
    return series_list
