"""RMSE/MAE per monsoon month, monthly statistical summaries, and the
CSV/JSON report formats.

Metric tables default to the normalized 0-100 scale; mm tables carry the
same information rescaled by (i_max - i_min)/100, so both are emitted and
tagged rather than guessed at read time. The Overall row always pools the
individual prediction records; it is never the mean of the monthly metrics.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data_pipeline import MONSOON_MONTHS, MonthlySeries
from .errors import ContractError

MONTH_LABELS = {6: "June", 7: "July", 8: "August", 9: "September"}
CALENDAR_LABELS = ["Jan", "Feb", "Mar", "Apr", "May", "Jun",
                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
SEASON_LABEL = "Season (Jun-Sep)"
OVERALL_LABEL = "Overall"


@dataclass
class PredictionRecord:
    station_id: str
    latitude: float
    longitude: float
    year: int
    month: int
    actual_norm: float
    predicted_norm: float
    actual_mm: float | None
    predicted_mm: float | None
    model_kind: str

    def __post_init__(self):
        if self.month not in MONSOON_MONTHS:
            raise ContractError(
                f"prediction target {self.year}-{self.month:02d} is not a monsoon month"
            )


def rmse(actual, predicted) -> float:
    actual, predicted = _paired(actual, predicted)
    return float(np.sqrt(np.mean((actual - predicted) ** 2)))


def mae(actual, predicted) -> float:
    actual, predicted = _paired(actual, predicted)
    return float(np.mean(np.abs(actual - predicted)))


def _paired(actual, predicted):
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ContractError(
            f"metric inputs differ in shape: {actual.shape} vs {predicted.shape}"
        )
    if actual.size == 0:
        raise ContractError("metric inputs are empty")
    return actual, predicted


@dataclass
class MetricsRow:
    month_label: str   # "June".."September" or "Overall"
    model_kind: str
    rmse: float
    mae: float
    count: int


@dataclass
class MetricsTable:
    unit: str                       # "normalized" | "mm"
    rows: list = field(default_factory=list)
    missing_groups: list = field(default_factory=list)  # [(month_label, model)]

    def row(self, month_label: str, model_kind: str) -> MetricsRow | None:
        for r in self.rows:
            if r.month_label == month_label and r.model_kind == model_kind:
                return r
        return None

    def model_kinds(self):
        seen = []
        for r in self.rows:
            if r.model_kind not in seen:
                seen.append(r.model_kind)
        return seen


def per_month_metrics(records, unit: str = "normalized") -> MetricsTable:
    """Group records by (month, model); emit per-month rows plus pooled Overall.

    Absent (month, model) groups are omitted and listed in the table's
    ``missing_groups``. Records missing values for the requested unit make
    the input mixed-unit, which is a contract error.
    """
    if unit not in ("normalized", "mm"):
        raise ContractError(f"unknown metric unit {unit!r}")
    records = list(records)
    if not records:
        raise ContractError("per_month_metrics: no records")

    def values(rec):
        if unit == "normalized":
            return rec.actual_norm, rec.predicted_norm
        if rec.actual_mm is None or rec.predicted_mm is None:
            raise ContractError(
                f"record for {rec.station_id} {rec.year}-{rec.month:02d} has no mm "
                "values; inputs are mixed-unit"
            )
        return rec.actual_mm, rec.predicted_mm

    kinds = []
    for rec in records:
        if rec.model_kind not in kinds:
            kinds.append(rec.model_kind)

    table = MetricsTable(unit=unit)
    for kind in kinds:
        pooled_a, pooled_p = [], []
        for month in MONSOON_MONTHS:
            group = [values(r) for r in records
                     if r.month == month and r.model_kind == kind]
            if not group:
                table.missing_groups.append((MONTH_LABELS[month], kind))
                continue
            actual = [a for a, _ in group]
            predicted = [p for _, p in group]
            pooled_a.extend(actual)
            pooled_p.extend(predicted)
            table.rows.append(MetricsRow(MONTH_LABELS[month], kind,
                                         rmse(actual, predicted),
                                         mae(actual, predicted), len(group)))
        table.rows.append(MetricsRow(OVERALL_LABEL, kind,
                                     rmse(pooled_a, pooled_p),
                                     mae(pooled_a, pooled_p), len(pooled_a)))

    for r in table.rows:
        # power-mean inequality; a violation means the computation is wrong
        assert r.rmse >= r.mae - 1e-12, f"RMSE < MAE in row {r}"
    return table


def metrics_to_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["month", "model", "rmse", "mae", "count", "unit"])
    for r in table.rows:
        writer.writerow([r.month_label, r.model_kind, repr(r.rmse), repr(r.mae),
                         r.count, table.unit])
    return buf.getvalue()


def metrics_to_json_dict(table: MetricsTable) -> dict:
    return {
        "unit": table.unit,
        "rows": [
            {"month": r.month_label, "model": r.model_kind,
             "rmse": r.rmse, "mae": r.mae, "count": r.count}
            for r in table.rows
        ],
        "missing_groups": [list(g) for g in table.missing_groups],
    }


def comparison_to_csv(table: MetricsTable, kind_order=("mlp", "cnn", "dwmrpm")) -> str:
    """Side-by-side layout: one row per month, RMSE/MAE columns per model."""
    kinds = [k for k in kind_order if k in table.model_kinds()]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["month"]
    for kind in kinds:
        header += [f"{kind}_rmse", f"{kind}_mae"]
    writer.writerow(header)
    labels = [MONTH_LABELS[m] for m in MONSOON_MONTHS] + [OVERALL_LABEL]
    for label in labels:
        row = [label]
        complete = True
        for kind in kinds:
            r = table.row(label, kind)
            if r is None:
                complete = False
                break
            row += [repr(r.rmse), repr(r.mae)]
        if complete:
            writer.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# statistical summary (per-calendar-month mean/max/min)
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    label: str
    mean_mm: float
    max_mm: float
    min_mm: float


def statistical_summary(series: MonthlySeries):
    """Per-calendar-month mean/max/min plus a monsoon-season total row.

    The season row aggregates the Jun+Jul+Aug+Sep total of each year that has
    all four monsoon months; an incomplete final year therefore drops out of
    the season row while still contributing its months to the monthly rows.
    """
    if len(series) < 12:
        raise ContractError("statistical_summary: series must span at least one year")

    by_month = {m: [] for m in range(1, 13)}
    by_year_season = {}
    for i in range(len(series)):
        year, month = series.month_at(i)
        value = float(series.values[i])
        by_month[month].append(value)
        if month in MONSOON_MONTHS:
            by_year_season.setdefault(year, []).append(value)

    rows = []
    for month in range(1, 13):
        values = by_month[month]
        if not values:
            continue
        rows.append(SummaryRow(CALENDAR_LABELS[month - 1],
                               sum(values) / len(values), max(values), min(values)))

    season_totals = [math.fsum(vals) for vals in by_year_season.values()
                     if len(vals) == len(MONSOON_MONTHS)]
    if season_totals:
        rows.append(SummaryRow(SEASON_LABEL,
                               sum(season_totals) / len(season_totals),
                               max(season_totals), min(season_totals)))
    return rows


def summary_to_csv(summaries) -> str:
    """``summaries`` is a list of (station_id, rows) pairs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["station_id", "month", "mean_mm", "max_mm", "min_mm"])
    for station_id, rows in summaries:
        for r in rows:
            writer.writerow([station_id, r.label, repr(r.mean_mm),
                             repr(r.max_mm), repr(r.min_mm)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# prediction record CSV (plot-ready)
# ---------------------------------------------------------------------------

def predictions_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["station_id", "latitude", "longitude", "year", "month",
                     "actual_norm", "predicted_norm", "actual_mm",
                     "predicted_mm", "model"])
    for r in records:
        writer.writerow([
            r.station_id, repr(r.latitude), repr(r.longitude), r.year, r.month,
            repr(r.actual_norm), repr(r.predicted_norm),
            "" if r.actual_mm is None else repr(r.actual_mm),
            "" if r.predicted_mm is None else repr(r.predicted_mm),
            r.model_kind,
        ])
    return buf.getvalue()
