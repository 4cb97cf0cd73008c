"""From raw daily gauge readings to training-ready windows.

Writes a small daily CSV (including a negative reading and a fully missing
month), ingests and cleans it, aggregates to monthly totals, fits the
min-max normalizer on the training years only, and builds 24-month sliding
windows to show the sample layout. The real pipeline is identical, only with
108-month windows.
"""

import calendar
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from dwmrpm import (
    build_windows,
    clean_and_aggregate,
    denormalize,
    fit_normalizer,
    ingest_daily,
    split_by_years,
)

rng = np.random.default_rng(7)

# --- fabricate a 12-year daily record for one station -----------------------
lines = ["station_id,latitude,longitude,date,rainfall_mm"]
for year in range(1980, 1992):
    for month in range(1, 13):
        days = calendar.monthrange(year, month)[1]
        monsoon = month in (6, 7, 8, 9)
        for day in range(1, days + 1):
            if year == 1985 and month == 2:
                value = "NA"                      # a whole month missing
            elif (year, month, day) == (1983, 6, 10):
                value = "-3.0"                    # a negative sensor glitch
            else:
                depth = rng.exponential(5.0) if monsoon else 0.0
                value = f"{depth:.2f}"
            lines.append(f"jaipur_7,26.9,75.8,{year}-{month:02d}-{day:02d},{value}")

with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as fh:
    fh.write("\n".join(lines) + "\n")
    daily_csv = fh.name

records, issues = ingest_daily(daily_csv)
print(f"ingested {len(records)} daily records, {len(issues)} reported issue(s):")
for issue in issues:
    print("   line", issue["line"], "->", issue["reason"])

series_list, report = clean_and_aggregate(records)
series = series_list[0]
print(f"monthly series: {len(series)} months from "
      f"{series.start_year}-{series.start_month:02d}")
print("imputed months:", report.imputations[series.station_id],
      "(Feb 1985 filled with the station's February climatology)")

# --- normalize on the training years only, then window ----------------------
params = fit_normalizer([series], max_year=1987)
print(f"normalizer fitted on <=1987: range [{params.i_min:.2f}, "
      f"{params.i_max:.2f}] mm -> [0, 100]")

samples = build_windows(series, params, window_months=24)
print(f"{len(samples)} monsoon-target samples with 24-month windows")
sample = samples[0]
print("first sample:", sample.station_id, f"target {sample.year}-{sample.month:02d}")
print("  inputs = 24 normalized months + (lat, lon):",
      np.round(sample.inputs[:4], 2), "...", sample.inputs[-2:], sep=" ")
print("  target (normalized):", round(sample.target, 2),
      "=", round(float(denormalize(sample.target, params)), 2), "mm")

split = split_by_years(samples, (1980, 1987), (1988, 1989), (1990, 1991))
print(f"split by target year: train {len(split.train)}, "
      f"validation {len(split.validation)}, test {len(split.test)}")
