"""Train the wide-and-deep model on synthetic rainfall and predict.

Generates a deterministic synthetic dataset, builds the standard 108-month
windows, trains a short run of the joint model, and compares a few test
predictions against their actual values in both normalized units and mm.
A real run would use the default 200 epochs; 25 keeps this demo quick.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from dwmrpm import (
    ModelSpec,
    SynthConfig,
    TrainConfig,
    build_windows,
    denormalize,
    fit_normalizer,
    generate_synthetic,
    predict,
    split_by_years,
    train,
)

series_list = generate_synthetic(SynthConfig(n_stations=6, n_years=16), seed=5)
train_years, val_years, test_years = (1957, 1968), (1969, 1970), (1971, 1972)

params = fit_normalizer(series_list, max_year=train_years[1])
samples = []
for series in series_list:
    samples.extend(build_windows(series, params))
split = split_by_years(samples, train_years, val_years, test_years)
print(f"samples: train {len(split.train)}, val {len(split.validation)}, "
      f"test {len(split.test)}")

spec = ModelSpec(kind="dwmrpm", seed=11)
cfg = TrainConfig(epochs=25, batch_size=8, lr=0.001, seed=11)
model, history = train(spec, split.train, split.validation, cfg,
                       norm_params=params)

print(f"trained {cfg.epochs} epochs; best validation epoch "
      f"{history.best_epoch} (val MSE {min(history.val_mse):.1f})")
print("epoch  train_mse  val_mse")
for epoch in (0, 4, 9, 14, 19, 24):
    print(f"{epoch:5d}  {history.train_mse[epoch]:9.1f}  "
          f"{history.val_mse[epoch]:7.1f}")

print("\nsample predictions on held-out monsoon months:")
month_names = {6: "Jun", 7: "Jul", 8: "Aug", 9: "Sep"}
for sample in split.test[:8]:
    predicted_norm, predicted_mm = predict(model, sample)
    actual_mm = float(denormalize(sample.target, params))
    print(f"  {sample.station_id} {month_names[sample.month]} {sample.year}: "
          f"actual {actual_mm:6.1f} mm, predicted {predicted_mm:6.1f} mm")

errors = []
for sample in split.test:
    _, predicted_mm = predict(model, sample)
    errors.append(predicted_mm - float(denormalize(sample.target, params)))
errors = np.array(errors)
print(f"\ntest RMSE {np.sqrt(np.mean(errors ** 2)):.1f} mm over "
      f"{errors.size} predictions")
