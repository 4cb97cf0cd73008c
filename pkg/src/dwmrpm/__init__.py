"""Deep & wide monsoon rainfall prediction.

A numpy-only library covering the full pipeline: daily rainfall ingestion
and cleaning, monthly aggregation, min-max normalization, sliding-window
sample construction, three from-scratch neural architectures (the joint
wide-conv + deep-MLP regressor and its MLP / 1D-CNN baselines) trained with
reverse-mode gradients and Adam, and RMSE/MAE evaluation per monsoon month.
"""

from .data_pipeline import (
    CleanPolicy,
    DatasetSplit,
    MonthlySeries,
    NormalizationParams,
    RainfallRecord,
    SynthConfig,
    WindowSample,
    build_windows,
    clean_and_aggregate,
    denormalize,
    fit_normalizer,
    generate_synthetic,
    ingest_daily,
    load_monthly_cache,
    normalize,
    save_monthly_cache,
    split_by_years,
)
from .evaluation import (
    MetricsTable,
    PredictionRecord,
    mae,
    per_month_metrics,
    rmse,
    statistical_summary,
)
from .models import (
    ModelSpec,
    TrainedModel,
    build_model,
    load_model,
    parameter_count,
    predict,
    predict_many,
    save_model,
)
from .nn_core import (
    Activation,
    Conv1DLayer,
    DenseLayer,
    DropoutLayer,
    DropoutMode,
    GradientTape,
    Parameter,
    backward,
    concat_forward,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    global_avg_pool,
    he_init,
)
from .optim import AdamState, TrainConfig, TrainHistory, adam_step, mse_loss, train

__version__ = "0.1.0"
