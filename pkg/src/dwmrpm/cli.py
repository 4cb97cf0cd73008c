"""Command-line entry point.

Subcommands: ingest, summarize, synth, train, predict, evaluate, compare.
Every command writes its effective configuration (run_config.json) next to
its outputs; re-running a command from that file reproduces the outputs
byte for byte. Exit codes: 0 success, 1 contract/data errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import data_pipeline as dp
from . import evaluation as ev
from . import models as md
from . import optim
from .errors import ContractError, DwmrpmError

WRD_TRAIN_YEARS = (1957, 1986)
WRD_VAL_YEARS = (1987, 1997)
WRD_TEST_YEARS = (1998, 2017)

COMPARE_KIND_ORDER = ("mlp", "cnn", "dwmrpm")


def year_range(text):
    """Parse 'A:B' into an inclusive (A, B) year range."""
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B year range, got {text!r}")
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return lo, hi


def bounds_range(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI bounds, got {text!r}")


def _write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_json(path: Path, doc):
    _write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _effective_config(args) -> dict:
    skip = {"func", "config"}
    doc = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        if isinstance(value, tuple):
            value = list(value)
        doc[key] = value
    return doc


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, out: Path):
    _write_json(out / "run_config.json", _effective_config(args))


# ---------------------------------------------------------------------------
# dataset plumbing shared by train / evaluate / compare
# ---------------------------------------------------------------------------

def _splits_from_cache(cache_path, window_months, train_years, val_years, test_years):
    series = dp.load_monthly_cache(cache_path)
    norm = dp.fit_normalizer(series, max_year=train_years[1])
    samples = []
    for s in series:
        samples.extend(dp.build_windows(s, norm, window_months))
    split = dp.split_by_years(samples, train_years, val_years, test_years)
    return series, norm, split


def _model_spec_from_args(args, kind):
    return md.ModelSpec(
        kind=kind,
        input_len=args.window_months + 2,
        seed=args.seed,
        coords_wiring=args.coords_wiring,
        head_bias=not args.strict_paper_head,
    )


def _train_config_from_args(args):
    return optim.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        select=args.select,
    )


def _check_fingerprint(model: md.TrainedModel, cache_path):
    expected = model.metadata.get("data_fingerprint", "")
    actual = md.dataset_fingerprint(cache_path)
    if expected and expected != actual:
        raise ContractError(
            f"dataset {cache_path} does not match the normalization fingerprint "
            f"stored in the model ({actual[:12]}... vs {expected[:12]}...); "
            "predictions would mix incompatible scales"
        )


def _prediction_records(model: md.TrainedModel, samples):
    normalized, mm = md.predict_many(model, samples)
    records = []
    for sample, pred_n, pred_mm in zip(samples, normalized, mm):
        records.append(ev.PredictionRecord(
            station_id=sample.station_id,
            latitude=float(sample.inputs[-2]),
            longitude=float(sample.inputs[-1]),
            year=sample.year,
            month=sample.month,
            actual_norm=float(sample.target),
            predicted_norm=float(pred_n),
            actual_mm=float(dp.denormalize(sample.target, model.norm_params)),
            predicted_mm=float(pred_mm),
            model_kind=model.spec.kind,
        ))
    return records


def _samples_in_years(model: md.TrainedModel, cache_path, years):
    series = dp.load_monthly_cache(cache_path)
    window_months = model.spec.input_len - 2
    samples = []
    for s in series:
        for sample in dp.build_windows(s, model.norm_params, window_months):
            if years[0] <= sample.year <= years[1]:
                samples.append(sample)
    return samples


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def cmd_ingest(args):
    out = _out_dir(args)
    records, issues = dp.ingest_daily(
        args.input, args.format,
        bounds=(tuple(args.lat_bounds), tuple(args.lon_bounds)),
    )
    policy = dp.CleanPolicy(
        max_missing_days=args.max_missing_days,
        max_imputed_fraction=args.max_imputed_fraction,
        min_years=args.min_years,
    )
    series, report = dp.clean_and_aggregate(records, policy, malformed=issues)
    dp.save_monthly_cache(series, out / "monthly_cache.csv")
    _write_json(out / "cleaning_report.json", report.to_json_dict())
    _finish(args, out)
    print(f"ingest: {len(series)} station series -> {out / 'monthly_cache.csv'}")
    return 0


def cmd_summarize(args):
    out = _out_dir(args)
    series_list = dp.load_monthly_cache(args.cache)
    if args.station is not None:
        series_list = [s for s in series_list if s.station_id == args.station]
        if not series_list:
            raise ContractError(f"station {args.station!r} not in {args.cache}")
    summaries = [(s.station_id, ev.statistical_summary(s)) for s in series_list]
    _write_text(out / "summary.csv", ev.summary_to_csv(summaries))
    _finish(args, out)
    print(f"summarize: {len(summaries)} station(s) -> {out / 'summary.csv'}")
    return 0


def cmd_synth(args):
    out = _out_dir(args)
    cfg = dp.SynthConfig(
        n_stations=args.stations,
        start_year=args.start_year,
        n_years=args.years,
        noise_scale=args.noise_scale,
        dry_zero_prob=args.dry_zero_prob,
    )
    series = dp.generate_synthetic(cfg, seed=args.seed)
    dp.save_monthly_cache(series, out / "monthly_cache.csv")
    _finish(args, out)
    print(f"synth: {len(series)} stations x {args.years} years -> "
          f"{out / 'monthly_cache.csv'}")
    return 0


def cmd_train(args):
    out = _out_dir(args)
    train_years = tuple(args.train_years)
    val_years = tuple(args.val_years)
    test_years = tuple(args.test_years)
    _series, norm, split = _splits_from_cache(
        args.cache, args.window_months, train_years, val_years, test_years)
    spec = _model_spec_from_args(args, args.model)
    cfg = _train_config_from_args(args)
    fingerprint = md.dataset_fingerprint(args.cache)
    model, history = optim.train(spec, split.train, split.validation, cfg,
                                 norm_params=norm, data_fingerprint=fingerprint)
    md.save_model(model, out / "model.json")
    _write_text(out / "history.json", history.to_json())
    _finish(args, out)
    print(f"train: {args.model} on {len(split.train)} samples "
          f"(val {len(split.validation)}) -> {out / 'model.json'}")
    return 0


def cmd_predict(args):
    out = _out_dir(args)
    model = md.load_model(args.model_file)
    _check_fingerprint(model, args.cache)
    samples = _samples_in_years(model, args.cache, tuple(args.years))
    records = _prediction_records(model, samples)
    _write_text(out / "predictions.csv", ev.predictions_to_csv(records))
    _finish(args, out)
    print(f"predict: {len(records)} predictions -> {out / 'predictions.csv'}")
    return 0


def cmd_evaluate(args):
    out = _out_dir(args)
    model = md.load_model(args.model_file)
    _check_fingerprint(model, args.cache)
    samples = _samples_in_years(model, args.cache, tuple(args.years))
    records = _prediction_records(model, samples)
    table = ev.per_month_metrics(records, unit=args.unit)
    _write_text(out / "metrics.csv", ev.metrics_to_csv(table))
    _write_json(out / "metrics.json", ev.metrics_to_json_dict(table))
    _finish(args, out)
    print(f"evaluate: {len(records)} predictions -> {out / 'metrics.csv'}")
    return 0


def cmd_compare(args):
    out = _out_dir(args)
    if args.cache is None:
        cfg = dp.SynthConfig()
        series = dp.generate_synthetic(cfg, seed=args.synth_seed)
        cache_path = out / "monthly_cache.csv"
        dp.save_monthly_cache(series, cache_path)
    else:
        cache_path = Path(args.cache)

    train_years = tuple(args.train_years)
    val_years = tuple(args.val_years)
    test_years = tuple(args.test_years)
    _series, norm, split = _splits_from_cache(
        cache_path, args.window_months, train_years, val_years, test_years)
    if not split.train or not split.test:
        raise ContractError(
            f"compare: empty split (train {len(split.train)}, val "
            f"{len(split.validation)}, test {len(split.test)}); check year ranges"
        )
    cfg_train = _train_config_from_args(args)
    fingerprint = md.dataset_fingerprint(cache_path)

    all_records = []
    for kind in COMPARE_KIND_ORDER:
        spec = _model_spec_from_args(args, kind)
        model, history = optim.train(spec, split.train, split.validation,
                                     cfg_train, norm_params=norm,
                                     data_fingerprint=fingerprint)
        md.save_model(model, out / f"model_{kind}.json")
        _write_text(out / f"history_{kind}.json", history.to_json())
        all_records.extend(_prediction_records(model, split.test))
        print(f"compare: trained {kind} "
              f"(best val MSE {min(history.val_mse):.4f})")

    tables = {
        "normalized": ev.per_month_metrics(all_records, unit="normalized"),
        "mm": ev.per_month_metrics(all_records, unit="mm"),
    }
    _write_text(out / "compare_metrics.csv",
                ev.comparison_to_csv(tables[args.unit], COMPARE_KIND_ORDER))
    _write_json(out / "compare_metrics.json",
                {unit: ev.metrics_to_json_dict(t) for unit, t in tables.items()})
    _write_text(out / "predictions.csv", ev.predictions_to_csv(all_records))
    _finish(args, out)
    print(f"compare: report ({args.unit}) -> {out / 'compare_metrics.csv'}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_out_dir(parser):
    parser.add_argument("--out-dir", required=True, help="directory for artifacts")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults (a run_config.json)")


def _add_split_flags(parser):
    parser.add_argument("--train-years", type=year_range, default=WRD_TRAIN_YEARS,
                        help="inclusive A:B target years for training")
    parser.add_argument("--val-years", type=year_range, default=WRD_VAL_YEARS)
    parser.add_argument("--test-years", type=year_range, default=WRD_TEST_YEARS)


def _add_model_flags(parser):
    parser.add_argument("--window-months", type=int, default=108,
                        help="months of history per sample")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for init, shuffling and dropout")
    parser.add_argument("--coords-wiring", choices=md.COORDS_WIRINGS, default="both",
                        help="feed latitude/longitude to both paths or deep only")
    parser.add_argument("--strict-paper-head", action="store_true",
                        help="drop the scalar bias from the joint output head")
    parser.add_argument("--select", choices=("best", "final"), default="best",
                        help="return best-validation or final-epoch weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dwmrpm",
        description="Monsoon rainfall prediction pipeline: data preparation, "
                    "wide-and-deep model training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="daily CSV -> monthly cache + cleaning report")
    p.add_argument("--input", required=True, help="daily rainfall CSV")
    p.add_argument("--format", choices=("wrd_station", "imd_grid"),
                   default="wrd_station")
    p.add_argument("--max-missing-days", type=int, default=5)
    p.add_argument("--max-imputed-fraction", type=float, default=0.10)
    p.add_argument("--min-years", type=int, default=10)
    p.add_argument("--lat-bounds", type=bounds_range,
                   default=dp.RAJASTHAN_BOUNDS[0])
    p.add_argument("--lon-bounds", type=bounds_range,
                   default=dp.RAJASTHAN_BOUNDS[1])
    _add_out_dir(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("summarize", help="monthly cache -> per-month statistics CSV")
    p.add_argument("--cache", required=True, help="monthly cache CSV")
    p.add_argument("--station", default=None, help="restrict to one station id")
    _add_out_dir(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("synth", help="generate a synthetic monthly cache")
    p.add_argument("--stations", type=int, default=30)
    p.add_argument("--years", type=int, default=40)
    p.add_argument("--start-year", type=int, default=1957)
    p.add_argument("--noise-scale", type=float, default=0.35)
    p.add_argument("--dry-zero-prob", type=float, default=0.35)
    p.add_argument("--seed", type=int, default=42)
    _add_out_dir(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on a monthly cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--model", choices=md.MODEL_KINDS, default="dwmrpm")
    _add_split_flags(p)
    _add_model_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit a prediction-record CSV")
    p.add_argument("--cache", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--years", type=year_range, default=WRD_TEST_YEARS,
                   help="inclusive A:B target years to predict")
    _add_out_dir(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics CSV/JSON for one trained model")
    p.add_argument("--cache", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--years", type=year_range, default=WRD_TEST_YEARS)
    p.add_argument("--unit", choices=("normalized", "mm"), default="normalized")
    _add_out_dir(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare",
                       help="train dwmrpm, mlp and cnn on identical splits "
                            "and emit a joined report")
    p.add_argument("--cache", default=None,
                   help="monthly cache; omitted -> default synthetic dataset")
    p.add_argument("--synth-seed", type=int, default=42)
    p.add_argument("--unit", choices=("normalized", "mm"), default="normalized")
    _add_split_flags(p)
    _add_model_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)

    # --config supplies defaults; explicit flags still win
    if "--config" in argv:
        try:
            config_path = argv[argv.index("--config") + 1]
            with open(config_path, "r", encoding="utf-8") as fh:
                defaults = json.load(fh)
        except (IndexError, OSError, json.JSONDecodeError) as exc:
            print(f"dwmrpm: error: cannot read --config: {exc}", file=sys.stderr)
            return 1
        command = defaults.pop("command", None)
        for sub_action in parser._subparsers._group_actions:
            for name, sub_parser in sub_action.choices.items():
                if command is None or name == command:
                    sub_parser.set_defaults(
                        **{k: v for k, v in defaults.items() if k != "func"})
                    for action in sub_parser._actions:
                        # a value from the config satisfies a required flag
                        if action.required and action.dest in defaults:
                            action.required = False

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return args.func(args)
    except (DwmrpmError, OSError) as exc:
        print(f"dwmrpm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
