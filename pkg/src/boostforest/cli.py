"""Command-line entry point: ``boostforest {train,predict,cv,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model file
integrity error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .boosttree import ParameterPool
from .data import (
    CsvSchema,
    DataError,
    apply_preprocess,
    csv_layout,
    fit_preprocess,
    load_csv,
    load_features,
    transform_features,
)
from .evaluation import (
    KNOBS,
    ForestConfig,
    curve_csv,
    metric_name,
    run_benchmark,
    score,
    sweep_curve,
)
from .forest import BASE_KINDS, ModelFileError, load_model, node_kind_of, save_model, train_forest

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4
TASK_NAMES = {"reg": "regression", "binary": "binary", "multiclass": "multiclass"}


class ConfigError(Exception):
    pass


def _csv_list(cast, flag):
    def parse(text):
        try:
            values = tuple(cast(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected comma-separated values") from None
        if not values:
            raise argparse.ArgumentTypeError(f"{flag}: no values given")
        return values
    return parse


def _add_data_flags(p, need_task=True):
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--label-col", default="-1", help="label column name or index (default last)")
    p.add_argument("--categorical-cols", default="",
                   help="comma-separated categorical column names or indices")
    p.add_argument("--task", choices=sorted(TASK_NAMES), required=need_task)


def _add_model_flags(p):
    p.add_argument("--base", choices=BASE_KINDS, default="boosttree-ridge")
    p.add_argument("--n-estimators", type=int, default=100)
    p.add_argument("--pool-min-samples-leaf", type=_csv_list(int, "--pool-min-samples-leaf"))
    p.add_argument("--pool-lambda", type=_csv_list(float, "--pool-lambda"))
    p.add_argument("--pool-elm-hidden", type=_csv_list(int, "--pool-elm-hidden"))
    p.add_argument("--pool-svr-c", type=_csv_list(float, "--pool-svr-c"))
    p.add_argument("--pool-svr-eps", type=_csv_list(float, "--pool-svr-eps"))
    p.add_argument("--pool-max-leaves", type=_csv_list(int, "--pool-max-leaves"))
    p.add_argument("--max-leaves", type=int, help="fixed leaf cap for every tree")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-weight-filter", action="store_true",
                   help="keep the lowest-weight 5%% of samples in classification nodes")
    p.add_argument("--vote", choices=("prob", "hard"), default="prob")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boostforest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a forest and write a model file")
    _add_data_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", "--model", dest="out", required=True, help="model file to write")

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions CSV")

    for name, helptext in (("cv", "repeated k-fold cross-validation"),
                           ("sweep", "learning curve over one knob")):
        p = sub.add_parser(name, help=helptext)
        _add_data_flags(p)
        _add_model_flags(p)
        p.add_argument("--repeats", type=int, default=5)
        p.add_argument("--folds", type=int, default=2)
        p.add_argument("--out", required=True, help="CSV report path")
        if name == "sweep":
            p.add_argument("--knob", choices=KNOBS, required=True)
            p.add_argument("--values", type=_csv_list(int, "--values"), required=True)
    return parser


def _schema(args) -> CsvSchema:
    cats = tuple(c.strip() for c in args.categorical_cols.split(",") if c.strip())
    return CsvSchema(task=TASK_NAMES[args.task], label_col=args.label_col, categorical_cols=cats)


def _pool(args) -> ParameterPool:
    kind = node_kind_of(args.base) or "ridge"
    pool = ParameterPool.defaults(kind)
    overrides = {
        "min_samples_leaf": args.pool_min_samples_leaf,
        "lam": args.pool_lambda,
        "elm_hidden": args.pool_elm_hidden,
        "svr_C": args.pool_svr_c,
        "svr_epsilon": args.pool_svr_eps,
        "max_num_leaf": args.pool_max_leaves,
    }
    try:
        pool = replace(pool, **{k: v for k, v in overrides.items() if v is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return pool


def _validate(args):
    if args.n_estimators < 1:
        raise ConfigError("--n-estimators must be at least 1")
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    if args.max_leaves is not None and args.max_leaves < 1:
        raise ConfigError("--max-leaves must be at least 1")
    if args.base in ("boosttree-elm", "boosttree-svr") and args.task != "reg":
        raise ConfigError(f"--base {args.base} supports --task reg only")
    if getattr(args, "repeats", 1) < 1:
        raise ConfigError("--repeats must be at least 1")
    if getattr(args, "folds", 2) < 2:
        raise ConfigError("--folds must be at least 2")


def _config(args) -> ForestConfig:
    return ForestConfig(
        name=args.base, base_kind=args.base, n_estimators=args.n_estimators,
        pool=_pool(args), max_num_leaf=args.max_leaves, vote=args.vote,
        filter_low_weight=not args.no_weight_filter, n_jobs=args.threads,
    )


def _emit(record: dict):
    print(json.dumps(record, sort_keys=True))


def cmd_train(args) -> int:
    cfg = _config(args)
    schema = _schema(args)
    raw = load_csv(args.data, schema)
    state = fit_preprocess(raw)
    ds = apply_preprocess(state, raw)
    forest = train_forest(
        ds, cfg.n_estimators, cfg.pool, cfg.base_kind, cfg.max_num_leaf, args.seed,
        n_jobs=cfg.n_jobs, vote=cfg.vote, filter_low_weight=cfg.filter_low_weight,
        preprocess=state,
    )
    forest.metadata["layout"] = csv_layout(args.data, schema)
    save_model(forest, args.out)
    leaves = [m.num_leaf for m in forest.learners]
    _emit({
        "command": "train",
        "n_trees": forest.n_estimators,
        "mean_leaves": float(np.mean(leaves)),
        "metric": metric_name(ds.task),
        "train_metric": score(ds.task, forest.predict(ds.features), ds.labels),
        "seed": args.seed,
        "model": str(args.out),
    })
    return EXIT_OK


def cmd_predict(args) -> int:
    forest = load_model(args.model)
    state = forest.preprocess
    layout = forest.metadata.get("layout")
    if state is None or layout is None:
        raise ModelFileError("model file lacks preprocessing or column layout")
    num, cat = load_features(args.data, layout["columns"], layout["label"],
                             layout["categorical"])
    X = transform_features(state, num, cat)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if forest.task == "regression":
            w.writerow(("index", "prediction"))
            for i, v in enumerate(forest.predict_values(X, raw_units=True)):
                w.writerow((i, repr(float(v))))
        else:
            P = forest.predict_proba(X)
            w.writerow(("index", "class") + tuple(f"p_{j}" for j in range(P.shape[1])))
            names = state.classes or tuple(str(j) for j in range(P.shape[1]))
            for i, row in enumerate(P):
                w.writerow((i, names[int(np.argmax(row))]) + tuple(repr(float(p)) for p in row))
    _emit({"command": "predict", "n_rows": int(X.shape[0]), "out": str(args.out)})
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _config(args)
    raw = load_csv(args.data, _schema(args))
    name = Path(args.data).stem
    table = run_benchmark({name: raw}, [cfg], args.repeats, args.folds, args.seed)
    out = Path(args.out)
    out.write_text(table.fold_csv(), encoding="utf-8")
    agg_path = out.with_name(out.stem + "_aggregate.csv")
    agg = table.aggregate_csv()
    agg_path.write_text(agg, encoding="utf-8")
    sys.stdout.write(agg)
    _emit({"command": "cv", "folds_csv": str(out), "aggregate_csv": str(agg_path),
           "seed": args.seed})
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    raw = load_csv(args.data, _schema(args))
    try:
        rows = sweep_curve(raw, cfg, args.knob, args.values, args.repeats, args.folds, args.seed)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise ConfigError(str(exc)) from None
    text = curve_csv(rows)
    Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    _emit({"command": "sweep", "knob": args.knob, "out": str(args.out), "seed": args.seed})
    return EXIT_OK


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "cv": cmd_cv, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        if args.command != "predict":
            _validate(args)
            _pool(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"boostforest: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"boostforest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelFileError as exc:
        print(f"boostforest: model file error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        print(f"boostforest: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"boostforest: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
