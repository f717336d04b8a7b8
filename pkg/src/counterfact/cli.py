"""Command-line interface.

Subcommands::

    synth    write the four-cluster synthetic dataset
    fixture  write the statement-like panel, its mask and rating scale
    train    fit a model on a tabular file and save it
    explain  counterfactual for one row
    batch    counterfactuals for many rows, written as a result export
    report   comparison / real-change / effort / lambda tables from exports

Settings may also come from a flat ``key = value`` file given by
``--config`` or the ``COUNTERFACT_CONFIG`` environment variable; flags
override file values.  Exit codes: 0 success, 1 runtime or data error,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reports
from .errors import ConfigError, CounterfactError
from .export import read_results, record_from_result, write_results
from .fixtures import make_statement_panel
from .ingest import (
    RatingScale, build_mask, fit_scaler, load_table, read_mask_file, read_scale_file, write_name_lines,
    write_table,
)
from .model import TrainConfig, forward_probs, load_model, predict_class, save_model, train
from .solver import SolverConfig, TARGET_MODES, L1_MODES, make_problem
from .sparsity import (
    DEFAULT_LADDER, TIE_BREAKS, ZERO_HANDLING, SparsityConfig, run_gradient_descent_batch, run_sparsity_batch,
)
from .synth import SynthConfig, generate_dataset

CONFIG_ENV = "COUNTERFACT_CONFIG"


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# every key accepted in a config file, with its parser
CONFIG_KEYS = {
    # paths
    "model": str, "data": str, "mask": str, "scale": str, "out": str, "rating_column": str,
    # run
    "method": _choice(("sparsity", "gd")), "target": str, "seed": int, "workers": int,
    # solver
    "step_size": float, "max_iters": int, "grad_tol": float,
    "l1_mode": _choice(L1_MODES), "target_mode": _choice(TARGET_MODES),
    # sparsity
    "k": int, "lambda_ladder": _floats, "zero_handling": _choice(ZERO_HANDLING),
    "tie_break": _choice(TIE_BREAKS), "nonzero_tol": float,
    # training
    "hidden_layer_sizes": _ints, "learning_rate": float, "epochs": int, "batch_size": int,
    "l2_weight_decay": float, "hidden_activation": _choice(("relu", "tanh")),
}

DEFAULTS = {
    "method": "sparsity", "seed": 0, "workers": 1, "rating_column": "rating",
    "step_size": 0.01, "max_iters": 2000, "grad_tol": 1e-6, "l1_mode": "subgradient", "target_mode": "one_hot",
    "k": 10, "lambda_ladder": DEFAULT_LADDER, "zero_handling": "ceiling_one", "tie_break": "fewest_nonzeros",
    "nonzero_tol": 1e-8,
    "hidden_layer_sizes": (64, 64), "learning_rate": 0.05, "epochs": 200, "batch_size": 32,
    "l2_weight_decay": 0.0, "hidden_activation": "relu",
}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    values = {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CounterfactError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if cfg_path:
        settings.update(read_config(cfg_path))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _arg_type(key):
    parse = CONFIG_KEYS[key]

    def convert(text):
        try:
            return parse(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    convert.__name__ = key
    return convert


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value settings file (default: $COUNTERFACT_CONFIG)")
    common.add_argument("--seed", type=_arg_type("seed"))

    solve = _Parser(add_help=False)
    solve.add_argument("--model", type=_arg_type("model"))
    solve.add_argument("--data", type=_arg_type("data"))
    solve.add_argument("--mask", type=_arg_type("mask"), help="immutable feature names, one per line")
    solve.add_argument("--method", type=_arg_type("method"))
    solve.add_argument("--lambda-ladder", dest="lambda_ladder", type=_arg_type("lambda_ladder"),
                       help="comma-separated increasing weights")
    solve.add_argument("--k", type=_arg_type("k"))
    solve.add_argument("--zero-handling", dest="zero_handling", type=_arg_type("zero_handling"))
    solve.add_argument("--tie-break", dest="tie_break", type=_arg_type("tie_break"))
    solve.add_argument("--target", type=_arg_type("target"), help="target rating (symbol or ordinal)")
    solve.add_argument("--step-size", dest="step_size", type=_arg_type("step_size"))
    solve.add_argument("--max-iters", dest="max_iters", type=_arg_type("max_iters"))
    solve.add_argument("--l1-mode", dest="l1_mode", type=_arg_type("l1_mode"))
    solve.add_argument("--rating-column", dest="rating_column", type=_arg_type("rating_column"))

    parser = _Parser(prog="counterfact", description="Sparse counterfactual explanations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write the synthetic dataset")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--variance", type=float, default=0.3)
    p.add_argument("--out", type=_arg_type("out"))

    p = sub.add_parser("fixture", parents=[common], help="write the statement-like panel fixture")
    p.add_argument("--entities", type=int, default=240)
    p.add_argument("--out", type=_arg_type("out"), help="output directory")

    p = sub.add_parser("train", parents=[common], help="fit and save a model")
    p.add_argument("--data", type=_arg_type("data"))
    p.add_argument("--scale", type=_arg_type("scale"), help="rating scale file, best first")
    p.add_argument("--rating-column", dest="rating_column", type=_arg_type("rating_column"))
    p.add_argument("--hidden", dest="hidden_layer_sizes", type=_arg_type("hidden_layer_sizes"))
    p.add_argument("--epochs", type=_arg_type("epochs"))
    p.add_argument("--learning-rate", dest="learning_rate", type=_arg_type("learning_rate"))
    p.add_argument("--batch-size", dest="batch_size", type=_arg_type("batch_size"))
    p.add_argument("--out", type=_arg_type("out"), help="model file to write")

    p = sub.add_parser("explain", parents=[common, solve], help="explain one row")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--row", type=int, help="0-based data row")
    where.add_argument("--entity", help="entity_id (with --period)")
    p.add_argument("--period")

    p = sub.add_parser("batch", parents=[common, solve], help="explain many rows")
    p.add_argument("--rating-filter", dest="rating_filter",
                   help="comma-separated ratings (symbols or ordinals) to include")
    p.add_argument("--period", help="only rows from this period")
    p.add_argument("--workers", type=_arg_type("workers"))
    p.add_argument("--out", type=_arg_type("out"), help="result export to write")

    p = sub.add_parser("report", parents=[common], help="build report tables")
    p.add_argument("--results", required=True, help="sparsity result export")
    p.add_argument("--gd-results", dest="gd_results", help="gradient-descent result export")
    p.add_argument("--data", type=_arg_type("data"), help="panel data for observed changes")
    p.add_argument("--mask", type=_arg_type("mask"))
    p.add_argument("--scale", type=_arg_type("scale"))
    p.add_argument("--model", type=_arg_type("model"), help="model whose rating scale labels the tables")
    p.add_argument("--lambda-ladder", dest="lambda_ladder", type=_arg_type("lambda_ladder"))
    p.add_argument("--rating-column", dest="rating_column", type=_arg_type("rating_column"))
    p.add_argument("--out", type=_arg_type("out"), help="output directory")
    return parser


# --------------------------------------------------------------------------
# helpers


def _require(settings, key, what):
    if not settings.get(key):
        raise UsageError(f"counterfact: error: {what} is required (--{key.replace('_', '-')} or config key {key!r})")
    return settings[key]


def _solver_cfg(s) -> SolverConfig:
    return SolverConfig(step_size=s["step_size"], max_iters=s["max_iters"], grad_tol=s["grad_tol"],
                        seed=s["seed"], l1_mode=s["l1_mode"])


def _sparsity_cfg(s) -> SparsityConfig:
    return SparsityConfig(k=s["k"], lambda_ladder=s["lambda_ladder"], zero_handling=s["zero_handling"],
                          tie_break=s["tie_break"], nonzero_tol=s["nonzero_tol"])


def _parse_rating(scale: RatingScale, text: str) -> int:
    text = str(text).strip()
    if text.isdigit() and text not in scale.symbols:
        ordinal = int(text)
        scale.to_symbol(ordinal)  # range check
        return ordinal
    return scale.to_ordinal(text)


@dataclass
class _Context:
    model: object
    dataset: object
    w: np.ndarray
    scale: RatingScale


def _load_context(s) -> _Context:
    model_path = _require(s, "model", "a model file")
    if not Path(model_path).exists():
        raise CounterfactError(f"model file not found: {model_path}")
    model = load_model(model_path)
    data_path = _require(s, "data", "a data file")
    scale = model.rating_scale or RatingScale(tuple(str(i) for i in range(1, model.n_classes + 1)), None)
    ds = load_table(data_path, s["rating_column"], scale)
    if model.feature_names is not None and tuple(model.feature_names) != ds.feature_names:
        raise CounterfactError(f"{data_path}: feature columns do not match the model's feature names")
    if ds.n_features != model.n_features:
        raise CounterfactError(f"{data_path}: {ds.n_features} features, model expects {model.n_features}")
    if s.get("mask"):
        mask = build_mask(ds.feature_names, read_mask_file(s["mask"]))
        w = mask.w
    else:
        w = np.ones(ds.n_features)
    return _Context(model, ds, w, scale)


def _problem_for(ctx: _Context, i: int, s, target=None):
    x_raw = ctx.dataset.rows[i]
    model = ctx.model
    x = model.standardize(x_raw)
    scale = model.scaler.stds if model.scaler is not None else None
    return make_problem(model, x, ctx.w, target, target_mode=s["target_mode"], x_reference=x_raw,
                        unit_scale=scale)


def _runner(method):
    return run_gradient_descent_batch if method == "gd" else run_sparsity_batch


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args, s):
    out = _require(s, "out", "an output path")
    ds = generate_dataset(SynthConfig(n_points=args.n, variance=args.variance, seed=s["seed"]))
    write_table(ds, out, s["rating_column"])
    print(f"wrote {ds.n_samples} rows to {out}")


def cmd_fixture(args, s):
    out = Path(_require(s, "out", "an output directory"))
    out.mkdir(parents=True, exist_ok=True)
    panel = make_statement_panel(n_entities=args.entities, seed=s["seed"])
    write_table(panel.dataset, out / "panel.csv", s["rating_column"], panel.scale)
    write_name_lines(panel.immutable_names, out / "mask.txt", "immutable statement variables")
    write_name_lines(panel.scale.symbols, out / "scale.txt", "rating scale, best first")
    print(f"wrote panel ({panel.dataset.n_samples} rows, {panel.dataset.n_features} features, "
          f"{panel.dataset.n_features - len(panel.immutable_names)} modifiable) to {out}")


def cmd_train(args, s):
    data = _require(s, "data", "a data file")
    out = _require(s, "out", "an output model path")
    scale = read_scale_file(s["scale"]) if s.get("scale") else None
    ds = load_table(data, s["rating_column"], scale)
    n_classes = len(scale) if scale is not None else int(ds.ratings.max())
    if scale is None:
        scale = RatingScale(tuple(str(i) for i in range(1, n_classes + 1)), None)
    scaler = fit_scaler(ds.rows)
    cfg = TrainConfig(hidden_layer_sizes=s["hidden_layer_sizes"], learning_rate=s["learning_rate"],
                      epochs=s["epochs"], batch_size=s["batch_size"], seed=s["seed"],
                      l2_weight_decay=s["l2_weight_decay"], hidden_activation=s["hidden_activation"])
    model = train(cfg, scaler.apply(ds.rows), ds.ratings, n_classes,
                  feature_names=ds.feature_names, scaler=scaler, rating_scale=scale)
    acc = float(np.mean(predict_class(model, scaler.apply(ds.rows)) == ds.ratings))
    save_model(model, out)
    print(f"trained on {ds.n_samples} rows ({n_classes} classes), training accuracy {acc:.4f}; saved {out}")


def cmd_explain(args, s):
    ctx = _load_context(s)
    ds = ctx.dataset
    if args.row is not None:
        i = args.row
        if not 0 <= i < ds.n_samples:
            raise CounterfactError(f"{s['data']}: row {i} out of range 0..{ds.n_samples - 1}")
    else:
        if not args.period:
            raise UsageError("counterfact explain: error: --entity needs --period")
        try:
            i = ds.find(args.entity, args.period)
        except KeyError as exc:
            raise CounterfactError(f"{s['data']}: {exc.args[0]}") from None
    before = predict_class(ctx.model, ctx.model.standardize(ds.rows[i]))
    if before == 1:
        print(f"row {i}: already at the best rating {ctx.scale.to_symbol(1)}; nothing to explain")
        return
    target = _parse_rating(ctx.scale, s["target"]) if s.get("target") else before - 1
    if target >= before:
        raise CounterfactError(f"target {ctx.scale.to_symbol(target)} is not better than the "
                               f"predicted {ctx.scale.to_symbol(before)}")
    problem = _problem_for(ctx, i, s, target)
    result = _runner(s["method"])([problem], _solver_cfg(s), _sparsity_cfg(s))[0]
    sym = ctx.scale.to_symbol
    print(f"row {i}: predicted {sym(before)}, target {sym(target)}, method {s['method']}")
    p0 = forward_probs(ctx.model, problem.x)
    if not result.solved:
        print(f"no counterfactual found after {result.rounds_used} rounds "
              f"(largest lambda {result.lambda_used:g}); the rating cannot be improved under this model")
        return
    c = result.chosen
    orig = c.delta * problem.unit_scale
    support = np.flatnonzero(np.abs(c.delta) > s["nonzero_tol"])
    print(f"solved at lambda {result.lambda_used:g}: {len(support)} change(s), L1 {c.l1:.6g}, L2 {c.l2:.6g}")
    print(f"{'feature':<48}{'current':>16}{'change':>16}{'proposed':>16}")
    for j in support:
        x0 = problem.x_reference[j]
        print(f"{ds.feature_names[j]:<48}{x0:>16.6g}{orig[j]:>+16.6g}{x0 + orig[j]:>16.6g}")
    print(f"predicted rating: {sym(before)} -> {sym(c.predicted_ordinal)}")
    print(f"{'class':<8}{'before':>10}{'after':>10}")
    for k in range(ctx.model.n_classes):
        print(f"{sym(k + 1):<8}{p0[k]:>10.4f}{c.output_probs[k]:>10.4f}")


def cmd_batch(args, s):
    ctx = _load_context(s)
    out = _require(s, "out", "an output path")
    ds = ctx.dataset
    keep = set(_parse_rating(ctx.scale, r) for r in args.rating_filter.split(",")) if args.rating_filter else None
    target_override = _parse_rating(ctx.scale, s["target"]) if s.get("target") else None
    preds = predict_class(ctx.model, ctx.model.standardize(ds.rows))
    preds = np.atleast_1d(preds)

    rows, problems = [], []
    for i in range(ds.n_samples):
        if keep is not None and int(ds.ratings[i]) not in keep:
            continue
        if args.period and (ds.periods is None or ds.periods[i] != args.period):
            continue
        before = int(preds[i])
        target = target_override if target_override is not None else before - 1
        if int(ds.ratings[i]) == 1 or before == 1 or target >= before:
            print(f"row {i}: skipped (rated {ctx.scale.to_symbol(int(ds.ratings[i]))}, predicted "
                  f"{ctx.scale.to_symbol(before)}; no better target)", file=sys.stderr)
            continue
        rows.append(i)
        problems.append(_problem_for(ctx, i, s, target))

    run = _runner(s["method"])
    solver_cfg, sp_cfg = _solver_cfg(s), _sparsity_cfg(s)
    workers = max(1, int(s["workers"]))
    # contiguous chunks, reassembled in input order
    chunks = [list(c) for c in np.array_split(np.arange(len(problems)), workers)]
    results = [None] * len(problems)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(idx, pool.submit(run, [problems[j] for j in idx], solver_cfg, sp_cfg)) for idx in chunks if idx]
        for idx, fut in futures:
            for j, res in zip(idx, fut.result()):
                results[j] = res

    records = []
    for i, problem, res in zip(rows, problems, results):
        records.append(record_from_result(
            res, problem, row_id=i, feature_names=ds.feature_names, method=s["method"],
            rating=int(ds.ratings[i]),
            entity_id=ds.entity_ids[i] if ds.entity_ids is not None else "",
            period=ds.periods[i] if ds.periods is not None else "",
            nonzero_tol=s["nonzero_tol"],
        ))
    write_results(records, out)
    n_solved = sum(r.solved for r in records)
    print(f"{len(records)} rows explained ({n_solved} solved) with method {s['method']}; wrote {out}")


def cmd_report(args, s):
    out = Path(_require(s, "out", "an output directory"))
    out.mkdir(parents=True, exist_ok=True)
    sp = read_results(args.results)
    gd = read_results(args.gd_results) if args.gd_results else []
    scale = None
    if s.get("scale"):
        scale = read_scale_file(s["scale"])
    elif s.get("model"):
        scale = load_model(s["model"]).rating_scale

    comparison = real = None
    if gd:
        comparison = reports.compare_methods(sp, gd)
        reports.write_comparison(comparison, out / reports.REPORT_FILES["comparison"], scale)
    if s.get("data"):
        ds = load_table(s["data"], s["rating_column"], scale)
        w = build_mask(ds.feature_names, read_mask_file(s["mask"])).w if s.get("mask") else np.ones(ds.n_features)
        real = reports.real_change_summary(sp, gd, ds, w)
        reports.write_real_change(real, out / reports.REPORT_FILES["real_change"])
    effort = reports.write_effort(sp, out / reports.REPORT_FILES["effort"], scale)
    lam = reports.write_lambda(sp, s["lambda_ladder"], out / reports.REPORT_FILES["lambda"], scale)
    summary = reports.render_summary(comparison, real, effort, lam, scale)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary)


COMMANDS = {
    "synth": cmd_synth, "fixture": cmd_fixture, "train": cmd_train,
    "explain": cmd_explain, "batch": cmd_batch, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = resolve_settings(args)
        COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"counterfact: config error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (CounterfactError, OSError, KeyError) as exc:
        print(f"counterfact: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
