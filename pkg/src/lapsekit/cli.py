"""Command-line front end: gen -> tune -> train -> evaluate -> report.

Every stochastic command needs a root seed (``--seed`` or ``seed:`` in the
YAML config); all fold and grid-point seeds are forked from it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import economics, evaluation, portfolio, serialize

log = logging.getLogger("lapsekit")

MODELS = evaluation.FAMILIES
STRATEGIES = tuple(s.value for s in economics.Strategy)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config helpers

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping")
    return raw


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return sec


def _seed(args: argparse.Namespace, cfg: dict, sec: dict) -> int:
    seed = args.seed if args.seed is not None else sec.get("seed", cfg.get("seed"))
    if seed is None:
        raise ConfigError(f"'{args.command}' is stochastic and needs a seed (--seed or 'seed:' in the config)")
    try:
        return int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc


def _jobs(args: argparse.Namespace, cfg: dict) -> int:
    jobs = args.jobs if args.jobs is not None else cfg.get("jobs", 1)
    if int(jobs) < 1:
        raise ConfigError("jobs must be at least 1")
    return int(jobs)


def _out_dir(args: argparse.Namespace, cfg: dict) -> Path:
    out = os.environ.get("LAPSEKIT_OUT") or args.out or cfg.get("out") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _input_path(value: Any, what: str) -> Path:
    if value is None:
        raise ConfigError(f"missing {what} path")
    p = Path(value)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _model(args: argparse.Namespace, sec: dict, default: str | None = None) -> str:
    model = args.model or sec.get("model", default)
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    return model


def economic_params(spec: Any) -> economics.EconomicParams:
    """A preset name or a mapping; a mapping may name a ``preset`` and override fields."""
    if isinstance(spec, str):
        if spec.lower() not in STRATEGIES:
            raise ConfigError(f"unknown strategy preset {spec!r}; expected one of {STRATEGIES}")
        return economics.load_paper_presets(spec)
    if isinstance(spec, Mapping):
        spec = dict(spec)
        base = spec.pop("preset", None)
        if base is not None:
            d = economic_params(base).to_dict()
            d.update(spec)
            spec = d
        try:
            return economics.EconomicParams.from_dict(spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid economic parameters: {exc}") from exc
    raise ConfigError(f"cannot read economic parameters from {spec!r}")


def _strategies(args: argparse.Namespace, sec: dict) -> list[economics.EconomicParams]:
    if args.strategy:
        return [economic_params(args.strategy)]
    specs = sec.get("strategies", list(STRATEGIES))
    if isinstance(specs, (str, Mapping)):
        specs = [specs]
    return [economic_params(s) for s in specs]


def _load_dataset(path: Path) -> portfolio.Dataset:
    return portfolio.encode(portfolio.read_csv(path))


def _read_params(model: str, value: Any) -> Any:
    """Inline mapping, a params file written by ``tune``, or None for defaults."""
    if value is None:
        return None
    if isinstance(value, str):
        doc = json.loads(_input_path(value, "params file").read_text(encoding="utf-8"))
        value = doc.get("params", doc)
    if not isinstance(value, Mapping):
        raise ConfigError(f"params for {model!r} must be a mapping or a file path")
    try:
        return evaluation.coerce_params(model, value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params for {model!r}: {exc}") from exc


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _grid(value: Any, default: str) -> Any:
    value = default if value is None else value
    if isinstance(value, str):
        if value not in evaluation.GRID_PRESETS:
            raise ConfigError(f"unknown grid preset {value!r}; expected one of {sorted(evaluation.GRID_PRESETS)}")
        return evaluation.GRID_PRESETS[value]
    if not isinstance(value, Mapping):
        raise ConfigError("grid must be a preset name or a mapping")
    return dict(value)


# ---------------------------------------------------------------- commands

def cmd_gen(args, cfg) -> list[Path]:
    sec = _section(cfg, "gen")
    raw = dict(sec.get("generator", {}))
    raw["seed"] = _seed(args, cfg, sec)
    if args.n is not None:
        raw["n_policies"] = args.n
    try:
        gc = portfolio.GeneratorConfig.from_dict(raw)
    except portfolio.ConfigError as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args, cfg)
    path = out / sec.get("output", f"portfolio_seed{gc.seed}.csv")
    portfolio.write_csv(portfolio.generate(gc), path)
    log.info("wrote %s", path)
    return [path]


def cmd_tune(args, cfg) -> list[Path]:
    sec = _section(cfg, "tune")
    seed = _seed(args, cfg, sec)
    model = _model(args, sec, "boost")
    ds = _load_dataset(_input_path(args.data or sec.get("data"), "dataset"))
    out = _out_dir(args, cfg)
    if model == "boost":
        params, info = evaluation.tune_boost_classification(
            ds, seed, grid=_grid(sec.get("grid"), "published-boost"), nrounds_max=int(sec.get("nrounds_max", 200)),
        )
    elif model == "svm":
        params, info = evaluation.tune_svm(ds, seed, grid=_grid(sec.get("grid"), "published-svm"))
    elif model == "boost-profit":
        ep = _strategies(args, sec)[0]
        ds = ds.with_targets(economics.profit_target(ds.face_amounts, ds.labels, ep))
        params, info = evaluation.tune_boost_profit(
            ds, seed, fixed=_grid(sec.get("fixed"), "published-profit"), nrounds_max=int(sec.get("nrounds_max", 1000)),
        )
        info["strategy"] = ep.name
    else:
        raise ConfigError(f"no tuner for model {model!r}; tunable models are boost, svm, boost-profit")
    doc = {"family": model, "seed": seed, "params": params.to_dict(), "tuning": info}
    path = out / sec.get("output", f"params_{model}_seed{seed}.json")
    return [_write(path, json.dumps(doc, indent=2) + "\n")]


def cmd_train(args, cfg) -> list[Path]:
    sec = _section(cfg, "train")
    seed = _seed(args, cfg, sec)
    model = _model(args, sec)
    ds = _load_dataset(_input_path(args.data or sec.get("data"), "dataset"))
    params = evaluation.coerce_params(model, _read_params(model, (sec.get("params") or {}).get(model)))
    target = ds.labels
    tag = model
    if model == "boost-profit":
        ep = _strategies(args, sec)[0]
        target = economics.profit_target(ds.face_amounts, ds.labels, ep)
        tag = f"{model}_{ep.name}"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fitted = evaluation.train(model, ds.features, target, params, seed=seed)
    out = _out_dir(args, cfg)
    path = out / sec.get("output", f"model_{tag}_seed{seed}.json")
    record = params.to_dict() if hasattr(params, "to_dict") else dict(params)
    record["encoding"] = [e.to_dict() for e in ds.encoding_map]
    serialize.save_model(path, fitted, model, record)
    log.info("wrote %s", path)
    return [path]


def _summary_csv(reports: list[evaluation.EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tag", "family", "seed", "orientation", "n_ok_folds", "strategy",
                "accuracy_mean", "accuracy_sd", "rg_mean", "rg_sd", "sd_convention"])
    for rep in reports:
        s = rep.summary()
        for name in rep.strategies:
            rg = s[f"rg_{name}"]
            w.writerow([
                rep.tag, rep.family, rep.seed, rep.orientation, len(rep.ok_folds), name,
                f"{s['accuracy']['mean']:.6f}", f"{s['accuracy']['sd']:.6f}",
                economics.format_currency(rg["mean"]), economics.format_currency(rg["sd"]), rep.sd_convention,
            ])
    return buf.getvalue()


def cmd_evaluate(args, cfg) -> list[Path]:
    sec = _section(cfg, "evaluate")
    seed = _seed(args, cfg, sec)
    jobs = _jobs(args, cfg)
    models = [args.model] if args.model else list(sec.get("models", ["logit", "cart", "boost", "boost-profit"]))
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}")
    eps = _strategies(args, sec)
    orientation = sec.get("orientation", "inverted")
    ds = _load_dataset(_input_path(args.data or sec.get("data"), "dataset"))
    param_cfg = sec.get("params") or {}
    out = _out_dir(args, cfg)
    written: list[Path] = []
    reports: list[evaluation.EvaluationReport] = []
    for m in models:
        params = _read_params(m, param_cfg.get(m))
        if m == "boost-profit":
            for ep in eps:
                reports.append(evaluation.run_profit_protocol(ds, ep, params, seed=seed, orientation=orientation, jobs=jobs))
        else:
            reports.append(evaluation.run_protocol(ds, m, params, eps, seed=seed, orientation=orientation, jobs=jobs))
    for rep in reports:
        written.append(_write(out / f"report_{rep.tag}.json", rep.to_json()))
        written.append(_write(out / f"report_{rep.tag}.csv", rep.to_csv()))
    written.append(_write(out / f"summary_seed{seed}.csv", _summary_csv(reports)))
    return written


def cmd_report(args, cfg) -> list[Path]:
    sec = _section(cfg, "report")
    inputs = list(args.inputs or sec.get("inputs", []))
    if not inputs:
        raise ConfigError("report needs at least one report JSON file")
    reports = []
    for p in inputs:
        doc = json.loads(_input_path(p, "report").read_text(encoding="utf-8"))
        if doc.get("format") != "lapsekit-report":
            raise ConfigError(f"{p} is not a lapsekit report")
        reports.append(evaluation.EvaluationReport.from_dict(doc))
    rows = []
    for rep in reports:
        s = rep.summary()
        for name in rep.strategies:
            rows.append((s[f"rg_{name}"]["mean"], rep, name, s))
    rows.sort(key=lambda r: (-r[0], r[1].tag, r[2]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "tag", "family", "seed", "strategy", "rg_mean", "rg_sd", "accuracy_mean", "accuracy_sd"])
    for rank, (rg, rep, name, s) in enumerate(rows, 1):
        w.writerow([
            rank, rep.tag, rep.family, rep.seed, name,
            economics.format_currency(rg), economics.format_currency(s[f"rg_{name}"]["sd"]),
            f"{s['accuracy']['mean']:.6f}", f"{s['accuracy']['sd']:.6f}",
        ])
    out = _out_dir(args, cfg)
    return [_write(out / sec.get("output", "comparison.csv"), buf.getvalue())]


COMMANDS = {
    "gen": cmd_gen,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="root seed for every stochastic step")
    common.add_argument("--jobs", type=int, help="concurrent folds (default 1)")
    common.add_argument("--out", help="output directory (LAPSEKIT_OUT overrides)")
    common.add_argument("--strategy", choices=STRATEGIES)
    common.add_argument("--model", choices=MODELS)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lapsekit", description="Lapse classifiers and retention-gain evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{gen,tune,train,evaluate,report}")
    p = sub.add_parser("gen", parents=[common], help="generate a synthetic portfolio CSV")
    p.add_argument("--n", type=int, help="number of policies")
    for name, text in (("tune", "grid-search model parameters"), ("train", "fit and save one model"),
                       ("evaluate", "run the ten-round evaluation protocol")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="portfolio CSV")
    p = sub.add_parser("report", parents=[common], help="merge report JSON files into one ranked CSV")
    p.add_argument("inputs", nargs="*", help="report JSON files")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    for name in ("n", "data", "inputs"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        written = COMMANDS[args.command](args, cfg)
    except (ConfigError, portfolio.ConfigError) as exc:
        print(f"lapsekit: config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, portfolio.CsvFormatError) as exc:
        print(f"lapsekit: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
