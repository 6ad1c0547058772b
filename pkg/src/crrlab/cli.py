"""Command-line entry point: ``crrlab [--config F] [--seed N] [--out DIR] <command>``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .aspect_bank import build_bank
from .augment import AugmentConfig, PairedDataset, augment_dataset, counterfactual_dataset, identity
from .benchmark import BenchmarkConfig, build_data, run_regime
from .corpus import DataError, Dataset, group_variants, load_dataset, split_train_dev
from .metrics import PredictionRecord, metrics_report, report_json, report_table, subset_analysis
from .model import Vocab, argmax_label, load_checkpoint, predict_proba, save_checkpoint
from .saliency import render_report, token_saliency
from .text import SentimentLexicon
from .trainer import TrainConfig, TrainingDiverged, grid_search, init_params, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
CONFIG_FILE = "effective_config.yaml"
TIMESTAMP_PREFIX = "# generated: "

_TRAIN_FIELDS = {f.name: f.default for f in fields(TrainConfig)}

DEFAULTS: dict = {
    "seed": 0,
    "out": "runs/default",
    "data": {"train": None, "dev": None, "test": None, "arts": None, "dev_fraction": 0.1},
    "augment": {"min_phrases": 1, "max_phrases": 3, "front_probability": 0.5,
                "position_policy": "mixed", "window": 5, "lexicon": None},
    "train": {**{k: list(v) if isinstance(v, tuple) else v for k, v in _TRAIN_FIELDS.items() if k != "seed"},
              "pairs": None, "grid": False},
    "eval": {"checkpoint": None, "predictions": None},
    "saliency": {"checkpoint": None, "data": None, "ids": [], "mode": "html", "use_predicted": False},
    "simulate": {**{k: v for k, v in BenchmarkConfig().to_dict().items()},
                 "regimes": ["baseline", "adversarial", "crr"], "seeds": None},
    "report": {"runs": []},
}


class ConfigError(Exception):
    pass


def _coerce(default, val, where: str):
    """Match ``val`` to the type of its default; YAML reads ``1e-3`` as a string."""
    if default is None or val is None:
        return val
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"config key {where!r} must be true or false")
        return val
    if isinstance(default, (int, float)):
        if isinstance(val, str):
            try:
                val = float(val) if isinstance(default, float) else int(val)
            except ValueError:
                raise ConfigError(f"config key {where!r} must be a number, got {val!r}") from None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"config key {where!r} must be a number")
        if isinstance(default, float):
            return float(val)
        if not isinstance(val, int):
            raise ConfigError(f"config key {where!r} must be an integer")
        return val
    if isinstance(default, list):
        if not isinstance(val, (list, tuple)):
            raise ConfigError(f"config key {where!r} must be a list")
        if default:
            return [_coerce(default[0], v, where) for v in val]
        return list(val)
    return val


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "core":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = _coerce(base[key], val, where)
    return out


def _set_path(doc: dict, dotted: str, value) -> dict:
    keys = dotted.split(".")
    over: dict = {}
    cur = over
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value
    return _merge(doc, over)


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return _merge(cfg, doc)


def effective_config(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config)
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        cfg = _set_path(cfg, key, yaml.safe_load(raw))
    for dotted, value in _flag_overrides(args):
        cfg = _set_path(cfg, dotted, value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


_FLAG_MAP = {
    "train_data": "data.train", "dev_data": "data.dev", "test_data": "data.test", "arts_data": "data.arts",
    "position_policy": "augment.position_policy", "lexicon": "augment.lexicon",
    "regime": "train.regime", "alpha": "train.alpha", "lr": "train.lr", "epochs": "train.epochs",
    "divergence": "train.divergence", "pairs": "train.pairs", "grid": "train.grid",
    "checkpoint": None, "predictions": "eval.predictions", "ids": "saliency.ids", "mode": "saliency.mode",
    "runs": "report.runs",
}


def _flag_overrides(args: argparse.Namespace):
    for attr, dotted in _FLAG_MAP.items():
        value = getattr(args, attr, None)
        if value is None or value is False:
            continue
        if attr == "checkpoint":
            dotted = "saliency.checkpoint" if args.command == "saliency" else "eval.checkpoint"
        if attr == "ids":
            value = [v for v in value.split(",") if v]
        yield dotted, value


def write_effective_config(cfg: dict, out: Path) -> None:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    body = yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
    (out / CONFIG_FILE).write_text(f"{TIMESTAMP_PREFIX}{stamp}\n{body}", encoding="utf-8")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(cfg: dict, section: str, key: str) -> str:
    value = cfg[section][key]
    if not value:
        raise ConfigError(f"{section}.{key} is required for this command")
    return value


def _augment_config(cfg: dict) -> AugmentConfig:
    a = cfg["augment"]
    try:
        return AugmentConfig(a["min_phrases"], a["max_phrases"], a["front_probability"],
                             a["position_policy"], seed=cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _train_config(cfg: dict) -> TrainConfig:
    t = {k: v for k, v in cfg["train"].items() if k in _TRAIN_FIELDS}
    for k in ("alpha_grid", "lr_grid"):
        t[k] = tuple(t[k])
    try:
        return TrainConfig(**t, seed=cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _lexicon(cfg: dict) -> SentimentLexicon:
    return SentimentLexicon.load(cfg["augment"]["lexicon"])


def cmd_augment(cfg: dict, out: Path) -> int:
    acfg = _augment_config(cfg)
    window = cfg["augment"]["window"]
    if not isinstance(window, int) or window < 2:
        raise ConfigError("augment.window must be an integer >= 2")
    d = load_dataset(_require(cfg, "data", "train"), split="train")
    bank = build_bank(d, _lexicon(cfg), window)
    pairs = augment_dataset(d, bank, acfg)
    pairs.save(out / "pairs.jsonl")
    bank.save(out / "bank.jsonl")
    _write_json(out / "audit.json", {"kind": acfg.kind, "counts": pairs.counts,
                                     "bank_size": len(bank), "dropped_conflicts": d.dropped_conflicts})
    print(f"augmented {len(pairs)} instances ({pairs.counts['identity']} identity fallbacks) -> {out}")
    return EXIT_OK


def _train_dev(cfg: dict) -> tuple[Dataset, Dataset]:
    d = load_dataset(_require(cfg, "data", "train"), split="train")
    if cfg["data"]["dev"]:
        return d, load_dataset(cfg["data"]["dev"], split="dev")
    return split_train_dev(d, cfg["data"]["dev_fraction"], cfg["seed"])


def cmd_train(cfg: dict, out: Path) -> int:
    tcfg = _train_config(cfg)
    train_d, dev = _train_dev(cfg)
    ids = {x.id for x in train_d.instances}
    if tcfg.regime == "baseline":
        pairs = PairedDataset([(x, identity(x)) for x in train_d.instances])
    elif cfg["train"]["pairs"]:
        loaded = PairedDataset.load(cfg["train"]["pairs"])
        pairs = PairedDataset([(x, a) for x, a in loaded.pairs if x.id in ids])
        missing = ids - {x.id for x in pairs.originals}
        if missing:
            raise DataError(f"pairs file has no augmentation for {len(missing)} training ids, "
                            f"e.g. {sorted(missing)[0]!r}")
    elif tcfg.regime == "cad":
        pairs = counterfactual_dataset(train_d, _lexicon(cfg))
    else:
        raise DataError(f"regime {tcfg.regime!r} needs train.pairs (run the augment command first)")
    vocab = Vocab.build(list(pairs.originals) + [a.instance for _, a in pairs.pairs])
    if cfg["train"]["grid"]:
        result = grid_search(vocab, pairs, dev, tcfg)
        params, report, chosen = result.best_params, result.best_report, result.best_config
        (out / "grid.csv").write_text(result.to_csv(), encoding="utf-8")
    else:
        params, report = train(init_params(vocab, tcfg), vocab, pairs, dev, tcfg)
        chosen = tcfg
    (out / "train_report.csv").write_text(report.to_csv(), encoding="utf-8")
    save_checkpoint(out / "checkpoint.json", params, vocab,
                    {"regime": chosen.regime, "alpha": chosen.alpha, "lr": chosen.lr, "seed": chosen.seed,
                     "best_epoch": report.best_epoch, "best_dev": report.best_dev})
    _write_json(out / "train_summary.json", {"best_epoch": report.best_epoch, "best_dev": report.best_dev,
                                             "selected": {"alpha": chosen.alpha, "lr": chosen.lr}})
    print(f"best epoch {report.best_epoch}, dev {chosen.dev_metric} {report.best_dev:.4f} -> {out}")
    return EXIT_OK


def _load_checkpoint(path: str):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"bad checkpoint {path}: {exc}") from None


def _read_predictions(path: str) -> dict[str, str]:
    preds = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                preds[str(rec["id"])] = str(rec["predicted"])
            except (json.JSONDecodeError, KeyError, TypeError):
                raise DataError(f"{path}:{lineno}: expected an object with 'id' and 'predicted'") from None
    return preds


def cmd_eval(cfg: dict, out: Path) -> int:
    if cfg["data"]["arts"]:
        d = load_dataset(cfg["data"]["arts"], kind="arts", split="test")
    else:
        d = load_dataset(_require(cfg, "data", "test"), split="test")
    everything = list(d.instances) + [v.instance for v in d.variants or ()]
    if cfg["eval"]["predictions"]:
        preds = _read_predictions(cfg["eval"]["predictions"])
        missing = [x.id for x in everything if x.id not in preds]
        if missing:
            raise DataError(f"no prediction record for id {missing[0]!r} ({len(missing)} missing)")
        predicted = [preds[x.id] for x in everything]
    else:
        params, vocab, _ = _load_checkpoint(_require(cfg, "eval", "checkpoint"))
        predicted = [argmax_label(p) for p in predict_proba(params, vocab, everything)]
    records = [PredictionRecord(x.id, x.polarity, p) for x, p in zip(everything, predicted)]
    groups = group_variants(d) if d.variants else None
    metrics = metrics_report(records, groups)
    subsets = subset_analysis(groups, records) if groups else None
    (out / "metrics.json").write_text(report_json(metrics, subsets), encoding="utf-8")
    (out / "metrics.txt").write_text(report_table(metrics, subsets, d.name), encoding="utf-8")
    with (out / "predictions.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "gold": r.gold, "predicted": r.predicted}) + "\n")
    print(report_table(metrics, subsets, d.name), end="")
    return EXIT_OK


def _benchmark_config(cfg: dict) -> BenchmarkConfig:
    doc = {k: v for k, v in cfg["simulate"].items() if k not in ("regimes", "seeds")}
    try:
        return BenchmarkConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(cfg: dict, out: Path) -> int:
    bcfg = _benchmark_config(cfg)
    regimes = list(cfg["simulate"]["regimes"] or [])
    seeds = cfg["simulate"]["seeds"] or [cfg["seed"]]
    for r in regimes:
        if r not in ("baseline", "adversarial", "crr", "cad"):
            raise ConfigError(f"unknown regime {r!r}")
    results = []
    for seed in seeds:
        data = build_data(bcfg, seed)
        folder = out / f"seed{seed}"
        folder.mkdir(parents=True, exist_ok=True)
        for name, corpus in (("train", data.train), ("dev", data.dev), ("test", data.test),
                             ("test_shifted", data.shifted)):
            corpus.save(folder / f"{name}.jsonl", folder / f"{name}.roles.jsonl")
        data.pairs.save(folder / "pairs.jsonl")
        for regime in regimes:
            result, params = run_regime(bcfg, regime, seed, data)
            (folder / f"{regime}_train_report.csv").write_text(result.report.to_csv(), encoding="utf-8")
            save_checkpoint(folder / f"{regime}_checkpoint.json", params, data.vocab,
                            {"regime": regime, "seed": seed})
            results.append(result.summary())
    _write_json(out / "benchmark.json", {"results": results, "summary": _summarize(results)})
    (out / "benchmark.txt").write_text(_benchmark_table(results), encoding="utf-8")
    print(_benchmark_table(results), end="")
    return EXIT_OK


def _summarize(results: list[dict]) -> dict:
    out = {}
    for regime in dict.fromkeys(r["regime"] for r in results):
        rows = [r for r in results if r["regime"] == regime]
        out[regime] = {k: float(np.mean([r[k] for r in rows]))
                       for k in ("iid_accuracy", "shifted_accuracy", "gap_mean", "gap_mean_tv", "flip_rate")}
        out[regime]["transfer_violations"] = int(sum(r["transfer"]["violations"] for r in rows))
        out[regime]["n_seeds"] = len(rows)
    return out


def _benchmark_table(results: list[dict]) -> str:
    summary = _summarize(results)
    lines = [f"{'regime':<12}{'IID acc':>10}{'shift acc':>11}{'gap (KL)':>10}{'gap (TV)':>10}{'violations':>12}"]
    for regime, s in summary.items():
        lines.append(f"{regime:<12}{100 * s['iid_accuracy']:>10.2f}{100 * s['shifted_accuracy']:>11.2f}"
                     f"{s['gap_mean']:>10.4f}{s['gap_mean_tv']:>10.4f}{s['transfer_violations']:>12d}")
    if not summary:
        lines.append("# no regimes trained; datasets only")
    return "\n".join(lines) + "\n"


def cmd_saliency(cfg: dict, out: Path) -> int:
    mode = cfg["saliency"]["mode"]
    if mode not in ("html", "ansi"):
        raise ConfigError(f"saliency.mode must be html or ansi, got {mode!r}")
    params, vocab, _ = _load_checkpoint(_require(cfg, "saliency", "checkpoint"))
    path = cfg["saliency"]["data"] or cfg["data"]["arts"] or _require(cfg, "data", "test")
    kind = "arts" if path == cfg["data"]["arts"] else "original"
    table = load_dataset(path, kind=kind).by_id()
    ids = cfg["saliency"]["ids"] or []
    if not ids:
        raise ConfigError("saliency.ids must list at least one instance id")
    unknown = [i for i in ids if i not in table]
    if unknown:
        raise DataError(f"unknown instance id {unknown[0]!r}")
    maps = [token_saliency(params, vocab, table[i], cfg["saliency"]["use_predicted"]) for i in ids]
    name = "saliency.html" if mode == "html" else "saliency.txt"
    text = render_report(maps, mode)
    (out / name).write_text(text, encoding="utf-8")
    if mode == "ansi":
        print(text, end="")
    return EXIT_OK


def cmd_report(cfg: dict, out: Path) -> int:
    runs = cfg["report"]["runs"] or []
    if not runs:
        raise ConfigError("report.runs must list at least one run directory")
    lines = ["# Run report", ""]
    for run in runs:
        run = Path(run)
        found = False
        if (run / "metrics.txt").exists():
            lines += [f"## {run} (evaluation)", "", "```", (run / "metrics.txt").read_text().rstrip(), "```", ""]
            found = True
        if (run / "benchmark.txt").exists():
            lines += [f"## {run} (synthetic benchmark)", "", "```",
                      (run / "benchmark.txt").read_text().rstrip(), "```", ""]
            found = True
        if (run / "train_report.csv").exists():
            lines += [f"## {run} (training log)", "", "```", (run / "train_report.csv").read_text().rstrip(),
                      "```", ""]
            found = True
        if not found:
            raise DataError(f"{run}: no metrics.txt, benchmark.txt or train_report.csv")
    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    print(f"wrote {out / 'report.md'}")
    return EXIT_OK


COMMANDS = {"augment": cmd_augment, "train": cmd_train, "eval": cmd_eval, "simulate": cmd_simulate,
            "saliency": cmd_saliency, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML or JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="run seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override any config entry, e.g. train.alpha=3")

    parser = argparse.ArgumentParser(prog="crrlab", parents=[common],
                                     description="Aspect-robust sentiment training and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common], help="build the phrase bank and AddDiffMix pairs")
    p.add_argument("--train-data")
    p.add_argument("--lexicon")
    p.add_argument("--position-policy", choices=["mixed", "rear_only"])

    p = sub.add_parser("train", parents=[common], help="train one regime (or a grid)")
    p.add_argument("--train-data")
    p.add_argument("--dev-data")
    p.add_argument("--pairs")
    p.add_argument("--regime", choices=["baseline", "adversarial", "crr", "cad"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--divergence", choices=["kl_forward", "kl_reverse", "js"])
    p.add_argument("--grid", action="store_true")

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint or a predictions file")
    p.add_argument("--checkpoint")
    p.add_argument("--test-data")
    p.add_argument("--arts-data")
    p.add_argument("--predictions")

    sub.add_parser("simulate", parents=[common], help="run the synthetic causal benchmark")

    p = sub.add_parser("saliency", parents=[common], help="gradient-norm token saliency report")
    p.add_argument("--checkpoint")
    p.add_argument("--test-data")
    p.add_argument("--ids", help="comma-separated instance ids")
    p.add_argument("--mode", choices=["html", "ansi"])

    p = sub.add_parser("report", parents=[common], help="collect run outputs into one markdown file")
    p.add_argument("--runs", nargs="+")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out", "set"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        cfg = effective_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_effective_config(cfg, out)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
