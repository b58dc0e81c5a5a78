"""Command line interface.

Subcommands:
  generate   write a synthetic click log as delimited text
  run        stream one arm and write report.json/report.csv plus figures
  grid       run several arms on one shared stream and compare them
  compare    recompute a comparison from previously saved run directories

Generator and trainer flags can also come from a JSON file via
--config; explicit command line flags win over file values.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from . import figures, harness, ingest
from .core import ConfigError, WindowConfig
from .pipelines import Mechanism
from .synthgen import GenConfig, build_model, generate_table

logger = logging.getLogger(__name__)

_GEN_KEYS = (
    "hours",
    "clicks_per_hour",
    "wo_minutes",
    "wa_hours",
    "seed",
    "contexts",
    "cvr_range",
    "delay_multipliers",
)
_TRAIN_KEYS = (
    "hidden",
    "lr",
    "l2",
    "batch",
    "pretrain_epochs",
    "pretrain_fraction",
    "train_seed",
    "bi_hidden",
)

_GEN_DEFAULTS = {
    "hours": 48,
    "clicks_per_hour": 20_000,
    "wo_minutes": 30.0,
    "wa_hours": 720.0,
    "seed": 0,
    "contexts": "one-hot-8",
    "cvr_range": "0.05,0.5",
    "delay_multipliers": None,
}
_TRAIN_DEFAULTS = {
    "hidden": "",
    "lr": 0.02,
    "l2": 1e-4,
    "batch": 512,
    "pretrain_epochs": 2,
    "pretrain_fraction": 0.5,
    "train_seed": 0,
    "bi_hidden": 8,
}


def _add_gen_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hours", type=int, help="simulated stream length")
    p.add_argument("--clicks-per-hour", type=int, dest="clicks_per_hour")
    p.add_argument("--wo-minutes", type=float, dest="wo_minutes", help="short window")
    p.add_argument("--wa-hours", type=float, dest="wa_hours", help="attribution window")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--contexts", dest="contexts", help="one-hot-K or dense-K")
    p.add_argument("--cvr-range", dest="cvr_range", help="lo,hi per-context range")
    p.add_argument(
        "--delay-multipliers", dest="delay_multipliers", help="comma list, one per context"
    )
    p.add_argument("--config", help="JSON file with defaults for any flag")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", dest="hidden", help="comma list of hidden sizes")
    p.add_argument("--lr", type=float, dest="lr")
    p.add_argument("--l2", type=float, dest="l2", help="decoupled weight decay")
    p.add_argument("--batch", type=int, dest="batch")
    p.add_argument("--pretrain-epochs", type=int, dest="pretrain_epochs")
    p.add_argument("--pretrain-fraction", type=float, dest="pretrain_fraction")
    p.add_argument("--train-seed", type=int, dest="train_seed")
    p.add_argument("--bi-hidden", type=int, dest="bi_hidden")


def _merge(args: argparse.Namespace, keys, defaults) -> dict:
    file_vals = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_vals = json.load(fh)
        unknown = set(file_vals) - set(_GEN_KEYS) - set(_TRAIN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
    out = {}
    for k in keys:
        cli = getattr(args, k, None)
        out[k] = cli if cli is not None else file_vals.get(k, defaults[k])
    return out


def _parse_pair(text) -> tuple:
    if isinstance(text, (list, tuple)):
        lo, hi = text
        return float(lo), float(hi)
    lo, hi = (float(v) for v in str(text).split(","))
    return lo, hi


def _parse_floats(text) -> Optional[tuple]:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    if not text:
        return None
    return tuple(float(v) for v in text.split(","))


def _parse_ints(text) -> tuple:
    if text is None:
        return ()
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _gen_from_args(args: argparse.Namespace) -> GenConfig:
    vals = _merge(args, _GEN_KEYS, _GEN_DEFAULTS)
    hours = int(vals["hours"])
    cph = int(vals["clicks_per_hour"])
    return GenConfig(
        n_clicks=hours * cph,
        clicks_per_hour=cph,
        windows=WindowConfig(
            w_o=int(round(float(vals["wo_minutes"]) * 60)),
            w_a=int(round(float(vals["wa_hours"]) * 3600)),
        ),
        seed=int(vals["seed"]),
        contexts=str(vals["contexts"]),
        cvr_range=_parse_pair(vals["cvr_range"]),
        delay_multipliers=_parse_floats(vals["delay_multipliers"]),
    )


def _train_from_args(args: argparse.Namespace) -> harness.TrainConfig:
    vals = _merge(args, _TRAIN_KEYS, _TRAIN_DEFAULTS)
    return harness.TrainConfig(
        hidden=_parse_ints(vals["hidden"]),
        lr=float(vals["lr"]),
        weight_decay=float(vals["l2"]),
        batch_size=int(vals["batch"]),
        pretrain_epochs=int(vals["pretrain_epochs"]),
        pretrain_fraction=float(vals["pretrain_fraction"]),
        seed=int(vals["train_seed"]),
        bi_hidden=int(vals["bi_hidden"]),
    )


def _parse_arm(token: str, gen: GenConfig, train: harness.TrainConfig) -> harness.ExperimentConfig:
    token = token.strip()
    if token == "frozen":
        return harness.ExperimentConfig(
            gen=gen,
            mechanism=Mechanism.VANILLA,
            loss="vanilla",
            train=train,
            freeze=True,
            name="pretrained",
        )
    parts = token.split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"arm {token!r} is not pipeline:loss[:z] or 'frozen'")
    mech, loss = parts[0], parts[1]
    z = parts[2] if len(parts) == 3 else None
    return harness.ExperimentConfig(
        gen=gen, mechanism=Mechanism(mech), loss=loss, z_source=z, train=train
    )


# --- subcommands ---------------------------------------------------------------


def _cmd_generate(args: argparse.Namespace) -> int:
    gen = _gen_from_args(args)
    table = generate_table(gen)
    clicks = table.to_clicks()
    if gen.contexts.startswith("one-hot"):
        schema = ingest.one_hot_schema(table.dim)
    else:
        schema = ingest.LogSchema(
            n_numeric=table.dim, n_categorical=0, numeric_mode="raw"
        )
    ingest.write_log(clicks, args.out, schema)
    print(f"wrote {len(clicks)} clicks to {args.out}")
    return 0


def _run_and_save(cfg, table, truth, out_dir: str, render: bool) -> dict:
    report = harness.stream_run(cfg, table=table, truth=truth)
    harness.save_report(report, out_dir)
    payload = report.to_dict()
    if render:
        for metric in ("nll", "auc"):
            figures.hourly_curves(
                [payload], metric, os.path.join(out_dir, f"curve_{metric}.png")
            )
    return payload


def _cmd_run(args: argparse.Namespace) -> int:
    gen = _gen_from_args(args)
    train = _train_from_args(args)
    cfg = harness.ExperimentConfig(
        gen=gen,
        mechanism=Mechanism(args.pipeline),
        loss=args.loss,
        z_source=args.z,
        train=train,
        freeze=args.freeze,
        name=args.name,
    )
    payload = _run_and_save(cfg, None, None, args.out, not args.no_figures)
    agg = payload["aggregate"]
    print(
        f"{payload['name']}: auc={_fmt(agg['auc'])} pr_auc={_fmt(agg['pr_auc'])} "
        f"nll={_fmt(agg['nll'])} over {agg['count']} test clicks -> {args.out}"
    )
    return 0


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.5f}"


DEFAULT_ARMS = "oracle:ideal,frozen,vanilla:vanilla,esdfm:esdfm,esdfm:defuse:z1"


def _split_anchors(payloads):
    frozen = [p for p in payloads if p["config"]["freeze"]]
    oracle = [
        p
        for p in payloads
        if p["config"]["mechanism"] == "oracle" and not p["config"]["freeze"]
    ]
    if len(frozen) != 1 or len(oracle) != 1:
        raise ConfigError(
            "comparison needs exactly one frozen arm and one trained oracle arm"
        )
    methods = [p for p in payloads if p is not frozen[0] and p is not oracle[0]]
    return methods, frozen[0], oracle[0]


def _cmd_grid(args: argparse.Namespace) -> int:
    gen = _gen_from_args(args)
    train = _train_from_args(args)
    tokens = [t for t in args.arms.split(",") if t.strip()]
    cfgs = [_parse_arm(t, gen, train) for t in tokens]
    names = [c.arm_name for c in cfgs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate arm names in {names}")
    table = generate_table(gen)
    truth = build_model(gen)
    payloads = []
    for cfg in cfgs:
        out_dir = os.path.join(args.out, cfg.arm_name.replace("+", "_"))
        payload = _run_and_save(cfg, table, truth, out_dir, not args.no_figures)
        payloads.append(payload)
        print(f"finished {cfg.arm_name}")
    methods, frozen, oracle = _split_anchors(payloads)
    comparison = harness.compare_runs(methods, frozen, oracle)
    harness.save_comparison(comparison, args.out)
    if not args.no_figures:
        for metric in ("nll", "auc"):
            figures.hourly_curves(
                payloads, metric, os.path.join(args.out, f"curves_{metric}.png")
            )
            figures.ri_bars(comparison, metric, os.path.join(args.out, f"ri_{metric}.png"))
    print(f"comparison written to {args.out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    payloads = [harness.load_report(d) for d in args.runs]
    frozen = harness.load_report(args.pretrained)
    oracle = harness.load_report(args.oracle)
    comparison = harness.compare_runs(payloads, frozen, oracle)
    harness.save_comparison(comparison, args.out)
    if not args.no_figures:
        for metric in ("nll", "auc"):
            figures.ri_bars(comparison, metric, os.path.join(args.out, f"ri_{metric}.png"))
    print(f"comparison written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaylab",
        description="Delayed-feedback conversion modeling laboratory on synthetic streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic click log")
    _add_gen_args(p_gen)
    p_gen.add_argument("--out", required=True, help="output path (.gz supported)")
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="stream one arm and save its report")
    _add_gen_args(p_run)
    _add_train_args(p_run)
    p_run.add_argument("--pipeline", required=True, choices=[m.value for m in Mechanism])
    p_run.add_argument("--loss", default="vanilla", choices=list(harness.LOSS_NAMES))
    p_run.add_argument("--z", default=None, choices=list(harness.Z_SOURCES))
    p_run.add_argument("--freeze", action="store_true", help="no updates after pretraining")
    p_run.add_argument("--name", default=None, help="override the arm name")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_grid = sub.add_parser("grid", help="run several arms on one shared stream")
    _add_gen_args(p_grid)
    _add_train_args(p_grid)
    p_grid.add_argument("--arms", default=DEFAULT_ARMS, help="comma list: pipeline:loss[:z] or frozen")
    p_grid.add_argument("--out", required=True, help="output directory")
    p_grid.add_argument("--no-figures", action="store_true")
    p_grid.set_defaults(func=_cmd_grid)

    p_cmp = sub.add_parser("compare", help="recompute a comparison from run directories")
    p_cmp.add_argument("--runs", nargs="+", required=True, help="method run directories")
    p_cmp.add_argument("--pretrained", required=True, help="frozen-arm run directory")
    p_cmp.add_argument("--oracle", required=True, help="oracle-arm run directory")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.add_argument("--no-figures", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ingest.ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
