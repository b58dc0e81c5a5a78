"""Streaming experiment harness.

A run pretrains on the first fraction of a generated click log, then
walks the remaining hours in order: train on the ingestion rows of hour
h (in ingestion order, no shuffling), evaluate on the true labels of
the clicks from hour h+1, aggregate with count weights at the end.

Leak rule at the pretrain/stream split: only what is observable before
the split enters pretraining.  The main predictor pretrains on clicks
with label 1 only when the conversion completed before the split; the
auxiliary heads and the two-head net pretrain on the pre-split portion
of their own ingestion streams, so replays that land after the split
are unseen.

Auxiliary heads are co-trained during streaming.  Within a batch every
estimate (main prediction, replay-mass head, stay-negative head) is
computed from the pre-update parameters, then all models step; no model
sees another model's same-batch update.
"""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import losses, metrics, model as mdl
from .core import ConfigError, SampleKind, WindowConfig
from .pipelines import (
    Mechanism,
    StreamTable,
    TASK_INW,
    TASK_OUTW,
    build_bidefuse_table,
    build_stream_table,
)
from .synthgen import ClickTable, GenConfig, GroundTruthModel, build_model, generate_table, sigmoid

# training objectives; names that echo an ingestion policy are that
# policy's ratio-weighted loss, the *-defuse family is the
# counterfactual correction, fnc is plain training plus a serving fix
LOSS_NAMES = (
    "ideal",
    "vanilla",
    "fnw",
    "fnc",
    "esdfm",
    "defer",
    "defuse",
    "fnw-defuse",
    "defer-defuse",
    "bi-defuse",
)
Z_SOURCES = ("oracle", "z1", "z2")

# plain cross entropy on observed labels / detached-ratio reweighting /
# hidden-positive corrected / decomposed two-head
_LOSS_FAMILY = {
    "ideal": "ce",
    "vanilla": "ce",
    "fnc": "ce",
    "fnw": "ratio",
    "esdfm": "ratio",
    "defer": "ratio",
    "defuse": "corrected",
    "fnw-defuse": "corrected",
    "defer-defuse": "corrected",
    "bi-defuse": "bi",
}

# pipelines each loss accepts (None means any)
_LOSS_MECHANISM = {
    "ideal": (Mechanism.ORACLE,),
    "vanilla": None,
    "fnw": (Mechanism.FNW,),
    "fnc": (Mechanism.FNW,),
    "esdfm": (Mechanism.ESDFM,),
    "defer": (Mechanism.DEFER,),
    "defuse": (Mechanism.ESDFM,),
    "fnw-defuse": (Mechanism.FNW,),
    "defer-defuse": (Mechanism.DEFER,),
    "bi-defuse": (Mechanism.FNW,),
}

_NEEDS_Z = ("defuse", "fnw-defuse", "defer-defuse", "bi-defuse")

REPORT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by every arm of a comparison."""

    hidden: Tuple[int, ...] = ()
    lr: float = 0.02
    weight_decay: float = 1e-4
    batch_size: int = 512
    pretrain_epochs: int = 2
    pretrain_fraction: float = 0.5
    seed: int = 0
    bi_hidden: int = 8

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0:
            raise ConfigError("lr and batch_size must be positive")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs must be >= 0")
        if not 0.0 < self.pretrain_fraction < 1.0:
            raise ConfigError("pretrain_fraction must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if self.bi_hidden < 1:
            raise ConfigError("bi_hidden must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    gen: GenConfig
    mechanism: Mechanism
    loss: str = "vanilla"
    z_source: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    freeze: bool = False
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        validate_experiment(self)

    @property
    def arm_name(self) -> str:
        if self.name:
            return self.name
        if self.freeze:
            return "pretrained"
        parts = [self.mechanism.value, self.loss]
        if self.z_source:
            parts.append(self.z_source)
        return "+".join(parts)


def validate_experiment(cfg: ExperimentConfig) -> None:
    if cfg.loss not in LOSS_NAMES:
        raise ConfigError(f"unknown loss {cfg.loss!r}, expected one of {LOSS_NAMES}")
    if cfg.z_source is not None and cfg.z_source not in Z_SOURCES:
        raise ConfigError(f"unknown z source {cfg.z_source!r}, expected one of {Z_SOURCES}")
    allowed = _LOSS_MECHANISM[cfg.loss]
    if allowed is not None and cfg.mechanism not in allowed:
        raise ConfigError(
            f"loss {cfg.loss!r} runs on pipeline {[m.value for m in allowed]}, "
            f"got {cfg.mechanism.value!r}"
        )
    if cfg.loss in _NEEDS_Z:
        if cfg.z_source is None:
            raise ConfigError(f"loss {cfg.loss!r} needs a z source")
        if cfg.loss == "bi-defuse" and cfg.z_source == "z1":
            raise ConfigError("the two-head arm supports z sources 'oracle' and 'z2'")
    elif cfg.z_source is not None:
        raise ConfigError(f"loss {cfg.loss!r} does not take a z source")
    n_hours = total_hours(cfg.gen)
    if split_hour(cfg.train, n_hours) > n_hours - 2:
        raise ConfigError(
            f"pretrain_fraction={cfg.train.pretrain_fraction} leaves no train/test "
            f"hour pair in a {n_hours}-hour stream"
        )


def total_hours(gen: GenConfig) -> int:
    return -(-gen.n_clicks // gen.clicks_per_hour)


def split_hour(train: TrainConfig, n_hours: int) -> int:
    """First streaming hour; everything before it is pretraining data."""
    return max(1, int(round(train.pretrain_fraction * n_hours)))


# --- ground-truth masses -------------------------------------------------------


def click_masses(truth: GroundTruthModel, windows: WindowConfig, table: ClickTable) -> Dict[str, np.ndarray]:
    """Per-click conversion masses implied by the generator parameters."""
    theta = np.asarray(truth.theta_star)
    p_raw = sigmoid(table.x @ theta)
    if truth.delay_multipliers is not None:
        mult = np.asarray(truth.delay_multipliers)[table.ctx]
    else:
        mult = np.ones(table.n)
    f_wo = truth.delay_law.cdf(mult * windows.w_o)
    f_wa = truth.delay_law.cdf(mult * windows.w_a)
    p1 = p_raw * f_wa
    dp = p_raw * (f_wa - f_wo)
    return {"p1": p1, "p0": 1.0 - p1, "dp": dp, "p_win": p1 - dp}


def oracle_z(mechanism: Mechanism, masses: Dict[str, np.ndarray], rows: np.ndarray) -> np.ndarray:
    """Exact hidden-positive probability for observed-negative rows."""
    p0 = masses["p0"][rows]
    dp = masses["dp"][rows]
    p1 = masses["p1"][rows]
    if mechanism is Mechanism.FNW:
        return losses.z_oracle(p1, p0)
    if mechanism is Mechanism.ESDFM:
        return losses.z_oracle(dp, p0)
    if mechanism is Mechanism.DEFER:
        return losses.z_oracle(dp, 2.0 * p0)
    raise ConfigError(f"no oracle z for mechanism {mechanism.value!r}")


def dp_mass_from_head(mechanism: Mechanism, g: np.ndarray) -> np.ndarray:
    """Invert the replay-head output into a per-click replay mass.

    The head is trained row-wise on the dup stream, where replays are a
    g = dp/(base + dp) fraction; the dual-ingestion policy carries two
    base rows per click, hence its factor 2.
    """
    k = 2.0 if mechanism is Mechanism.DEFER else 1.0
    g = np.clip(np.asarray(g, dtype=np.float64), 0.0, 1.0 - 1e-9)
    return np.clip(k * g / (1.0 - g), 0.0, 1.0)


# --- model bundle --------------------------------------------------------------


@dataclass
class ModelBundle:
    """Everything one arm trains: the predictor plus auxiliary heads."""

    main: object
    opt_main: mdl.AdamState
    aux_dp: mdl.MlpParams
    opt_dp: mdl.AdamState
    aux_rn: mdl.MlpParams
    opt_rn: mdl.AdamState
    is_bi: bool


def _init_bundle(cfg: ExperimentConfig, dim: int, rng: np.random.Generator) -> ModelBundle:
    if cfg.loss == "bi-defuse":
        main = mdl.init_bidefuse(dim, cfg.train.bi_hidden, rng)
    else:
        main = mdl.init_mlp(dim, cfg.train.hidden, rng)
    aux_dp = mdl.init_mlp(dim)
    aux_rn = mdl.init_mlp(dim)
    return ModelBundle(
        main=main,
        opt_main=mdl.adam_init(main),
        aux_dp=aux_dp,
        opt_dp=mdl.adam_init(aux_dp),
        aux_rn=aux_rn,
        opt_rn=mdl.adam_init(aux_rn),
        is_bi=cfg.loss == "bi-defuse",
    )


def _adam_kwargs(train: TrainConfig) -> dict:
    return {"lr": train.lr, "weight_decay": train.weight_decay}


def _shuffled_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _ordered_batches(idx: np.ndarray, batch_size: int):
    # streaming updates follow ingestion order
    for start in range(0, len(idx), batch_size):
        yield idx[start : start + batch_size]


# --- pretraining ---------------------------------------------------------------


def _pretrain_main(
    cfg: ExperimentConfig, table: ClickTable, split: int, bundle: ModelBundle, rng: np.random.Generator
) -> None:
    pre = table.click_time < split
    x = table.x[pre]
    t0 = table.click_time[pre]
    d = table.delay[pre]
    known = (d >= 0) & (t0 + d < split)
    y = known.astype(np.float64)
    for _ in range(cfg.train.pretrain_epochs):
        for idx in _shuffled_batches(len(y), cfg.train.batch_size, rng):
            a, b = losses.ce_coeffs(y[idx])
            _, g = mdl.loss_and_grad(bundle.main, x[idx], a, b)
            mdl.adam_step(bundle.main, g, bundle.opt_main, **_adam_kwargs(cfg.train))


def _pretrain_bi(
    cfg: ExperimentConfig, table: ClickTable, split: int, bundle: ModelBundle, rng: np.random.Generator
) -> None:
    pre_rows = table.click_time < split
    sub = ClickTable(
        click_time=table.click_time[pre_rows],
        delay=table.delay[pre_rows],
        ctx=table.ctx[pre_rows],
        x=table.x[pre_rows],
    )
    bi = build_bidefuse_table(sub, cfg.gen.windows)
    seen = bi.t < split
    rows = bi.click_row[seen]
    task = bi.task[seen]
    label = bi.label[seen].astype(np.float64)
    x_all = sub.x
    for _ in range(cfg.train.pretrain_epochs):
        for idx in _shuffled_batches(len(rows), cfg.train.batch_size, rng):
            x = x_all[rows[idx]]
            t = task[idx]
            y = label[idx]
            # plain ce on both tasks during pretrain
            a = y.copy()
            b = 1.0 - y
            _, g = mdl.bidefuse_loss_and_grad(bundle.main, x, t, a, b)
            mdl.adam_step(bundle.main, g, bundle.opt_main, **_adam_kwargs(cfg.train))
            _step_aux_from_rows(cfg, bundle, x, None, t, y)


def _pretrain_aux(
    cfg: ExperimentConfig, table: ClickTable, split: int, bundle: ModelBundle, rng: np.random.Generator
) -> None:
    if bundle.is_bi:
        return
    pre_rows = table.click_time < split
    sub = ClickTable(
        click_time=table.click_time[pre_rows],
        delay=table.delay[pre_rows],
        ctx=table.ctx[pre_rows],
        x=table.x[pre_rows],
    )
    stream = build_stream_table(sub, cfg.mechanism, cfg.gen.windows)
    seen = stream.t < split
    rows = stream.click_row[seen]
    v = stream.v[seen]
    kind = stream.kind[seen]
    x_all = sub.x
    for _ in range(cfg.train.pretrain_epochs):
        for idx in _shuffled_batches(len(rows), cfg.train.batch_size, rng):
            _step_aux(cfg, bundle, x_all[rows[idx]], v[idx], kind[idx])


def _step_aux(cfg: ExperimentConfig, bundle: ModelBundle, x, v, kind) -> None:
    """One CE step for each auxiliary head on its own row labels."""
    y_dp = (kind == SampleKind.DP).astype(np.float64)
    a, b = losses.ce_coeffs(y_dp)
    _, g = mdl.loss_and_grad(bundle.aux_dp, x, a, b)
    mdl.adam_step(bundle.aux_dp, g, bundle.opt_dp, **_adam_kwargs(cfg.train))
    neg_or_dp = (v == 0) | (kind == SampleKind.DP)
    if np.any(neg_or_dp):
        y_rn = (v[neg_or_dp] == 0).astype(np.float64)
        a, b = losses.ce_coeffs(y_rn)
        _, g = mdl.loss_and_grad(bundle.aux_rn, x[neg_or_dp], a, b)
        mdl.adam_step(bundle.aux_rn, g, bundle.opt_rn, **_adam_kwargs(cfg.train))


def _step_aux_from_rows(cfg, bundle: ModelBundle, x, _unused, task, label) -> None:
    """Replay-mass head for the two-head arm, trained on out-of-window rows."""
    out = task == TASK_OUTW
    if not np.any(out):
        return
    y = label[out]
    a, b = losses.ce_coeffs(y)
    _, g = mdl.loss_and_grad(bundle.aux_dp, x[out], a, b)
    mdl.adam_step(bundle.aux_dp, g, bundle.opt_dp, **_adam_kwargs(cfg.train))


# --- streaming updates ----------------------------------------------------------


def _z_for_batch(
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    x: np.ndarray,
    rows: np.ndarray,
    masses: Optional[Dict[str, np.ndarray]],
    p_hat: np.ndarray,
    dp_hat: np.ndarray,
) -> np.ndarray:
    if cfg.z_source == "oracle":
        return oracle_z(cfg.mechanism, masses, rows)
    if cfg.z_source == "z1":
        stay = mdl.predict(bundle.aux_rn, x)
        return losses.z_from_survival(stay)
    return losses.z_from_masses(dp_hat, p_hat)


def _train_batch(
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    table: ClickTable,
    stream: StreamTable,
    idx: np.ndarray,
    masses: Optional[Dict[str, np.ndarray]],
) -> None:
    rows = stream.click_row[idx]
    x = table.x[rows]
    v = stream.v[idx]
    kind = stream.kind[idx]
    family = _LOSS_FAMILY[cfg.loss]
    # all correction inputs come from pre-update parameters
    p_hat = mdl.predict(bundle.main, x)
    g_dp = mdl.predict(bundle.aux_dp, x)
    dp_hat = dp_mass_from_head(cfg.mechanism, g_dp)
    if family == "ce":
        a, b = losses.ce_coeffs(v.astype(np.float64))
    elif family == "ratio":
        dp_arg = dp_hat if cfg.mechanism in (Mechanism.ESDFM, Mechanism.DEFER) else None
        a, b = losses.baseline_coeffs(cfg.mechanism, v, p_hat, dp_mass=dp_arg)
    elif family == "corrected":
        z = _z_for_batch(cfg, bundle, x, rows, masses, p_hat, dp_hat)
        a, b = losses.defuse_coeffs(
            cfg.mechanism, v, kind, z, dp_mass=dp_hat, cvr=p_hat
        )
    else:
        raise ConfigError(f"loss {cfg.loss!r} does not train on a single-head stream")
    _, g = mdl.loss_and_grad(bundle.main, x, a, b)
    mdl.adam_step(bundle.main, g, bundle.opt_main, **_adam_kwargs(cfg.train))
    _step_aux(cfg, bundle, x, v, kind)


def _train_batch_bi(
    cfg: ExperimentConfig,
    bundle: ModelBundle,
    table: ClickTable,
    bi,
    idx: np.ndarray,
    masses: Optional[Dict[str, np.ndarray]],
) -> None:
    rows = bi.click_row[idx]
    x = table.x[rows]
    task = bi.task[idx]
    label = bi.label[idx].astype(np.float64)
    _, p_out, _ = mdl.forward_bidefuse(bundle.main, x)
    g_dp = mdl.predict(bundle.aux_dp, x)
    dp_hat = dp_mass_from_head(Mechanism.FNW, g_dp)
    if cfg.z_source == "oracle":
        # base rows carry unit mass, so the conditional equals the replay mass
        z = masses["dp"][rows]
    else:
        z = losses.z_from_masses(dp_hat, p_out)
    a, b = losses.bidefuse_coeffs(task, label, z, dp_hat)
    _, g = mdl.bidefuse_loss_and_grad(bundle.main, x, task, a, b)
    mdl.adam_step(bundle.main, g, bundle.opt_main, **_adam_kwargs(cfg.train))
    _step_aux_from_rows(cfg, bundle, x, None, task, label)


def _predict_eval(cfg: ExperimentConfig, bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    if bundle.is_bi:
        return mdl.predict_bidefuse(bundle.main, x)
    p = mdl.predict(bundle.main, x)
    if cfg.loss == "fnc":
        # the zero-window stream trains toward p/(1+p); invert at serving
        p = np.clip(p / (1.0 - p), mdl.P_EPS, 1.0 - mdl.P_EPS)
    return p


# --- run -------------------------------------------------------------------------


@dataclass
class StreamReport:
    name: str
    config: dict
    hours: List[dict]
    aggregate: dict
    format_version: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "hours": self.hours,
            "aggregate": self.aggregate,
            "format_version": self.format_version,
        }


def config_echo(cfg: ExperimentConfig) -> dict:
    gen = cfg.gen
    return {
        "gen": {
            "n_clicks": gen.n_clicks,
            "clicks_per_hour": gen.clicks_per_hour,
            "w_o": gen.windows.w_o,
            "w_a": gen.windows.w_a,
            "seed": gen.seed,
            "contexts": gen.contexts,
            "cvr_range": list(gen.cvr_range),
            "delay_multipliers": list(gen.delay_multipliers) if gen.delay_multipliers else None,
        },
        "mechanism": cfg.mechanism.value,
        "loss": cfg.loss,
        "z_source": cfg.z_source,
        "train": {
            "hidden": list(cfg.train.hidden),
            "lr": cfg.train.lr,
            "weight_decay": cfg.train.weight_decay,
            "batch_size": cfg.train.batch_size,
            "pretrain_epochs": cfg.train.pretrain_epochs,
            "pretrain_fraction": cfg.train.pretrain_fraction,
            "seed": cfg.train.seed,
            "bi_hidden": cfg.train.bi_hidden,
        },
        "freeze": cfg.freeze,
    }


def stream_run(
    cfg: ExperimentConfig,
    table: Optional[ClickTable] = None,
    truth: Optional[GroundTruthModel] = None,
) -> StreamReport:
    """Run one arm end to end and return its report."""
    if table is None:
        table = generate_table(cfg.gen)
    if truth is None:
        truth = build_model(cfg.gen)
    windows = cfg.gen.windows
    n_hours = total_hours(cfg.gen)
    first_hour = split_hour(cfg.train, n_hours)
    split = first_hour * 3600

    rng = np.random.default_rng(np.random.SeedSequence([cfg.train.seed, 0x6861726E]))
    bundle = _init_bundle(cfg, table.dim, rng)
    if bundle.is_bi:
        _pretrain_bi(cfg, table, split, bundle, rng)
    else:
        _pretrain_main(cfg, table, split, bundle, rng)
        _pretrain_aux(cfg, table, split, bundle, rng)

    needs_masses = cfg.z_source == "oracle"
    masses = click_masses(truth, windows, table) if needs_masses else None

    if bundle.is_bi:
        stream = build_bidefuse_table(table, windows)
    else:
        stream = build_stream_table(table, cfg.mechanism, windows)

    hours: List[dict] = []
    reports: List[metrics.MetricsReport] = []
    for h in range(first_hour, n_hours - 1):
        lo, hi = h * 3600, (h + 1) * 3600
        if not cfg.freeze:
            in_hour = np.nonzero((stream.t >= lo) & (stream.t < hi))[0]
            for idx in _ordered_batches(in_hour, cfg.train.batch_size):
                if bundle.is_bi:
                    _train_batch_bi(cfg, bundle, table, stream, idx, masses)
                else:
                    _train_batch(cfg, bundle, table, stream, idx, masses)
        test = (table.click_time >= hi) & (table.click_time < hi + 3600)
        x_test = table.x[test]
        y_test = (table.delay[test] >= 0).astype(np.int64)
        p = _predict_eval(cfg, bundle, x_test)
        rep = metrics.evaluate(p, y_test)
        reports.append(rep)
        row = {"hour": h, "test_hour": h + 1}
        row.update(rep.as_dict())
        hours.append(row)

    agg = metrics.aggregate(reports) if reports else metrics.MetricsReport(None, None, None, 0)
    report = StreamReport(
        name=cfg.arm_name,
        config=config_echo(cfg),
        hours=hours,
        aggregate=agg.as_dict(),
    )
    report.bundle = bundle  # transient handle for checkpointing; not serialized
    return report


# --- persistence -----------------------------------------------------------------


def save_report(report: StreamReport, out_dir: str, checkpoint: bool = True) -> None:
    """Write report.json (byte stable), report.csv, meta.json, checkpoints/."""
    os.makedirs(out_dir, exist_ok=True)
    payload = report.to_dict()
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "test_hour", "count", "auc", "pr_auc", "nll"])
        for row in report.hours:
            writer.writerow(_csv_row(row))
        agg = dict(report.aggregate)
        agg["hour"] = "all"
        agg["test_hour"] = ""
        writer.writerow(_csv_row(agg))
    # wall clock and environment go in the sidecar so report.json stays
    # byte-identical across reruns of the same config
    meta = {
        "created_unix": time.time(),
        "numpy": np.__version__,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    bundle = getattr(report, "bundle", None)
    if checkpoint and bundle is not None:
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
        mdl.save_checkpoint(os.path.join(ckpt_dir, "final.json"), bundle.main)
        if not bundle.is_bi:
            mdl.save_checkpoint(os.path.join(ckpt_dir, "aux_dp.json"), bundle.aux_dp)
            mdl.save_checkpoint(os.path.join(ckpt_dir, "aux_rn.json"), bundle.aux_rn)


def _csv_row(row: dict) -> list:
    def fmt(v):
        return "" if v is None else v

    return [
        fmt(row.get("hour")),
        fmt(row.get("test_hour")),
        fmt(row.get("count")),
        fmt(row.get("auc")),
        fmt(row.get("pr_auc")),
        fmt(row.get("nll")),
    ]


def load_report(path: str) -> dict:
    with open(os.path.join(path, "report.json"), encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != REPORT_VERSION:
        raise ConfigError("unsupported report version")
    return payload


# --- comparisons -------------------------------------------------------------------


def compare_runs(
    reports: Sequence[dict], pretrained_report: dict, oracle_report: dict
) -> dict:
    """Relative-improvement table anchored at the frozen and oracle arms.

    Refuses to compare runs whose generator or optimizer settings differ;
    a comparison is only meaningful on the same stream.  The anchors get
    improvement values of exactly 0 and 100.
    """
    if not reports:
        raise ConfigError("need at least one method arm to compare")
    if not pretrained_report["config"]["freeze"]:
        raise ConfigError("the pretrained anchor must be a frozen arm")
    if oracle_report["config"]["mechanism"] != "oracle" or oracle_report["config"]["freeze"]:
        raise ConfigError("the oracle anchor must be a trained oracle-pipeline arm")
    every = [oracle_report, pretrained_report, *reports]
    base = {k: every[0]["config"][k] for k in ("gen", "train")}
    for rep in every[1:]:
        got = {k: rep["config"][k] for k in ("gen", "train")}
        if got != base:
            raise ConfigError(
                f"run {rep['name']!r} was produced under different settings; "
                "regenerate the arms on a shared stream before comparing"
            )
    arms = []
    for rep in every:
        entry = {"name": rep["name"]}
        for name in ("auc", "pr_auc", "nll"):
            m = rep["aggregate"][name]
            entry[name] = m
            o = oracle_report["aggregate"][name]
            p = pretrained_report["aggregate"][name]
            entry[f"ri_{name}"] = (
                metrics.relative_improvement(m, p, o, higher_is_better=name != "nll")
                if None not in (m, o, p)
                else None
            )
        arms.append(entry)
    return {
        "oracle": oracle_report["name"],
        "pretrained": pretrained_report["name"],
        "arms": arms,
        "format_version": REPORT_VERSION,
    }


def save_comparison(comparison: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "comparison.json"), "w", encoding="utf-8") as fh:
        json.dump(comparison, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "comparison.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        cols = ["name", "auc", "ri_auc", "pr_auc", "ri_pr_auc", "nll", "ri_nll"]
        writer.writerow(cols)
        for arm in comparison["arms"]:
            writer.writerow(["" if arm.get(c) is None else arm.get(c) for c in cols])
