"""Observed-stream construction for each training data pipeline.

Each mechanism decides when a click enters the training stream, with
which observed label, and whether it re-enters later (sample
duplication).  Streams are globally ordered by ingestion time with ties
broken by click id then kind, so training consumes them causally.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence

import numpy as np

from .core import ClickEvent, ObservedSample, SampleKind, WindowConfig
from .synthgen import ClickTable

logger = logging.getLogger(__name__)


class Mechanism(str, Enum):
    """Training-stream construction schemes."""

    ORACLE = "oracle"  # true labels at w_o; the upper anchor
    VANILLA = "vanilla"  # window labels, no duplication
    VANILLA_WIN = "vanilla-win"  # window labels plus conversion-time replays
    FNW = "fnw"  # zero window: everything negative first, replay on conversion
    ESDFM = "esdfm"  # window labels plus replays of out-of-window converters
    DEFER = "defer"  # ESDFM plus re-ingestion with final labels at w_a


@dataclass
class StreamTable:
    """Columnar observed stream: rows index into the source ClickTable."""

    click_row: np.ndarray  # int64 index into the ClickTable
    t: np.ndarray  # int64 ingestion time
    v: np.ndarray  # int8 observed label
    kind: np.ndarray  # int8 SampleKind value

    @property
    def n(self) -> int:
        return int(self.t.shape[0])


def _sorted_stream(parts: List[tuple]) -> StreamTable:
    row = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    t = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    v = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0, dtype=np.int8)
    kind = np.concatenate([p[3] for p in parts]) if parts else np.zeros(0, dtype=np.int8)
    order = np.lexsort((kind, row, t))
    return StreamTable(row[order], t[order], v[order], kind[order])


def build_stream_table(
    table: ClickTable, mechanism: Mechanism, windows: WindowConfig
) -> StreamTable:
    """Vectorized observed-stream construction over a ClickTable."""
    n = table.n
    rows = np.arange(n, dtype=np.int64)
    t0 = table.click_time
    d = table.delay
    conv = d >= 0
    ip = conv & (d <= windows.w_o)
    fn = conv & (d > windows.w_o)
    rn = ~conv

    def base(ingest_at: np.ndarray, labels: np.ndarray, kinds: np.ndarray) -> tuple:
        return rows, ingest_at, labels.astype(np.int8), kinds.astype(np.int8)

    kind_win = np.where(ip, SampleKind.IP, np.where(fn, SampleKind.FN, SampleKind.RN))

    if mechanism is Mechanism.ORACLE:
        kind_true = np.where(conv, SampleKind.IP, SampleKind.RN)
        parts = [base(t0 + windows.w_o, conv, kind_true)]
    elif mechanism is Mechanism.VANILLA:
        parts = [base(t0 + windows.w_o, ip, kind_win)]
    elif mechanism is Mechanism.VANILLA_WIN:
        parts = [
            base(t0 + windows.w_o, ip, kind_win),
            _replays(rows, t0, d, fn),
        ]
    elif mechanism is Mechanism.FNW:
        if windows.w_o != 0:
            logger.warning(
                "fnw pipeline forces the observation window to 0 (configured w_o=%d)",
                windows.w_o,
            )
        kind0 = np.where(conv, SampleKind.FN, SampleKind.RN)
        parts = [
            base(t0.copy(), np.zeros(n, dtype=bool), kind0),
            _replays(rows, t0, d, conv),
        ]
    elif mechanism is Mechanism.ESDFM:
        parts = [
            base(t0 + windows.w_o, ip, kind_win),
            _replays(rows, t0, d, fn),
        ]
    elif mechanism is Mechanism.DEFER:
        dup_kind = np.where(ip[ip | rn], SampleKind.IP, SampleKind.RN)
        dup_mask = ip | rn
        parts = [
            base(t0 + windows.w_o, ip, kind_win),
            _replays(rows, t0, d, fn),
            (
                rows[dup_mask],
                t0[dup_mask] + windows.w_a,
                ip[dup_mask].astype(np.int8),
                dup_kind.astype(np.int8),
            ),
        ]
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown mechanism {mechanism}")
    return _sorted_stream(parts)


def _replays(rows: np.ndarray, t0: np.ndarray, d: np.ndarray, mask: np.ndarray) -> tuple:
    return (
        rows[mask],
        t0[mask] + d[mask],
        np.ones(int(mask.sum()), dtype=np.int8),
        np.full(int(mask.sum()), SampleKind.DP, dtype=np.int8),
    )


def build_observed_stream(
    clicks: Sequence[ClickEvent], mechanism: Mechanism, windows: WindowConfig
) -> List[ObservedSample]:
    """Observed training stream for a mechanism, ordered by ingestion time."""
    click_time = np.array([c.click_time for c in clicks], dtype=np.int64)
    delay = np.array(
        [-1 if c.conversion_delay is None else c.conversion_delay for c in clicks],
        dtype=np.int64,
    )
    shell = ClickTable(
        click_time=click_time,
        delay=delay,
        ctx=np.full(len(clicks), -1, dtype=np.int32),
        x=np.zeros((len(clicks), 0)),
    )
    st = build_stream_table(shell, mechanism, windows)
    return [
        ObservedSample(
            click_id=clicks[int(r)].click_id,
            ingestion_time=int(t),
            observed_label=int(v),
            kind=SampleKind(int(k)),
            features=clicks[int(r)].features,
        )
        for r, t, v, k in zip(st.click_row, st.t, st.v, st.kind)
    ]


def ingestion_count(mechanism: Mechanism, click: ClickEvent, windows: WindowConfig) -> int:
    """How many times one click enters a mechanism's training stream."""
    d = click.conversion_delay
    is_fn = d is not None and d > windows.w_o
    if mechanism in (Mechanism.ORACLE, Mechanism.VANILLA):
        return 1
    if mechanism in (Mechanism.VANILLA_WIN, Mechanism.ESDFM):
        return 2 if is_fn else 1
    if mechanism is Mechanism.FNW:
        return 2 if d is not None else 1
    if mechanism is Mechanism.DEFER:
        return 2
    raise ValueError(f"unknown mechanism {mechanism}")  # pragma: no cover


# Bi-task stream: the in-window head trains on exact labels at w_o, the
# delayed head on a zero-window duplicated stream (base negatives at the
# click, replays at out-of-window conversions).
TASK_INW = 0
TASK_OUTW = 1


@dataclass
class BiStreamTable:
    """Columnar dual-task stream for the two-head decomposition."""

    click_row: np.ndarray
    t: np.ndarray
    task: np.ndarray  # int8, TASK_INW or TASK_OUTW
    label: np.ndarray  # int8

    @property
    def n(self) -> int:
        return int(self.t.shape[0])


def build_bidefuse_table(table: ClickTable, windows: WindowConfig) -> BiStreamTable:
    n = table.n
    rows = np.arange(n, dtype=np.int64)
    t0 = table.click_time
    d = table.delay
    ip = (d >= 0) & (d <= windows.w_o)
    outw = (d >= 0) & (d > windows.w_o)

    row = np.concatenate([rows, rows, rows[outw]])
    t = np.concatenate([t0 + windows.w_o, t0, t0[outw] + d[outw]])
    task = np.concatenate(
        [
            np.full(n, TASK_INW, dtype=np.int8),
            np.full(n, TASK_OUTW, dtype=np.int8),
            np.full(int(outw.sum()), TASK_OUTW, dtype=np.int8),
        ]
    )
    label = np.concatenate(
        [
            ip.astype(np.int8),
            np.zeros(n, dtype=np.int8),
            np.ones(int(outw.sum()), dtype=np.int8),
        ]
    )
    order = np.lexsort((task, row, t))
    return BiStreamTable(row[order], t[order], task[order], label[order])
