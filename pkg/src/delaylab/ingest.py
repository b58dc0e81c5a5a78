"""Tabular click-log ingestion shared by synthetic and real data.

One line per click: click timestamp, conversion timestamp (empty when the
click never converted), then numeric fields, then categorical fields,
tab-delimited.  Categorical tokens are feature-hashed with a per-column
salt; numeric fields are log1p-transformed, bucketized by frozen
quantiles, and hashed like categoricals.  Synthetic streams round-trip
exactly through the "index"/"raw" schema modes.
"""
from __future__ import annotations

import gzip
import hashlib
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import ClickEvent, ConfigError, FeatureVector, WindowConfig

logger = logging.getLogger(__name__)

N_BUCKETS = 64  # quantile buckets per numeric column
MISSING_TOKEN = "__missing__"


class ParseError(ValueError):
    """One malformed log line; counted by read_log, never fatal."""


@dataclass(frozen=True)
class LogSchema:
    """Field layout of a click log.

    categorical_mode "hash" feature-hashes tokens (real data); "index"
    reads the single categorical token as a one-hot index, which keeps
    synthetic streams exactly round-trippable.  numeric_mode "bucketize"
    sends numerics through the quantile bucketizer; "raw" keeps them as
    dense values at their column index.
    """

    n_numeric: int = 8
    n_categorical: int = 9
    hash_dim: int = 1 << 16
    delimiter: str = "\t"
    categorical_mode: str = "hash"
    numeric_mode: str = "bucketize"

    def __post_init__(self) -> None:
        if self.n_numeric < 0 or self.n_categorical < 0:
            raise ConfigError("field counts must be non-negative")
        uses_hashing = (self.categorical_mode == "hash" and self.n_categorical > 0) or (
            self.numeric_mode == "bucketize" and self.n_numeric > 0
        )
        if self.hash_dim <= 0:
            raise ConfigError("hash_dim must be positive")
        if uses_hashing and (self.hash_dim & (self.hash_dim - 1)) != 0:
            raise ConfigError("hash_dim must be a power of two when hashing")
        if self.categorical_mode not in ("hash", "index"):
            raise ConfigError(f"unknown categorical_mode {self.categorical_mode!r}")
        if self.numeric_mode not in ("bucketize", "raw"):
            raise ConfigError(f"unknown numeric_mode {self.numeric_mode!r}")
        if self.categorical_mode == "index" and (
            self.n_numeric != 0 or self.n_categorical != 1
        ):
            raise ConfigError("index mode expects exactly one categorical field")
        if self.numeric_mode == "raw" and self.n_categorical != 0:
            raise ConfigError("raw numeric mode cannot mix with categoricals")

    @property
    def dim(self) -> int:
        return self.n_numeric if self.numeric_mode == "raw" else self.hash_dim

    @property
    def n_fields(self) -> int:
        return 2 + self.n_numeric + self.n_categorical


def hash_feature(column: int, token: str, hash_dim: int) -> int:
    """Stable 64-bit hash of a token, salted by its column index.

    blake2b keyed by the column keeps the mapping reproducible across
    platforms and processes; the power-of-two hash_dim turns the digest
    into an index with a mask.
    """
    if hash_dim <= 0 or (hash_dim & (hash_dim - 1)) != 0:
        raise ConfigError("hash_dim must be a positive power of two")
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=column.to_bytes(8, "little")
    ).digest()
    return int.from_bytes(digest, "little") & (hash_dim - 1)


@dataclass
class QuantileBucketizer:
    """Frozen per-column quantile edges over log1p-transformed numerics.

    Fit on the pretraining split only; streaming data reuses the frozen
    edges.  Negative raw values clamp to 0 before the transform.
    """

    edges: List[np.ndarray] = field(default_factory=list)

    @staticmethod
    def fit(columns: Sequence[Sequence[float]]) -> "QuantileBucketizer":
        edges = []
        qs = np.arange(1, N_BUCKETS) / N_BUCKETS
        for col in columns:
            vals = np.log1p(np.maximum(np.asarray(list(col), dtype=np.float64), 0.0))
            vals = vals[np.isfinite(vals)]
            edges.append(np.quantile(vals, qs) if vals.size else np.zeros(N_BUCKETS - 1))
        return QuantileBucketizer(edges=edges)

    def bucket(self, column: int, value: float) -> int:
        v = np.log1p(max(value, 0.0))
        return int(np.searchsorted(self.edges[column], v, side="right"))


def _parse_ts(token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError as exc:
        raise ParseError(f"bad {what} timestamp {token!r}") from exc


def parse_line(
    line: str,
    schema: LogSchema,
    click_id: int,
    bucketizer: Optional[QuantileBucketizer] = None,
    windows: Optional[WindowConfig] = None,
) -> ClickEvent:
    """Parse one log line into a ClickEvent.

    Raises ParseError on malformed lines: wrong field count, unreadable
    timestamps, or a conversion earlier than its click.  When windows is
    given, delays at or past w_a canonicalize to no-conversion.
    """
    fields = line.rstrip("\n").split(schema.delimiter)
    if len(fields) != schema.n_fields:
        raise ParseError(
            f"expected {schema.n_fields} fields, got {len(fields)}"
        )
    click_ts = _parse_ts(fields[0], "click")
    delay: Optional[int] = None
    if fields[1] != "":
        conv_ts = _parse_ts(fields[1], "conversion")
        if conv_ts < click_ts:
            raise ParseError("conversion precedes click")
        delay = conv_ts - click_ts
    if windows is not None and delay is not None and delay >= windows.w_a:
        delay = None

    numeric = fields[2 : 2 + schema.n_numeric]
    categorical = fields[2 + schema.n_numeric :]

    indices: List[int] = []
    values: List[float] = []
    if schema.numeric_mode == "raw":
        for col, token in enumerate(numeric):
            try:
                values.append(float(token))
            except ValueError as exc:
                raise ParseError(f"bad numeric field {token!r}") from exc
            indices.append(col)
    else:
        for col, token in enumerate(numeric):
            if token == "":
                indices.append(hash_feature(col, MISSING_TOKEN, schema.hash_dim))
            else:
                try:
                    v = float(token)
                except ValueError as exc:
                    raise ParseError(f"bad numeric field {token!r}") from exc
                if bucketizer is None:
                    raise ParseError("numeric field present but no bucketizer fitted")
                bucket = bucketizer.bucket(col, v)
                indices.append(hash_feature(col, f"b{bucket}", schema.hash_dim))
            values.append(1.0)

    if schema.categorical_mode == "index":
        token = categorical[0]
        try:
            idx = int(token)
        except ValueError as exc:
            raise ParseError(f"bad context index {token!r}") from exc
        if not (0 <= idx < schema.hash_dim):
            raise ParseError(f"context index {idx} out of range")
        indices.append(idx)
        values.append(1.0)
    else:
        for col, token in enumerate(categorical):
            salt_col = schema.n_numeric + col
            tok = token if token != "" else MISSING_TOKEN
            indices.append(hash_feature(salt_col, tok, schema.hash_dim))
            values.append(1.0)

    return ClickEvent(
        click_id=click_id,
        click_time=click_ts,
        conversion_delay=delay,
        features=FeatureVector(tuple(indices), tuple(values), schema.dim),
    )


def _open_text(path: str, mode: str) -> IO[str]:
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def read_log(
    path: str,
    schema: LogSchema,
    bucketizer: Optional[QuantileBucketizer] = None,
    windows: Optional[WindowConfig] = None,
) -> Tuple[List[ClickEvent], int]:
    """Read a log file; malformed lines are counted and logged, not fatal."""
    clicks: List[ClickEvent] = []
    rejected = 0
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh):
            if line.strip() == "":
                continue
            try:
                clicks.append(
                    parse_line(line, schema, click_id=len(clicks), bucketizer=bucketizer, windows=windows)
                )
            except ParseError as exc:
                rejected += 1
                logger.warning("rejected line %d of %s: %s", lineno + 1, path, exc)
    return clicks, rejected


def format_click(click: ClickEvent, schema: LogSchema) -> str:
    """Serialize one click back to its log line (index/raw schemas only)."""
    conv = "" if click.conversion_delay is None else str(click.click_time + click.conversion_delay)
    fields = [str(click.click_time), conv]
    if schema.numeric_mode == "raw":
        vals = {i: v for i, v in zip(click.features.indices, click.features.values)}
        fields.extend(repr(vals.get(col, 0.0)) for col in range(schema.n_numeric))
    if schema.categorical_mode == "index":
        fields.append(str(click.features.indices[0]))
    elif schema.n_categorical:
        raise ConfigError("hashed categorical features cannot be serialized back")
    return schema.delimiter.join(fields)


def write_log(clicks: Iterable[ClickEvent], path: str, schema: LogSchema) -> int:
    """Write clicks as log lines; gzip-compressed when path ends in .gz."""
    n = 0
    with _open_text(path, "w") as fh:
        for click in clicks:
            fh.write(format_click(click, schema) + "\n")
            n += 1
    return n


def one_hot_schema(n_contexts: int) -> LogSchema:
    """Schema for synthetic one-hot streams (exact round-trip)."""
    return LogSchema(
        n_numeric=0,
        n_categorical=1,
        hash_dim=n_contexts,
        categorical_mode="index",
        numeric_mode="bucketize",
    )
