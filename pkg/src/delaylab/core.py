"""Domain types for delayed-feedback conversion streams.

A click either never converts, converts inside the observation window
(an immediate positive), or converts after the window has closed (a fake
negative that later re-enters the stream as a delayed positive).  The
types here pin down that taxonomy; the pipelines module turns clicks
into observed training streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple


class ConfigError(ValueError):
    """Raised for inconsistent experiment or generator configuration."""


class DomainError(ValueError):
    """Raised when a numeric argument leaves its documented domain."""


class InvalidSampleError(ValueError):
    """Raised when a sample violates the observability contract."""


@dataclass(frozen=True)
class FeatureVector:
    """Sparse index/value feature representation with a fixed dimension."""

    indices: Tuple[int, ...]
    values: Tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.values):
            raise InvalidSampleError("indices and values must align")
        if any(i < 0 or i >= self.dim for i in self.indices):
            raise InvalidSampleError("feature index out of range")

    @staticmethod
    def one_hot(index: int, dim: int) -> "FeatureVector":
        return FeatureVector((index,), (1.0,), dim)


@dataclass(frozen=True)
class WindowConfig:
    """Observation window w_o and attribution window w_a, both in seconds."""

    w_o: int
    w_a: int

    def __post_init__(self) -> None:
        if not (0 <= self.w_o < self.w_a):
            raise ConfigError(
                f"windows must satisfy 0 <= w_o < w_a, got ({self.w_o}, {self.w_a})"
            )


class SampleKind(IntEnum):
    """Provenance of one observed training sample."""

    IP = 0  # immediate positive: converted within w_o
    FN = 1  # fake negative: ingested as negative, converts later
    RN = 2  # real negative: never converts within w_a
    DP = 3  # delayed positive: replay of a fake negative at conversion time


@dataclass(frozen=True, slots=True)
class ClickEvent:
    """One click with its eventual conversion outcome.

    conversion_delay is seconds from click to conversion, or None when the
    click never converts within the attribution window.  Delays at or past
    w_a are canonicalized to None by the generator / parser, so a present
    delay always sits in [0, w_a).
    """

    click_id: int
    click_time: int
    conversion_delay: Optional[int]
    features: FeatureVector

    @property
    def converted(self) -> bool:
        return self.conversion_delay is not None


@dataclass(frozen=True, slots=True)
class ObservedSample:
    """One training ingestion as the online learner sees it.

    Only observed_label and the IP/DP distinction are observable at
    training time; FN and RN both surface as observed negatives.
    """

    click_id: int
    ingestion_time: int
    observed_label: int
    kind: SampleKind
    features: FeatureVector

    def __post_init__(self) -> None:
        positive = self.kind in (SampleKind.IP, SampleKind.DP)
        if self.observed_label != (1 if positive else 0):
            raise InvalidSampleError(
                f"kind {self.kind.name} is inconsistent with label {self.observed_label}"
            )


def correct_label(v: int, delay: Optional[int], windows: WindowConfig) -> int:
    """Resolve an observed label to the ground-truth label.

    An observed positive is already true; an observed negative is true
    negative only when no conversion ever arrived.  An observed negative
    whose click did convert must have converted after w_o (otherwise it
    would have been ingested as a positive), and its true label is 1.
    """
    if v not in (0, 1):
        raise InvalidSampleError(f"observed label must be 0 or 1, got {v}")
    if v == 1:
        return 1
    if delay is None:
        return 0
    if delay <= windows.w_o:
        raise InvalidSampleError(
            "observed negative with an in-window conversion cannot exist"
        )
    return 1


def classify_ingestions(
    click: ClickEvent, windows: WindowConfig
) -> list[tuple[SampleKind, int]]:
    """Canonical duplication taxonomy for one click.

    Returns the (kind, ingestion_time) list produced by the
    duplicate-at-conversion scheme: every click surfaces once when its
    observation window closes, and out-of-window converters surface a
    second time at conversion.
    """
    d = click.conversion_delay
    base_time = click.click_time + windows.w_o
    if d is None:
        return [(SampleKind.RN, base_time)]
    if d >= windows.w_a:
        raise InvalidSampleError("delay must be canonicalized to None at w_a")
    if d <= windows.w_o:
        return [(SampleKind.IP, base_time)]
    return [(SampleKind.FN, base_time), (SampleKind.DP, click.click_time + d)]
