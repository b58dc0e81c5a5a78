"""Loss family for duplicated delayed-feedback streams.

Every training objective here is a per-row weighted cross entropy
-(a*log p + b*log(1-p)).  The functions in this module compute the
(a, b) coefficients; they never touch model parameters, so the trainer
can treat all corrections as constants (weights and hidden-positive
probabilities are evaluated from auxiliary estimates and frozen before
the gradient step).

Conventions, per unit of click mass in one context:
  p1      true conversion rate inside the attribution window
  p0      1 - p1
  dp_mass mass of conversions that land after the short window but
          inside the attribution window (these replay as duplicates)
Observed-negative row fraction under each ingestion policy:
  zero-window dup   1 of (1 + p1) total rows
  short-window dup  (p0 + dp_mass) of (1 + dp_mass)
  dual-ingestion    (2*p0 + dp_mass) of 2, i.e. p0 + dp_mass/2
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import ConfigError, DomainError, InvalidSampleError, SampleKind
from .pipelines import Mechanism

ArrayLike = Union[float, np.ndarray]

EPS = 1e-7  # shared probability / denominator clamp

_DUP_MECHANISMS = (Mechanism.FNW, Mechanism.ESDFM, Mechanism.DEFER)


def _check_unit(name: str, value: ArrayLike, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr < lo) or np.any(arr > hi):
        raise DomainError(f"{name} must lie in [{lo}, {hi}]")
    return arr


def _require_dup(mechanism: Mechanism) -> Mechanism:
    mechanism = Mechanism(mechanism)
    if mechanism not in _DUP_MECHANISMS:
        raise ConfigError(
            f"loss corrections are defined for {[m.value for m in _DUP_MECHANISMS]}, "
            f"got {mechanism.value!r}"
        )
    return mechanism


def _check_kinds(v: np.ndarray, kind: np.ndarray) -> None:
    pos_kind = (kind == SampleKind.IP) | (kind == SampleKind.DP)
    if np.any((v == 1) != pos_kind):
        raise InvalidSampleError("observed label disagrees with sample kind")


# --- plain objectives ---------------------------------------------------------


def ideal_loss(y: ArrayLike, p: ArrayLike) -> ArrayLike:
    """Cross entropy against true labels (reference objective)."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def ce_coeffs(v: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Uncorrected cross entropy on observed labels."""
    v = np.asarray(v, dtype=np.float64)
    return v.copy(), 1.0 - v


# --- ingestion-mass bookkeeping ----------------------------------------------


def _check_masses(
    p0: Optional[ArrayLike], p1: Optional[ArrayLike], dp_mass: Optional[ArrayLike]
) -> None:
    if p0 is not None and p1 is not None:
        s = np.asarray(p0, dtype=np.float64) + np.asarray(p1, dtype=np.float64)
        if np.any(np.abs(s - 1.0) > 1e-9):
            raise DomainError("p0 and p1 must sum to 1")
    if dp_mass is not None and p1 is not None:
        if np.any(np.asarray(dp_mass, dtype=np.float64) > np.asarray(p1, dtype=np.float64) + 1e-9):
            raise DomainError("dp_mass cannot exceed p1")


def q_negative(
    mechanism: Mechanism,
    p0: ArrayLike,
    p1: Optional[ArrayLike] = None,
    dp_mass: Optional[ArrayLike] = None,
) -> np.ndarray:
    """Fraction of stream rows that carry an observed 0 label.

    p0/p1 are per-click conversion masses and dp_mass the replayed
    late-conversion mass, all for the same context.
    """
    mechanism = _require_dup(mechanism)
    p0 = _check_unit("p0", p0)
    if p1 is not None:
        p1 = _check_unit("p1", p1)
    if dp_mass is not None:
        dp_mass = _check_unit("dp_mass", dp_mass)
    _check_masses(p0, p1, dp_mass)
    if mechanism is Mechanism.FNW:
        if p1 is None:
            raise ConfigError("q_negative for the zero-window policy needs p1")
        return 1.0 / (1.0 + p1)
    if dp_mass is None:
        raise ConfigError(f"q_negative for {mechanism.value} needs dp_mass")
    if mechanism is Mechanism.ESDFM:
        return (p0 + dp_mass) / (1.0 + dp_mass)
    return p0 + dp_mass / 2.0


def q_positive(
    mechanism: Mechanism,
    p1: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
) -> np.ndarray:
    """Fraction of stream rows whose corrected label is 1."""
    mechanism = _require_dup(mechanism)
    p1 = _check_unit("p1", p1)
    if dp_mass is not None:
        dp_mass = _check_unit("dp_mass", dp_mass)
    _check_masses(None, p1, dp_mass)
    if mechanism is Mechanism.FNW:
        return 2.0 * p1 / (1.0 + p1)
    if dp_mass is None:
        raise ConfigError(f"q_positive for {mechanism.value} needs dp_mass")
    if mechanism is Mechanism.ESDFM:
        return (p1 + dp_mass) / (1.0 + dp_mass)
    return p1


# --- importance-weighted baseline ---------------------------------------------


@dataclass(frozen=True)
class BaselineRatios:
    """Detached p(y)/q(y) row weights for the ratio-corrected cross entropy."""

    w_pos: np.ndarray
    w_neg: np.ndarray


def baseline_weights(
    mechanism: Mechanism,
    p_hat: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
) -> BaselineRatios:
    """Likelihood ratios from the model's own detached estimate p_hat.

    Positives are reweighted against the corrected-label positive row
    fraction, negatives against the observed-negative row fraction.
    """
    mechanism = _require_dup(mechanism)
    p1 = _check_unit("p_hat", p_hat)
    p0 = 1.0 - p1
    if mechanism is Mechanism.FNW:
        w_pos = (1.0 + p1) / 2.0
        w_neg = p0 * (1.0 + p1)
    elif mechanism is Mechanism.ESDFM:
        dp = _check_unit("dp_mass", dp_mass)
        w_pos = p1 * (1.0 + dp) / np.maximum(p1 + dp, EPS)
        w_neg = p0 * (1.0 + dp) / np.maximum(p0 + dp, EPS)
    else:
        dp = _check_unit("dp_mass", dp_mass)
        w_pos = np.ones_like(p1)
        w_neg = p0 / np.maximum(p0 + dp / 2.0, EPS)
    return BaselineRatios(w_pos=np.asarray(w_pos), w_neg=np.asarray(w_neg))


def baseline_coeffs(
    mechanism: Mechanism,
    v: ArrayLike,
    p_hat: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(a, b) for the ratio-weighted baseline on a duplicated stream."""
    v = np.asarray(v)
    w = baseline_weights(mechanism, p_hat, dp_mass=dp_mass)
    a = np.where(v == 1, w.w_pos, 0.0)
    b = np.where(v == 1, 0.0, w.w_neg)
    return a, b


def baseline_loss(
    mechanism: Mechanism,
    v: ArrayLike,
    p: ArrayLike,
    p_hat: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
) -> ArrayLike:
    a, b = baseline_coeffs(mechanism, v, p_hat, dp_mass=dp_mass)
    p = np.asarray(p, dtype=np.float64)
    return -(a * np.log(p) + b * np.log(1.0 - p))


# --- hidden-positive probability for observed negatives ------------------------


def z_oracle(hidden_pos_mass: ArrayLike, true_neg_mass: ArrayLike) -> np.ndarray:
    """Exact P(hidden positive | observed 0 row) from ground-truth masses."""
    hp = np.asarray(hidden_pos_mass, dtype=np.float64)
    tn = np.asarray(true_neg_mass, dtype=np.float64)
    if np.any(hp < 0) or np.any(tn < 0):
        raise DomainError("masses must be nonnegative")
    den = hp + tn
    if np.any(den <= 0):
        raise DomainError("observed-negative mass must be positive")
    return hp / den


def z_from_survival(stay_negative: ArrayLike) -> np.ndarray:
    """Complement of an estimated stay-negative probability."""
    f = np.asarray(stay_negative, dtype=np.float64)
    return np.clip(1.0 - f, 0.0, 1.0)


def z_from_masses(dp_mass: ArrayLike, cvr: ArrayLike) -> np.ndarray:
    """Replay mass over observed-negative mass, both model estimates.

    dp_mass/(dp_mass + 1 - cvr) with the denominator clamped below,
    clipped to [0, 1]; the ratio form is variance-prone when cvr is
    near 1, hence the clamps.
    """
    dp = np.asarray(dp_mass, dtype=np.float64)
    p1 = np.asarray(cvr, dtype=np.float64)
    den = np.maximum(dp + 1.0 - p1, EPS)
    return np.clip(dp / den, 0.0, 1.0)


def _check_z(z: ArrayLike) -> np.ndarray:
    return _check_unit("z", z)


# --- per-kind correction weights -----------------------------------------------


def _assert_identity(lhs: np.ndarray, rhs: np.ndarray, what: str) -> None:
    if not np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12):
        raise DomainError(f"weight identity violated: {what}")


@dataclass(frozen=True)
class CorrectionWeights:
    """Per-kind loss weights for the counterfactual-corrected objective.

    First-window positives take w_ip, duplicate replays w_dp; observed
    negatives split into a hidden-positive part weighted w_fn and a
    stay-negative part weighted w_rn.  Each constructor enforces its
    policy's weight identities on every call.
    """

    w_ip: np.ndarray
    w_fn: np.ndarray
    w_rn: np.ndarray
    w_dp: np.ndarray

    @staticmethod
    def for_esdfm(dp_mass: ArrayLike) -> "CorrectionWeights":
        dp = _check_unit("dp_mass", dp_mass)
        one = np.ones_like(dp)
        w = CorrectionWeights(w_ip=1.0 + dp, w_fn=dp, w_rn=1.0 + dp, w_dp=one)
        _assert_identity(w.w_ip, w.w_rn, "w_ip == w_rn")
        _assert_identity(w.w_dp + w.w_fn, 1.0 + dp, "w_dp + w_fn == 1 + dp_mass")
        return w

    @staticmethod
    def for_fnw(cvr: ArrayLike) -> "CorrectionWeights":
        # with a zero short window the replay mass is the conversion
        # rate itself, so the detached model estimate stands in for it
        m = _check_unit("cvr", cvr)
        one = np.ones_like(m)
        w = CorrectionWeights(w_ip=1.0 + m, w_fn=m, w_rn=1.0 + m, w_dp=one)
        _assert_identity(w.w_dp + w.w_fn, w.w_rn, "w_dp + w_fn == w_rn")
        return w

    @staticmethod
    def for_defer() -> "CorrectionWeights":
        w = CorrectionWeights(
            w_ip=np.float64(2.0), w_fn=np.float64(1.0), w_rn=np.float64(2.0), w_dp=np.float64(1.0)
        )
        _assert_identity(w.w_ip, w.w_rn, "w_ip == w_rn")
        return w


# --- counterfactual-corrected losses -------------------------------------------


def _defuse_ab(
    v: np.ndarray, kind: np.ndarray, z: np.ndarray, w: CorrectionWeights
) -> Tuple[np.ndarray, np.ndarray]:
    _check_kinds(v, kind)
    a_pos = np.where(kind == SampleKind.DP, w.w_dp, w.w_ip)
    a = np.where(v == 1, a_pos, z * w.w_fn)
    b = np.where(v == 1, 0.0, (1.0 - z) * w.w_rn)
    return a, b


def defuse_coeffs_esdfm(
    v: ArrayLike, kind: ArrayLike, z: ArrayLike, dp_mass: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """(a, b) for the corrected loss on a short-window dup stream."""
    return _defuse_ab(
        np.asarray(v), np.asarray(kind), _check_z(z), CorrectionWeights.for_esdfm(dp_mass)
    )


def defuse_coeffs_fnw(
    v: ArrayLike, kind: ArrayLike, z: ArrayLike, cvr: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """(a, b) for the corrected loss on a zero-window dup stream."""
    return _defuse_ab(
        np.asarray(v), np.asarray(kind), _check_z(z), CorrectionWeights.for_fnw(cvr)
    )


def defuse_coeffs_defer(
    v: ArrayLike, kind: ArrayLike, z: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """(a, b) for the corrected loss on a dual-ingestion stream."""
    return _defuse_ab(np.asarray(v), np.asarray(kind), _check_z(z), CorrectionWeights.for_defer())


def defuse_coeffs(
    mechanism: Mechanism,
    v: ArrayLike,
    kind: ArrayLike,
    z: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
    cvr: Optional[ArrayLike] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    mechanism = _require_dup(mechanism)
    if mechanism is Mechanism.ESDFM:
        if dp_mass is None:
            raise ConfigError("the short-window correction needs dp_mass")
        return defuse_coeffs_esdfm(v, kind, z, dp_mass)
    if mechanism is Mechanism.FNW:
        if cvr is None:
            raise ConfigError("the zero-window correction needs a detached cvr estimate")
        return defuse_coeffs_fnw(v, kind, z, cvr)
    return defuse_coeffs_defer(v, kind, z)


def defuse_loss(
    mechanism: Mechanism,
    v: ArrayLike,
    kind: ArrayLike,
    p: ArrayLike,
    z: ArrayLike,
    dp_mass: Optional[ArrayLike] = None,
    cvr: Optional[ArrayLike] = None,
) -> ArrayLike:
    a, b = defuse_coeffs(mechanism, v, kind, z, dp_mass=dp_mass, cvr=cvr)
    p = np.asarray(p, dtype=np.float64)
    return -(a * np.log(p) + b * np.log(1.0 - p))


# --- decomposed two-head objective ---------------------------------------------


def bidefuse_coeffs(
    task: ArrayLike, label: ArrayLike, z: ArrayLike, dp_mass: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """(a, b) for the joint two-head stream.

    In-window rows carry exact short-window labels and train with plain
    cross entropy.  Out-of-window rows form a zero-window dup stream for
    the late-conversion head: replays pass through with weight 1, and
    observed negatives split with w_fn = dp_mass, w_rn = 1 + dp_mass.
    """
    task = np.asarray(task)
    label = np.asarray(label)
    z = _check_z(z)
    f_dp = _check_unit("dp_mass", dp_mass)
    a_out = np.where(label == 1, 1.0, z * f_dp)
    b_out = np.where(label == 1, 0.0, (1.0 - z) * (1.0 + f_dp))
    a = np.where(task == 0, label.astype(np.float64), a_out)
    b = np.where(task == 0, 1.0 - label.astype(np.float64), b_out)
    return a, b


def bidefuse_loss(
    task: ArrayLike,
    label: ArrayLike,
    p_in: ArrayLike,
    p_out: ArrayLike,
    z: ArrayLike,
    dp_mass: ArrayLike,
) -> Tuple[ArrayLike, ArrayLike]:
    """Per-row (in-window, out-of-window) loss contributions.

    Rows contribute to exactly one head; the total objective is the sum
    of both parts.
    """
    task = np.asarray(task)
    a, b = bidefuse_coeffs(task, label, z, dp_mass)
    p_in = np.asarray(p_in, dtype=np.float64)
    p_out = np.asarray(p_out, dtype=np.float64)
    loss_in = np.where(task == 0, -(a * np.log(p_in) + b * np.log(1.0 - p_in)), 0.0)
    loss_out = np.where(task == 1, -(a * np.log(p_out) + b * np.log(1.0 - p_out)), 0.0)
    return loss_in, loss_out
