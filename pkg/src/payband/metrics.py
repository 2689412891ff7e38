"""Trace accumulation and cross-run aggregation.

A run trace is the ordered list of round records from one run. Disbursed
payment per round is exactly the chosen arm's payment entry; its cumulative
signed sum is the primary payment curve, and the cumulative sum of absolute
disbursements is tracked separately since a payment perturbation scheme
disburses both signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import RoundRecord
from .policies import PolicyConfig


class MixedConfigError(ValueError):
    """Aggregation was attempted over traces with incompatible shapes."""


@dataclass
class RunTrace:
    """All round records of one run, plus the strategy diagnostics."""

    records: list[RoundRecord]
    policy: PolicyConfig
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for i, rec in enumerate(self.records, start=1):
            if rec.t != i:
                raise ValueError(f"records must be contiguous from t=1; "
                                 f"position {i} holds t={rec.t}")

    @property
    def horizon(self) -> int:
        return len(self.records)


@dataclass
class AccumulatedCurves:
    """Per-round cumulative curves of a single trace."""

    cum_regret: np.ndarray
    cum_payment: np.ndarray        # signed disbursed
    cum_payment_abs: np.ndarray    # sum of |disbursed|
    per_arm_payment: np.ndarray    # (n_arms, T) signed disbursed per chosen arm


def accumulate(trace: RunTrace, n_arms: Optional[int] = None) -> AccumulatedCurves:
    """Prefix-sum the per-round regret and disbursed payments."""
    records = trace.records
    horizon = len(records)
    if n_arms is None:
        n_arms = len(records[0].payments) if records else 0
    inst_regret = np.array([r.inst_regret for r in records])
    paid = np.array([r.payment_paid for r in records])
    arms = np.array([r.chosen_arm for r in records], dtype=int)
    per_arm = np.zeros((n_arms, horizon))
    if horizon:
        per_arm[arms, np.arange(horizon)] = paid
        per_arm = np.cumsum(per_arm, axis=1)
    return AccumulatedCurves(
        cum_regret=np.cumsum(inst_regret),
        cum_payment=np.cumsum(paid),
        cum_payment_abs=np.cumsum(np.abs(paid)),
        per_arm_payment=per_arm,
    )


def payment_bound_ratio(total_payment: float, n_arms: int, horizon: int) -> float:
    """|total| normalized by N * sqrt(2 T ln(N T)).

    The denominator is the scale at which cumulative perturbation payments
    are expected to concentrate, so a well-behaved run keeps this ratio O(1).
    Requires N * T > 1 so the log is positive.
    """
    if n_arms * horizon <= 1:
        raise ValueError("need n_arms * horizon > 1")
    return abs(total_payment) / (n_arms * math.sqrt(2 * horizon * math.log(n_arms * horizon)))


@dataclass
class AggregateCurves:
    """Pointwise mean and standard error across runs of one strategy."""

    n_runs: int
    mean_cum_regret: np.ndarray
    stderr_cum_regret: np.ndarray
    mean_cum_payment: np.ndarray
    stderr_cum_payment: np.ndarray
    mean_cum_payment_abs: np.ndarray
    stderr_cum_payment_abs: np.ndarray
    mean_per_arm_payment: np.ndarray  # (n_arms, T)


def _mean_stderr(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        stderr = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def aggregate(traces: list[RunTrace]) -> AggregateCurves:
    """Mean and standard error curves over runs of a single strategy.

    Raises MixedConfigError when the traces disagree on horizon or strategy
    kind; averaging those would silently produce nonsense.
    """
    if not traces:
        raise MixedConfigError("no traces to aggregate")
    horizon = traces[0].horizon
    kind = traces[0].policy.kind
    for tr in traces[1:]:
        if tr.horizon != horizon:
            raise MixedConfigError(
                f"mixed horizons: {horizon} vs {tr.horizon}"
            )
        if tr.policy.kind != kind:
            raise MixedConfigError(
                f"mixed policy kinds: {kind!r} vs {tr.policy.kind!r}"
            )
    curves = [accumulate(tr) for tr in traces]
    regret = np.vstack([c.cum_regret for c in curves])
    payment = np.vstack([c.cum_payment for c in curves])
    payment_abs = np.vstack([c.cum_payment_abs for c in curves])
    mean_r, se_r = _mean_stderr(regret)
    mean_p, se_p = _mean_stderr(payment)
    mean_a, se_a = _mean_stderr(payment_abs)
    per_arm = np.mean([c.per_arm_payment for c in curves], axis=0)
    return AggregateCurves(
        n_runs=len(traces),
        mean_cum_regret=mean_r,
        stderr_cum_regret=se_r,
        mean_cum_payment=mean_p,
        stderr_cum_payment=se_p,
        mean_cum_payment_abs=mean_a,
        stderr_cum_payment_abs=se_a,
        mean_per_arm_payment=per_arm,
    )
