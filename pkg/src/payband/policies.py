"""Payment strategies the platform can run against myopic agents.

All strategies share one per-round contract: given the round's context they
produce a payment vector, the agent picks the arm maximizing estimated utility
plus payment, and the strategy then absorbs the realized observation. Five
strategies are provided:

* ``no_payments``            - passive baseline; agents act greedily on the
                               displayed estimates.
* ``perturbation_payments``  - draws a Gaussian vector each round and pays
                               each arm that vector dotted with the arm's
                               estimate, which makes the agent behave as if
                               the context itself were perturbed; the chosen
                               arm's history absorbs the perturbed context
                               with the payment folded into the response.
* ``linucb_alignment``       - runs a disjoint-model LinUCB choice internally
                               and, when it disagrees with the greedy arm,
                               pays the LinUCB arm the estimated utility gap
                               so the agent's choice lands on it.
* ``chained_unrestricted``   - builds confidence intervals per arm, chains
                               together every arm whose interval overlaps the
                               greedy arm's (transitively), picks a chain
                               member uniformly at random and pays it the
                               estimated gap to the greedy arm.
* ``chained_restricted``     - same, but clamps each payment to a finite
                               budget that depletes as payments are offered;
                               at zero budget it degenerates to no_payments.

Strategies only ever see contexts, payments, and realized rewards. Ground
truth attribute vectors never cross this interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimation import (
    OLS,
    RIDGE,
    EstimatorState,
    SingularMatrixError,
    confidence_width,
)
from .model import ArmHistory, RoundRecord, agent_choose
from .environment import realize_from_mean

NO_PAYMENTS = "no_payments"
PERTURBATION = "perturbation_payments"
LINUCB_ALIGNMENT = "linucb_alignment"
CHAINED_UNRESTRICTED = "chained_unrestricted"
CHAINED_RESTRICTED = "chained_restricted"

POLICY_KINDS = (
    NO_PAYMENTS,
    PERTURBATION,
    LINUCB_ALIGNMENT,
    CHAINED_UNRESTRICTED,
    CHAINED_RESTRICTED,
)

# Default estimator mode per strategy. The passive baseline and the
# perturbation strategy use plain least squares with a zero-vector display
# before identifiability; everything that needs confidence geometry uses
# ridge regression.
_DEFAULT_MODE = {
    NO_PAYMENTS: OLS,
    PERTURBATION: OLS,
    LINUCB_ALIGNMENT: RIDGE,
    CHAINED_UNRESTRICTED: RIDGE,
    CHAINED_RESTRICTED: RIDGE,
}


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative configuration for one strategy.

    ``init_explore_m`` overrides the instance-level initial exploration
    length when set. ``estimator_mode`` forces "ols" or "ridge" regardless of
    the kind's default (the ridge override on no_payments gives an exact
    zero-budget reference for the restricted chained strategy).
    """

    kind: str
    sigma_pay: float = 1.0
    ridge_lambda: float = 1.0
    delta: float = 0.1
    linucb_alpha: float = 1.0
    budget: Optional[float] = None
    init_explore_m: Optional[int] = None
    estimator_mode: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.sigma_pay < 0:
            raise ValueError(f"sigma_pay must be >= 0, got {self.sigma_pay}")
        if not (0 < self.delta < 1):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.linucb_alpha < 0:
            raise ValueError(f"linucb_alpha must be >= 0, got {self.linucb_alpha}")
        if self.budget is not None:
            if self.kind != CHAINED_RESTRICTED:
                raise ValueError("budget only applies to chained_restricted")
            if self.budget < 0:
                raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.kind == CHAINED_RESTRICTED and self.budget is None:
            raise ValueError("chained_restricted requires a budget")
        if self.resolved_mode() == RIDGE and self.ridge_lambda <= 0:
            raise ValueError(f"ridge_lambda must be > 0, got {self.ridge_lambda}")
        if self.estimator_mode is not None and self.estimator_mode not in (OLS, RIDGE):
            raise ValueError(f"unknown estimator_mode {self.estimator_mode!r}")

    def resolved_mode(self) -> str:
        return self.estimator_mode or _DEFAULT_MODE[self.kind]

    def label(self) -> str:
        return self.kind


# ---------------------------------------------------------------------------
# Pure strategy operations (unit-testable in isolation).
# ---------------------------------------------------------------------------

def perturbation_payment(estimates: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """Payment vector p_i = zeta . estimate_i.

    Adding p_i to the estimated utility makes arm i's perceived utility equal
    (context + zeta) . estimate_i, so the agent acts on a perturbed context.
    """
    return np.asarray(estimates, float) @ np.asarray(zeta, float)


def perturbed_absorb(state: EstimatorState, context: np.ndarray, zeta: np.ndarray,
                     observed: float, paid: float) -> EstimatorState:
    """Absorb the perturbed context with the payment folded into the response."""
    return state.absorb(np.asarray(context, float) + np.asarray(zeta, float),
                        observed + paid)


def alignment_payment(scores: np.ndarray, greedy: int, base: int) -> np.ndarray:
    """Pay the base algorithm's arm the utility gap to the greedy arm.

    ``scores`` are the displayed estimated utilities. The gap is clamped at
    zero; when greedy == base no payment is needed.
    """
    pay = np.zeros(len(scores))
    if base != greedy:
        pay[base] = max(float(scores[greedy] - scores[base]), 0.0)
    return pay


def linucb_choose(states: list[EstimatorState], estimates: np.ndarray,
                  context: np.ndarray, alpha: float) -> int:
    """Disjoint-model LinUCB pick: argmax of estimate . context + alpha * width.

    The width is the context norm in the inverse regularized Gram metric.
    Ties break toward the lowest arm index.
    """
    context = np.asarray(context, float)
    scores = np.asarray(estimates, float) @ context
    ucb = scores + alpha * np.array([s.inv_norm(context) for s in states])
    return int(np.argmax(ucb))


def build_chain(point_estimates: np.ndarray, widths: np.ndarray, anchor: int) -> list[int]:
    """Arms reachable from the anchor through overlapping confidence intervals.

    Interval i is [e_i - w_i, e_i + w_i]; overlap is closed (touching
    endpoints count) and membership is the transitive closure, so two arms
    can be chained through an intermediate arm without overlapping each
    other. Returns a sorted list that always contains the anchor.
    """
    e = np.asarray(point_estimates, float)
    w = np.asarray(widths, float)
    lo, hi = e - w, e + w
    n = len(e)
    members = {int(anchor)}
    frontier = [int(anchor)]
    while frontier:
        i = frontier.pop()
        for j in range(n):
            if j not in members and max(lo[i], lo[j]) <= min(hi[i], hi[j]):
                members.add(j)
                frontier.append(j)
    return sorted(members)


def chained_payment(members: list[int], point_estimates: np.ndarray, anchor: int,
                    rng: np.random.Generator,
                    budget: Optional[float] = None) -> tuple[np.ndarray, int, float, Optional[float]]:
    """Pick a chain member uniformly and pay it the estimated gap to the anchor.

    Returns (payments, picked member, offered amount, new budget). With a
    budget the offered amount is clamped to what remains and the budget is
    reduced by the offer itself, so offers can never overshoot it.
    """
    e = np.asarray(point_estimates, float)
    pay = np.zeros(len(e))
    j = int(members[rng.integers(len(members))])
    amount = float(e[anchor] - e[j])  # >= 0: the anchor maximizes e
    if budget is not None:
        amount = min(amount, budget)
        budget = budget - amount
    pay[j] = amount
    return pay, j, amount, budget


# ---------------------------------------------------------------------------
# Stateful strategy objects driven by the interaction loop.
# ---------------------------------------------------------------------------

class Policy:
    """Base class: per-arm estimator states, histories, and estimate cache."""

    def __init__(self, config: PolicyConfig, n_arms: int, dim: int) -> None:
        self.config = config
        self.n_arms = n_arms
        self.dim = dim
        mode = config.resolved_mode()
        lam = config.ridge_lambda if mode == RIDGE else 0.0
        self.states = [EstimatorState.empty(dim, mode, lam) for _ in range(n_arms)]
        self.histories = [ArmHistory(i) for i in range(n_arms)]
        self._est_matrix = np.zeros((n_arms, dim))
        self._stale: set[int] = set()

    # -- estimates ---------------------------------------------------------

    def displayed_estimates(self) -> np.ndarray:
        """(n_arms, dim) matrix of displayed estimates.

        Arms whose least-squares system is still rank deficient display the
        zero vector. The returned array is reused between rounds; callers
        who keep it must copy.
        """
        for arm in self._stale:
            try:
                self._est_matrix[arm] = self.states[arm].estimate()
            except SingularMatrixError:
                self._est_matrix[arm] = 0.0
        self._stale.clear()
        return self._est_matrix

    def _absorb(self, arm: int, context: np.ndarray, response: float) -> None:
        self.states[arm] = self.states[arm].absorb(context, response)
        self.histories[arm].append(context, response)
        self._stale.add(arm)

    # -- interaction loop hooks -------------------------------------------

    def calc_payments(self, t: int, context: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def update(self, t: int, context: np.ndarray, chosen: int, observed: float,
               payments: np.ndarray) -> None:
        """Absorb the round's observation (overridden by the perturbation strategy)."""
        self._absorb(chosen, context, observed)

    def absorb_forced(self, t: int, context: np.ndarray, arm: int, observed: float) -> None:
        """Mandated pull during initial exploration: plain absorb, no payment."""
        self._absorb(arm, context, observed)

    def budget_remaining(self) -> Optional[float]:
        return None


class NoPaymentsPolicy(Policy):
    """Passive baseline: never pays, agents follow the greedy estimate."""

    def calc_payments(self, t, context, rng):
        return np.zeros(self.n_arms)


class PerturbationPaymentsPolicy(Policy):
    """Gaussian payment perturbations that emulate context diversity.

    Each round draws zeta ~ N(0, sigma_pay^2 I) and pays every arm
    zeta . estimate. The chosen arm's regression then absorbs the perturbed
    context (context + zeta) with the disbursed payment folded into the
    response, keeping the absorbed pairs consistent with the perturbed
    linear model. The perturbed contexts are kept for diversity diagnostics.
    """

    def __init__(self, config, n_arms, dim):
        super().__init__(config, n_arms, dim)
        self._last_zeta: Optional[np.ndarray] = None
        self.effective_contexts: list[np.ndarray] = []

    def calc_payments(self, t, context, rng):
        zeta = self.config.sigma_pay * rng.standard_normal(self.dim)
        self._last_zeta = zeta
        return perturbation_payment(self.displayed_estimates(), zeta)

    def update(self, t, context, chosen, observed, payments):
        if self._last_zeta is None:
            raise RuntimeError("update called before calc_payments in the same round")
        zeta, self._last_zeta = self._last_zeta, None
        perturbed = np.asarray(context, float) + zeta
        self.effective_contexts.append(perturbed)
        self.states[chosen] = perturbed_absorb(
            self.states[chosen], context, zeta, observed, float(payments[chosen])
        )
        self.histories[chosen].append(perturbed, observed + float(payments[chosen]))
        self._stale.add(chosen)


class LinUCBAlignmentPolicy(Policy):
    """Pays the utility gap to steer agents onto an internal LinUCB choice.

    When the LinUCB pick differs from the greedy arm, that arm receives a
    payment equal to the estimated utility gap; the tie rule in agent_choose
    then lands the agent exactly on the LinUCB pick. Rounds where the two
    agree need no payment. The (greedy, base) pairs are logged per round.
    """

    def __init__(self, config, n_arms, dim):
        super().__init__(config, n_arms, dim)
        self.alignment_log: list[tuple[int, int, int]] = []

    def calc_payments(self, t, context, rng):
        est = self.displayed_estimates()
        scores = est @ np.asarray(context, float)
        greedy = int(np.argmax(scores))
        base = linucb_choose(self.states, est, context, self.config.linucb_alpha)
        self.alignment_log.append((t, greedy, base))
        return alignment_payment(scores, greedy, base)


class ChainedPolicy(Policy):
    """Randomizes over the chain of statistically indistinguishable arms.

    The anchor is the greedy arm; any arm whose confidence interval overlaps
    the chain transitively joins it. One member is drawn uniformly and paid
    the estimated gap to the anchor, which under the tie rule makes the agent
    take that member. With a budget, offers are clamped to the remaining
    amount and the budget is decremented by each offer; once it reaches zero
    the strategy stops paying entirely.
    """

    def __init__(self, config, n_arms, dim):
        super().__init__(config, n_arms, dim)
        self.budget = config.budget  # None means unrestricted
        self.explore_m = 0  # effective initial exploration length, set by the loop

    def budget_remaining(self) -> Optional[float]:
        return self.budget

    def calc_payments(self, t, context, rng):
        if self.budget is not None and self.budget <= 0:
            return np.zeros(self.n_arms)
        est = self.displayed_estimates()
        scores = est @ np.asarray(context, float)
        anchor = int(np.argmax(scores))
        widths = np.array([
            confidence_width(self.states[i], context, self.config.delta,
                             self.explore_m, t, arm=i).width
            for i in range(self.n_arms)
        ])
        members = build_chain(scores, widths, anchor)
        pay, _, _, new_budget = chained_payment(members, scores, anchor, rng, self.budget)
        self.budget = new_budget
        return pay


_POLICY_CLASSES = {
    NO_PAYMENTS: NoPaymentsPolicy,
    PERTURBATION: PerturbationPaymentsPolicy,
    LINUCB_ALIGNMENT: LinUCBAlignmentPolicy,
    CHAINED_UNRESTRICTED: ChainedPolicy,
    CHAINED_RESTRICTED: ChainedPolicy,
}


def build_policy(config: PolicyConfig, n_arms: int, dim: int) -> Policy:
    return _POLICY_CLASSES[config.kind](config, n_arms, dim)


# ---------------------------------------------------------------------------
# Initial exploration.
# ---------------------------------------------------------------------------

def initial_exploration(policy: Policy, env, noise_std: float, m: int,
                        noise_rng: np.random.Generator) -> list[RoundRecord]:
    """Mandated round-robin pulls for rounds 1..m.

    Round t forces arm (t - 1) mod n_arms. Payments are zero (a mandate, not
    a purchase), so these rounds add nothing to payment totals while their
    regret still counts.
    """
    records = []
    for t in range(1, m + 1):
        theta = env.context(t)
        arm = (t - 1) % env.n_arms
        means = env.true_means(t, theta)
        observed = realize_from_mean(float(means[arm]), noise_std, noise_rng)
        snapshot = np.array(policy.displayed_estimates(), copy=True)
        policy.absorb_forced(t, theta, arm, observed)
        records.append(RoundRecord(
            t=t,
            context=theta,
            payments=np.zeros(env.n_arms),
            chosen_arm=arm,
            displayed_estimates=snapshot,
            observed_reward=observed,
            true_mean_reward=float(means[arm]),
            inst_regret=float(means.max() - means[arm]),
            payment_paid=0.0,
            budget_remaining=policy.budget_remaining(),
        ))
    return records


def play_round(policy: Policy, env, noise_std: float, t: int,
               noise_rng: np.random.Generator,
               policy_rng: np.random.Generator) -> RoundRecord:
    """One free-choice round: payments, agent choice, realization, update."""
    theta = env.context(t)
    payments = policy.calc_payments(t, theta, policy_rng)
    snapshot = np.array(policy.displayed_estimates(), copy=True)
    chosen = agent_choose(snapshot, theta, payments)
    means = env.true_means(t, theta)
    observed = realize_from_mean(float(means[chosen]), noise_std, noise_rng)
    policy.update(t, theta, chosen, observed, payments)
    return RoundRecord(
        t=t,
        context=theta,
        payments=payments,
        chosen_arm=chosen,
        displayed_estimates=snapshot,
        observed_reward=observed,
        true_mean_reward=float(means[chosen]),
        inst_regret=float(means.max() - means[chosen]),
        payment_paid=float(payments[chosen]),
        budget_remaining=policy.budget_remaining(),
    )
