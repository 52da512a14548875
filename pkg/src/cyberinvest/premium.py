"""Insurance premia under the standard-deviation loading principle.

The premium for an aggregate loss L is E[L] + theta * sd(L). The
no-investment baseline uses the explicit total-variance decomposition; the
optimal-policy report simulates attacks, extracts the solved policy along
each path, and prices the resulting losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .breach import BreachModel
from .dynamics import CostParams, expected_loss_no_investment, loss_variance, simulate_losses
from .errors import ConfigError
from .hawkes import HawkesParams, simulate_paths
from .hjb import PolicyField
from .strategies import extract_policies_batch

__all__ = [
    "PremiumReport",
    "premium",
    "premium_report_baseline",
    "premium_report_optimal",
    "prevention_gap",
]


def premium(expected_loss: float, loss_std: float, theta: float) -> float:
    """Loaded premium: expected loss plus theta times the loss standard deviation."""
    if expected_loss < 0 or loss_std < 0 or theta < 0:
        raise ValueError("expected loss, loss dispersion and loading must be nonnegative")
    return expected_loss + theta * loss_std


@dataclass(frozen=True)
class PremiumReport:
    """Priced loss distribution of one policy at one loading factor."""

    policy_label: str
    expected_loss: float
    loss_std: float
    theta: float
    mc_paths: int
    standard_errors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.loss_std < 0 or self.theta < 0:
            raise ValueError("loss dispersion and loading must be nonnegative")

    @property
    def premium(self) -> float:
        return premium(self.expected_loss, self.loss_std, self.theta)


def premium_report_baseline(
    hawkes: HawkesParams,
    model: BreachModel,
    costs: CostParams,
    theta: float,
    mc_paths: int = 100_000,
    seed: int = 0,
) -> PremiumReport:
    """No-investment benchmark: closed-form mean, decomposition-based dispersion."""
    e0 = expected_loss_no_investment(hawkes, model, costs)
    var = loss_variance(hawkes, model, costs, None, mc_paths, seed)
    std = math.sqrt(max(var.value, 0.0))
    se_std = var.stderr / (2.0 * std) if std > 0 else 0.0
    return PremiumReport(
        policy_label="no-investment",
        expected_loss=float(e0),
        loss_std=std,
        theta=float(theta),
        mc_paths=int(mc_paths),
        standard_errors={"expected_loss": 0.0, "loss_std": se_std},
    )


def _check_field_inputs(policy_field: PolicyField, hawkes, model, costs):
    meta = policy_field.meta
    problems = []
    if meta.hawkes != hawkes:
        problems.append(f"field solved for {meta.hawkes}, got {hawkes}")
    if meta.model != model:
        problems.append(f"field solved for {meta.model}, got {model}")
    same_objective = (
        meta.costs.gamma == costs.gamma
        and meta.costs.eta_mean == costs.eta_mean
        and meta.costs.rho == costs.rho
        and meta.costs.horizon == costs.horizon
        and meta.costs.delta == costs.delta
        and meta.costs.terminal_utility == costs.terminal_utility
    )
    # eta_var / eta_family may differ: the objective depends on the loss
    # distribution only through its mean.
    if not same_objective:
        problems.append("field objective parameters differ from the requested costs")
    if problems:
        raise ConfigError(problems)


def premium_report_optimal(
    policy_field: PolicyField,
    hawkes: HawkesParams,
    model: BreachModel,
    costs: CostParams,
    theta: float,
    mc_paths: int = 100_000,
    seed: int = 0,
    h_init: float = 0.0,
    threads: int = 1,
    losses_csv=None,
) -> PremiumReport:
    """Price the solved dynamic policy by Monte Carlo from level h_init."""
    if mc_paths < 10_000:
        raise ValueError("mc_paths must be at least 10^4")
    _check_field_inputs(policy_field, hawkes, model, costs)
    batch = simulate_paths(hawkes, costs.horizon, mc_paths, seed, threads=threads)
    times, controls = extract_policies_batch(policy_field, batch, 0.0, h_init)
    lb = simulate_losses(batch, model, costs, control_times=times, controls=controls, seed=seed)
    if losses_csv is not None:
        lb.write_csv(losses_csv)
    mean = lb.mean_loss()
    std = lb.std_loss()
    return PremiumReport(
        policy_label="optimal-dynamic",
        expected_loss=mean.value,
        loss_std=std.value,
        theta=float(theta),
        mc_paths=int(mc_paths),
        standard_errors={"expected_loss": mean.stderr, "loss_std": std.stderr},
    )


def prevention_gap(baseline: PremiumReport, optimal: PremiumReport) -> tuple:
    """Percentage reductions (premium, dispersion) of the optimal policy."""
    if baseline.theta != optimal.theta:
        raise ValueError("reports use different loading factors")
    if baseline.premium <= 0 or baseline.loss_std <= 0:
        raise ValueError("baseline premium and dispersion must be positive")
    dp = 100.0 * (1.0 - optimal.premium / baseline.premium)
    ds = 100.0 * (1.0 - optimal.loss_std / baseline.loss_std)
    return dp, ds
