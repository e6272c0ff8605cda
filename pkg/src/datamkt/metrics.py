"""Regret accounting against full-information benchmarks.

Regrets are evaluated on the *expected* tables at the masks a trace
actually played (the definitions are expectations): per-buyer effective
regret against her fixed dominant mask, and welfare regret against the
social optimum, with welfare computed transfer-free. A sample-based
counterpart of the effective regret is also emitted, labeled `realized`,
for diagnostics only. Benchmarks use the instance's own transfer weight;
traces run under the adaptive schedule are still scored against it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .equilibrium import dominant_profile, social_optimum
from .errors import UnsupportedModelError
from .market import MarketInstance, Profile, caused_externality_table, effective_utility_table
from .learning.engine import SimulationTrace


@dataclass(frozen=True)
class RegretSeries:
    """Per-round and cumulative regrets for one trace."""

    effective_per_round: np.ndarray   # (T, n)
    effective_cum: np.ndarray         # (T, n)
    welfare_per_round: np.ndarray     # (T,)
    welfare_cum: np.ndarray           # (T,)
    realized_effective_cum: np.ndarray  # (T, n), sample-based diagnostic
    dominant: Profile
    optimum_profile: Profile
    optimum_welfare: float


def compute_regrets(instance: MarketInstance, trace: SimulationTrace,
                    budget: int | None = None) -> RegretSeries:
    if not instance.is_independent:
        raise UnsupportedModelError("regret accounting needs the independent model")
    n = instance.n
    profiles = trace.profiles

    effective = np.stack([effective_utility_table(instance, i) for i in range(n)])
    dominant = dominant_profile(instance)
    best = np.array([effective[i, dominant[i]] for i in range(n)])
    played = np.stack([effective[i, profiles[:, i]] for i in range(n)], axis=1)
    eff_round = best[np.newaxis, :] - played
    eff_cum = np.cumsum(eff_round, axis=0)

    contribution = np.stack([instance.gain[i] - caused_externality_table(instance, i)
                             for i in range(n)])
    opt_profile, opt_welfare = social_optimum(instance, budget)
    welfare_t = sum(contribution[i, profiles[:, i]] for i in range(n))
    welfare_round = opt_welfare - welfare_t
    welfare_cum = np.cumsum(welfare_round)

    realized_round = best[np.newaxis, :] - trace.observed_effective
    realized_cum = np.cumsum(realized_round, axis=0)

    return RegretSeries(effective_per_round=eff_round, effective_cum=eff_cum,
                        welfare_per_round=welfare_round, welfare_cum=welfare_cum,
                        realized_effective_cum=realized_cum,
                        dominant=dominant, optimum_profile=opt_profile,
                        optimum_welfare=opt_welfare)


def effective_regret(instance: MarketInstance, trace: SimulationTrace,
                     i: int) -> np.ndarray:
    """Cumulative expected effective regret of buyer i, per round."""
    return compute_regrets(instance, trace).effective_cum[:, i]


def welfare_regret(instance: MarketInstance, trace: SimulationTrace,
                   budget: int | None = None) -> np.ndarray:
    """Cumulative expected welfare regret of the trace, per round."""
    return compute_regrets(instance, trace, budget).welfare_cum


def decomposition_bound(instance: MarketInstance, trace: SimulationTrace,
                        series: RegretSeries | None = None,
                        slack: float = 1e-6) -> tuple[float, float]:
    """(measured welfare regret, its decomposition bound).

    The bound splits the welfare regret into the equilibrium welfare gap,
    at most n(1-alpha) per round, plus each buyer's effective regret, plus
    an externality remainder again at most n(1-alpha) per round.
    """
    if series is None:
        series = compute_regrets(instance, trace)
    t_total = trace.total_rounds
    gap_terms = float(np.sum(instance.n * (1.0 - trace.alpha)))
    lhs = float(series.welfare_cum[-1])
    rhs = 2.0 * gap_terms + float(series.effective_cum[-1].sum()) + slack * t_total
    return lhs, rhs


def write_regret_csv(path, series: RegretSeries) -> None:
    """Columns: t, per-buyer cumulative effective regret, cumulative
    welfare regret."""
    n = series.effective_cum.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"effective_regret_{i}" for i in range(n)]
                        + ["welfare_regret"])
        for t in range(series.effective_cum.shape[0]):
            writer.writerow([t + 1]
                            + [repr(float(v)) for v in series.effective_cum[t]]
                            + [repr(float(series.welfare_cum[t]))])
