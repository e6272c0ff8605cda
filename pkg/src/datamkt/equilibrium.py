"""Exact game analysis: dominant strategies, optima, equilibria, dynamics.

In the independent model a buyer's utility splits into an own-action part
(the effective utility) and a part she cannot influence, so dominant
strategies, equilibria, and the social optimum all decompose per buyer
and need no profile enumeration. The joint model has no such structure
and is handled by exhaustive enumeration under a budget guard.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, InvariantError, MarketError, UnsupportedModelError
from .market import (
    MarketInstance,
    Profile,
    caused_externality_table,
    effective_utility_table,
    social_welfare,
    validate_profile,
)

DEFAULT_BUDGET = 1 << 24
MARGIN = 1e-12


# ---------------------------------------------------------------------------
# Per-buyer structure (independent model)


def dominant_strategy(instance: MarketInstance, i: int) -> int:
    """The mask maximizing buyer i's effective utility (smallest mask on
    ties). Only the independent model admits one."""
    table = effective_utility_table(instance, i)
    return int(np.argmax(table))


def dominant_profile(instance: MarketInstance) -> Profile:
    return tuple(dominant_strategy(instance, i) for i in range(instance.n))


def _welfare_contribution(instance: MarketInstance, i: int) -> np.ndarray:
    # Welfare is separable in the independent model: each buyer adds her
    # gain minus the externality she causes, independent of the others.
    return instance.gain[i] - caused_externality_table(instance, i)


def _argmax_set(values: np.ndarray, margin: float = MARGIN) -> list[int]:
    return [int(m) for m in np.flatnonzero(values >= values.max() - margin)]


# ---------------------------------------------------------------------------
# Exhaustive enumeration (joint model)


def _check_budget(instance: MarketInstance, budget: int | None) -> int:
    budget = DEFAULT_BUDGET if budget is None else budget
    total = instance.num_sets ** instance.n
    if total > budget:
        raise BudgetExceededError(
            f"(2**k)**n = {total} profiles exceeds budget {budget}")
    return budget


def _pair_term(instance: MarketInstance, i: int, j: int) -> np.ndarray:
    """(num_sets, num_sets) matrix of the externality buyer i suffers from
    buyer j, arranged (buyer i's mask, buyer j's mask)."""
    e = instance.externality.table
    if instance.is_independent:
        num = instance.num_sets
        return np.broadcast_to(e[i, j][np.newaxis, :], (num, num))
    return e[i, j]


def _broadcast_pair(matrix: np.ndarray, i: int, j: int, n: int, num: int) -> np.ndarray:
    """View a (num, num) matrix over (mask_i, mask_j) as an n-axis tensor."""
    if i < j:
        shape = [1] * n
        shape[i] = num
        shape[j] = num
        return matrix.reshape(shape)
    shape = [1] * n
    shape[j] = num
    shape[i] = num
    return matrix.T.reshape(shape)


def _utility_tensor(instance: MarketInstance, i: int) -> np.ndarray:
    """Buyer i's expected utility (transfer included) over every profile,
    shaped (num_sets,) * n with axis b indexing buyer b's mask."""
    n, num, alpha = instance.n, instance.num_sets, instance.alpha
    shape_i = [1] * n
    shape_i[i] = num
    out = np.array(instance.gain[i]).reshape(shape_i) + np.zeros((num,) * n)
    for j in range(n):
        if j == i:
            continue
        suffered = _pair_term(instance, i, j)
        caused = _pair_term(instance, j, i).T  # what j suffers from i, as (mask_i, mask_j)
        term = (1.0 - alpha) * suffered + alpha * caused
        out -= _broadcast_pair(term, i, j, n, num)
    return out


def _welfare_tensor(instance: MarketInstance) -> np.ndarray:
    n, num = instance.n, instance.num_sets
    out = np.zeros((num,) * n)
    for i in range(n):
        shape_i = [1] * n
        shape_i[i] = num
        out += np.array(instance.gain[i]).reshape(shape_i)
        for j in range(n):
            if j != i:
                out -= _broadcast_pair(_pair_term(instance, i, j), i, j, n, num)
    return out


def _decode_flat(flat: int, n: int, num: int) -> Profile:
    masks = []
    for _ in range(n):
        flat, m = divmod(flat, num)
        masks.append(m)
    return tuple(reversed(masks))  # buyer 0 is the most significant digit


# ---------------------------------------------------------------------------
# Public analysis operations


def social_optimum(instance: MarketInstance,
                   budget: int | None = None) -> tuple[Profile, float]:
    """Welfare-maximizing profile (lexicographically smallest on ties)."""
    if instance.is_independent:
        profile = tuple(int(np.argmax(_welfare_contribution(instance, i)))
                        for i in range(instance.n))
    else:
        _check_budget(instance, budget)
        sw = _welfare_tensor(instance)
        profile = _decode_flat(int(np.argmax(sw)), instance.n, instance.num_sets)
    return profile, social_welfare(instance, profile)


def enumerate_pure_equilibria(instance: MarketInstance,
                              budget: int | None = None) -> list[Profile]:
    """All profiles where no buyer can gain more than the strictness
    margin by a unilateral deviation (transfer included)."""
    budget_val = DEFAULT_BUDGET if budget is None else budget
    if instance.is_independent:
        # A profile is an equilibrium iff every buyer plays an
        # effective-utility maximizer, so equilibria form a product set.
        per_buyer = [_argmax_set(effective_utility_table(instance, i))
                     for i in range(instance.n)]
        count = 1
        for s in per_buyer:
            count *= len(s)
        if count > budget_val:
            raise BudgetExceededError(
                f"{count} tied equilibria exceed budget {budget_val}")
        return [tuple(p) for p in itertools.product(*per_buyer)]
    _check_budget(instance, budget)
    n, num = instance.n, instance.num_sets
    eq = np.ones((num,) * n, dtype=bool)
    for i in range(n):
        u = _utility_tensor(instance, i)
        eq &= u >= u.max(axis=i, keepdims=True) - MARGIN
    return [_decode_flat(int(f), n, num) for f in np.flatnonzero(eq.reshape(-1))]


@dataclass(frozen=True)
class EquilibriumReport:
    """Full analysis of one instance. WRaE values are welfare gaps between
    the social optimum and the worst/best pure equilibrium; they are absent
    when no pure equilibrium exists."""

    pure_equilibria: list[Profile]
    optimum_profile: Profile
    optimum_welfare: float
    worst_wrae: float | None
    best_wrae: float | None
    dominant: Profile | None

    def to_dict(self, instance: MarketInstance | None = None) -> dict:
        doc = {
            "schema_version": 1,
            "pure_equilibria": [list(p) for p in self.pure_equilibria],
            "social_optimum": {"profile": list(self.optimum_profile),
                               "welfare": self.optimum_welfare},
            "worst_wrae": self.worst_wrae,
            "best_wrae": self.best_wrae,
            "dominant_profile": None if self.dominant is None else list(self.dominant),
        }
        if instance is not None:
            doc["market"] = {
                "n": instance.n, "k": instance.k, "alpha": instance.alpha,
                "model": "independent" if instance.is_independent else "joint",
            }
        return doc


def wrae(instance: MarketInstance, budget: int | None = None) -> EquilibriumReport:
    optimum_profile, optimum_welfare = social_optimum(instance, budget)
    equilibria = enumerate_pure_equilibria(instance, budget)
    worst = best = None
    if equilibria:
        welfare = [social_welfare(instance, p) for p in equilibria]
        worst = optimum_welfare - min(welfare)
        best = optimum_welfare - max(welfare)
    dom = dominant_profile(instance) if instance.is_independent else None
    return EquilibriumReport(pure_equilibria=equilibria,
                             optimum_profile=optimum_profile,
                             optimum_welfare=optimum_welfare,
                             worst_wrae=worst, best_wrae=best, dominant=dom)


# ---------------------------------------------------------------------------
# Best-response dynamics


def _response_values(instance: MarketInstance, profile: Profile, i: int) -> np.ndarray:
    """Buyer i's expected utility for each own mask, opponents fixed.
    Constant opponent terms are dropped in the independent model (they
    shift every entry equally)."""
    if instance.is_independent:
        return effective_utility_table(instance, i)
    e = instance.externality.table
    alpha = instance.alpha
    values = np.array(instance.gain[i])
    for j in range(instance.n):
        if j == i:
            continue
        mj = profile[j]
        values -= (1.0 - alpha) * e[i, j, :, mj] + alpha * e[j, i, mj, :]
    return values


def best_response(instance: MarketInstance, profile: Profile, i: int) -> int:
    """Utility-maximizing reply for buyer i; keeps the current mask when it
    is within the strictness margin of the maximum, otherwise the smallest
    maximizing mask."""
    profile = validate_profile(instance, profile)
    values = _response_values(instance, profile, i)
    top = values.max()
    if values[profile[i]] >= top - MARGIN:
        return profile[i]
    return int(np.flatnonzero(values >= top - MARGIN)[0])


def is_pure_equilibrium(instance: MarketInstance, profile: Profile,
                        margin: float = MARGIN) -> bool:
    profile = validate_profile(instance, profile)
    for i in range(instance.n):
        values = _response_values(instance, profile, i)
        if values[profile[i]] < values.max() - margin:
            return False
    return True


@dataclass(frozen=True)
class DynamicsTrace:
    """Sequential best-response run. states[p] is the profile after pass p
    (states[0] is the start); updates hold (pass, buyer, old, new)."""

    states: list[Profile]
    updates: list[tuple[int, int, int, int]]
    converged: bool
    cycle_detected: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "states": [list(s) for s in self.states],
            "updates": [list(u) for u in self.updates],
            "converged": self.converged,
            "cycle_detected": self.cycle_detected,
        }


def sequential_best_response(instance: MarketInstance, start: Profile,
                             order: tuple[int, ...] | None = None,
                             max_rounds: int = 1000) -> DynamicsTrace:
    """Cycle buyers in a fixed order, each switching to a best response.

    Stops when a full pass changes nothing (converged), when a pass-end
    state recurs (cycle detected), or after max_rounds passes. Convergence
    is verified with a full deviation check.
    """
    if max_rounds < 1:
        raise MarketError(f"max_rounds={max_rounds} must be >= 1")
    current = validate_profile(instance, start)
    if order is None:
        order = tuple(range(instance.n))
    if sorted(order) != list(range(instance.n)):
        raise MarketError(f"order {order} is not a permutation of the buyers")

    states = [current]
    updates: list[tuple[int, int, int, int]] = []
    seen = {current}
    converged = cycle = False
    for rnd in range(max_rounds):
        masks = list(current)
        changed = False
        for i in order:
            new = best_response(instance, tuple(masks), i)
            if new != masks[i]:
                updates.append((rnd, i, masks[i], new))
                masks[i] = new
                changed = True
        current = tuple(masks)
        states.append(current)
        if not changed:
            converged = True
            break
        if current in seen:
            cycle = True
            break
        seen.add(current)
    if converged and not is_pure_equilibrium(instance, current):
        raise InvariantError(
            f"best response converged to {current}, which fails the deviation check")
    return DynamicsTrace(states=states, updates=updates,
                         converged=converged, cycle_detected=cycle)


# ---------------------------------------------------------------------------
# Joint-model reduction and potential


def symmetrize(instance: MarketInstance) -> MarketInstance:
    """Fold a joint instance at transfer weight 0.5 into an equivalent
    symmetric instance with no transfer.

    Replaces each pairwise externality with the average of what the two
    buyers suffer in that state; every buyer's expected utility at every
    profile is preserved exactly.
    """
    from .market import JointExternality  # local to avoid re-export confusion

    if instance.is_independent:
        raise UnsupportedModelError("symmetrize is defined for the joint model")
    if abs(instance.alpha - 0.5) > MARGIN:
        raise MarketError(
            f"symmetrize requires alpha = 0.5 (got {instance.alpha}); "
            "the reduction is invalid otherwise")
    e = instance.externality.table
    n = instance.n
    out = np.zeros_like(e)
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = 0.5 * (e[i, j] + e[j, i].T)
    return MarketInstance(n=n, k=instance.k, gain=instance.gain,
                          externality=JointExternality(out), alpha=0.0,
                          lam=instance.lam, noise=instance.noise)


def pairwise_potential(instance: MarketInstance, profile: Profile) -> float:
    """Sum of gains minus once-per-pair externalities. Along best-response
    paths of a symmetric instance this strictly increases at every strict
    update."""
    if instance.is_independent:
        raise UnsupportedModelError("the pairwise potential is a joint-model quantity")
    profile = validate_profile(instance, profile)
    e = instance.externality.table
    total = 0.0
    for i in range(instance.n):
        total += instance.gain[i, profile[i]]
        for j in range(i + 1, instance.n):
            total -= e[i, j, profile[i], profile[j]]
    return total
