"""Synchronous repeated-market simulation engine.

Each round every buyer picks a mask (via her learner), the market samples
gains and externalities, the platform settles the transfer from the
*sampled* externalities, and each learner is fed its observed effective
utility: sampled gain minus alpha times the sampled externality the buyer
caused. All randomness flows from one seed: stream 0 drives the market
noise, stream i+1 belongs to buyer i.

The per-round loop exists twice: a compiled kernel (Cython, built at
install time) and a pure-Python loop over the learner classes. The
backend is selected at import; both produce bit-identical traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import BudgetExceededError, MarketError, UnsupportedModelError
from ..market import (
    MarketInstance,
    caused_externality_table,
    ext_noise_halfwidths,
    gain_noise_halfwidths,
    popcount_table,
)
from .learners import FlatUCBLearner, ZoomingLearner

try:
    from . import _simcore  # compiled kernel, optional
    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _simcore = None
    HAVE_COMPILED = False

LEARNER_KINDS = ("zooming", "ucb", "dominant-scripted", "random")
_KIND_CODE = {"zooming": 0, "ucb": 1, "dominant-scripted": 2, "random": 3}

DEFAULT_K_CAP = 12
DEFAULT_CHUNK = 4096
PHASE_START_POWER = 4


def schedule_alpha(phase_horizon: int, k: int) -> float:
    """Transfer weight for a phase of the given horizon: starts at 0 and
    climbs toward 1 as the horizon grows, balancing learning noise against
    the welfare loss of a weak intervention."""
    if phase_horizon < 2:
        raise MarketError(f"phase horizon {phase_horizon} must be >= 2")
    if k < 1:
        raise MarketError(f"k={k} must be >= 1")
    log_t = math.log(phase_horizon)
    slow = k * k * math.sqrt(log_t) / math.sqrt(phase_horizon)
    fast = (k ** 3) * (2.0 ** (0.75 * k)) * log_t * log_t / phase_horizon
    return max(0.0, 1.0 - min(slow, fast))


def doubling_phases(total_rounds: int,
                    start_power: int = PHASE_START_POWER) -> list[tuple[int, int, int]]:
    """(start, length, nominal_horizon) triples covering total_rounds with
    horizons 2**p, 2**(p+1), ...; the last phase is truncated."""
    phases = []
    t0, p = 0, start_power
    while t0 < total_rounds:
        horizon = 1 << p
        length = min(horizon, total_rounds - t0)
        phases.append((t0, length, horizon))
        t0 += length
        p += 1
    return phases


@dataclass(frozen=True)
class SimulationTrace:
    """Round-by-round record of one simulation run."""

    n: int
    k: int
    total_rounds: int
    seed: int
    learners: tuple[str, ...]
    alpha_mode: str
    backend: str
    alpha: np.ndarray                 # (T,)
    profiles: np.ndarray              # (T, n) masks
    sampled_gain: np.ndarray          # (T, n)
    realized_utility: np.ndarray      # (T, n)
    transactions: np.ndarray          # (T, n)
    observed_effective: np.ndarray    # (T, n)
    chosen_pulls: np.ndarray          # (T, n) pulls of the chosen arm, post-update
    active_count: np.ndarray          # (T, n)
    activation_log: tuple[tuple[tuple[int, int], ...], ...]  # per buyer (round, mask)
    phase_starts: tuple[int, ...]
    cover_ok: bool
    clean_event_ok: bool | None       # None when the check was not requested

    def round_record(self, t: int) -> dict:
        return {
            "t": t + 1,
            "alpha": float(self.alpha[t]),
            "profile": [int(m) for m in self.profiles[t]],
            "utilities": [float(v) for v in self.realized_utility[t]],
            "transactions": [float(v) for v in self.transactions[t]],
            "per_buyer": [
                {"pulls": int(self.chosen_pulls[t, i]),
                 "active_count": int(self.active_count[t, i])}
                for i in range(self.n)
            ],
        }


class _PhaseContext:
    """Everything constant within one phase, shared by both backends."""

    def __init__(self, instance: MarketInstance, kinds: list[int],
                 alpha: float, horizon: int):
        num = instance.num_sets
        self.n = instance.n
        self.k = instance.k
        self.num_sets = num
        self.lam = instance.lam
        self.alpha = alpha
        self.horizon = horizon
        self.log_horizon = math.log(horizon)
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.gain = np.ascontiguousarray(instance.gain)
        self.ext = np.ascontiguousarray(instance.externality.table)
        self.dgain = np.ascontiguousarray(gain_noise_halfwidths(instance))
        self.dext = np.ascontiguousarray(ext_noise_halfwidths(instance))
        self.pop = np.ascontiguousarray(popcount_table(instance.k))
        caused = np.stack([caused_externality_table(instance, i)
                           for i in range(instance.n)])
        self.effective = np.ascontiguousarray(self.gain - alpha * caused)
        self.scripted = np.array([int(np.argmax(self.effective[i]))
                                  for i in range(instance.n)], dtype=np.int64)


class _PythonBackend:
    """Reference per-round loop over the learner classes."""

    name = "python"

    def begin_phase(self, ctx: _PhaseContext, initial_masks: dict[int, int]):
        learners = {}
        counts = np.zeros((ctx.n, ctx.num_sets), dtype=np.int64)
        for i, code in enumerate(ctx.kinds):
            if code == 0:
                learners[i] = ZoomingLearner(ctx.k, ctx.horizon, ctx.lam,
                                             initial_mask=initial_masks[i])
            elif code == 1:
                learners[i] = FlatUCBLearner(ctx.k, ctx.horizon)
        return {"learners": learners, "counts": counts}

    def run_chunk(self, ctx, state, phase_t0, global_t0, u, rand_arms,
                  check_clean, cover_every, out):
        n = ctx.n
        alpha = ctx.alpha
        learners = state["learners"]
        plain_counts = state["counts"]
        length = u.shape[0]
        clean_ok = True
        cover_ok = True
        gains = np.empty(n)
        ext_sample = np.empty((n, n))
        choice = np.empty(n, dtype=np.int64)

        for t in range(length):
            gt = global_t0 + t
            for i in range(n):
                code = ctx.kinds[i]
                act_mask = -1
                if code == 0:
                    learner = learners[i]
                    activated = learner.ensure_cover(gt)
                    if activated is not None:
                        act_mask = activated
                    if cover_every > 0 and (phase_t0 + t) % cover_every == 0:
                        cover_ok = cover_ok and bool(learner.coverage().all())
                    choice[i] = learner.select()
                elif code == 1:
                    choice[i] = learners[i].select()
                elif code == 2:
                    choice[i] = ctx.scripted[i]
                else:
                    choice[i] = rand_arms[i][t]
                out["act_mask"][t, i] = act_mask

            for i in range(n):
                m = int(choice[i])
                gains[i] = ctx.gain[i, m] + ctx.dgain[i, m] * (2.0 * u[t, i, i] - 1.0)
            for i in range(n):
                for j in range(n):
                    if i == j:
                        ext_sample[i, j] = 0.0
                    else:
                        mj = int(choice[j])
                        ext_sample[i, j] = (ctx.ext[i, j, mj]
                                            + ctx.dext[i, j, mj] * (2.0 * u[t, i, j] - 1.0))
            for i in range(n):
                suffered = 0.0
                caused = 0.0
                for j in range(n):
                    suffered += ext_sample[i, j]
                    caused += ext_sample[j, i]
                tx = alpha * (caused - suffered)
                obs = gains[i] - alpha * caused
                m = int(choice[i])
                code = ctx.kinds[i]
                if code <= 1:
                    learners[i].update(m, obs)
                    pulls = int(learners[i].counts[m])
                    n_active = learners[i].num_active
                else:
                    plain_counts[i, m] += 1
                    pulls = int(plain_counts[i, m])
                    n_active = 1 if code == 2 else ctx.num_sets
                out["choice"][t, i] = m
                out["gain"][t, i] = gains[i]
                out["tx"][t, i] = tx
                out["util"][t, i] = gains[i] - suffered - tx
                out["obs"][t, i] = obs
                out["pulls"][t, i] = pulls
                out["active"][t, i] = n_active

            if check_clean:
                for i in range(n):
                    if ctx.kinds[i] > 1:
                        continue
                    learner = learners[i]
                    if ctx.kinds[i] == 0:
                        act = np.flatnonzero(learner.active)
                    else:
                        act = np.arange(ctx.num_sets)
                    counts = learner.counts[act]
                    means = np.where(counts > 0,
                                     learner.sums[act] / np.maximum(counts, 1), 0.0)
                    radii = np.sqrt(12.0 * ctx.log_horizon / (counts + 1.0))
                    if (np.abs(means - ctx.effective[i, act]) > radii).any():
                        clean_ok = False
        return clean_ok, cover_ok


class _CompiledBackend:
    """Thin adapter around the Cython kernel; state is raw arrays."""

    name = "compiled"

    def begin_phase(self, ctx: _PhaseContext, initial_masks: dict[int, int]):
        counts = np.zeros((ctx.n, ctx.num_sets), dtype=np.int64)
        sums = np.zeros((ctx.n, ctx.num_sets), dtype=np.float64)
        active = np.zeros((ctx.n, ctx.num_sets), dtype=np.uint8)
        for i, code in enumerate(ctx.kinds):
            if code == 0:
                active[i, initial_masks[i]] = 1
            elif code == 1:
                active[i, :] = 1
        return {"counts": counts, "sums": sums, "active": active}

    def run_chunk(self, ctx, state, phase_t0, global_t0, u, rand_arms,
                  check_clean, cover_every, out):
        length = u.shape[0]
        arms = np.zeros((ctx.n, length), dtype=np.int64)
        for i, arr in rand_arms.items():
            arms[i] = arr
        status = _simcore.run_chunk(
            ctx.lam, ctx.alpha, ctx.log_horizon,
            ctx.kinds, ctx.scripted,
            ctx.gain, ctx.ext, ctx.dgain, ctx.dext, ctx.effective, ctx.pop,
            state["counts"], state["sums"], state["active"],
            np.ascontiguousarray(u), arms,
            1 if check_clean else 0, cover_every, phase_t0,
            out["choice"], out["gain"], out["tx"], out["util"], out["obs"],
            out["pulls"], out["active"], out["act_mask"],
        )
        if status & 4:
            from ..errors import InvariantError
            raise InvariantError(
                "a single activation could not restore cover "
                f"(lambda={ctx.lam} exceeds a fresh arm's radius)")
        return bool(status & 1), bool(status & 2)


def _resolve_backend(backend: str):
    if backend == "auto":
        backend = "compiled" if HAVE_COMPILED else "python"
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise MarketError("compiled backend requested but the extension "
                              "is not built; install with the Cython kernel "
                              "or use backend='python'")
        return _CompiledBackend()
    if backend == "python":
        return _PythonBackend()
    raise MarketError(f"unknown backend {backend!r}")


def _resolve_learners(learners, n: int) -> list[str]:
    if isinstance(learners, str):
        names = [learners] * n
    else:
        names = list(learners)
        if len(names) != n:
            raise MarketError(f"{len(names)} learner kinds for {n} buyers")
    for name in names:
        if name not in LEARNER_KINDS:
            raise MarketError(f"unknown learner kind {name!r}; "
                              f"expected one of {', '.join(LEARNER_KINDS)}")
    return names


def simulate(instance: MarketInstance, total_rounds: int,
             learners="zooming", seed: int = 0, alpha=None,
             backend: str = "auto", cover_check_every: int = 64,
             check_clean_event: bool = False, k_cap: int = DEFAULT_K_CAP,
             chunk: int = DEFAULT_CHUNK) -> SimulationTrace:
    """Run one seeded simulation.

    alpha: None plays the instance's fixed transfer weight, a float
    overrides it, and "corollary" enables the doubling-trick schedule
    (learners restart each phase; the weight is fixed within a phase and
    non-decreasing across phases).
    """
    if not instance.is_independent:
        raise UnsupportedModelError(
            "learning is only supported under the independent externality model")
    if total_rounds < 2:
        raise MarketError(f"need at least 2 rounds, got {total_rounds}")
    if instance.k > k_cap:
        raise BudgetExceededError(
            f"k={instance.k} above the simulation cap {k_cap}; raise k_cap "
            "to enumerate 2**k arms per round anyway")
    names = _resolve_learners(learners, instance.n)
    kinds = [_KIND_CODE[name] for name in names]
    runner = _resolve_backend(backend)

    if alpha is None:
        alpha_mode, phases = "fixed", [(0, total_rounds, total_rounds)]
        fixed_alpha = instance.alpha
    elif alpha == "corollary":
        alpha_mode, phases = "corollary", doubling_phases(total_rounds)
        fixed_alpha = None
    else:
        fixed_alpha = float(alpha)
        if not 0.0 <= fixed_alpha <= 1.0:
            raise MarketError(f"alpha={fixed_alpha} outside [0, 1]")
        alpha_mode, phases = "fixed", [(0, total_rounds, total_rounds)]

    n, num = instance.n, instance.num_sets
    t_total = total_rounds
    out = {
        "choice": np.zeros((t_total, n), dtype=np.int32),
        "gain": np.zeros((t_total, n)),
        "tx": np.zeros((t_total, n)),
        "util": np.zeros((t_total, n)),
        "obs": np.zeros((t_total, n)),
        "pulls": np.zeros((t_total, n), dtype=np.int64),
        "active": np.zeros((t_total, n), dtype=np.int32),
        "act_mask": np.full((t_total, n), -1, dtype=np.int32),
    }
    alpha_arr = np.zeros(t_total)

    root = np.random.SeedSequence(seed)
    children = root.spawn(n + 1)
    market_rng = np.random.default_rng(children[0])
    buyer_rng = [np.random.default_rng(children[i + 1]) for i in range(n)]

    logs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    clean_ok = True
    cover_ok = True

    for phase_start, phase_len, horizon in phases:
        phase_alpha = (fixed_alpha if alpha_mode == "fixed"
                       else schedule_alpha(horizon, instance.k))
        ctx = _PhaseContext(instance, kinds, phase_alpha, horizon)
        alpha_arr[phase_start:phase_start + phase_len] = phase_alpha
        initial = {}
        for i in range(n):
            if kinds[i] == 0:
                initial[i] = int(buyer_rng[i].integers(0, num))
                logs[i].append((phase_start, initial[i]))
        state = runner.begin_phase(ctx, initial)

        done = 0
        while done < phase_len:
            length = min(chunk, phase_len - done)
            g0 = phase_start + done
            u = market_rng.random((length, n, n))
            rand_arms = {i: buyer_rng[i].integers(0, num, size=length)
                         for i in range(n) if kinds[i] == 3}
            view = {key: arr[g0:g0 + length] for key, arr in out.items()}
            c_ok, cov_ok = runner.run_chunk(ctx, state, done, g0, u, rand_arms,
                                            check_clean_event, cover_check_every,
                                            view)
            clean_ok = clean_ok and c_ok
            cover_ok = cover_ok and cov_ok
            done += length

    act = out["act_mask"]
    for t, i in zip(*np.nonzero(act >= 0)):
        logs[int(i)].append((int(t), int(act[t, i])))
    for i in range(n):
        logs[i].sort()

    return SimulationTrace(
        n=n, k=instance.k, total_rounds=total_rounds, seed=seed,
        learners=tuple(names), alpha_mode=alpha_mode, backend=runner.name,
        alpha=alpha_arr, profiles=out["choice"], sampled_gain=out["gain"],
        realized_utility=out["util"], transactions=out["tx"],
        observed_effective=out["obs"], chosen_pulls=out["pulls"],
        active_count=out["active"],
        activation_log=tuple(tuple(log) for log in logs),
        phase_starts=tuple(p[0] for p in phases),
        cover_ok=cover_ok,
        clean_event_ok=clean_ok if check_clean_event else None,
    )
