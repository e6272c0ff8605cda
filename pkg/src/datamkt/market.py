"""Core market model: seller sets, utilities, transfers, and round sampling.

A market has n buyers and k sellers. A buyer's action is a subset of
sellers, stored as a k-bit mask (bit j set = seller j bought). Buyer i's
expected utility at a joint profile S = (m_0, ..., m_{n-1}) is

    gain_i(m_i) - sum_{j != i} ext_ij(...) - transaction_i(S)

where the externality term depends on the model: in the *independent*
model buyer i suffers ext[i][j][m_j] from buyer j regardless of her own
choice; in the *joint* model she suffers ext[i][j][m_i][m_j]. The
platform's transaction cost redistributes alpha times the net externality
each buyer causes minus suffers, so it always sums to zero over buyers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionMismatchError, MarketError, ParseError, UnsupportedModelError

TOL = 1e-12
MAX_SELLERS = 20

_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def popcount_table(k: int) -> np.ndarray:
    """Bit-count lookup for all k-bit masks (cached, read-only)."""
    table = _POPCOUNT_CACHE.get(k)
    if table is None:
        size = 1 << k
        table = np.zeros(size, dtype=np.int64)
        for m in range(1, size):
            table[m] = table[m >> 1] + (m & 1)
        table.setflags(write=False)
        _POPCOUNT_CACHE[k] = table
    return table


@dataclass(frozen=True)
class SellerSet:
    """A subset of the k sellers, as a bitmask. The empty set (0) is legal."""

    bits: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= MAX_SELLERS:
            raise MarketError(f"seller count k={self.k} outside [1, {MAX_SELLERS}]")
        if not 0 <= self.bits < (1 << self.k):
            raise MarketError(f"mask {self.bits} out of range for k={self.k}")

    @property
    def size(self) -> int:
        return int(popcount_table(self.k)[self.bits])

    def distance(self, other: "SellerSet") -> float:
        return hamming_distance(self, other)


def hamming_distance(a: SellerSet, b: SellerSet) -> float:
    """Normalized Hamming distance: differing sellers / k. Range [0, 1]."""
    if a.k != b.k:
        raise DimensionMismatchError(f"seller counts differ: {a.k} != {b.k}")
    return int(popcount_table(a.k)[a.bits ^ b.bits]) / a.k


def _as_mask(choice: Union[int, SellerSet], k: int) -> int:
    if isinstance(choice, SellerSet):
        if choice.k != k:
            raise DimensionMismatchError(f"seller counts differ: {choice.k} != {k}")
        return choice.bits
    m = int(choice)
    if not 0 <= m < (1 << k):
        raise MarketError(f"mask {m} out of range for k={k}")
    return m


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric bounded noise around expected gains and externalities.

    Samples are uniform on [mean - d, mean + d] where the halfwidth d is
    shrunk from the nominal value so every hard bound (gains in [-1, 1],
    externality entries in [0, 1], per-buyer externality sums <= 1) holds
    surely, never by clipping. "degenerate" means halfwidth 0 everywhere.
    """

    gain_halfwidth: float = 0.0
    ext_halfwidth: float = 0.0
    kind: str = "uniform"

    def __post_init__(self):
        if self.kind not in ("uniform", "degenerate"):
            raise MarketError(f"unknown noise kind {self.kind!r}")
        for name, v in (("gain_halfwidth", self.gain_halfwidth),
                        ("ext_halfwidth", self.ext_halfwidth)):
            if not 0.0 <= v <= 1.0:
                raise MarketError(f"{name}={v} outside [0, 1]")

    @property
    def effective_gain_halfwidth(self) -> float:
        return 0.0 if self.kind == "degenerate" else self.gain_halfwidth

    @property
    def effective_ext_halfwidth(self) -> float:
        return 0.0 if self.kind == "degenerate" else self.ext_halfwidth


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class IndependentExternality:
    """table[i][j][m] = expected externality buyer i suffers when buyer j
    orders mask m. The diagonal i == j is unused and kept at zero."""

    table: np.ndarray

    def __post_init__(self):
        t = _freeze(self.table)
        object.__setattr__(self, "table", t)
        if t.ndim != 3 or t.shape[0] != t.shape[1]:
            raise MarketError(f"independent externality table has shape {t.shape}, "
                              "expected (n, n, 2**k)")

    @property
    def n(self) -> int:
        return self.table.shape[0]

    @property
    def num_sets(self) -> int:
        return self.table.shape[2]


@dataclass(frozen=True)
class JointExternality:
    """table[i][j][mi][mj] = expected externality buyer i (holding mi)
    suffers from buyer j (holding mj). Owner-i mask always indexes first."""

    table: np.ndarray

    def __post_init__(self):
        t = _freeze(self.table)
        object.__setattr__(self, "table", t)
        if t.ndim != 4 or t.shape[0] != t.shape[1] or t.shape[2] != t.shape[3]:
            raise MarketError(f"joint externality table has shape {t.shape}, "
                              "expected (n, n, 2**k, 2**k)")

    @property
    def n(self) -> int:
        return self.table.shape[0]

    @property
    def num_sets(self) -> int:
        return self.table.shape[2]


Externality = Union[IndependentExternality, JointExternality]
Profile = tuple[int, ...]


@dataclass(frozen=True)
class MarketInstance:
    """Immutable description of one market: players, tables, intervention.

    Construction checks structure (shapes, index ranges); value-level
    invariants (bounds, sums, the forced zero gain of the empty set) are
    checked by :func:`validate_instance` so that externally supplied files
    can be loaded first and then reported on.
    """

    n: int
    k: int
    gain: np.ndarray
    externality: Externality
    alpha: float = 0.0
    lam: float = 1.0
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.n < 1:
            raise MarketError(f"need at least one buyer, got n={self.n}")
        if not 1 <= self.k <= MAX_SELLERS:
            raise MarketError(f"seller count k={self.k} outside [1, {MAX_SELLERS}]")
        g = _freeze(self.gain)
        object.__setattr__(self, "gain", g)
        if g.shape != (self.n, self.num_sets):
            raise MarketError(f"gain table has shape {g.shape}, "
                              f"expected {(self.n, self.num_sets)}")
        if self.externality.n != self.n or self.externality.num_sets != self.num_sets:
            raise MarketError("externality table does not match n/k")
        if not np.isfinite(g).all():
            raise MarketError("gain table contains non-finite values")
        if not np.isfinite(self.externality.table).all():
            raise MarketError("externality table contains non-finite values")

    @property
    def num_sets(self) -> int:
        return 1 << self.k

    @property
    def is_independent(self) -> bool:
        return isinstance(self.externality, IndependentExternality)

    def seller_set(self, mask: int) -> SellerSet:
        return SellerSet(mask, self.k)


def validate_profile(instance: MarketInstance, profile: Profile) -> tuple[int, ...]:
    if len(profile) != instance.n:
        raise DimensionMismatchError(
            f"profile has {len(profile)} entries for {instance.n} buyers")
    return tuple(_as_mask(m, instance.k) for m in profile)


# ---------------------------------------------------------------------------
# Expected quantities


def expected_externality_on(instance: MarketInstance, i: int, profile: Profile) -> float:
    """Total expected externality buyer i suffers at the given profile."""
    profile = validate_profile(instance, profile)
    e = instance.externality.table
    total = 0.0
    if instance.is_independent:
        for j in range(instance.n):
            if j != i:
                total += e[i, j, profile[j]]
    else:
        mi = profile[i]
        for j in range(instance.n):
            if j != i:
                total += e[i, j, mi, profile[j]]
    return total


def expected_externality_from(instance: MarketInstance, i: int, profile: Profile) -> float:
    """Total expected externality buyer i causes the others at the profile."""
    profile = validate_profile(instance, profile)
    e = instance.externality.table
    mi = profile[i]
    total = 0.0
    if instance.is_independent:
        for j in range(instance.n):
            if j != i:
                total += e[j, i, mi]
    else:
        for j in range(instance.n):
            if j != i:
                total += e[j, i, profile[j], mi]
    return total


def expected_transaction(instance: MarketInstance, i: int, profile: Profile) -> float:
    """Platform transfer charged to buyer i: alpha * (caused - suffered)."""
    return instance.alpha * (expected_externality_from(instance, i, profile)
                             - expected_externality_on(instance, i, profile))


def expected_utility(instance: MarketInstance, i: int, profile: Profile) -> float:
    profile = validate_profile(instance, profile)
    return (instance.gain[i, profile[i]]
            - expected_externality_on(instance, i, profile)
            - expected_transaction(instance, i, profile))


def caused_externality_table(instance: MarketInstance, i: int) -> np.ndarray:
    """Vector over masks m of the total externality buyer i causes by
    ordering m. Only defined for the independent model."""
    if not instance.is_independent:
        raise UnsupportedModelError(
            "per-action caused externality requires the independent model")
    e = instance.externality.table
    idx = [j for j in range(instance.n) if j != i]
    if not idx:
        return np.zeros(instance.num_sets)
    return e[idx, i, :].sum(axis=0)


def effective_utility_table(instance: MarketInstance, i: int) -> np.ndarray:
    """gain_i(m) - alpha * caused_i(m) for every mask m (independent only).

    This is the action-dependent part of buyer i's utility under the
    transaction cost; the suffered-externality term does not depend on
    her own choice in the independent model.
    """
    return instance.gain[i] - instance.alpha * caused_externality_table(instance, i)


def expected_effective_utility(instance: MarketInstance, i: int,
                               choice: Union[int, SellerSet]) -> float:
    m = _as_mask(choice, instance.k)
    return float(effective_utility_table(instance, i)[m])


def social_welfare(instance: MarketInstance, profile: Profile) -> float:
    """Sum of expected buyer utilities. Computed without transfer terms
    (they cancel exactly across buyers)."""
    profile = validate_profile(instance, profile)
    total = 0.0
    for i in range(instance.n):
        total += instance.gain[i, profile[i]]
        total -= expected_externality_on(instance, i, profile)
    return total


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class RoundOutcome:
    """One sampled market round.

    sampled_ext[i][j] is the externality buyer i suffered from buyer j
    this round (diagonal zero). transaction sums to zero across buyers.
    """

    sampled_gain: np.ndarray
    sampled_ext: np.ndarray
    transaction: np.ndarray
    realized_utility: np.ndarray


def gain_noise_halfwidths(instance: MarketInstance) -> np.ndarray:
    """Per-(buyer, mask) halfwidth keeping sampled gains inside [-1, 1]."""
    d = instance.noise.effective_gain_halfwidth
    g = instance.gain
    return np.maximum(0.0, np.minimum(d, np.minimum(1.0 - g, 1.0 + g)))


def ext_noise_halfwidths(instance: MarketInstance,
                         profile: Profile | None = None) -> np.ndarray:
    """Per-pair halfwidths keeping each entry in [0, 1] and every buyer's
    externality sum bound intact surely.

    Independent model: returns an (n, n, 2**k) table (columns indexed by
    the causing buyer's mask); the bound protected is the *caused* sum,
    split evenly across the n-1 sufferers. Joint model: requires a profile
    and returns the (n, n) halfwidths at that profile, protecting each
    buyer's *suffered* sum.
    """
    d = instance.noise.effective_ext_halfwidth
    n = instance.n
    e = instance.externality.table
    if instance.is_independent:
        caused = np.zeros((n, instance.num_sets))
        for j in range(n):
            idx = [i for i in range(n) if i != j]
            if idx:
                caused[j] = e[idx, j, :].sum(axis=0)
        slack = np.maximum(0.0, 1.0 - caused)  # (n, 2**k), indexed by causer
        share = slack / max(n - 1, 1)
        out = np.minimum(d, np.minimum(e, share[np.newaxis, :, :]))
        for j in range(n):
            out[j, j, :] = 0.0
        return np.maximum(0.0, out)
    if profile is None:
        raise MarketError("joint model needs a profile to scale noise")
    profile = validate_profile(instance, profile)
    at = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                at[i, j] = e[i, j, profile[i], profile[j]]
    slack = np.maximum(0.0, 1.0 - at.sum(axis=1))
    share = slack / max(n - 1, 1)
    out = np.minimum(d, np.minimum(at, share[:, np.newaxis]))
    np.fill_diagonal(out, 0.0)
    return np.maximum(0.0, out)


def sample_outcome_from_uniforms(instance: MarketInstance, profile: Profile,
                                 u: np.ndarray) -> RoundOutcome:
    """Deterministically map an (n, n) block of uniforms in [0, 1) to a
    RoundOutcome. Diagonal entries drive gains, off-diagonal (i, j) drives
    the externality i suffers from j. Shared by engine backends."""
    profile = validate_profile(instance, profile)
    n = instance.n
    e = instance.externality.table
    dg = gain_noise_halfwidths(instance)

    gains = np.empty(n)
    for i in range(n):
        m = profile[i]
        gains[i] = instance.gain[i, m] + dg[i, m] * (2.0 * u[i, i] - 1.0)

    ext = np.zeros((n, n))
    if instance.is_independent:
        de = ext_noise_halfwidths(instance)
        for i in range(n):
            for j in range(n):
                if i != j:
                    mj = profile[j]
                    ext[i, j] = e[i, j, mj] + de[i, j, mj] * (2.0 * u[i, j] - 1.0)
    else:
        de = ext_noise_halfwidths(instance, profile)
        for i in range(n):
            for j in range(n):
                if i != j:
                    ext[i, j] = (e[i, j, profile[i], profile[j]]
                                 + de[i, j] * (2.0 * u[i, j] - 1.0))

    suffered = ext.sum(axis=1)
    caused = ext.sum(axis=0)
    tx = instance.alpha * (caused - suffered)
    utility = gains - suffered - tx
    return RoundOutcome(sampled_gain=gains, sampled_ext=ext,
                        transaction=tx, realized_utility=utility)


def sample_round(instance: MarketInstance, profile: Profile,
                 rng: np.random.Generator) -> RoundOutcome:
    """Sample one market round from a caller-owned random stream."""
    u = rng.random((instance.n, instance.n))
    return sample_outcome_from_uniforms(instance, profile, u)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def validate_instance(instance: MarketInstance,
                      expect_symmetric: bool = False,
                      tol: float = TOL) -> list[CheckResult]:
    """Run every value-level invariant; returns one result per named check."""
    results: list[CheckResult] = []

    def check(name: str, ok: bool, detail: str = ""):
        results.append(CheckResult(name, bool(ok), "" if ok else detail))

    g = instance.gain
    e = instance.externality.table
    check("alpha-range", 0.0 <= instance.alpha <= 1.0,
          f"alpha={instance.alpha}")
    check("lambda-positive", instance.lam > 0.0, f"lambda={instance.lam}")
    check("gain-range", bool((np.abs(g) <= 1.0 + tol).all()),
          f"max |gain| = {np.abs(g).max()}")
    check("empty-set-gain-zero", bool((np.abs(g[:, 0]) <= tol).all()),
          f"gain at empty set: {g[:, 0].tolist()}")
    check("externality-range",
          bool(((e >= -tol) & (e <= 1.0 + tol)).all()),
          f"externality entries span [{e.min()}, {e.max()}]")

    n = instance.n
    if instance.is_independent:
        worst = 0.0
        where = ""
        for j in range(n):
            idx = [i for i in range(n) if i != j]
            if not idx:
                continue
            caused = e[idx, j, :].sum(axis=0)
            m = int(np.argmax(caused))
            if caused[m] > worst:
                worst, where = float(caused[m]), f"buyer {j}, mask {m}"
        check("externality-sum-bound", worst <= 1.0 + tol,
              f"caused externality sum {worst} > 1 at {where}")
    else:
        worst = 0.0
        where = ""
        for i in range(n):
            others = [j for j in range(n) if j != i]
            if not others:
                continue
            # worst case over opponents' masks, per own mask
            suffered = sum(e[i, j].max(axis=1) for j in others)
            m = int(np.argmax(suffered))
            if suffered[m] > worst:
                worst, where = float(suffered[m]), f"buyer {i}, own mask {m}"
        check("externality-sum-bound", worst <= 1.0 + tol,
              f"worst-case suffered externality sum {worst} > 1 at {where}")
        if expect_symmetric:
            bad = None
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    diff = np.abs(e[i, j] - e[j, i].T)
                    if diff.max() > tol:
                        mi, mj = np.unravel_index(int(np.argmax(diff)), diff.shape)
                        bad = (i, j, int(mi), int(mj))
                        break
                if bad:
                    break
            check("joint-symmetry", bad is None,
                  "" if bad is None else
                  f"e[{bad[0]}][{bad[1]}](mask {bad[2]}, mask {bad[3]}) != mirrored entry")
    if expect_symmetric and instance.is_independent:
        check("joint-symmetry", False, "symmetry expected but model is independent")
    return results


# ---------------------------------------------------------------------------
# Structured-text (JSON) instance files

SCHEMA_VERSION = 1


def instance_to_dict(instance: MarketInstance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n": instance.n,
        "k": instance.k,
        "alpha": instance.alpha,
        "lambda": instance.lam,
        "model": "independent" if instance.is_independent else "joint",
        "gain": instance.gain.tolist(),
        "externality": instance.externality.table.tolist(),
        "noise": {
            "gain_halfwidth": instance.noise.gain_halfwidth,
            "ext_halfwidth": instance.noise.ext_halfwidth,
            "kind": instance.noise.kind,
        },
    }


def instance_from_dict(doc: dict) -> MarketInstance:
    try:
        n = int(doc["n"])
        k = int(doc["k"])
        model = doc["model"]
        gain = np.asarray(doc["gain"], dtype=np.float64)
        ext = np.asarray(doc["externality"], dtype=np.float64)
        noise_doc = doc.get("noise", {})
        noise = NoiseModel(
            gain_halfwidth=float(noise_doc.get("gain_halfwidth", 0.0)),
            ext_halfwidth=float(noise_doc.get("ext_halfwidth", 0.0)),
            kind=str(noise_doc.get("kind", "uniform")),
        )
        alpha = float(doc["alpha"])
        lam = float(doc["lambda"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad instance document: {exc!r}") from exc
    if model not in ("independent", "joint"):
        raise ParseError(f"bad instance document: unknown model {model!r}")
    try:
        externality: Externality = (IndependentExternality(ext)
                                    if model == "independent"
                                    else JointExternality(ext))
        return MarketInstance(n=n, k=k, gain=gain, externality=externality,
                              alpha=alpha, lam=lam, noise=noise)
    except MarketError as exc:
        raise ParseError(f"bad instance document: {exc}") from exc


def save_instance(instance: MarketInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh)
        fh.write("\n")


def load_instance(path) -> MarketInstance:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"instance file {path} is not a JSON object")
    return instance_from_dict(doc)
