"""Instance constructors: canned game families and random generators.

The canned families are small markets engineered to sit at the edges of
the theory (a unique equilibrium with terrible welfare, a best-response
cycle, coexisting good and bad equilibria); the random generators produce
property-test fodder that respects every model bound by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, MarketError, ParseError
from .market import (
    IndependentExternality,
    JointExternality,
    MarketInstance,
    NoiseModel,
    popcount_table,
)

DEFAULT_EPSILON = 0.01
DEFAULT_LAMBDA = 1.0
DEFAULT_NOISE = NoiseModel(gain_halfwidth=0.2, ext_halfwidth=0.2, kind="uniform")

CLOSENESS_MAX_K = 12
_MAX_RETRIES = 1000


def make_singleton_conflict(n: int, epsilon: float = DEFAULT_EPSILON,
                            noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """n buyers, n sellers. Buyer i's best net gain is her own seller
    {i}, but buying it dumps 1/(n-1) of externality on everyone else, so
    the unique no-intervention equilibrium leaves all buyers at utility 0
    while avoiding the own-singleton sets is worth 1 - epsilon each.
    """
    if n < 2:
        raise MarketError("need n >= 2 buyers")
    if not 0.0 < epsilon < 1.0:
        raise MarketError(f"epsilon={epsilon} outside (0, 1)")
    k = n
    num = 1 << k
    gain = np.full((n, num), 1.0 - epsilon)
    gain[:, 0] = 0.0
    ext = np.zeros((n, n, num))
    for i in range(n):
        own = 1 << i
        gain[i, own] = 1.0
        for j in range(n):
            if j != i:
                ext[j, i, own] = 1.0 / (n - 1)
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=IndependentExternality(ext),
                          alpha=0.0, lam=DEFAULT_LAMBDA, noise=noise)


def make_bundle_trap(n: int, alpha: float, epsilon: float = DEFAULT_EPSILON,
                     noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Two sellers. The full bundle (mask 3) has the best private gain but
    is the only externality source; seller 2 alone (mask 2) is almost as
    good privately and harmless. The dominant play is the bundle, worth 0
    collectively, while all-mask-2 is worth n(1-alpha-epsilon)."""
    if n < 2:
        raise MarketError("need n >= 2 buyers")
    if not 0.0 <= alpha <= 1.0:
        raise MarketError(f"alpha={alpha} outside [0, 1]")
    if not 0.0 < epsilon < 1.0 - alpha:
        raise MarketError(f"epsilon={epsilon} outside (0, 1 - alpha)")
    k = 2
    gain = np.tile(np.array([0.0, 0.0, 1.0 - alpha - epsilon, 1.0]), (n, 1))
    ext = np.zeros((n, n, 4))
    for i in range(n):
        for j in range(n):
            if j != i:
                ext[i, j, 3] = 1.0 / (n - 1)
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=IndependentExternality(ext),
                          alpha=alpha, lam=DEFAULT_LAMBDA, noise=noise)


def make_joint_cycle(k: int, a: int, b: int, alpha: float,
                     noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Two buyers, joint externality. On the two focal masks a and b the
    externality tables point in opposite directions (buyer 1 wants to
    match, buyer 2 wants to mismatch), every other pair is repellent.
    Best-response dynamics cycle for any transfer weight except 0.5."""
    num = 1 << k
    for name, m in (("a", a), ("b", b)):
        if not 0 < m < num:
            raise MarketError(f"mask {name}={m} must be a nonempty k={k} set")
    if a == b:
        raise MarketError("masks a and b must differ")
    if not 0.0 <= alpha <= 1.0:
        raise MarketError(f"alpha={alpha} outside [0, 1]")
    gain = np.zeros((2, num))
    gain[:, a] = 1.0
    gain[:, b] = 1.0
    ext = np.ones((2, 2, num, num))
    e01 = np.ones((num, num))  # buyer 0 suffering, indexed (own, other)
    e01[a, a] = 0.5
    e01[b, b] = 0.5
    e01[a, b] = 0.0
    e01[b, a] = 0.0
    e10 = np.ones((num, num))  # buyer 1 suffering, indexed (own, other)
    e10[a, a] = 0.0
    e10[b, b] = 0.0
    e10[a, b] = 0.5
    e10[b, a] = 0.5
    ext[0, 1] = e01
    ext[1, 0] = e10
    ext[0, 0] = 0.0
    ext[1, 1] = 0.0
    return MarketInstance(n=2, k=k, gain=gain,
                          externality=JointExternality(ext),
                          alpha=alpha, lam=DEFAULT_LAMBDA, noise=noise)


def make_symmetric_gap(n: int, epsilon: float = DEFAULT_EPSILON,
                       noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Two sellers, symmetric joint externality, no transfer. All-mask-2 is
    an equilibrium worth only n*epsilon while all-bundle is (also an
    equilibrium and) the social optimum worth n - 6*epsilon."""
    if n < 2:
        raise MarketError("need n >= 2 buyers")
    if not 0.0 < epsilon < 1.0 / 6.0:
        raise MarketError(f"epsilon={epsilon} outside (0, 1/6)")
    k = 2
    s = 1.0 / (n - 1)
    gain = np.tile(np.array([0.0, 0.0, 1.0, 1.0]), (n, 1))
    gain[0] = [0.0, 1.0, 1.0, 1.0 - 4.0 * epsilon]
    # Rows index the owner's mask over (1, 2, 3); mask 0 stays zero.
    first = np.zeros((4, 4))
    first[1:, 1:] = np.array([
        [1.0, 1.0, 4.0 * epsilon],
        [1.0, 1.0 - epsilon, 1.0],
        [1.0, 1.0, epsilon],
    ]) * s
    rest = np.zeros((4, 4))
    rest[1:, 1:] = np.array([
        [1.0, 1.0, 1.0],
        [1.0, 1.0 - epsilon, 1.0],
        [1.0, 1.0, 0.0],
    ]) * s
    ext = np.zeros((n, n, 4, 4))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if i == 0:
                ext[i, j] = first
            elif j == 0:
                ext[i, j] = first.T
            else:
                ext[i, j] = rest
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=JointExternality(ext),
                          alpha=0.0, lam=DEFAULT_LAMBDA, noise=noise)


def make_random_independent(n: int, k: int, seed: int, alpha: float = 0.0,
                            noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Uniform random tables; each buyer's caused-externality sum at every
    mask is scaled below a uniform target in [0, 1]."""
    rng = np.random.default_rng(seed)
    num = 1 << k
    gain = rng.uniform(-1.0, 1.0, size=(n, num))
    gain[:, 0] = 0.0
    ext = np.zeros((n, n, num))
    for j in range(n):
        others = [i for i in range(n) if i != j]
        if not others:
            continue
        raw = rng.random((len(others), num))
        target = rng.random(num)
        col_sum = raw.sum(axis=0)
        col_sum[col_sum == 0.0] = 1.0
        scaled = raw / col_sum * target
        scaled[:, 0] = 0.0  # buying nothing causes nothing
        for row, i in enumerate(others):
            ext[i, j] = scaled[row]
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=IndependentExternality(ext),
                          alpha=alpha, lam=DEFAULT_LAMBDA, noise=noise)


def _scale_joint_bound(ext: np.ndarray, per_buyer_target: np.ndarray) -> np.ndarray:
    """Scale each buyer's suffering tables so the worst-case suffered sum
    (max over own mask, opponents adversarial) hits the given target."""
    n = ext.shape[0]
    out = ext.copy()
    for i in range(n):
        others = [j for j in range(n) if j != i]
        if not others:
            continue
        worst = sum(out[i, j].max(axis=1) for j in others).max()
        if worst > 0.0:
            out[i] *= per_buyer_target[i] / worst
    return out


def make_random_joint(n: int, k: int, seed: int, alpha: float = 0.5,
                      noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Random (generally asymmetric) joint-externality instance."""
    rng = np.random.default_rng(seed)
    num = 1 << k
    gain = rng.uniform(-1.0, 1.0, size=(n, num))
    gain[:, 0] = 0.0
    ext = rng.random((n, n, num, num))
    ext[:, :, :, 0] = 0.0  # an opponent buying nothing causes nothing
    for i in range(n):
        ext[i, i] = 0.0
    ext = _scale_joint_bound(ext, rng.uniform(0.5, 1.0, size=n))
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=JointExternality(ext),
                          alpha=alpha, lam=DEFAULT_LAMBDA, noise=noise)


def make_random_symmetric(n: int, k: int, seed: int, alpha: float = 0.0,
                          noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Random joint instance with mirrored externalities:
    ext[i][j][x][y] == ext[j][i][y][x] for every pair and mask pair."""
    rng = np.random.default_rng(seed)
    num = 1 << k
    gain = rng.uniform(-1.0, 1.0, size=(n, num))
    gain[:, 0] = 0.0
    ext = np.zeros((n, n, num, num))
    for i in range(n):
        for j in range(i + 1, n):
            m = rng.random((num, num))
            m[0, :] = 0.0
            m[:, 0] = 0.0
            ext[i, j] = m
            ext[j, i] = m.T
    scale = float(rng.uniform(0.5, 1.0))
    worst = 0.0
    for i in range(n):
        others = [j for j in range(n) if j != i]
        if others:
            worst = max(worst, sum(ext[i, j].max(axis=1) for j in others).max())
    if worst > 0.0:
        ext *= scale / worst  # global factor keeps the mirror property
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=JointExternality(ext),
                          alpha=alpha, lam=DEFAULT_LAMBDA, noise=noise)


def make_random_closeness(n: int, k: int, lam: float = DEFAULT_LAMBDA,
                          seed: int = 0, alpha: float = 0.5,
                          noise: NoiseModel = DEFAULT_NOISE) -> MarketInstance:
    """Random independent instance whose effective-utility gaps track the
    Hamming distance to a hidden per-buyer best mask.

    For each buyer a best mask m* and a top effective utility u* in
    [0.5, 1] are drawn; every other mask's gap to u* lands uniformly in
    [lam*(d - 1/k), lam*d] with d the normalized distance to m* (lower end
    clamped at 0). The effective utility is then split into a gain and a
    caused-externality column; the empty set keeps gain 0 by adjusting its
    caused externality so its gap still falls in the band (draws are
    rejected until that is possible).
    """
    if k > CLOSENESS_MAX_K:
        raise MarketError(f"k={k} above the closeness generator cap {CLOSENESS_MAX_K}")
    if lam <= 0.0:
        raise MarketError(f"lambda={lam} must be positive")
    if not 0.0 <= alpha <= 1.0:
        raise MarketError(f"alpha={alpha} outside [0, 1]")
    rng = np.random.default_rng(seed)
    num = 1 << k
    pop = popcount_table(k)
    gain = np.zeros((n, num))
    ext = np.zeros((n, n, num))
    for i in range(n):
        best, top, gap_empty = _draw_closeness_anchor(rng, k, lam, alpha, n)
        caused = np.zeros(num)
        caused[0] = 0.0 if (alpha == 0.0 or n == 1) else (gap_empty - top) / alpha
        for m in range(1, num):
            d = pop[m ^ best] / k
            lo = max(0.0, lam * (d - 1.0 / k))
            hi = lam * d
            gap = 0.0 if m == best else float(rng.uniform(lo, hi))
            eff = top - gap
            caused[m] = _draw_caused_share(rng, eff, alpha if n > 1 else 0.0)
            gain[i, m] = eff + (alpha * caused[m] if n > 1 else 0.0)
        others = [j for j in range(n) if j != i]
        for m in range(num):
            if not others:
                break
            weights = rng.dirichlet(np.ones(len(others)))
            for w, j in zip(weights, others):
                ext[j, i, m] = w * caused[m]
    return MarketInstance(n=n, k=k, gain=gain,
                          externality=IndependentExternality(ext),
                          alpha=alpha, lam=lam, noise=noise)


def _draw_closeness_anchor(rng, k, lam, alpha, n):
    """Draw (best mask, top utility, empty-set gap) until the empty set's
    band is reachable with gain pinned at 0 and caused externality in [0, 1]."""
    pop = popcount_table(k)
    num = 1 << k
    reach = alpha if n > 1 else 0.0
    for _ in range(_MAX_RETRIES):
        best = int(rng.integers(1, num))
        top = float(rng.uniform(0.5, 1.0))
        d0 = pop[best] / k
        lo = max(0.0, lam * (d0 - 1.0 / k))
        hi = lam * d0
        # gap(empty) = top + alpha * caused(empty) must fall in [lo, hi]
        feas_lo = max(lo, top)
        feas_hi = min(hi, top + reach)
        if feas_lo <= feas_hi:
            gap_empty = float(rng.uniform(feas_lo, feas_hi))
            return best, top, gap_empty
    raise GenerationError(
        f"no feasible anchor for n={n}, k={k}, lambda={lam}, alpha={alpha} "
        f"after {_MAX_RETRIES} draws")


def _draw_caused_share(rng, eff, alpha):
    """Rejection-sample the caused-externality column entry so the implied
    gain stays in [-1, 1]."""
    if alpha == 0.0:
        if not -1.0 <= eff <= 1.0:
            raise GenerationError(f"effective utility {eff} not realizable as a gain")
        return float(rng.random())
    for _ in range(_MAX_RETRIES):
        c = float(rng.random())
        if -1.0 <= eff + alpha * c <= 1.0:
            return c
    raise GenerationError(f"no caused-externality split for eff={eff}, alpha={alpha}")


# ---------------------------------------------------------------------------
# Generator specs (structured-text front end for the CLI)

KINDS = (
    "singleton-conflict",
    "bundle-trap",
    "joint-cycle",
    "symmetric-gap",
    "random-independent",
    "random-symmetric",
    "random-joint",
    "random-closeness",
)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int | None = None
    k: int | None = None
    alpha: float | None = None
    epsilon: float | None = None
    lam: float | None = None
    seed: int | None = None
    a: int | None = None
    b: int | None = None
    gain_noise: float = DEFAULT_NOISE.gain_halfwidth
    ext_noise: float = DEFAULT_NOISE.ext_halfwidth
    noise_kind: str = DEFAULT_NOISE.kind

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParseError(f"unknown generator kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")


def spec_from_dict(doc: dict) -> GeneratorSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParseError("generator spec must be an object with a 'kind' field")
    known = {"kind", "n", "k", "alpha", "epsilon", "lambda", "seed", "a", "b",
             "gain_noise", "ext_noise", "noise_kind"}
    extra = set(doc) - known
    if extra:
        raise ParseError(f"unknown generator spec fields: {sorted(extra)}")
    try:
        return GeneratorSpec(
            kind=str(doc["kind"]),
            n=None if doc.get("n") is None else int(doc["n"]),
            k=None if doc.get("k") is None else int(doc["k"]),
            alpha=None if doc.get("alpha") is None else float(doc["alpha"]),
            epsilon=None if doc.get("epsilon") is None else float(doc["epsilon"]),
            lam=None if doc.get("lambda") is None else float(doc["lambda"]),
            seed=None if doc.get("seed") is None else int(doc["seed"]),
            a=None if doc.get("a") is None else int(doc["a"]),
            b=None if doc.get("b") is None else int(doc["b"]),
            gain_noise=float(doc.get("gain_noise", DEFAULT_NOISE.gain_halfwidth)),
            ext_noise=float(doc.get("ext_noise", DEFAULT_NOISE.ext_halfwidth)),
            noise_kind=str(doc.get("noise_kind", DEFAULT_NOISE.kind)),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad generator spec: {exc!r}") from exc


def spec_to_dict(spec: GeneratorSpec) -> dict:
    doc = {"kind": spec.kind}
    for key, val in (("n", spec.n), ("k", spec.k), ("alpha", spec.alpha),
                     ("epsilon", spec.epsilon), ("lambda", spec.lam),
                     ("seed", spec.seed), ("a", spec.a), ("b", spec.b)):
        if val is not None:
            doc[key] = val
    doc["gain_noise"] = spec.gain_noise
    doc["ext_noise"] = spec.ext_noise
    doc["noise_kind"] = spec.noise_kind
    return doc


def _require(spec: GeneratorSpec, *fields: str):
    missing = [f for f in fields if getattr(spec, f) is None]
    if missing:
        raise ParseError(f"generator kind {spec.kind!r} requires fields: {missing}")


def build_instance(spec: GeneratorSpec) -> MarketInstance:
    noise = NoiseModel(gain_halfwidth=spec.gain_noise,
                       ext_halfwidth=spec.ext_noise, kind=spec.noise_kind)
    eps = DEFAULT_EPSILON if spec.epsilon is None else spec.epsilon
    lam = DEFAULT_LAMBDA if spec.lam is None else spec.lam
    seed = 0 if spec.seed is None else spec.seed
    try:
        if spec.kind == "singleton-conflict":
            _require(spec, "n")
            return make_singleton_conflict(spec.n, eps, noise)
        if spec.kind == "bundle-trap":
            _require(spec, "n", "alpha")
            return make_bundle_trap(spec.n, spec.alpha, eps, noise)
        if spec.kind == "joint-cycle":
            _require(spec, "k", "a", "b", "alpha")
            return make_joint_cycle(spec.k, spec.a, spec.b, spec.alpha, noise)
        if spec.kind == "symmetric-gap":
            _require(spec, "n")
            return make_symmetric_gap(spec.n, eps, noise)
        if spec.kind == "random-independent":
            _require(spec, "n", "k")
            return make_random_independent(spec.n, spec.k, seed,
                                           spec.alpha or 0.0, noise)
        if spec.kind == "random-symmetric":
            _require(spec, "n", "k")
            return make_random_symmetric(spec.n, spec.k, seed,
                                         spec.alpha or 0.0, noise)
        if spec.kind == "random-joint":
            _require(spec, "n", "k")
            alpha = 0.5 if spec.alpha is None else spec.alpha
            return make_random_joint(spec.n, spec.k, seed, alpha, noise)
        if spec.kind == "random-closeness":
            _require(spec, "n", "k")
            alpha = 0.5 if spec.alpha is None else spec.alpha
            return make_random_closeness(spec.n, spec.k, lam, seed, alpha, noise)
    except MarketError as exc:
        raise ParseError(f"cannot build {spec.kind!r} instance: {exc}") from exc
    raise ParseError(f"unknown generator kind {spec.kind!r}")
