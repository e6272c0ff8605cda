"""datamkt: fixed-price data-market games with buyer externality.

Exact analysis (dominant strategies, pure equilibria, welfare regret at
equilibrium, best-response dynamics) and online multi-agent learning
(zooming bandits over the seller-set space) under a revenue-neutral
transaction-cost intervention.
"""
from .errors import (
    BudgetExceededError,
    DimensionMismatchError,
    GenerationError,
    InvariantError,
    LearnerStateError,
    MarketError,
    ParseError,
    UnsupportedModelError,
)
from .market import (
    CheckResult,
    IndependentExternality,
    JointExternality,
    MarketInstance,
    NoiseModel,
    RoundOutcome,
    SellerSet,
    expected_effective_utility,
    expected_externality_from,
    expected_externality_on,
    expected_transaction,
    expected_utility,
    hamming_distance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    sample_round,
    save_instance,
    social_welfare,
    validate_instance,
)
from .equilibrium import (
    DynamicsTrace,
    EquilibriumReport,
    best_response,
    dominant_profile,
    dominant_strategy,
    enumerate_pure_equilibria,
    is_pure_equilibrium,
    pairwise_potential,
    sequential_best_response,
    social_optimum,
    symmetrize,
    wrae,
)
from .instances import (
    GeneratorSpec,
    build_instance,
    make_bundle_trap,
    make_joint_cycle,
    make_random_closeness,
    make_random_independent,
    make_random_joint,
    make_random_symmetric,
    make_singleton_conflict,
    make_symmetric_gap,
)
from .learning.learners import ActiveArm, FlatUCBLearner, ZoomingLearner, confidence_radius
from .learning.engine import (
    HAVE_COMPILED,
    SimulationTrace,
    doubling_phases,
    schedule_alpha,
    simulate,
)
from .metrics import (
    RegretSeries,
    compute_regrets,
    decomposition_bound,
    effective_regret,
    welfare_regret,
    write_regret_csv,
)

__version__ = "0.1.0"
