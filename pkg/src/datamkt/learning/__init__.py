from .learners import ActiveArm, FlatUCBLearner, ZoomingLearner, confidence_radius
from .engine import (
    HAVE_COMPILED,
    LEARNER_KINDS,
    SimulationTrace,
    doubling_phases,
    schedule_alpha,
    simulate,
)
