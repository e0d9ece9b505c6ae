"""Stochastic symmetric net kernel."""
from .colors import ColorClass, ColorDomain, NEUTRAL
from .expr import (
    AllOf, ArcExpr, Complement, Const, Eq, Guard, InSubclass, Lt, Neq, Pred,
    SameSubclass, Succ, T, TRUE, Var, eval_arc, guard, guard_satisfied,
)
from .kernel import NotEnabledError, TransitionInstance, compiled, enabled_instances, fire, is_enabled
from .multiset import Marking, Multiset
from .net import (
    Deterministic, Exponential, Immediate, Net, NetDefinitionError, Place, Transition, dump_net,
)
from .simulator import (
    COMPLETED, DEADLOCK, TRUNCATED, Event, SimConfig, Simulator, TrajectoryResult,
    run_trace, simulate, trajectory_rng,
)
