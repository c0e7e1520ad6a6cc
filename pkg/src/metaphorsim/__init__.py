"""Discrete-event simulation of location/resource/process/environment models."""

from .composition import (
    Binding,
    LocalProperty,
    Scope,
    Verdict,
    check_local_property,
    compose_models,
    project_trace,
    substitute_environment,
)
from .distributions import (
    Bernoulli,
    Computed,
    Constant,
    Empirical,
    Exponential,
    Range,
    RngStream,
    Uniform,
    sample,
)
from .engine import EventRecord, RunConfig, RunResult, run_model
from .metrics import summarize_run
from .model import (
    AgentSpec,
    Diagnostic,
    EnvironmentSpec,
    InterfacePoint,
    LocationGraph,
    LocationNode,
    MetricDecl,
    ModelSpec,
    Payload,
    validate_model,
)
from .resources import (
    ResourceAtom,
    ResourceBundle,
    ResourceKind,
    ResourcePattern,
    compose_resources,
    match_pattern,
    resource_leq,
)
from .terms import (
    Action,
    Choose,
    Claim,
    EffectContext,
    IdAllocator,
    ModificationRule,
    Move,
    Nil,
    Par,
    Prefix,
    Release,
    Seq,
    Spawn,
    apply_modification,
    marker_rule,
    par_all,
    seq_all,
)

__version__ = "0.1.0"
