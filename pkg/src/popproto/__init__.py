"""Population protocol simulation, layered reachability and occupancy bounds."""

from .bounds import (
    BoundReport, FractionPair, VacuousBoundError, compound_layer_fraction, lemma17_fraction, lemma18_untouched,
    min_population_threshold, propagate_bounds,
)
from .dsl import DSLError, parse_protocol, serialize_protocol
from .engine import (
    AGENTS, COUNTS, AnyOf, FixedCalls, FixedInteractions, LeaderCount, Predicate, ProbeSpec, RunConfig, RunResult,
    Simulation, StateEntered, choose_next_pair, distinct_visitors, run,
)
from .library import (
    improved_protocol_1, ladder_protocol, pairwise_elimination, protocol_1, resolve_protocol, unbounded_counter_variant,
)
from .protocol import (
    AgentPopulation, Configuration, LayerStructure, ProtocolSpec, apply_rule, compute_layers, is_consensus,
    is_stable_consensus, reachable_states, successors,
)
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "AGENTS", "COUNTS", "AgentPopulation", "AnyOf", "BoundReport", "Configuration", "DSLError", "FixedCalls",
    "FixedInteractions", "FractionPair", "LayerStructure", "LeaderCount", "Predicate", "ProbeSpec", "ProtocolSpec",
    "Rng", "RunConfig", "RunResult", "Simulation", "StateEntered", "VacuousBoundError", "apply_rule",
    "choose_next_pair", "compound_layer_fraction", "compute_layers", "distinct_visitors", "improved_protocol_1",
    "is_consensus", "is_stable_consensus", "ladder_protocol", "lemma17_fraction", "lemma18_untouched",
    "min_population_threshold", "pairwise_elimination", "parse_protocol", "propagate_bounds", "protocol_1",
    "reachable_states", "resolve_protocol", "run", "serialize_protocol", "successors", "unbounded_counter_variant",
]
