"""Metamorphic relation discovery for an ocean kinetic-energy kernel."""
from .cost import BatchCost, ValidationReport, cost_batch, cost_single, relative_errors, validate
from .exceptions import (ConfigurationError, DimensionError, FormatError, MorphoseekError, NumericError,
                         ParameterError, ShapeError)
from .kernel import (DESK_GRID, DISCOVERY_GRID, GridDims, KineticEnergy, SamplingRanges, StateVector,
                     VelocityField, energy_cyclic, energy_noncyclic, flatten, get_kernel, norm, random_state,
                     random_states, unflatten, velocities_cyclic, velocities_noncyclic)
from .relations import AffineRelation, SignedPermScale, deserialize, identity, known_symmetries, serialize
from .search import RelationSearch, SearchConfig, SearchResult, accept, discover, init_params, minimize, mutate

__version__ = "0.1.0"

__all__ = [
    "AffineRelation", "BatchCost", "ConfigurationError", "DESK_GRID", "DISCOVERY_GRID", "DimensionError",
    "FormatError", "GridDims", "KineticEnergy", "MorphoseekError", "NumericError", "ParameterError",
    "RelationSearch", "SamplingRanges", "SearchConfig", "SearchResult", "ShapeError", "SignedPermScale",
    "StateVector", "ValidationReport", "VelocityField", "accept", "cost_batch", "cost_single", "deserialize",
    "discover", "energy_cyclic", "energy_noncyclic", "flatten", "get_kernel", "identity", "init_params",
    "known_symmetries", "minimize", "mutate", "norm", "random_state", "random_states", "relative_errors",
    "serialize", "unflatten", "validate", "velocities_cyclic", "velocities_noncyclic",
]
