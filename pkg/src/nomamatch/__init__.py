"""Stable many-to-many user-channel allocation with exhaustive stability checks."""
from .matching import (
    AllocationOutcome,
    Instance,
    Matching,
    PreMatching,
    Status,
    allocate,
    apply_T,
    compute_U,
    compute_V,
    is_consistent,
)
from .prefcore import (
    AgentId,
    Comparison,
    PartnerSet,
    RankedPreference,
    ResponsivePreference,
    Side,
    choose,
    is_strongly_substitutable,
    is_substitutable,
    prefers,
)
from .scenarios import paper_example_instance

__version__ = "0.1.0"
