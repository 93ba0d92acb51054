"""Cascade simulation and social-influence testing toolkit.

Simulates event cascades over networks with controllable influence,
homophily and self-excitation; trains an online discriminative ranker
for next-activated-node prediction; and runs three statistical tests
(ranker comparison, Hawkes likelihood ratio, shuffle test) to detect
social influence under confounds, misspecification and missing data.
"""

from .exceptions import (
    CascadeInfluenceError,
    ConfigError,
    DataValidationError,
    NumericError,
)
from .hawkes import Cascade, Event, HawkesParams
from .netgraph import Embedding, Network

__version__ = "0.1.0"

__all__ = [
    "Cascade",
    "CascadeInfluenceError",
    "ConfigError",
    "DataValidationError",
    "Embedding",
    "Event",
    "HawkesParams",
    "Network",
    "NumericError",
    "__version__",
]
