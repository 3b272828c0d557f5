"""Ballistic annihilation with static particles: exact recurrences, exhaustive
enumeration, collision resolution and Monte Carlo."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    L,
    R,
    S,
    ArrangedInstance,
    Deterministic,
    Exponential,
    Gamma,
    LengthVector,
    ModelParams,
    Outcome,
    PolyP,
    PolyPR,
    Skyline,
    SkylineShape,
    TwoPoint,
    Uniform,
    Velocity,
    parse_distribution,
)
from .resolver import (  # noqa: F401
    classify_lengths,
    extract_skyline,
    first_crossing,
    phi_map,
    resolve,
    resolve_reference,
    rev_operator,
)
from .exact import compute_sequences, laplace_D  # noqa: F401
