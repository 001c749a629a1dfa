"""Equicontinuity toolkit for one-dimensional cellular automata."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Alphabet,
    CyclicConfig,
    RuleTable,
    TemporalCycle,
    Trace,
    WindowConfig,
    compose_rule,
    detect_temporal_cycle,
    eca,
    is_surjective,
    render_spacetime,
    step_cyclic,
    step_window,
    trace,
)

__all__ = [
    "Alphabet", "CyclicConfig", "RuleTable", "TemporalCycle", "Trace", "WindowConfig",
    "compose_rule", "detect_temporal_cycle", "eca", "is_surjective", "render_spacetime",
    "step_cyclic", "step_window", "trace",
]
