"""Good-case-latency broadcast and agreement protocols under dynamic participation, with a deterministic sleepy-model simulator."""

__version__ = "0.1.0"
