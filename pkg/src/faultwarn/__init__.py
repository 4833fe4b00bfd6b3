"""Streaming early warning for rolling-element bearings.

Signals are windowed and scored by a tri-branch sequence encoder; healthy
score tails are calibrated with a generalized Pareto model to hit a target
false-alarm intensity; a hysteresis automaton turns scores into alarm
episodes; lead times are summarized with censoring-aware survival metrics.
"""

__version__ = "0.1.0"
