"""Tri-branch streaming scorer: parameters, forward pass, calibration, losses."""

from .calibration import Calibrator, fit_calibrator
from .model import StreamingScorer, StreamState, advance, score_sequence, window_evidence
from .params import EncoderParams, resolve_params

__all__ = [
    "Calibrator",
    "EncoderParams",
    "StreamState",
    "StreamingScorer",
    "advance",
    "fit_calibrator",
    "resolve_params",
    "score_sequence",
    "window_evidence",
]
