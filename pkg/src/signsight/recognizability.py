"""Recognizability bits per viewpoint and timely verdicts per lane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ModelParams


@dataclass(frozen=True)
class RecognizabilityRecord:
    lane: int
    column: int
    cognitive_ratio: float | None
    recognizable: int
    degenerate: bool = False


def viewpoint_recognizability(actual: float, ideal: float, params: ModelParams,
                              lane: int = 0, column: int = 0) -> RecognizabilityRecord:
    """Bit is 1 iff ``gamma * actual/ideal + delta * e_other > sigma``.
    A zero ideal visibility yields bit 0 and a degenerate flag."""
    if not ideal > 0:
        return RecognizabilityRecord(lane, column, None, 0, True)
    ratio = actual / ideal
    score = params.gamma * ratio + params.delta * params.e_other
    return RecognizabilityRecord(lane, column, ratio, int(score > params.sigma))


def max_continuous_length(bits, positions, mode: str = "segments") -> float:
    """Longest run of consecutive recognizable viewpoints.

    ``positions`` are arc positions along the lane, ordered. In ``segments``
    mode a run measures the distance from its first to its last viewpoint
    (a lone viewpoint gives 0). In ``cells`` mode every recognizable viewpoint
    also owns half the gap to each neighbour, so a lone viewpoint counts for
    the spacing around it.
    """
    b = np.asarray(bits, dtype=bool)
    x = np.asarray(positions, dtype=float)
    if len(b) != len(x):
        raise ValueError("bits and positions differ in length")
    if len(b) == 0 or not b.any():
        return 0.0
    if mode == "segments":
        best = 0.0
        start = None
        for k in range(len(b)):
            if not b[k]:
                start = None
                continue
            if start is None:
                start = k
            best = max(best, abs(x[k] - x[start]))
        return float(best)
    gaps = np.abs(np.diff(x))
    if mode == "cells":
        half = np.zeros(len(x))
        half[:-1] += 0.5 * gaps
        half[1:] += 0.5 * gaps
        best = cur = 0.0
        for k in range(len(b)):
            cur = cur + half[k] if b[k] else 0.0
            best = max(best, cur)
        return float(best)
    raise ValueError(f"unknown run-length mode {mode!r}")


def vrd(v85: float, t_vrt: float) -> float:
    """Reaction distance travelled at the 85th-percentile speed."""
    if not (v85 > 0 and t_vrt > 0):
        raise ValueError("speed and reaction time must be > 0")
    return v85 * t_vrt


@dataclass(frozen=True)
class LaneVerdict:
    lane: int
    max_cog_length: float
    vrd: float
    timely: int
    vrd_exceeds_sight_distance: bool = False


def lane_verdict(bits, positions, params: ModelParams, lane: int = 0,
                 sight_distance: float | None = None) -> LaneVerdict:
    """Timely iff the longest recognizable run reaches the reaction distance."""
    d = vrd(params.v85, params.t_vrt)
    best = max_continuous_length(bits, positions, params.run_length)
    exceeds = sight_distance is not None and d > sight_distance
    return LaneVerdict(lane, best, d, int(best >= d), exceeds)
