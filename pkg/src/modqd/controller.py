"""Sinusoidal set-point controllers for servo joints.

Each joint carries four wave parameters; the joint angle at time t is
``amp * sin(freq * t + phase) + offset`` clamped to the servo's physical
range.  Mutation is Gaussian per parameter, scaled by the parameter's
range and reflected back into bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ParamRange:
    lo: float
    hi: float

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi


AMP_RANGE = ParamRange(-1.57, 1.57)
FREQ_RANGE = ParamRange(0.2, 2.0)
PHASE_RANGE = ParamRange(-2.0 * math.pi, 2.0 * math.pi)
OFFSET_RANGE = ParamRange(-1.57, 1.57)

# Servo horns physically stop at +/-1.57 rad; output is clamped there.
OUTPUT_LIMIT = 1.57


@dataclass(frozen=True)
class WaveParams:
    """Parameters of one joint's wave generator."""

    amp: float
    freq: float
    phase: float
    offset: float

    def as_dict(self) -> dict[str, float]:
        return {"amp": self.amp, "freq": self.freq, "phase": self.phase, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict[str, float]) -> WaveParams:
        return cls(amp=float(d["amp"]), freq=float(d["freq"]),
                   phase=float(d["phase"]), offset=float(d["offset"]))


# Field order is fixed; mutation and random init draw in this order.
FIELD_RANGES: dict[str, ParamRange] = {
    "amp": AMP_RANGE,
    "freq": FREQ_RANGE,
    "phase": PHASE_RANGE,
    "offset": OFFSET_RANGE,
}


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def wave_output(params: WaveParams, t: float) -> float:
    """Joint angle at time t, clamped to the servo's range."""
    raw = params.amp * math.sin(params.freq * t + params.phase) + params.offset
    return _clamp(raw, -OUTPUT_LIMIT, OUTPUT_LIMIT)


def effective_amplitude(params: WaveParams) -> float:
    """Half the distance actually swept by the clamped output.

    Clamping can eat part of the nominal amplitude when the offset pushes
    the wave against a stop, so this is what the joint really contributes.
    """
    top = _clamp(params.offset + abs(params.amp), -OUTPUT_LIMIT, OUTPUT_LIMIT)
    bot = _clamp(params.offset - abs(params.amp), -OUTPUT_LIMIT, OUTPUT_LIMIT)
    return (top - bot) / 2.0


def bounce_back(value: float, bounds: ParamRange) -> float:
    """Reflect a value off the bounds until it lies inside them."""
    lo, hi = bounds.lo, bounds.hi
    v = value
    while v < lo or v > hi:
        if v > hi:
            v = hi - (v - hi)
        else:
            v = lo + (lo - v)
    return v


def mutate_params(params: WaveParams, sigma: float, rng: np.random.Generator) -> WaveParams:
    """Gaussian-perturb every field; noise scale is sigma times the field's range."""
    vals: dict[str, float] = {}
    for name, bounds in FIELD_RANGES.items():
        v = getattr(params, name) + rng.normal(0.0, sigma * bounds.span)
        vals[name] = bounce_back(v, bounds)
    return WaveParams(**vals)


def random_params(rng: np.random.Generator) -> WaveParams:
    vals = {name: float(rng.uniform(b.lo, b.hi)) for name, b in FIELD_RANGES.items()}
    return WaveParams(**vals)
