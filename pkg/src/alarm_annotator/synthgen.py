"""Seeded generator of normalized vitals/annotation streams with controllable difficulty.

Alarm events push at least one of hr/sbp/dbp outside its band by 10..50% of the
band width; non-alarm events stay strictly inside every band. With label_noise 0
a plain threshold rule therefore reproduces every label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .env import DEFAULT_THRESHOLDS, VitalThresholds
from .ingest import SeverityClass

# uniform filler bands for the channels that do not drive the label
FILLER_BANDS = (("rr", 8.0, 25.0), ("map", 65.0, 110.0), ("spo2", 92.0, 100.0))

VIOLATION_MIN_FRACTION = 0.1  # of band width, guaranteed margin beyond the bound
VIOLATION_MAX_FRACTION = 0.5

_ROUND_DECIMALS = 4  # small enough to never round a value across a default band edge


@dataclass(frozen=True)
class SynthConfig:
    n_events: int
    alarm_rate: float
    seed: int
    label_noise: float = 0.0
    indeterminate_rate: float = 0.0
    vitals_noise_sd: float = 2.0
    interval_ms: int = 1000
    start_t: int = 0

    def __post_init__(self):
        if self.n_events < 0:
            raise ValueError(f"n_events must be >= 0, got {self.n_events}")
        for name in ("alarm_rate", "label_noise", "indeterminate_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.vitals_noise_sd < 0:
            raise ValueError(f"vitals_noise_sd must be >= 0, got {self.vitals_noise_sd}")
        if self.interval_ms < 1:
            raise ValueError(f"interval_ms must be >= 1, got {self.interval_ms}")


def _round(value: float) -> float:
    return round(float(value), _ROUND_DECIMALS)


def _in_band(rng: np.random.Generator, low: float, high: float, jitter_sd: float) -> float:
    # clamp to strictly inside the band; a value at the edge would not count as in-band
    inset = 10.0 ** -_ROUND_DECIMALS
    value = rng.uniform(low, high) + rng.normal(0.0, jitter_sd)
    return _round(min(max(value, low + inset), high - inset))


def _out_of_band(rng: np.random.Generator, low: float, high: float, jitter_sd: float) -> float:
    width = high - low
    margin = rng.uniform(VIOLATION_MIN_FRACTION * width, VIOLATION_MAX_FRACTION * width)
    margin += rng.normal(0.0, jitter_sd)
    margin = min(max(margin, VIOLATION_MIN_FRACTION * width), VIOLATION_MAX_FRACTION * width)
    take_low = rng.integers(2) == 0
    if take_low and low - margin >= 0.0:
        return _round(low - margin)
    return _round(high + margin)


def generate(
    config: SynthConfig,
    thresholds: VitalThresholds = DEFAULT_THRESHOLDS,
) -> tuple[list[str], list[str]]:
    """Return (vitals lines, annotation lines) in the normalized line-JSON format.

    The number of alarm-shaped events is exactly round(n_events * alarm_rate);
    label_noise flips the recorded label away from the vitals, and
    indeterminate_rate downgrades labelled alarms to indeterminate.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_events
    n_alarm_states = int(round(n * config.alarm_rate))
    alarm_state = np.zeros(n, dtype=bool)
    if n_alarm_states:
        alarm_state[rng.choice(n, size=n_alarm_states, replace=False)] = True

    band_items = thresholds.items()
    vitals_lines: list[str] = []
    annotation_lines: list[str] = []
    for i in range(n):
        t = config.start_t + i * config.interval_ms
        values: dict[str, float] = {}
        if alarm_state[i]:
            violate = rng.random(len(band_items)) < 0.5
            if not violate.any():
                violate[rng.integers(len(band_items))] = True
            for (name, low, high), hit in zip(band_items, violate):
                draw = _out_of_band if hit else _in_band
                values[name] = draw(rng, low, high, config.vitals_noise_sd)
        else:
            for name, low, high in band_items:
                values[name] = _in_band(rng, low, high, config.vitals_noise_sd)
        for name, low, high in FILLER_BANDS:
            values[name] = _in_band(rng, low, high, config.vitals_noise_sd)

        # all label draws happen unconditionally so the vitals stream is identical
        # across label_noise / indeterminate_rate settings at the same seed
        noise_draw = rng.random()
        severity_draw = rng.integers(2)
        indeterminate_draw = rng.random()
        labelled_alarm = bool(alarm_state[i])
        if noise_draw < config.label_noise:
            labelled_alarm = not labelled_alarm
        if labelled_alarm:
            severity = SeverityClass.EMERGENT if severity_draw == 0 else SeverityClass.URGENT
            if indeterminate_draw < config.indeterminate_rate:
                severity = SeverityClass.INDETERMINATE
        else:
            severity = SeverityClass.NON_URGENT if severity_draw == 0 else SeverityClass.NO_EVENT

        vitals_lines.append(json.dumps({
            "t": t,
            "hr": values["hr"],
            "rr": values["rr"],
            "sbp": values["sbp"],
            "dbp": values["dbp"],
            "map": values["map"],
            "spo2": values["spo2"],
        }))
        if severity != SeverityClass.NO_EVENT:
            annotation_lines.append(json.dumps({"t": t, "severity": severity.wire}))
    return vitals_lines, annotation_lines
