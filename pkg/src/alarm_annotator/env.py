"""Annotation decision process over event sequences.

The state is the six-vitals vector of the current event; the two actions declare
alarm or non-alarm. Trajectories replay recorded data, so the action affects the
reward but never the next state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .ingest import AnnotatedEvent, BinaryLabel, VITALS_FIELDS, VitalsSample, events_labels, events_matrix

ACTION_NON_ALARM = 0
ACTION_ALARM = 1
ACTIONS = (ACTION_NON_ALARM, ACTION_ALARM)


@dataclass(frozen=True)
class VitalThresholds:
    """Clinical alert bands for the three pressure/rate channels that drive scoring."""

    hr: tuple[float, float] = (60.0, 120.0)
    sbp: tuple[float, float] = (90.0, 200.0)
    dbp: tuple[float, float] = (60.0, 140.0)

    def __post_init__(self):
        for name, low, high in self.items():
            if not low < high:
                raise ValueError(f"threshold band for {name} must satisfy low < high, got ({low}, {high})")

    def items(self) -> list[tuple[str, float, float]]:
        return [
            ("hr", self.hr[0], self.hr[1]),
            ("sbp", self.sbp[0], self.sbp[1]),
            ("dbp", self.dbp[0], self.dbp[1]),
        ]


DEFAULT_THRESHOLDS = VitalThresholds()

SIGMOID_SLOPE = 50.0
TERM_SCALE = 5.0
# three in-band saturated terms: 3 * (1 - 0 + 0.5) * TERM_SCALE
SCORE_CEILING = 22.5


def normalcy_score(vitals: VitalsSample, thresholds: VitalThresholds = DEFAULT_THRESHOLDS) -> float:
    """Smooth in-band score: 22.5 mid-band, 15.0 at a band edge, 7.5 far outside."""
    total = 0.0
    for name, low, high in thresholds.items():
        value = getattr(vitals, name)
        total += expit(SIGMOID_SLOPE * (value - low)) - expit(SIGMOID_SLOPE * (value - high)) + 0.5
    return TERM_SCALE * float(total)


def normalcy_scores(matrix: np.ndarray, thresholds: VitalThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Vectorized normalcy_score over rows ordered as VITALS_FIELDS."""
    matrix = np.asarray(matrix, dtype=float)
    total = np.zeros(len(matrix))
    for name, low, high in thresholds.items():
        column = matrix[:, VITALS_FIELDS.index(name)]
        total += expit(SIGMOID_SLOPE * (column - low)) - expit(SIGMOID_SLOPE * (column - high)) + 0.5
    return TERM_SCALE * total


@dataclass(frozen=True)
class SimpleMatchReward:
    """Label-match payout: 1 for a correct non-alarm call, 10 for a correct alarm call, 0 otherwise."""

    correct_non_alarm: float = 1.0
    correct_alarm: float = 10.0
    incorrect: float = 0.0

    def reward(self, event: AnnotatedEvent, action: int) -> float:
        if int(action) == int(event.label):
            return self.correct_alarm if event.label == BinaryLabel.ALARM else self.correct_non_alarm
        return self.incorrect

    def reward_tables(self, events: Sequence[AnnotatedEvent]) -> tuple[np.ndarray, np.ndarray]:
        labels = events_labels(events)
        r_non = np.where(labels == 0, self.correct_non_alarm, self.incorrect).astype(float)
        r_alarm = np.where(labels == 1, self.correct_alarm, self.incorrect).astype(float)
        return r_non, r_alarm


@dataclass(frozen=True)
class VitalsBandReward:
    """Band-score payout built from normalcy_score f(s).

    mirror (default): declaring non-alarm earns f(s), declaring alarm earns
    SCORE_CEILING - f(s), so the two payouts always sum to SCORE_CEILING.
    state_only: the payout is f(s) regardless of the action.
    """

    thresholds: VitalThresholds = field(default_factory=VitalThresholds)
    action_mode: str = "mirror"

    def __post_init__(self):
        if self.action_mode not in ("mirror", "state_only"):
            raise ValueError(f"unknown action_mode {self.action_mode!r}")

    def reward(self, event: AnnotatedEvent, action: int) -> float:
        score = normalcy_score(event.vitals, self.thresholds)
        if self.action_mode == "state_only" or int(action) == ACTION_NON_ALARM:
            return score
        return SCORE_CEILING - score

    def reward_tables(self, events: Sequence[AnnotatedEvent]) -> tuple[np.ndarray, np.ndarray]:
        scores = normalcy_scores(events_matrix(events), self.thresholds)
        if self.action_mode == "state_only":
            return scores.copy(), scores.copy()
        return scores.copy(), SCORE_CEILING - scores


RewardScheme = SimpleMatchReward | VitalsBandReward


def reward(scheme: RewardScheme, event: AnnotatedEvent, action: int) -> float:
    return scheme.reward(event, action)


@dataclass
class Normalizer:
    """Per-field z-scoring with statistics taken from the training split only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, dataset) -> "Normalizer":
        matrix = dataset.vitals_matrix()
        if len(matrix) == 0:
            raise ValueError("cannot fit a normalizer on an empty dataset")
        return cls(mean=matrix.mean(axis=0), std=matrix.std(axis=0))

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(mean=np.zeros(6), std=np.ones(6))

    def transform(self, values) -> np.ndarray:
        if isinstance(values, VitalsSample):
            values = values.as_array()
        x = np.asarray(values, dtype=float)
        scale = np.where(self.std == 0.0, 1.0, self.std)
        z = (x - self.mean) / scale
        # a zero-variance field carries no signal; pin it to 0
        return np.where(self.std == 0.0, 0.0, z)

    def to_json_obj(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Normalizer":
        return cls(mean=np.asarray(obj["mean"], dtype=float), std=np.asarray(obj["std"], dtype=float))


@dataclass(slots=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class EpisodeExhaustedError(RuntimeError):
    """step() was called on an episode that already terminated."""


class AnnotationEnv:
    """Replays one episode; step(action) pays the reward and advances the cursor."""

    def __init__(
        self,
        events: Sequence[AnnotatedEvent],
        reward_scheme: RewardScheme,
        normalizer: Normalizer | None = None,
    ):
        if len(events) == 0:
            raise ValueError("an episode must contain at least one event")
        matrix = events_matrix(events)
        states = normalizer.transform(matrix) if normalizer is not None else matrix
        r_non, r_alarm = reward_scheme.reward_tables(events)
        self._init_arrays(states, r_non, r_alarm)

    @classmethod
    def from_arrays(cls, states: np.ndarray, r_non_alarm: np.ndarray, r_alarm: np.ndarray) -> "AnnotationEnv":
        env = object.__new__(cls)
        env._init_arrays(states, r_non_alarm, r_alarm)
        return env

    def _init_arrays(self, states, r_non_alarm, r_alarm):
        if len(states) == 0:
            raise ValueError("an episode must contain at least one event")
        self._states = states
        self._rewards = (r_non_alarm, r_alarm)
        self._n = len(states)
        self._cursor = 0

    def __len__(self) -> int:
        return self._n

    @property
    def done(self) -> bool:
        return self._cursor >= self._n

    def reset(self) -> np.ndarray:
        self._cursor = 0
        return self._states[0]

    def step(self, action: int) -> Transition:
        i = self._cursor
        if i >= self._n:
            raise EpisodeExhaustedError("step() called after the episode terminated")
        terminal = i == self._n - 1
        next_state = self._states[i] if terminal else self._states[i + 1]
        self._cursor = i + 1
        return Transition(
            state=self._states[i],
            action=int(action),
            reward=float(self._rewards[int(action)][i]),
            next_state=next_state,
            terminal=terminal,
        )
