"""Class-imbalance window downsampling and episode segmentation.

An n-k strategy keeps every alarm plus up to k events on each side of it;
windows from nearby alarms overlap and are deduplicated. The mixed strategy
draws k per alarm from {0, 1, 3, 5, 10} with a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import AnnotatedEvent, BinaryLabel, Dataset

WINDOW_BY_KIND = {"n0": 0, "n1": 1, "n3": 3, "n5": 5, "n10": 10}
MIXED_WINDOW_CHOICES = (0, 1, 3, 5, 10)
STRATEGY_KINDS = tuple(WINDOW_BY_KIND) + ("mixed",)


@dataclass(frozen=True)
class SamplingStrategy:
    kind: str
    seed: int = 0  # consumed by "mixed" only

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown sampling strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")

    @property
    def display(self) -> str:
        """Human-facing name, e.g. n-3 or n-mixed."""
        if self.kind == "mixed":
            return "n-mixed"
        return "n-" + self.kind[1:]


def apply_downsampling(dataset: Dataset, strategy: SamplingStrategy) -> Dataset:
    """Retain the union of per-alarm windows, preserving order and all alarms."""
    events = dataset.events
    n = len(events)
    if n == 0:
        return Dataset([], dataset.variant, dataset.split, dataset.resolution)
    alarm_positions = [i for i, e in enumerate(events) if e.label == BinaryLabel.ALARM]
    if strategy.kind == "mixed":
        rng = np.random.default_rng(strategy.seed)
        windows = rng.choice(MIXED_WINDOW_CHOICES, size=len(alarm_positions))
    else:
        windows = [WINDOW_BY_KIND[strategy.kind]] * len(alarm_positions)
    keep = np.zeros(n, dtype=bool)
    for position, k in zip(alarm_positions, windows):
        keep[max(0, position - int(k)):position + int(k) + 1] = True
    kept = [events[i] for i in np.flatnonzero(keep)]
    return Dataset(kept, dataset.variant, dataset.split, dataset.resolution)


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = 256  # maximum events per episode
    shuffle_episodes: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"episode horizon must be >= 1, got {self.horizon}")


def episode_bounds(n: int, config: EpisodeConfig) -> list[tuple[int, int]]:
    """Contiguous [start, end) chunks of at most `horizon` events, optionally shuffled."""
    bounds = [(lo, min(lo + config.horizon, n)) for lo in range(0, n, config.horizon)]
    if config.shuffle_episodes and len(bounds) > 1:
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(len(bounds))
        bounds = [bounds[i] for i in order]
    return bounds


def make_episodes(dataset: Dataset, config: EpisodeConfig) -> list[list[AnnotatedEvent]]:
    """Split the dataset into episodes of at most `horizon` consecutive events."""
    return [dataset.events[lo:hi] for lo, hi in episode_bounds(len(dataset.events), config)]
