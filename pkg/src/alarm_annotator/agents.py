"""Value-based and actor-critic annotators.

Both agents act epsilon-greedily on the current event's state vector and learn
from batched updates every `update_interval` environment steps. The value agent
regresses its taken-action head toward r + gamma * max_a Q(s', a) sampled from a
FIFO replay buffer; the actor-critic agent regresses V(s) toward r + gamma * V(s')
and ascends log pi(a|s) scaled by that advantage. Neither keeps a frozen copy of
its network: bootstrap targets come from the live parameters without gradient flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, ClassVar, Sequence

import numpy as np

from .env import AnnotationEnv, Normalizer, RewardScheme, Transition
from .evaluation import EvalReport, evaluate
from .ingest import Dataset
from .nn import DenseNet, make_optimizer, softmax
from .sampling import EpisodeConfig, SamplingStrategy, apply_downsampling, episode_bounds

STATE_DIM = 6
N_ACTIONS = 2


@dataclass
class ExplorationSchedule:
    """Epsilon decays multiplicatively per environment step down to a floor.

    The value is computed from the step count, so after n steps it equals
    max(floor, initial * decay**n) exactly.
    """

    initial: float = 1.0
    floor: float = 0.01
    decay: float = 0.99975
    steps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.floor <= self.initial:
            raise ValueError("need 0 <= floor <= initial")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    @property
    def value(self) -> float:
        return max(self.floor, self.initial * self.decay ** self.steps)

    def decay_step(self) -> None:
        self.steps += 1


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with seeded uniform sampling."""

    def __init__(self, capacity: int, seed=0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        self._pushes = 0
        self._states: np.ndarray | None = None
        self._next_states: np.ndarray | None = None
        self._actions = np.zeros(self.capacity, dtype=int)
        self._rewards = np.zeros(self.capacity)
        self._terminals = np.zeros(self.capacity, dtype=bool)

    def __len__(self) -> int:
        return min(self._pushes, self.capacity)

    def push(self, transition: Transition) -> None:
        if self._states is None:
            dim = len(transition.state)
            self._states = np.zeros((self.capacity, dim))
            self._next_states = np.zeros((self.capacity, dim))
        i = self._pushes % self.capacity
        self._states[i] = transition.state
        self._next_states[i] = transition.next_state
        self._actions[i] = transition.action
        self._rewards[i] = transition.reward
        self._terminals[i] = transition.terminal
        self._pushes += 1

    def sample(self, batch_size: int):
        size = len(self)
        if batch_size > size:
            raise ValueError(f"cannot sample {batch_size} from a buffer holding {size}")
        idx = self.rng.choice(size, size=batch_size, replace=False)
        return (
            self._states[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_states[idx],
            self._terminals[idx],
        )

    def transitions(self) -> list[Transition]:
        """Stored transitions oldest to newest (test/inspection helper)."""
        size = len(self)
        start = self._pushes - size
        out = []
        for k in range(start, self._pushes):
            i = k % self.capacity
            out.append(Transition(
                state=self._states[i].copy(),
                action=int(self._actions[i]),
                reward=float(self._rewards[i]),
                next_state=self._next_states[i].copy(),
                terminal=bool(self._terminals[i]),
            ))
        return out


@dataclass
class TrainConfig:
    gamma: float = 0.9
    batch_size: int = 8
    update_interval: int = 10
    lr_q: float = 0.001
    lr_actor: float = 0.001
    lr_critic: float = 0.005
    optimizer: str = "adam"
    epochs: int = 5000
    eval_every: int = 100
    replay_capacity: int = 2000
    hidden_sizes: tuple[int, ...] = (32, 32)
    hidden_activation: str = "relu"
    episode_horizon: int = 256
    shuffle_episodes: bool = False
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.batch_size < 1 or self.update_interval < 1:
            raise ValueError("batch_size and update_interval must be >= 1")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must be at least the batch size")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        for name in ("lr_q", "lr_actor", "lr_critic"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def select_action(net: DenseNet, state: np.ndarray, schedule: ExplorationSchedule, rng) -> int:
    """Epsilon-greedy over the net's two output heads; ties resolve to non-alarm."""
    if rng.random() < schedule.value:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(net.forward(state)))


def dqn_td_target(transition: Transition, q_net: DenseNet, gamma: float) -> float:
    """r plus the discounted best next-state value; no bootstrap past a terminal."""
    if transition.terminal:
        return float(transition.reward)
    return float(transition.reward + gamma * np.max(q_net.forward(transition.next_state)))


def _td_targets(rewards, next_states, terminals, q_net: DenseNet, gamma: float) -> np.ndarray:
    bootstrap = np.max(q_net.forward(next_states), axis=1)
    return rewards + gamma * np.where(terminals, 0.0, bootstrap)


def dqn_update(q_net: DenseNet, optimizer, buffer: ReplayBuffer, config: TrainConfig) -> bool:
    """One minibatch regression step on the taken-action head. Skips when underfull."""
    if len(buffer) < config.batch_size:
        return False
    states, actions, rewards, next_states, terminals = buffer.sample(config.batch_size)
    targets = _td_targets(rewards, next_states, terminals, q_net, config.gamma)
    out, cache = q_net.forward_cached(states)
    rows = np.arange(len(actions))
    grad = np.zeros_like(out)
    grad[rows, actions] = 2.0 * (out[rows, actions] - targets) / len(actions)
    optimizer.step(q_net.parameters(), q_net.backward(cache, grad))
    return True


def a2c_advantage(transition: Transition, critic: DenseNet, gamma: float) -> float:
    """r + gamma * V(s') - V(s), with V(s') = 0 past a terminal."""
    value = float(critic.forward(transition.state)[0])
    if transition.terminal:
        return float(transition.reward) - value
    next_value = float(critic.forward(transition.next_state)[0])
    return float(transition.reward + gamma * next_value) - value


def a2c_update(
    actor: DenseNet,
    critic: DenseNet,
    actor_optimizer,
    critic_optimizer,
    transitions: Sequence[Transition],
    config: TrainConfig,
) -> None:
    """One critic regression step and one policy-gradient step on a transition batch.

    Advantages are computed with the pre-update critic and treated as constants
    for the actor.
    """
    if not transitions:
        return
    states = np.stack([t.state for t in transitions])
    actions = np.asarray([t.action for t in transitions], dtype=int)
    rewards = np.asarray([t.reward for t in transitions], dtype=float)
    next_states = np.stack([t.next_state for t in transitions])
    terminals = np.asarray([t.terminal for t in transitions], dtype=bool)

    next_values = critic.forward(next_states)[:, 0]
    targets = rewards + config.gamma * np.where(terminals, 0.0, next_values)
    values_out, critic_cache = critic.forward_cached(states)
    values = values_out[:, 0]
    advantages = targets - values

    critic_grad = (2.0 * (values - targets) / len(values))[:, None]
    critic_optimizer.step(critic.parameters(), critic.backward(critic_cache, critic_grad))

    probs, actor_cache = actor.forward_cached(states)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(actions)), actions] = 1.0
    # minimize -sum(log pi(a|s) * advantage): d/dlogits = -(onehot - pi) * advantage
    logit_grad = -(onehot - probs) * advantages[:, None]
    actor_optimizer.step(actor.parameters(), actor.backward(actor_cache, logit_grad, wrt="logits"))


@dataclass
class DQNModel:
    q_net: DenseNet
    normalizer: Normalizer

    kind: ClassVar[str] = "dqn"

    def alarm_scores(self, vitals_matrix) -> np.ndarray:
        q = self.q_net.forward(self.normalizer.transform(np.atleast_2d(vitals_matrix)))
        return softmax(q)[:, 1]

    def predict(self, vitals_matrix) -> np.ndarray:
        q = self.q_net.forward(self.normalizer.transform(np.atleast_2d(vitals_matrix)))
        return np.argmax(q, axis=1)

    def copy(self) -> "DQNModel":
        return DQNModel(self.q_net.copy(), self.normalizer)

    def to_checkpoint_obj(self, epoch: int = 0) -> dict:
        return {
            "kind": self.kind,
            "epoch": int(epoch),
            "normalizer": self.normalizer.to_json_obj(),
            "networks": {"q": self.q_net.to_json_obj()},
        }

    @classmethod
    def from_checkpoint_obj(cls, obj: dict) -> "DQNModel":
        return cls(
            q_net=DenseNet.from_json_obj(obj["networks"]["q"]),
            normalizer=Normalizer.from_json_obj(obj["normalizer"]),
        )


@dataclass
class A2CModel:
    actor: DenseNet
    critic: DenseNet
    normalizer: Normalizer

    kind: ClassVar[str] = "a2c"

    def alarm_scores(self, vitals_matrix) -> np.ndarray:
        probs = self.actor.forward(self.normalizer.transform(np.atleast_2d(vitals_matrix)))
        return probs[:, 1]

    def predict(self, vitals_matrix) -> np.ndarray:
        probs = self.actor.forward(self.normalizer.transform(np.atleast_2d(vitals_matrix)))
        return np.argmax(probs, axis=1)

    def copy(self) -> "A2CModel":
        return A2CModel(self.actor.copy(), self.critic.copy(), self.normalizer)

    def to_checkpoint_obj(self, epoch: int = 0) -> dict:
        return {
            "kind": self.kind,
            "epoch": int(epoch),
            "normalizer": self.normalizer.to_json_obj(),
            "networks": {"actor": self.actor.to_json_obj(), "critic": self.critic.to_json_obj()},
        }

    @classmethod
    def from_checkpoint_obj(cls, obj: dict) -> "A2CModel":
        return cls(
            actor=DenseNet.from_json_obj(obj["networks"]["actor"]),
            critic=DenseNet.from_json_obj(obj["networks"]["critic"]),
            normalizer=Normalizer.from_json_obj(obj["normalizer"]),
        )


def score(model, state_vector) -> float:
    """Alarm score in [0, 1] for one raw vitals vector."""
    return float(model.alarm_scores(np.atleast_2d(state_vector))[0])


AGENT_KINDS = ("dqn", "a2c")


@dataclass
class Snapshot:
    epoch: int
    model: object
    report: EvalReport
    epsilon: float


@dataclass
class TrainResult:
    model: object
    curve: list[tuple[int, float]]  # (epoch, mean per-episode accumulated reward)
    snapshots: list[Snapshot]
    epsilon: float
    env_steps: int
    config: TrainConfig


def _rl_networks(kind: str, config: TrainConfig, seed_a, seed_b):
    sizes = [STATE_DIM, *config.hidden_sizes]
    hidden = [config.hidden_activation] * len(config.hidden_sizes)
    if kind == "dqn":
        return DenseNet([*sizes, N_ACTIONS], [*hidden, "linear"], seed=seed_a), None
    actor = DenseNet([*sizes, N_ACTIONS], [*hidden, "softmax"], seed=seed_a)
    critic = DenseNet([*sizes, 1], [*hidden, "linear"], seed=seed_b)
    return actor, critic


def train(
    agent_kind: str,
    dataset: Dataset,
    strategy: SamplingStrategy,
    reward_scheme: RewardScheme,
    config: TrainConfig,
    seed: int,
    test_dataset: Dataset | None = None,
    early_stop: Callable[[EvalReport], bool] | None = None,
) -> TrainResult:
    """Run the full training loop: downsample, segment into episodes, learn.

    One epoch is one full pass over every episode. Every `eval_every` epochs the
    networks are snapshotted and, when a test dataset is given, evaluated; the
    snapshots come back for best-checkpoint selection. `early_stop` may end
    training after any evaluated epoch.
    """
    if agent_kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {agent_kind!r}; expected one of {AGENT_KINDS}")
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    downsampled = apply_downsampling(dataset, strategy)
    if len(downsampled) == 0:
        raise ValueError("downsampling removed every event")

    root = np.random.SeedSequence(seed)
    seed_net_a, seed_net_b, seed_explore, seed_replay, seed_shuffle = root.spawn(5)
    normalizer = Normalizer.fit(downsampled) if config.normalize else Normalizer.identity()
    states = normalizer.transform(downsampled.vitals_matrix())
    r_non, r_alarm = reward_scheme.reward_tables(downsampled.events)
    bounds = episode_bounds(
        len(downsampled),
        EpisodeConfig(config.episode_horizon, config.shuffle_episodes,
                      int(seed_shuffle.generate_state(1)[0])),
    )

    primary, critic = _rl_networks(agent_kind, config, seed_net_a, seed_net_b)
    if agent_kind == "dqn":
        q_optimizer = make_optimizer(config.optimizer, config.lr_q)
        buffer = ReplayBuffer(config.replay_capacity, seed=seed_replay)
    else:
        actor_optimizer = make_optimizer(config.optimizer, config.lr_actor)
        critic_optimizer = make_optimizer(config.optimizer, config.lr_critic)
        rollout: list[Transition] = []

    def snapshot_model():
        if agent_kind == "dqn":
            return DQNModel(primary.copy(), normalizer)
        return A2CModel(primary.copy(), critic.copy(), normalizer)

    schedule = ExplorationSchedule()
    explore_rng = np.random.default_rng(seed_explore)
    curve: list[tuple[int, float]] = []
    snapshots: list[Snapshot] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        total_reward = 0.0
        for lo, hi in bounds:
            env = AnnotationEnv.from_arrays(states[lo:hi], r_non[lo:hi], r_alarm[lo:hi])
            state = env.reset()
            while not env.done:
                action = select_action(primary, state, schedule, explore_rng)
                transition = env.step(action)
                schedule.decay_step()
                step += 1
                total_reward += transition.reward
                if agent_kind == "dqn":
                    buffer.push(transition)
                    if step % config.update_interval == 0:
                        dqn_update(primary, q_optimizer, buffer, config)
                else:
                    rollout.append(transition)
                    if step % config.update_interval == 0:
                        a2c_update(primary, critic, actor_optimizer, critic_optimizer,
                                   rollout[-config.batch_size:], config)
                        rollout.clear()
                state = transition.next_state
        curve.append((epoch, total_reward / len(bounds)))
        if test_dataset is not None and epoch % config.eval_every == 0:
            model = snapshot_model()
            report = evaluate(model, test_dataset, epoch=epoch)
            snapshots.append(Snapshot(epoch=epoch, model=model, report=report, epsilon=schedule.value))
            if early_stop is not None and early_stop(report):
                break
    return TrainResult(
        model=snapshot_model(),
        curve=curve,
        snapshots=snapshots,
        epsilon=schedule.value,
        env_steps=step,
        config=config,
    )
