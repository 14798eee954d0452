"""DDPG agent for continuous (v, omega) control.

The actor is a plain MLP with a linear 2-unit head; the head is squashed by
sigmoid (forward speed) and tanh (turn rate) and scaled to the actuator
limits.  The critic consumes the state alone in its first layer and the
action is concatenated in at the second layer.  Training uses a FIFO replay
buffer, target networks updated by Polyak averaging, and temporally
correlated Ornstein-Uhlenbeck exploration noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .robot import V_MAX, W_MAX, normalize_angle
from .storage import ContainerError, load_container, save_container
from .world import LIDAR_BEAM_COUNT, LIDAR_MAX_RANGE_M

STATE_DIM = LIDAR_BEAM_COUNT + 4  # 40 beams + goal polar (2) + last action (2)
ACTION_DIM = 2
DEFAULT_HIDDEN = (512, 512, 512)
DEFAULT_BUFFER_CAPACITY = 100_000
DEFAULT_BATCH_SIZE = 64
DEFAULT_GAMMA = 0.99
DEFAULT_TAU = 0.001
DEFAULT_LR_ACTOR = 1e-4
DEFAULT_LR_CRITIC = 1e-3
DEFAULT_L2_CRITIC = 1e-2
OU_THETA = 0.15
OU_SIGMA = 0.2

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is missing, malformed, or of an incompatible version."""


# ----------------------------------------------------------------- state I/O

@dataclass(frozen=True)
class StateVector:
    """Agent observation: normalized lidar, goal in polar form, last command.

    lidar holds the 40 ranges divided by the 2 m maximum, so each component
    lies in [0.1, 1].  target_distance stays in meters here and is scaled by
    the world diagonal in as_array().
    """

    lidar: np.ndarray
    target_distance: float
    target_bearing: float
    last_action: tuple[float, float]

    def __post_init__(self) -> None:
        if self.lidar.shape != (LIDAR_BEAM_COUNT,):
            raise ValueError(f"lidar must have {LIDAR_BEAM_COUNT} entries")
        object.__setattr__(self, "target_bearing", normalize_angle(self.target_bearing))

    def as_array(self, distance_scale: float) -> np.ndarray:
        return np.concatenate([
            self.lidar,
            [self.target_distance / distance_scale, self.target_bearing,
             self.last_action[0], self.last_action[1]],
        ])


def state_from_scan(scan_ranges: np.ndarray, target_distance: float,
                    target_bearing: float, last_action: tuple[float, float]) -> StateVector:
    return StateVector(lidar=np.asarray(scan_ranges, dtype=float) / LIDAR_MAX_RANGE_M,
                       target_distance=target_distance, target_bearing=target_bearing,
                       last_action=last_action)


@dataclass(frozen=True)
class Action:
    v: float       # m/s in [0, V_MAX]
    omega: float   # rad/s in [-W_MAX, W_MAX]


# -------------------------------------------------------------------- replay

class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform random sampling."""

    def __init__(self, capacity: int = DEFAULT_BUFFER_CAPACITY,
                 state_dim: int = STATE_DIM, action_dim: int = ACTION_DIM):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s: np.ndarray, a: tuple[float, float], r: float,
             s_next: np.ndarray, terminal: bool) -> None:
        i = self.cursor
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.terminals[i] = 1.0 if terminal else 0.0
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        """Uniform sample with replacement; raises when the buffer is too small."""
        if self.size < batch:
            raise ValueError(f"replay buffer holds {self.size} transitions; need {batch}")
        idx = rng.integers(0, self.size, size=batch)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])


# --------------------------------------------------------------------- noise

@dataclass
class OuNoise:
    """Ornstein-Uhlenbeck process pulled toward zero, one step per control tick."""

    theta: float = OU_THETA
    sigma: float = OU_SIGMA
    dt: float = 1.0
    state: np.ndarray = field(default_factory=lambda: np.zeros(ACTION_DIM))

    def reset(self) -> None:
        self.state = np.zeros_like(self.state)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        self.state = self.state + self.theta * (0.0 - self.state) * self.dt \
            + self.sigma * math.sqrt(self.dt) * rng.standard_normal(self.state.shape)
        return self.state.copy()


# ------------------------------------------------------------------ networks

def action_head(z: np.ndarray, v_max: float = V_MAX, w_max: float = W_MAX) -> np.ndarray:
    """Squash head pre-activations to (v, omega) within the actuator limits."""
    sig = 1.0 / (1.0 + np.exp(-z[..., 0]))
    return np.stack([v_max * sig, w_max * np.tanh(z[..., 1])], axis=-1)


def action_head_grad(z: np.ndarray, v_max: float = V_MAX, w_max: float = W_MAX) -> np.ndarray:
    """Elementwise d(action)/d(pre-activation) of the squash head."""
    sig = 1.0 / (1.0 + np.exp(-z[..., 0]))
    th = np.tanh(z[..., 1])
    return np.stack([v_max * sig * (1.0 - sig), w_max * (1.0 - th * th)], axis=-1)


def make_actor(state_dim: int, hidden: tuple[int, ...], rng: np.random.Generator) -> nn.Mlp:
    dims = [state_dim, *hidden, ACTION_DIM]
    activations = ["relu"] * len(hidden) + ["linear"]
    return nn.init_mlp(dims, activations, rng)


def actor_forward(actor: nn.Mlp, state: np.ndarray,
                  v_max: float = V_MAX, w_max: float = W_MAX) -> Action:
    z, _ = nn.forward(actor, state)
    a = action_head(z, v_max, w_max)
    return Action(v=float(a[0]), omega=float(a[1]))


class CriticNet:
    """Q network with late action insertion.

    Layer 1 consumes the state alone; the action joins at layer 2 so the
    first layer learns a representation of the state before actions matter.
    """

    def __init__(self, layers: list[nn.Layer]):
        if len(layers) != 4:
            raise ValueError("critic expects exactly 4 layers")
        self.layers = layers

    @classmethod
    def create(cls, state_dim: int, action_dim: int, hidden: tuple[int, ...],
               rng: np.random.Generator) -> "CriticNet":
        if len(hidden) != 3:
            raise ValueError("critic expects 3 hidden sizes")
        h0, h1, h2 = hidden
        return cls([
            nn.init_layer(state_dim, h0, "relu", rng),
            nn.init_layer(h0 + action_dim, h1, "relu", rng),
            nn.init_layer(h1, h2, "relu", rng),
            nn.init_layer(h2, 1, "linear", rng, output=True),
        ])

    @property
    def state_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def action_dim(self) -> int:
        return self.layers[1].fan_in - self.layers[0].fan_out

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in self.layers:
            out += [l.w, l.b]
        return out

    def clone(self) -> "CriticNet":
        return CriticNet([nn.Layer(l.w.copy(), l.b.copy(), l.activation) for l in self.layers])

    def forward(self, s: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, list]:
        s = np.asarray(s, dtype=float)
        a = np.asarray(a, dtype=float)
        single = s.ndim == 1
        if single:
            s, a = s[None, :], a[None, :]
        if s.shape[1] != self.state_dim or a.shape[1] != self.action_dim:
            raise ValueError("critic input widths do not match the architecture")
        l1, l2, l3, l4 = self.layers
        z1, h1 = nn.layer_forward(l1, s)
        u = np.concatenate([h1, a], axis=1)
        z2, h2 = nn.layer_forward(l2, u)
        z3, h3 = nn.layer_forward(l3, h2)
        z4, q = nn.layer_forward(l4, h3)
        cache = (single, s, z1, h1, u, z2, h2, z3, h3, z4, q)
        return (float(q[0, 0]) if single else q[:, 0]), cache

    def backward(self, cache, q_gradient) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
        """Returns (param grads, d/d state, d/d action) for an upstream dQ."""
        single, s, z1, h1, u, z2, h2, z3, h3, z4, q = cache
        g = np.asarray(q_gradient, dtype=float).reshape(-1, 1)
        l1, l2, l3, l4 = self.layers
        gw4, gb4, gh3 = nn.layer_backward(l4, h3, z4, q, g)
        gw3, gb3, gh2 = nn.layer_backward(l3, h2, z3, h3, gh3)
        gw2, gb2, gu = nn.layer_backward(l2, u, z2, h2, gh2)
        gh1 = gu[:, : l1.fan_out]
        ga = gu[:, l1.fan_out :]
        gw1, gb1, gs = nn.layer_backward(l1, s, z1, h1, gh1)
        grads = [gw1, gb1, gw2, gb2, gw3, gb3, gw4, gb4]
        if single:
            return grads, gs[0], ga[0]
        return grads, gs, ga

    def polyak_from(self, online: "CriticNet", tau: float) -> None:
        if [l.w.shape for l in self.layers] != [l.w.shape for l in online.layers]:
            raise ValueError("polyak update requires identical architectures")
        nn.polyak_update_params(self.params(), online.params(), tau)


def critic_forward(critic: CriticNet, state: np.ndarray, action: np.ndarray) -> float:
    q, _ = critic.forward(state, action)
    return float(q)


# --------------------------------------------------------------------- agent

class DdpgAgent:
    """Actor-critic pair with target copies, optimizers, and exploration noise."""

    def __init__(self, actor: nn.Mlp, critic: CriticNet, *,
                 gamma: float = DEFAULT_GAMMA, tau: float = DEFAULT_TAU,
                 lr_actor: float = DEFAULT_LR_ACTOR, lr_critic: float = DEFAULT_LR_CRITIC,
                 l2_critic: float = DEFAULT_L2_CRITIC, l2_decoupled: bool = False,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 v_max: float = V_MAX, w_max: float = W_MAX,
                 ou_theta: float = OU_THETA, ou_sigma: float = OU_SIGMA):
        self.actor = actor
        self.critic = critic
        self.target_actor = actor.clone()
        self.target_critic = critic.clone()
        self.adam_actor = nn.AdamState.for_params(actor.params(), lr_actor)
        self.adam_critic = nn.AdamState.for_params(critic.params(), lr_critic,
                                                   l2=l2_critic, decoupled=l2_decoupled)
        self.gamma = gamma
        self.tau = tau
        self.batch_size = batch_size
        self.v_max = v_max
        self.w_max = w_max
        self.noise = OuNoise(theta=ou_theta, sigma=ou_sigma)

    @classmethod
    def create(cls, rng: np.random.Generator, *, state_dim: int = STATE_DIM,
               hidden: tuple[int, ...] = DEFAULT_HIDDEN, **kwargs) -> "DdpgAgent":
        actor = make_actor(state_dim, tuple(hidden), rng)
        critic = CriticNet.create(state_dim, ACTION_DIM, tuple(hidden), rng)
        return cls(actor, critic, **kwargs)

    # ------------------------------------------------------------- inference

    def policy(self, states: np.ndarray) -> np.ndarray:
        """Deterministic actions for a batch of states."""
        z, _ = nn.forward(self.actor, states)
        return action_head(z, self.v_max, self.w_max)

    def act(self, state: np.ndarray, *, explore: bool,
            rng: np.random.Generator | None = None) -> Action:
        """Policy action; exploration adds scaled OU noise and clips to limits."""
        z, _ = nn.forward(self.actor, state)
        a = action_head(z, self.v_max, self.w_max)
        v, w = float(a[0]), float(a[1])
        if explore:
            if rng is None:
                raise ValueError("exploration requires an rng")
            n = self.noise.sample(rng)
            v = min(max(v + self.v_max * n[0], 0.0), self.v_max)
            w = min(max(w + self.w_max * n[1], -self.w_max), self.w_max)
        return Action(v=v, omega=w)

    # -------------------------------------------------------------- learning

    def update_step(self, buffer: ReplayBuffer,
                    rng: np.random.Generator) -> tuple[float, float] | None:
        """One coupled critic/actor update on a uniform minibatch.

        Returns (critic_loss, actor_objective), or None when the buffer does
        not yet hold a full batch.
        """
        if len(buffer) < self.batch_size:
            return None
        s, a, r, s2, term = buffer.sample(self.batch_size, rng)

        # critic: squared error against the target-network bootstrap
        z2, _ = nn.forward(self.target_actor, s2)
        a2 = action_head(z2, self.v_max, self.w_max)
        q2, _ = self.target_critic.forward(s2, a2)
        y = r + (1.0 - term) * self.gamma * q2
        q, cache_c = self.critic.forward(s, a)
        diff = q - y
        critic_loss = float(np.mean(diff * diff))
        grads_c, _, _ = self.critic.backward(cache_c, 2.0 * diff / self.batch_size)
        nn.adam_step(self.critic.params(), grads_c, self.adam_critic)

        # actor: ascend mean Q(s, pi(s)) through the squash head
        z, cache_a = nn.forward(self.actor, s)
        a_pi = action_head(z, self.v_max, self.w_max)
        q_pi, cache_q = self.critic.forward(s, a_pi)
        actor_objective = float(np.mean(q_pi))
        _, _, ga = self.critic.backward(cache_q, np.full(self.batch_size, 1.0 / self.batch_size))
        gz = ga * action_head_grad(z, self.v_max, self.w_max)
        grads_a, _ = nn.backward(self.actor, cache_a, -gz)
        nn.adam_step(self.actor.params(), grads_a, self.adam_actor)

        nn.polyak_update(self.target_actor, self.actor, self.tau)
        self.target_critic.polyak_from(self.critic, self.tau)
        return critic_loss, actor_objective

    def param_checksum(self) -> int:
        import zlib

        crc = 0
        for p in self.actor.params() + self.critic.params():
            crc = zlib.crc32(np.ascontiguousarray(p).tobytes(), crc)
        return crc

    # ----------------------------------------------------------- persistence

    def save_checkpoint(self, path: str | Path, *, episode: int = 0, label: str = "",
                        rng: np.random.Generator | None = None,
                        buffer: ReplayBuffer | None = None,
                        include_buffer: bool = False,
                        extra_entries: dict | None = None) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "navslam-checkpoint",
            "label": label,
            "episode": episode,
            "gamma": self.gamma, "tau": self.tau,
            "lr_actor": self.adam_actor.lr, "lr_critic": self.adam_critic.lr,
            "l2_critic": self.adam_critic.l2, "l2_decoupled": self.adam_critic.decoupled,
            "batch_size": self.batch_size,
            "v_max": self.v_max, "w_max": self.w_max,
            "ou_theta": self.noise.theta, "ou_sigma": self.noise.sigma,
            "buffer": None if buffer is None else {
                "capacity": buffer.capacity, "size": buffer.size,
                "cursor": buffer.cursor, "included": bool(include_buffer),
            },
        }
        entries: dict = {"meta": meta}
        entries.update(nn.layers_to_entries("actor", self.actor.layers))
        entries.update(nn.layers_to_entries("critic", self.critic.layers))
        entries.update(nn.layers_to_entries("target_actor", self.target_actor.layers))
        entries.update(nn.layers_to_entries("target_critic", self.target_critic.layers))
        entries.update(nn.adam_to_entries("adam_actor", self.adam_actor))
        entries.update(nn.adam_to_entries("adam_critic", self.adam_critic))
        entries["ou.state"] = self.noise.state
        if rng is not None:
            entries["rng_state"] = json.dumps(rng.bit_generator.state, sort_keys=True)
        if buffer is not None and include_buffer:
            entries["buffer.states"] = buffer.states[: buffer.size]
            entries["buffer.actions"] = buffer.actions[: buffer.size]
            entries["buffer.rewards"] = buffer.rewards[: buffer.size]
            entries["buffer.next_states"] = buffer.next_states[: buffer.size]
            entries["buffer.terminals"] = buffer.terminals[: buffer.size]
        if extra_entries:
            entries.update(extra_entries)
        save_container(path, entries)

    @classmethod
    def load_checkpoint(cls, path: str | Path) -> tuple["DdpgAgent", dict, dict]:
        """Returns (agent, meta, raw entries) for a saved checkpoint."""
        try:
            entries = load_container(path)
        except (ContainerError, OSError) as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
        meta = entries.get("meta")
        if not isinstance(meta, dict) or meta.get("kind") != "navslam-checkpoint":
            raise CheckpointError(f"{path}: not an agent checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
        agent = cls(
            nn.Mlp(nn.layers_from_entries("actor", entries)),
            CriticNet(nn.layers_from_entries("critic", entries)),
            gamma=meta["gamma"], tau=meta["tau"],
            lr_actor=meta["lr_actor"], lr_critic=meta["lr_critic"],
            l2_critic=meta["l2_critic"], l2_decoupled=meta["l2_decoupled"],
            batch_size=meta["batch_size"], v_max=meta["v_max"], w_max=meta["w_max"],
            ou_theta=meta["ou_theta"], ou_sigma=meta["ou_sigma"])
        agent.target_actor = nn.Mlp(nn.layers_from_entries("target_actor", entries))
        agent.target_critic = CriticNet(nn.layers_from_entries("target_critic", entries))
        agent.adam_actor = nn.adam_from_entries("adam_actor", entries)
        agent.adam_critic = nn.adam_from_entries("adam_critic", entries)
        agent.noise.state = entries["ou.state"]
        return agent, meta, entries
