"""Fast self-checks behind the `check` subcommand.

Each check re-verifies a core numeric contract in well under a second; the
full oracle suite lives in the test tree.
"""

from __future__ import annotations

import math

import numpy as np

from . import nn
from .ddpg import CriticNet, ReplayBuffer, action_head, action_head_grad, make_actor
from .reward import RewardParams, StepOutcome, dense_reward, map_term_from_distances
from .slam_grid import log_odds_to_probability, probability_to_log_odds
from .slam_pf import ParticleSet, effective_sample_size, resample_if_needed
from .world import World, raycast


def _check_gradients() -> bool:
    rng = np.random.default_rng(12)
    actor = make_actor(10, (8, 8, 8), rng)
    s = rng.normal(size=10)
    c = rng.normal(size=2)
    z, cache = nn.forward(actor, s)
    gz = c * action_head_grad(z)
    grads, _ = nn.backward(actor, cache, gz)
    params = actor.params()
    h = 1e-6
    for pi in (0, len(params) - 1):
        p = params[pi]
        idx = (0,) * p.ndim
        orig = p[idx]
        p[idx] = orig + h
        up = float(np.dot(c, action_head(nn.forward(actor, s)[0])))
        p[idx] = orig - h
        dn = float(np.dot(c, action_head(nn.forward(actor, s)[0])))
        p[idx] = orig
        numeric = (up - dn) / (2 * h)
        if abs(numeric - grads[pi][idx]) > 1e-4 * max(1.0, abs(numeric)):
            return False
    return True


def _check_adam_first_step() -> bool:
    p = np.array([1.0, -2.0])
    g = np.array([0.3, -0.7])
    state = nn.AdamState.for_params([p], lr=1e-3)
    nn.adam_step([p], [g.copy()], state)
    expected = np.array([1.0, -2.0]) - 1e-3 * g / (np.abs(g) + state.eps)
    return bool(np.allclose(p, expected, atol=1e-9))


def _check_polyak() -> bool:
    rng = np.random.default_rng(3)
    a = make_actor(4, (3, 3, 3), rng)
    b = make_actor(4, (3, 3, 3), rng)
    snapshot = [q.copy() for q in b.params()]
    nn.polyak_update(b, a, 0.001)
    for tp, op, old in zip(b.params(), a.params(), snapshot):
        if not np.allclose(tp, 0.001 * op + 0.999 * old, atol=0):
            return False
    return True


def _check_ess() -> bool:
    ps = ParticleSet(poses=np.zeros((4, 3)),
                     weights=np.array([0.5, 0.5, 0.0, 0.0]), normalized=True)
    return abs(effective_sample_size(ps) - 2.0) < 1e-12


def _check_resample_limit() -> bool:
    poses = np.array([[0.0, 0.0, 0.0], [5.0, 5.0, 1.0], [9.0, 9.0, 2.0]])
    ps = ParticleSet(poses=poses, weights=np.array([1.0, 0.0, 0.0]), normalized=True)
    out = resample_if_needed(ps, 0.9, np.random.default_rng(0))
    return bool(np.all(out.poses == poses[0]))


def _check_log_odds_round_trip() -> bool:
    p = np.linspace(0.01, 0.99, 23)
    return bool(np.max(np.abs(log_odds_to_probability(probability_to_log_odds(p)) - p)) < 1e-12)


def _check_reward_values() -> bool:
    params = RewardParams(decay_rate=0.5)
    running = dense_reward(2.0, StepOutcome.RUNNING, params)
    if abs(running - (1.0 - math.exp(1.0))) > 1e-12:
        return False
    m = map_term_from_distances(np.array([0.5, 1.0]), 0.8)
    return abs(m - 0.8 * (math.exp(-0.5) + math.exp(-1.0)) / 2.0) < 1e-12


def _check_raycast_perpendicular() -> bool:
    box = np.array([[2.0, 0.5], [3.0, 0.5], [3.0, 1.5], [2.0, 1.5]])
    world = World(bounds=(4.0, 2.0), obstacles=[box], name="check")
    return abs(raycast(world, (1.0, 1.0), 0.0, r_max=2.0) - 1.0) < 1e-9


def _check_buffer_fifo() -> bool:
    buf = ReplayBuffer(capacity=3, state_dim=1, action_dim=1)
    for i in range(4):
        buf.push(np.array([float(i)]), (0.0,), 0.0, np.array([0.0]), False)
    return len(buf) == 3 and 0.0 not in buf.states[:, 0] and 3.0 in buf.states[:, 0]


def _check_critic_structure() -> bool:
    rng = np.random.default_rng(5)
    critic = CriticNet.create(6, 2, (8, 8, 8), rng)
    critic.layers[1].w[:, 8:] = 0.0
    s = rng.normal(size=6)
    q1, _ = critic.forward(s, np.array([0.1, -0.3]))
    q2, _ = critic.forward(s, np.array([-0.2, 0.9]))
    return abs(q1 - q2) < 1e-12


CHECKS = [
    ("backprop vs finite differences", _check_gradients),
    ("adam first-step closed form", _check_adam_first_step),
    ("polyak elementwise blend", _check_polyak),
    ("effective sample size 1/sum(w^2)", _check_ess),
    ("degenerate-weight resampling", _check_resample_limit),
    ("log-odds round trip", _check_log_odds_round_trip),
    ("reward hand values", _check_reward_values),
    ("raycast perpendicular hit", _check_raycast_perpendicular),
    ("replay buffer FIFO eviction", _check_buffer_fifo),
    ("critic late action insertion", _check_critic_structure),
]


def run_invariant_checks(verbose: bool = False) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok = fn()
        except Exception:  # noqa: BLE001
            ok = False
        if verbose:
            print(f"{'ok  ' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    return failures
