"""Model-based policy search: fit dynamics, imagine rollouts, descend the cost.

The loop per episode: execute the policy for one horizon on the environment,
append the transitions, refit the dropout dynamics model, then optimize the
policy by gradient descent through reparameterized particle rollouts.  The
binary reward is replaced inside the objective by a sigmoid surrogate so the
cost has usable gradients; logged rewards always come from the real reward.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .dynamics import DynamicsModel, TransitionDataset, moment_match
from .nn import Adam, Network


@dataclass
class PilcoConfig:
    horizon: int = 10
    particles: int = 10
    random_rollouts: int = 1
    policy_opt_steps: int = 500
    policy_lr: float = 0.05
    policy_grad_clip: float = 1.0
    cost_steepness: float = 10.0
    moment_matching: bool = True
    policy_hidden: int = 32
    dynamics_hidden: tuple[int, ...] = (200, 200)
    dynamics_dropout: float = 0.1
    fit_epochs: int = 500
    fit_batch_size: int = 50
    fit_lr: float = 1e-3
    warm_start_fit: bool = True
    plateau_patience: int = 50
    plateau_tol: float = 1e-4
    convergence_threshold: int = 8
    convergence_patience: int = 3

    def __post_init__(self):
        self.dynamics_hidden = tuple(int(h) for h in self.dynamics_hidden)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.particles < 2:
            raise ValueError("need at least 2 particles")
        if self.cost_steepness <= 0:
            raise ValueError("cost_steepness must be > 0")


@dataclass
class PredictedTrajectory:
    """Particle clouds for t = 0..T plus the continuous action taken each step."""

    particles: list[np.ndarray]
    actions: list[np.ndarray]

    def __post_init__(self):
        if len(self.particles) != len(self.actions) + 1:
            raise ValueError("trajectory must hold T+1 particle sets for T actions")


class Policy:
    """Squashed network u = 4*sigmoid(...) over encoded states, so u in [0, 4)."""

    def __init__(self, state_dim: int, hidden: int = 32, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.net = Network.dense(
            [state_dim, hidden, 1],
            ["tanh", "sigmoid"],
            rng,
            act_scale=[1.0, 4.0],
        )
        self.state_dim = state_dim

    def act(self, state_vec: np.ndarray) -> float:
        return float(self.net.evaluate(np.asarray(state_vec, dtype=np.float64))[0])

    def forward(self, particles) -> Tensor:
        return self.net.forward(particles)


def smooth_cost(particles, target_n: int, steepness: float, n_enemies: int) -> Tensor:
    """Differentiable surrogate for 1 - reward on encoded particles.

    The last state coordinate decodes to the continuous visible-enemy count;
    the surrogate 1 - sigmoid(k * (count - (target - 1/2))) approaches the
    exact binary cost as the steepness k grows.
    """
    particles = particles if isinstance(particles, Tensor) else Tensor(particles)
    count = particles[:, -1:] * float(n_enemies)
    return 1.0 - ((count - (target_n - 0.5)) * steepness).sigmoid()


def predict_and_cost(
    model: DynamicsModel,
    policy: Policy,
    init_state_vec: np.ndarray,
    cfg: PilcoConfig,
    target_n: int,
    n_enemies: int,
    masks: list | None = None,
    noise: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[PredictedTrajectory, Tensor]:
    """Roll particles through the model for T steps and accumulate the cost.

    All particles start at the given state (a delta distribution).  Masks and
    moment-matching noise may be passed in so an optimization pass can hold
    them fixed; otherwise they are drawn from `rng`.
    """
    k = cfg.particles
    if masks is None:
        masks = model.sample_masks(k, rng)
    if noise is None and cfg.moment_matching:
        noise = rng.standard_normal((cfg.horizon, k, model.state_dim))

    particles = Tensor(np.tile(np.asarray(init_state_vec, dtype=np.float64), (k, 1)))
    cloud = [particles.data.copy()]
    actions = []
    total = None
    for t in range(cfg.horizon):
        u = policy.forward(particles)
        particles = model.propagate(particles, u, masks)
        if cfg.moment_matching:
            particles = moment_match(particles, noise[t])
        step_cost = smooth_cost(particles, target_n, cfg.cost_steepness, n_enemies).mean()
        total = step_cost if total is None else total + step_cost
        cloud.append(particles.data.copy())
        actions.append(u.data.copy())
    return PredictedTrajectory(cloud, actions), total


def optimize_policy(
    model: DynamicsModel,
    policy: Policy,
    init_state_vec: np.ndarray,
    cfg: PilcoConfig,
    target_n: int,
    n_enemies: int,
    rng: np.random.Generator,
) -> Policy:
    """Gradient-descend the expected cost through the particle rollout.

    Dropout masks and resampling noise stay fixed for the whole pass, so the
    objective is a deterministic differentiable function of the policy
    parameters.  Returns the policy set to the lowest-cost parameters seen.
    """
    if cfg.policy_opt_steps == 0:
        return policy
    masks = model.sample_masks(cfg.particles, rng)
    noise = (
        rng.standard_normal((cfg.horizon, cfg.particles, model.state_dim))
        if cfg.moment_matching
        else None
    )
    opt = Adam(cfg.policy_lr, clip_norm=cfg.policy_grad_clip)

    def objective() -> Tensor:
        _, j = predict_and_cost(
            model, policy, init_state_vec, cfg, target_n, n_enemies, masks=masks, noise=noise
        )
        return j

    best_j = np.inf
    best_params = policy.net.get_params()
    stale = 0
    for _ in range(cfg.policy_opt_steps):
        j = objective()
        value = float(j.data)
        if value < best_j - cfg.plateau_tol:
            best_j = value
            best_params = policy.net.get_params()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.plateau_patience:
                break
        policy.net.zero_grad()
        j.backward()
        opt.apply(policy.net, [p.grad for _, p in policy.net.parameters()])
    final = float(objective().data)
    if final < best_j:
        best_params = policy.net.get_params()
    policy.net.set_params(best_params)
    return policy


def rollout_real(
    env,
    policy: Policy,
    horizon: int,
    dataset: TransitionDataset,
    start_state=None,
    explore_rng: np.random.Generator | None = None,
) -> list[int]:
    """Execute on the environment for one horizon, recording transitions.

    With `explore_rng` the policy is ignored and actions are drawn uniformly
    from [0, 4) (the seeding random rollouts).
    """
    state = env.reset() if start_state is None else start_state
    rewards = []
    for _ in range(horizon):
        vec = env.encode(state)
        if explore_rng is not None:
            u = float(explore_rng.uniform(0.0, 4.0))
        else:
            u = policy.act(vec)
        state, reward = env.step(state, u)
        dataset.append(vec, u, env.encode(state))
        rewards.append(reward)
    return rewards


def train(
    env,
    cfg: PilcoConfig,
    episodes: int,
    seed: int = 0,
    stop_on_convergence: bool = True,
) -> tuple[Policy, list[dict]]:
    """Run the full loop; returns the policy and per-episode raw logs.

    The seeding random rollouts are logged as ordinary episodes, so the
    returned list has `random_rollouts + trained` entries unless convergence
    (threshold reward for `convergence_patience` consecutive episodes) stops
    training early.
    """
    rng = np.random.default_rng(seed)
    state_dim = env.state_dim
    target_n = env.cfg.target_n
    n_enemies = env.cfg.n_enemies

    dataset = TransitionDataset(state_dim)
    model = DynamicsModel(state_dim, cfg.dynamics_hidden, cfg.dynamics_dropout, rng=rng)
    policy = Policy(state_dim, cfg.policy_hidden, rng=rng)
    logs: list[dict] = []

    def episodic(rewards: list[int]) -> int:
        return int(sum(rewards))

    def converged() -> bool:
        tail = [episodic(l["iter_rewards"]) for l in logs[-cfg.convergence_patience :]]
        return len(tail) == cfg.convergence_patience and all(
            r >= cfg.convergence_threshold for r in tail
        )

    for _ in range(cfg.random_rollouts):
        t0 = time.perf_counter()
        rewards = rollout_real(env, policy, cfg.horizon, dataset, explore_rng=rng)
        logs.append({"iter_rewards": rewards, "compute_s": time.perf_counter() - t0})

    fit_opt = Adam(cfg.fit_lr)
    for _ in range(episodes):
        t0 = time.perf_counter()
        if not cfg.warm_start_fit:
            model = DynamicsModel(state_dim, cfg.dynamics_hidden, cfg.dynamics_dropout, rng=rng)
            fit_opt = Adam(cfg.fit_lr)
        model.fit(dataset, cfg.fit_epochs, cfg.fit_batch_size, fit_opt, rng)
        start_state = env.reset()
        optimize_policy(model, policy, env.encode(start_state), cfg, target_n, n_enemies, rng)
        compute_s = time.perf_counter() - t0
        rewards = rollout_real(env, policy, cfg.horizon, dataset, start_state=start_state)
        logs.append({"iter_rewards": rewards, "compute_s": compute_s})
        if stop_on_convergence and converged():
            break
    return policy, logs
