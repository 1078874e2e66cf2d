"""The arena MDP: detection with stale estimates, transition, reward.

A state is (own area, per-enemy estimated areas, number of currently visible
enemies).  Enemies never move; what changes is what the robot can see.  An
enemy out of sight keeps its previous estimate, which at episode start is the
configured initial assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arena import ArenaMap, visible

ACTION_NAMES = ("up", "down", "left", "right")
CONTINUOUS_CLAMP_EPS = 1e-6  # floor(clamp(u, 0, 4 - eps)) keeps bins equal width


@dataclass(frozen=True)
class State:
    p_m: int
    p_e: tuple[int, ...]
    n_e: int


@dataclass
class EnvConfig:
    n_enemies: int
    target_n: int
    true_enemy_areas: tuple[int, ...]
    start_area: int
    initial_assumed_enemy_areas: tuple[int, ...]
    horizon: int = 10
    detection_miss_prob: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        self.true_enemy_areas = tuple(int(a) for a in self.true_enemy_areas)
        self.initial_assumed_enemy_areas = tuple(
            int(a) for a in self.initial_assumed_enemy_areas
        )
        if self.n_enemies not in (1, 2):
            raise ValueError("n_enemies must be 1 or 2")
        if not 1 <= self.target_n <= self.n_enemies:
            raise ValueError("target_n must be in [1, n_enemies]")
        if len(self.true_enemy_areas) != self.n_enemies:
            raise ValueError("true_enemy_areas must list one area per enemy")
        if len(self.initial_assumed_enemy_areas) != self.n_enemies:
            raise ValueError("initial_assumed_enemy_areas must list one area per enemy")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.detection_miss_prob < 1.0:
            raise ValueError("detection_miss_prob must be in [0, 1)")


def reward_fn(state: State, target_n: int) -> int:
    """1 iff the number of visible enemies equals the target, else 0."""
    return 1 if state.n_e == target_n else 0


def discretize_action(action) -> int:
    """Map an action to a neighbor slot: ints pass through, floats get floored."""
    if isinstance(action, (int, np.integer)):
        k = int(action)
        if not 0 <= k <= 3:
            raise ValueError(f"discrete action {k} outside {{0, 1, 2, 3}}")
        return k
    u = float(action)
    if not np.isfinite(u):
        raise ValueError("continuous action must be finite")
    return int(np.floor(np.clip(u, 0.0, 4.0 - CONTINUOUS_CLAMP_EPS)))


def detect_enemies(
    arena: ArenaMap,
    robot_area: int,
    true_enemy_areas: tuple[int, ...],
    prev_estimates: tuple[int, ...],
    miss_prob: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[int, tuple[int, ...]]:
    """Line-of-sight detection with stale fallbacks.

    A visible enemy (and not dropped by the per-enemy false-negative
    probability) updates its estimate to the true area and counts toward the
    visible total; anything else keeps the previous estimate.
    """
    if len(prev_estimates) != len(true_enemy_areas):
        raise ValueError("prev_estimates must have one entry per enemy")
    estimates = []
    n_visible = 0
    for true_area, prev in zip(true_enemy_areas, prev_estimates):
        if visible(arena, robot_area, true_area):
            if miss_prob > 0.0 and rng is not None and rng.random() < miss_prob:
                estimates.append(prev)
            else:
                estimates.append(true_area)
                n_visible += 1
        else:
            estimates.append(prev)
    return n_visible, tuple(estimates)


def oracle_optimal_areas(
    arena: ArenaMap, true_enemy_areas: tuple[int, ...], target_n: int
) -> set[int]:
    """Brute force over all areas: where does the visible-enemy count hit the target?"""
    out = set()
    for a in range(arena.n_areas):
        seen = sum(1 for e in true_enemy_areas if visible(arena, a, e))
        if seen == target_n:
            out.add(a)
    return out


class ArenaEnv:
    """One robot on a fixed map against static enemies.

    A single instance is mutated by one caller at a time; run one environment
    per seed for parallel experiments.
    """

    def __init__(self, arena: ArenaMap, cfg: EnvConfig):
        for a in cfg.true_enemy_areas + cfg.initial_assumed_enemy_areas + (cfg.start_area,):
            if not 0 <= a < arena.n_areas:
                raise ValueError(f"area id {a} outside the map")
        self.arena = arena
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self._norm = np.array([arena.width, arena.height])
        self._norm_centroids = arena.centroids / self._norm

    # ------------------------------------------------------------ MDP
    def reset(self) -> State:
        """Start state: configured start area, assumed estimates, then detection."""
        n_e, estimates = detect_enemies(
            self.arena,
            self.cfg.start_area,
            self.cfg.true_enemy_areas,
            self.cfg.initial_assumed_enemy_areas,
            self.cfg.detection_miss_prob,
            self.rng,
        )
        return State(self.cfg.start_area, estimates, n_e)

    def step(self, state: State, action) -> tuple[State, int]:
        """Move one adjacency hop, rerun detection, score the new state."""
        k = discretize_action(action)
        new_pos = int(self.arena.adjacency[state.p_m, k])
        n_e, estimates = detect_enemies(
            self.arena,
            new_pos,
            self.cfg.true_enemy_areas,
            state.p_e,
            self.cfg.detection_miss_prob,
            self.rng,
        )
        new_state = State(new_pos, estimates, n_e)
        return new_state, reward_fn(new_state, self.cfg.target_n)

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    # ------------------------------------------------------------ embedding
    @property
    def state_dim(self) -> int:
        return 2 * (1 + self.cfg.n_enemies) + 1

    def encode(self, state: State) -> np.ndarray:
        """Areas become normalized centroids, the visible count a fraction."""
        parts = [self._norm_centroids[state.p_m]]
        parts.extend(self._norm_centroids[e] for e in state.p_e)
        parts.append([state.n_e / self.cfg.n_enemies])
        return np.concatenate(parts)

    def decode(self, vec: np.ndarray) -> State:
        """Snap each coordinate pair to the nearest area centroid."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.state_dim,):
            raise ValueError(f"state vector must have length {self.state_dim}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("state vector has non-finite entries")
        ids = []
        for i in range(1 + self.cfg.n_enemies):
            point = vec[2 * i : 2 * i + 2]
            d2 = np.sum((self._norm_centroids - point) ** 2, axis=1)
            ids.append(int(np.argmin(d2)))
        n_e = int(np.clip(np.rint(vec[-1] * self.cfg.n_enemies), 0, self.cfg.n_enemies))
        return State(ids[0], tuple(ids[1:]), n_e)
