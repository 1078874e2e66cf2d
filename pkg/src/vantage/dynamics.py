"""Dropout-network transition model with particle propagation.

The model predicts state *deltas* from (encoded state, action) pairs and is
refit from the growing transition dataset each episode (warm start).  Model
uncertainty is carried by dropout masks: each particle holds one sampled mask
set for a whole predicted rollout, i.e. one network realization per particle.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, concat
from .nn import Adam, Network, sample_masks

VAR_FLOOR = 1e-12
SIGMA_FLOOR = 1e-8


class TransitionDataset:
    """Append-only store of (encoded state, action, encoded next state)."""

    def __init__(self, state_dim: int):
        self.state_dim = state_dim
        self._states: list[np.ndarray] = []
        self._actions: list[float] = []
        self._next_states: list[np.ndarray] = []

    def append(self, state: np.ndarray, action: float, next_state: np.ndarray) -> None:
        state = np.asarray(state, dtype=np.float64)
        next_state = np.asarray(next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ValueError("record dimensionality must stay constant")
        if not (
            np.all(np.isfinite(state))
            and np.isfinite(action)
            and np.all(np.isfinite(next_state))
        ):
            raise ValueError("transition record has non-finite entries")
        self._states.append(state)
        self._actions.append(float(action))
        self._next_states.append(next_state)

    def __len__(self) -> int:
        return len(self._states)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.array(self._states),
            np.array(self._actions)[:, None],
            np.array(self._next_states),
        )


class DynamicsModel:
    """BNN over transitions: input (s, u), output delta(s), dropout on hiddens."""

    def __init__(
        self,
        state_dim: int,
        hidden: tuple[int, ...] = (200, 200),
        dropout: float = 0.1,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [state_dim + 1, *hidden, state_dim]
        activations = ["relu"] * len(hidden) + ["identity"]
        dropouts = [dropout] * len(hidden) + [0.0]
        self.net = Network.dense(sizes, activations, rng, dropout=dropouts)
        self.state_dim = state_dim
        self.in_mu = np.zeros(state_dim + 1)
        self.in_sigma = np.ones(state_dim + 1)
        self.out_mu = np.zeros(state_dim)
        self.out_sigma = np.ones(state_dim)

    # ------------------------------------------------------------ training
    def fit(
        self,
        dataset: TransitionDataset,
        epochs: int,
        batch_size: int,
        optimizer,
        rng: np.random.Generator,
        track_history: bool = False,
    ) -> float | list[float]:
        """Minimize MSE of delta predictions under dropout sampling.

        Re-trains from the current parameters (warm start).  Returns the final
        training MSE in raw delta units, evaluated without dropout; with
        `track_history` the post-epoch MSE trace is returned instead.
        """
        if len(dataset) == 0:
            raise ValueError("cannot fit on an empty dataset")
        states, actions, next_states = dataset.arrays()
        inputs = np.concatenate([states, actions], axis=1)
        deltas = next_states - states

        self.in_mu = inputs.mean(axis=0)
        self.in_sigma = np.maximum(inputs.std(axis=0), SIGMA_FLOOR)
        self.out_mu = deltas.mean(axis=0)
        self.out_sigma = np.maximum(deltas.std(axis=0), SIGMA_FLOOR)

        z_in = (inputs - self.in_mu) / self.in_sigma
        z_out = (deltas - self.out_mu) / self.out_sigma

        n = len(dataset)
        history = []
        for _ in range(epochs):
            order = rng.permutation(n)
            for lo in range(0, n, batch_size):
                idx = order[lo : lo + batch_size]
                masks = sample_masks(self.net, rng, rows=len(idx))
                pred = self.net.forward(z_in[idx], masks)
                err = pred - z_out[idx]
                loss = (err * err).mean()
                self.net.zero_grad()
                loss.backward()
                optimizer.apply(self.net, [p.grad for _, p in self.net.parameters()])
            if track_history:
                history.append(self.training_mse(dataset))
        return history if track_history else self.training_mse(dataset)

    def training_mse(self, dataset: TransitionDataset) -> float:
        """Deterministic (no dropout) MSE of delta predictions, raw units."""
        states, actions, next_states = dataset.arrays()
        pred = self.predict_delta(np.concatenate([states, actions], axis=1))
        return float(np.mean((pred - (next_states - states)) ** 2))

    def predict_delta(self, inputs: np.ndarray) -> np.ndarray:
        z = (inputs - self.in_mu) / self.in_sigma
        return self.net.evaluate(z) * self.out_sigma + self.out_mu

    # ------------------------------------------------------------ particles
    def sample_masks(self, k: int, rng: np.random.Generator) -> list[np.ndarray | None]:
        """K mask sets, one network realization per particle, fixed per rollout."""
        if k < 1:
            raise ValueError("need at least one particle")
        return sample_masks(self.net, rng, rows=k)

    def propagate(self, particles, actions, masks) -> Tensor:
        """One model step per particle: s' = s + delta(s, u; mask)."""
        particles = as_tensor(particles)
        actions = as_tensor(actions)
        inp = concat([particles, actions], axis=1)
        z = (inp - self.in_mu) * (1.0 / self.in_sigma)
        delta = self.net.forward(z, masks) * self.out_sigma + self.out_mu
        out = particles + delta
        if not np.all(np.isfinite(out.data)):
            raise FloatingPointError("particle propagation produced non-finite states")
        return out


def moment_match(particles, noise: np.ndarray, var_floor: float = VAR_FLOOR) -> Tensor:
    """Fit a diagonal Gaussian to the cloud and resample via fixed noise.

    The reparameterized draw (mean + std * noise) keeps the operation both
    differentiable and reproducible for a given noise array.
    """
    particles = as_tensor(particles)
    if particles.data.shape[0] < 2:
        raise ValueError("moment matching needs at least 2 particles")
    mean = particles.mean(axis=0, keepdims=True)
    centered = particles - mean
    var = (centered * centered).mean(axis=0, keepdims=True) + var_floor
    return mean + var.sqrt() * noise
