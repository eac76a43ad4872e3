"""Synthetic multimodal offline environments and dataset handling.

Two desk-scale environments share one spec type:

* interval bandit: one state, scalar action, behavior actions drawn
  uniformly from M disjoint intervals, reward a concave bump per mode.
* grid nav: 2-d point mass with two corridor routes to the goal and a
  dense negative-distance reward.

Behavior data is multimodal on purpose; mode-membership labels ride
along in metadata for diagnostics only and never feed training.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .routing import act
from .validation import as_float_array, check_positive, check_rng


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class OfflineDataset:
    """Fixed transition arrays plus free-form metadata."""

    def __init__(self, states, actions, rewards, next_states, dones, metadata=None):
        self.states = as_float_array(states, "states", ndim=2)
        self.actions = as_float_array(actions, "actions", ndim=2)
        self.rewards = as_float_array(rewards, "rewards", ndim=1)
        self.next_states = as_float_array(next_states, "next_states", ndim=2)
        self.dones = np.asarray(dones, dtype=bool)
        n = len(self.states)
        for name, arr in [
            ("actions", self.actions),
            ("rewards", self.rewards),
            ("next_states", self.next_states),
            ("dones", self.dones),
        ]:
            if len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, expected {n}")
        if self.next_states.shape[1] != self.states.shape[1]:
            raise ValueError("states and next_states disagree on dimension")
        self.metadata = dict(metadata or {})

    def __len__(self):
        return len(self.states)

    @property
    def d_s(self):
        return self.states.shape[1]

    @property
    def d_a(self):
        return self.actions.shape[1]

    def transition(self, i):
        return Transition(
            state=self.states[i],
            action=self.actions[i],
            reward=float(self.rewards[i]),
            next_state=self.next_states[i],
            done=bool(self.dones[i]),
        )

    def sample_batch(self, rng, batch_size):
        """Uniform with-replacement minibatch as plain arrays."""
        idx = rng.integers(0, len(self), size=batch_size)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


@dataclass
class EnvSpec:
    """Geometry, reward, and behavior description for one environment."""

    kind: str
    d_s: int
    d_a: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int
    n_modes: int
    mode_radius: float
    seed: int = 0
    # interval bandit fields
    centers: np.ndarray | None = None
    weights: np.ndarray | None = None
    offsets: np.ndarray | None = None
    curvature: float = 1.0
    # grid nav fields
    width: float = 0.0
    speed: float = 0.0
    noise: float = 0.0
    goal_radius: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def goal(self):
        return np.array([self.width, self.width])

    def clip_action(self, action):
        return np.clip(action, self.action_low, self.action_high)

    def initial_state(self, rng=None):
        if self.kind == "interval_bandit":
            return np.zeros(1)
        return np.zeros(2)

    def reward(self, state, action):
        """Reward of executing an (already clipped) action."""
        if self.kind == "interval_bandit":
            a = float(action[0])
            m = int(np.argmin(np.abs(self.centers - a)))
            peak = self.centers[m] + self.offsets[m]
            return float(self.weights[m] - self.curvature * (a - peak) ** 2)
        nxt = self._grid_dynamics(state, action)
        return float(-np.linalg.norm(nxt - self.goal) / self.width)

    def _grid_dynamics(self, state, action):
        lo, hi = -0.5, self.width + 0.5
        return np.clip(state + action, lo, hi)

    def step(self, state, action):
        """Apply one executed action; returns (next_state, reward, done)."""
        action = self.clip_action(as_float_array(action, "action", ndim=1))
        if action.shape[0] != self.d_a:
            raise ValueError(f"action dim {action.shape[0]}, expected {self.d_a}")
        if self.kind == "interval_bandit":
            return state.copy(), self.reward(state, action), True
        nxt = self._grid_dynamics(state, action)
        reward = float(-np.linalg.norm(nxt - self.goal) / self.width)
        done = bool(np.linalg.norm(nxt - self.goal) <= self.goal_radius)
        return nxt, reward, done

    def mode_actions(self, state):
        """Noiseless behavior action of every mode at this state, (M, d_a)."""
        if self.kind == "interval_bandit":
            return self.centers[:, None].copy()
        out = np.zeros((2, 2))
        for m in range(2):
            out[m] = self._route_direction(state, m) * self.speed
        return out

    def _route_direction(self, state, mode):
        # route 0 hugs the bottom edge then climbs; route 1 mirrors it
        corner = (
            np.array([self.width, 0.0]) if mode == 0 else np.array([0.0, self.width])
        )
        leg_done = abs(state[mode] - self.width) <= self.goal_radius
        target = self.goal if leg_done else corner
        delta = target - state
        norm = np.linalg.norm(delta)
        if norm == 0.0:
            return np.zeros(2)
        return delta / norm

    def sample_mode(self, rng):
        return int(rng.integers(self.n_modes))

    def behavior_action(self, state, rng, mode):
        """One draw from the behavior policy conditioned on a mode."""
        if self.kind == "interval_bandit":
            a = self.centers[mode] + rng.uniform(-self.mode_radius, self.mode_radius)
            return np.array([a])
        clean = self._route_direction(state, mode) * self.speed
        noisy = clean + self.noise * rng.standard_normal(2)
        return self.clip_action(noisy)

    def in_support(self, state, action):
        """Is the action within mode_radius of some mode's clean action?"""
        deltas = self.mode_actions(state) - action[None, :]
        if self.kind == "interval_bandit":
            return bool(np.min(np.abs(deltas)) <= self.mode_radius)
        return bool(np.min(np.linalg.norm(deltas, axis=1)) <= self.mode_radius)

    def to_dict(self):
        out = {
            "kind": self.kind,
            "d_s": self.d_s,
            "d_a": self.d_a,
            "action_low": np.asarray(self.action_low).tolist(),
            "action_high": np.asarray(self.action_high).tolist(),
            "horizon": self.horizon,
            "n_modes": self.n_modes,
            "mode_radius": self.mode_radius,
            "seed": self.seed,
            "curvature": self.curvature,
            "width": self.width,
            "speed": self.speed,
            "noise": self.noise,
            "goal_radius": self.goal_radius,
        }
        for name in ("centers", "weights", "offsets"):
            val = getattr(self, name)
            out[name] = None if val is None else np.asarray(val).tolist()
        return out

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        for name in ("action_low", "action_high"):
            payload[name] = np.asarray(payload[name], dtype=np.float64)
        for name in ("centers", "weights", "offsets"):
            if payload.get(name) is not None:
                payload[name] = np.asarray(payload[name], dtype=np.float64)
        payload.pop("extras", None)
        return cls(**payload)


def bandit_rewards(env, actions):
    """Vectorized interval-bandit reward for a flat array of actions."""
    actions = np.atleast_1d(np.asarray(actions, dtype=np.float64))
    m = np.argmin(np.abs(env.centers[None, :] - actions[:, None]), axis=1)
    peaks = env.centers[m] + env.offsets[m]
    return env.weights[m] - env.curvature * (actions - peaks) ** 2


def make_interval_bandit(
    n_modes,
    radius,
    gap,
    reward_weights,
    curvature=1.0,
    reward_offsets=None,
    seed=0,
):
    """Single-state bandit whose behavior actions fill M disjoint intervals.

    Interval m is [c_m - radius, c_m + radius] with centers gap apart,
    symmetric around zero. Reward near interval m is
    weights[m] - curvature * (a - c_m - offsets[m])^2, keyed on the
    nearest center, so each mode carries one concave bump. Intervals
    must be separated: gap > 4 * radius.
    """
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    check_positive(radius, "radius")
    if n_modes > 1 and not gap > 4.0 * radius:
        raise ValueError(f"need gap > 4 * radius, got gap={gap}, radius={radius}")
    weights = as_float_array(reward_weights, "reward_weights", ndim=1, shape=(n_modes,))
    if reward_offsets is None:
        offsets = np.zeros(n_modes)
    else:
        offsets = as_float_array(
            reward_offsets, "reward_offsets", ndim=1, shape=(n_modes,)
        )
        if np.any(np.abs(offsets) >= radius):
            raise ValueError("reward peaks must stay inside their intervals")
    centers = (np.arange(n_modes) - (n_modes - 1) / 2.0) * gap
    margin = max(gap / 2.0, 2.0 * radius)
    return EnvSpec(
        kind="interval_bandit",
        d_s=1,
        d_a=1,
        action_low=np.array([centers[0] - margin]),
        action_high=np.array([centers[-1] + margin]),
        horizon=1,
        n_modes=n_modes,
        mode_radius=float(radius),
        seed=int(seed),
        centers=centers,
        weights=weights,
        offsets=offsets,
        curvature=float(curvature),
    )


def make_grid_nav(width=4.0, speed=0.5, noise=0.08, goal_radius=0.3, seed=0):
    """2-d point mass from (0,0) to (width,width) with two corridor routes.

    The behavior policy commits to one route per episode: along the
    bottom edge then up, or along the left edge then right. Velocity
    actions live in [-1, 1]^2; reward is the negative goal distance
    scaled by width.
    """
    check_positive(width, "width")
    check_positive(speed, "speed")
    if speed > 1.0:
        raise ValueError(f"speed must fit inside the unit action box, got {speed}")
    horizon = int(np.ceil(2.2 * 2.0 * width / speed))
    return EnvSpec(
        kind="grid_nav",
        d_s=2,
        d_a=2,
        action_low=np.array([-1.0, -1.0]),
        action_high=np.array([1.0, 1.0]),
        horizon=horizon,
        n_modes=2,
        mode_radius=float(max(3.0 * noise, 0.1)),
        seed=int(seed),
        width=float(width),
        speed=float(speed),
        noise=float(noise),
        goal_radius=float(goal_radius),
    )


def generate_dataset(env, size, seed=0, noise_scale=1.0, force_mode=None):
    """Roll the behavior policy until size transitions are collected.

    Mode labels (which interval / which route produced each action) are
    stored in metadata for diagnostics only. noise_scale rescales the
    behavior noise (grid nav); force_mode pins every episode to one mode.
    """
    size = int(size)
    check_positive(size, "size")
    rng = check_rng(np.random.SeedSequence(seed))

    if env.kind == "interval_bandit":
        modes = (
            np.full(size, int(force_mode))
            if force_mode is not None
            else rng.integers(0, env.n_modes, size=size)
        )
        offsets = rng.uniform(-env.mode_radius, env.mode_radius, size=size)
        actions = (env.centers[modes] + offsets)[:, None]
        states = np.zeros((size, 1))
        rewards = bandit_rewards(env, actions[:, 0])
        next_states = np.zeros((size, 1))
        dones = np.ones(size, dtype=bool)
        labels = modes.tolist()
        episode_returns = rewards.tolist()
    else:
        states_l, actions_l, rewards_l, next_l, dones_l, labels = [], [], [], [], [], []
        episode_returns = []
        scaled = env if noise_scale == 1.0 else _with_noise(env, noise_scale)
        while len(states_l) < size:
            mode = int(force_mode) if force_mode is not None else env.sample_mode(rng)
            state = env.initial_state(rng)
            ep_return = 0.0
            for _ in range(env.horizon):
                action = scaled.behavior_action(state, rng, mode)
                nxt, reward, done = env.step(state, action)
                states_l.append(state)
                actions_l.append(action)
                rewards_l.append(reward)
                next_l.append(nxt)
                dones_l.append(done)
                labels.append(mode)
                ep_return += reward
                state = nxt
                if done:
                    break
            episode_returns.append(ep_return)
        states = np.array(states_l[:size])
        actions = np.array(actions_l[:size])
        rewards = np.array(rewards_l[:size])
        next_states = np.array(next_l[:size])
        dones = np.array(dones_l[:size], dtype=bool)
        labels = labels[:size]

    metadata = {
        "env_kind": env.kind,
        "d_s": env.d_s,
        "d_a": env.d_a,
        "n": size,
        "seed": int(seed),
        "env": env.to_dict(),
        "mode_labels": labels,
        "episode_returns": episode_returns,
    }
    return OfflineDataset(states, actions, rewards, next_states, dones, metadata)


def _with_noise(env, scale):
    import copy

    clone = copy.deepcopy(env)
    clone.noise = env.noise * scale
    return clone


def _format_float(x):
    return repr(float(x))


def save_dataset(dataset, path, fmt="csv"):
    """Write header-line JSON metadata followed by transition records.

    fmt='csv' stores one comma-separated record per line with floats
    printed at full round-trip precision; fmt='binary' stores packed
    little-endian float64 blocks (states, actions, rewards, next_states)
    and a uint8 done block.
    """
    if fmt not in ("csv", "binary"):
        raise ValueError(f"fmt must be 'csv' or 'binary', got {fmt!r}")
    header = dict(dataset.metadata)
    header.setdefault("d_s", dataset.d_s)
    header.setdefault("d_a", dataset.d_a)
    header.setdefault("n", len(dataset))
    header["format"] = fmt
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    with open(path, "wb") as fh:
        fh.write(header_bytes)
        if fmt == "csv":
            buf = io.StringIO()
            for i in range(len(dataset)):
                parts = (
                    [_format_float(v) for v in dataset.states[i]]
                    + [_format_float(v) for v in dataset.actions[i]]
                    + [_format_float(dataset.rewards[i])]
                    + [_format_float(v) for v in dataset.next_states[i]]
                    + [str(int(dataset.dones[i]))]
                )
                buf.write(",".join(parts))
                buf.write("\n")
            fh.write(buf.getvalue().encode("utf-8"))
        else:
            for arr in (
                dataset.states,
                dataset.actions,
                dataset.rewards,
                dataset.next_states,
            ):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            fh.write(dataset.dones.astype(np.uint8).tobytes())


def load_dataset(path):
    """Read either on-disk format back into an OfflineDataset."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    for key in ("format", "d_s", "d_a", "n"):
        if key not in header:
            raise ValueError(f"dataset header missing {key!r}")
    fmt = header.pop("format")
    d_s, d_a, n = int(header["d_s"]), int(header["d_a"]), int(header["n"])

    if fmt == "csv":
        table = np.loadtxt(
            io.StringIO(body.decode("utf-8")), delimiter=",", ndmin=2
        )
        if table.shape != (n, 2 * d_s + d_a + 2):
            raise ValueError(
                f"dataset body has shape {table.shape}, expected "
                f"({n}, {2 * d_s + d_a + 2})"
            )
        states = table[:, :d_s]
        actions = table[:, d_s : d_s + d_a]
        rewards = table[:, d_s + d_a]
        next_states = table[:, d_s + d_a + 1 : 2 * d_s + d_a + 1]
        dones = table[:, -1].astype(bool)
    elif fmt == "binary":
        expected = 8 * n * (2 * d_s + d_a + 1) + n
        if len(body) != expected:
            raise ValueError(
                f"dataset body has {len(body)} bytes, expected {expected}"
            )
        offset = 0

        def block(rows, cols):
            nonlocal offset
            count = rows * cols
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            return arr.reshape(rows, cols).copy()

        states = block(n, d_s)
        actions = block(n, d_a)
        rewards = block(n, 1)[:, 0]
        next_states = block(n, d_s)
        dones = np.frombuffer(body, dtype=np.uint8, offset=offset).astype(bool)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    return OfflineDataset(states, actions, rewards, next_states, dones, header)


@dataclass
class EvalReport:
    mean_return: float
    return_std: float
    support_violation: float
    episodes: int


def evaluate_policy(env, actor, prior, episodes=50, seed=0):
    """Roll the one-latent-per-step policy; report return and support use.

    Actions are clipped to the env bounds before execution, and the
    support-violation rate counts executed actions farther than
    mode_radius from every behavior mode at that state.
    """
    episodes = int(episodes)
    check_positive(episodes, "episodes")
    rng = check_rng(np.random.SeedSequence(seed))
    returns = np.zeros(episodes)
    violations = 0
    steps = 0
    for ep in range(episodes):
        state = env.initial_state(rng)
        total = 0.0
        for _ in range(env.horizon):
            action = env.clip_action(act(actor, state, prior))
            if not env.in_support(state, action):
                violations += 1
            steps += 1
            state, reward, done = env.step(state, action)
            total += reward
            if done:
                break
        returns[ep] = total
    return EvalReport(
        mean_return=float(np.mean(returns)),
        return_std=float(np.std(returns)),
        support_violation=violations / steps,
        episodes=episodes,
    )
