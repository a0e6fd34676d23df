"""MCS decision: goodput table, dueling double DQN policy, SNR-threshold baseline."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .link_sim import SCENARIOS, derive_seed, simulate_frame_grid
from .nnet import Adam, Dense, ReLU, decode_array, encode_array
from .phy import MCS_TABLE
from .validation import check_positive_int

N_ACTIONS = len(MCS_TABLE)
STATE_DIM = len(SCENARIOS) + 1
SNR_NORM = 30.0
SNR_NORM_CLIP = 1.2
DEFAULT_SNR_GRID = tuple(range(0, 31, 2))
ARTIFACT_VERSION = 1


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


# goodput table -------------------------------------------------------------------


@dataclass
class GoodputTable:
    scenarios: tuple[str, ...]
    snr_grid: np.ndarray                 # dB
    phy_rates: np.ndarray                # bit/s per MCS
    fer: np.ndarray                      # [scenario, snr, mcs]
    ber: np.ndarray                      # [scenario, snr, mcs]
    snr_est: np.ndarray                  # [scenario, snr] mean receiver estimate
    n_frames: int
    config: dict = field(default_factory=dict)

    @property
    def goodput(self) -> np.ndarray:
        return self.phy_rates[None, None, :] * (1.0 - self.fer)

    def snr_index(self, snr_db: float) -> int:
        return int(np.argmin(np.abs(self.snr_grid - snr_db)))

    def scenario_index(self, scenario: str) -> int:
        return self.scenarios.index(scenario)

    def scaled(self, factor: float) -> GoodputTable:
        """Same table with every goodput multiplied by ``factor`` (via the PHY rates)."""
        return GoodputTable(self.scenarios, self.snr_grid, self.phy_rates * factor, self.fer,
                            self.ber, self.snr_est, self.n_frames, dict(self.config))

    def to_dict(self) -> dict:
        return {"version": ARTIFACT_VERSION, "kind": "goodput_table", "config": self.config,
                "config_hash": config_hash(self.config), "scenarios": list(self.scenarios),
                "snr_grid": self.snr_grid.tolist(), "phy_rates": self.phy_rates.tolist(),
                "fer": self.fer.tolist(), "ber": self.ber.tolist(), "snr_est": self.snr_est.tolist(),
                "n_frames": self.n_frames}

    @classmethod
    def from_dict(cls, d) -> GoodputTable:
        if d.get("version") != ARTIFACT_VERSION or d.get("kind") != "goodput_table":
            raise ValueError("not a goodput table artifact of a supported version")
        return cls(tuple(d["scenarios"]), np.array(d["snr_grid"], float), np.array(d["phy_rates"], float),
                   np.array(d["fer"], float), np.array(d["ber"], float), np.array(d["snr_est"], float),
                   int(d["n_frames"]), d.get("config", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> GoodputTable:
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_goodput_table(scenarios=SCENARIOS, snr_grid=DEFAULT_SNR_GRID, n_frames: int = 500,
                        seed: int = 0, doppler_hz: float = 50.0, n_info: int = 1000,
                        interleave: bool = False, progress=None) -> GoodputTable:
    """Monte Carlo FER for every (scenario, SNR, MCS) cell.

    Each frame index draws a fresh channel, payload and noise stream, shared by
    all SNR points and MCS of that frame.
    """
    snr_grid = np.asarray(snr_grid, dtype=float)
    fails = np.zeros((len(scenarios), snr_grid.size, N_ACTIONS))
    bit_err = np.zeros_like(fails)
    snr_est = np.zeros((len(scenarios), snr_grid.size))
    for s, scenario in enumerate(scenarios):
        for f in range(n_frames):
            out = simulate_frame_grid(scenario, snr_grid, range(N_ACTIONS),
                                      derive_seed(seed, "table", s, f), doppler_hz, n_info,
                                      interleave=interleave)
            fails[s] += ~out["crc_ok"]
            bit_err[s] += out["bit_errors"]
            snr_est[s] += out["snr_est"]
        if progress:
            progress(scenario)
    config = {"scenarios": list(scenarios), "snr_grid": snr_grid.tolist(), "n_frames": n_frames,
              "seed": seed, "doppler_hz": doppler_hz, "n_info": n_info, "interleave": interleave}
    return GoodputTable(tuple(scenarios), snr_grid, np.array([m.phy_rate for m in MCS_TABLE]),
                        fails / n_frames, bit_err / (n_frames * n_info), snr_est / n_frames, n_frames, config)


def oracle_action(table: GoodputTable, scenario: str, snr_db: float) -> int:
    """Goodput-maximizing MCS at the nearest grid SNR; ties go to the lower index."""
    row = table.goodput[table.scenario_index(scenario), table.snr_index(snr_db)]
    return int(np.argmax(row))


def oracle_grid(table: GoodputTable) -> np.ndarray:
    return np.argmax(table.goodput, axis=2)


def reward_table(table: GoodputTable, kind: str = "ratio") -> np.ndarray:
    """Rewards in [0, 1] per [scenario, snr, mcs].

    "ratio" is goodput over the best goodput of the state; "binary" is 1 for
    the oracle action only. A state where every MCS fails rewards MCS 0.
    """
    g = table.goodput
    best = g.max(axis=2, keepdims=True)
    if kind == "ratio":
        r = np.divide(g, best, out=np.zeros_like(g), where=best > 0)
    elif kind == "binary":
        r = (np.arange(N_ACTIONS)[None, None, :] == oracle_grid(table)[..., None]).astype(float)
    else:
        raise ValueError(f"unknown reward kind {kind!r}")
    r[..., 0] = np.where(best[..., 0] > 0, r[..., 0], 1.0)
    return r


# agent state ---------------------------------------------------------------------


def encode_state(scenario, snr_db) -> np.ndarray:
    """[one-hot scenario (3), snr_db / 30 clipped to [0, 1.2]]; vectorized over inputs."""
    scen = np.atleast_1d(np.asarray(scenario))
    snr = np.atleast_1d(np.asarray(snr_db, dtype=float))
    idx = np.array([SCENARIOS.index(s) if isinstance(s, str) else int(s) for s in scen])
    out = np.zeros((max(idx.size, snr.size), STATE_DIM))
    out[np.arange(out.shape[0]), idx] = 1.0
    out[:, -1] = np.clip(snr / SNR_NORM, 0.0, SNR_NORM_CLIP)
    return out


# networks ------------------------------------------------------------------------


class QNetwork:
    """Shared 64-unit trunk feeding value and advantage branches.

    Q(s, a) = V(s) + A(s, a) - mean_a A(s, a).
    """

    def __init__(self, state_dim=STATE_DIM, n_actions=N_ACTIONS, hidden=64, seed=0):
        rng = np.random.default_rng(seed)
        self.state_dim, self.n_actions, self.hidden = state_dim, n_actions, hidden
        self.trunk = [Dense(state_dim, hidden, rng), ReLU()]
        self.value = [Dense(hidden, hidden, rng), ReLU(), Dense(hidden, 1, rng)]
        self.advantage = [Dense(hidden, hidden, rng), ReLU(), Dense(hidden, n_actions, rng)]

    @property
    def layers(self):
        return self.trunk + self.value + self.advantage

    @staticmethod
    def _run(layers, x):
        for layer in layers:
            x = layer.forward(x)
        return x

    @staticmethod
    def _back(layers, d):
        for layer in reversed(layers):
            d = layer.backward(d)
        return d

    def heads(self, x):
        feat = self._run(self.trunk, np.atleast_2d(np.asarray(x, dtype=float)))
        return self._run(self.value, feat), self._run(self.advantage, feat)

    def forward(self, x):
        v, a = self.heads(x)
        return combine(v, a)

    __call__ = forward

    def backward(self, dq):
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        dfeat = self._back(self.value, dv) + self._back(self.advantage, da)
        return self._back(self.trunk, dfeat)

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def copy_from(self, other: QNetwork):
        for p, q in zip(self.parameters(), other.parameters()):
            p[...] = q

    def to_dict(self):
        return {"state_dim": self.state_dim, "n_actions": self.n_actions, "hidden": self.hidden,
                "params": [encode_array(p) for p in self.parameters()]}

    @classmethod
    def from_dict(cls, d):
        net = cls(d["state_dim"], d["n_actions"], d["hidden"])
        for p, a in zip(net.parameters(), d["params"]):
            p[...] = decode_array(a)
        return net


def combine(value, advantage):
    return value + advantage - advantage.mean(axis=1, keepdims=True)


def action_value_loss(q, target):
    """0.5 * mean squared TD error on the taken actions; ``target`` is (actions, y)."""
    actions, y = target
    n = q.shape[0]
    err = q[np.arange(n), actions] - y
    grad = np.zeros_like(q)
    grad[np.arange(n), actions] = err / n
    return float(0.5 * np.mean(err ** 2)), grad


class ReplayBuffer:
    """FIFO transition store with seeded uniform sampling."""

    def __init__(self, capacity=10_000, state_dim=STATE_DIM, seed=0):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.next_states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.done = np.ones(self.capacity, dtype=bool)
        self._next = 0
        self._size = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return self._size

    def add(self, state, action, reward, next_state=None, done=True):
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = state if next_state is None else next_state
        self.done[i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size):
        idx = self._rng.integers(0, self._size, size=batch_size)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.done[idx])


# policies --------------------------------------------------------------------------


def select_action(net: QNetwork, state, epsilon: float, rng) -> int:
    """Epsilon-greedy choice; ``rng`` is a Generator or a seed."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(net.forward(np.atleast_2d(state))[0]))


class D3QNPolicy(BaseEstimator):
    """Dueling double DQN trained against a goodput table.

    With ``gamma=0`` (default) each step is an independent contextual decision
    on a uniformly drawn (scenario, SNR) state and an episode is
    ``episode_length`` such decisions. With ``gamma > 0`` an episode walks a
    scenario/SNR schedule (scenario persists with probability ``stay_prob``,
    SNR moves by one grid step at random) and bootstraps through the target
    network with the double-DQN rule.
    """

    def __init__(self, episodes=1500, batch_size=128, learning_rate=5e-4, gamma=0.0,
                 episode_length=16, eps_start=1.0, eps_end=0.05, eps_decay_episodes=1000,
                 target_update=100, buffer_capacity=10_000, reward="ratio", stay_prob=0.9,
                 hidden=64, seed=0):
        self.episodes = episodes
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.episode_length = episode_length
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_episodes = eps_decay_episodes
        self.target_update = target_update
        self.buffer_capacity = buffer_capacity
        self.reward = reward
        self.stay_prob = stay_prob
        self.hidden = hidden
        self.seed = seed

    def epsilon(self, episode: int) -> float:
        frac = min(episode / max(self.eps_decay_episodes, 1), 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def fit(self, table: GoodputTable):
        if table is None or table.fer.size == 0:
            raise ValueError("goodput table has not been built")
        check_positive_int(self.episodes, "episodes")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.episode_length, "episode_length")
        rewards = reward_table(table, self.reward)
        n_scen, n_snr = rewards.shape[:2]
        rng = np.random.default_rng(derive_seed(self.seed, "train_d3qn"))
        self.net_ = QNetwork(STATE_DIM, N_ACTIONS, self.hidden, seed=derive_seed(self.seed, "train_d3qn", 1))
        target = QNetwork(STATE_DIM, N_ACTIONS, self.hidden)
        target.copy_from(self.net_)
        opt = Adam(self.net_.parameters(), self.learning_rate)
        buffer = ReplayBuffer(self.buffer_capacity, STATE_DIM, derive_seed(self.seed, "train_d3qn", 2))
        self.scenarios_ = tuple(table.scenarios)
        self.snr_grid_ = np.asarray(table.snr_grid, float)
        self.loss_history_, self.reward_history_ = [], []
        updates = 0

        def state_of(s, k):
            return encode_state(s, self.snr_grid_[k])[0]

        for ep in range(self.episodes):
            eps = self.epsilon(ep)
            s, k = int(rng.integers(n_scen)), int(rng.integers(n_snr))
            ep_reward, ep_loss = 0.0, []
            for step in range(self.episode_length):
                state = state_of(s, k)
                a = select_action(self.net_, state, eps, rng)
                r = float(rewards[s, k, a])
                last = step == self.episode_length - 1
                if not last and self.gamma == 0:
                    s, k = int(rng.integers(n_scen)), int(rng.integers(n_snr))
                elif not last:
                    if rng.random() >= self.stay_prob:
                        s = int(rng.integers(n_scen))
                    k = int(np.clip(k + rng.integers(-1, 2), 0, n_snr - 1))
                buffer.add(state, a, r, state_of(s, k), done=last or self.gamma == 0)
                ep_reward += r
                if len(buffer) >= self.batch_size:
                    ep_loss.append(self._update(buffer, target, opt))
                    updates += 1
                    if updates % self.target_update == 0:
                        target.copy_from(self.net_)
            self.reward_history_.append(ep_reward / self.episode_length)
            self.loss_history_.append(float(np.mean(ep_loss)) if ep_loss else float("nan"))
        self.n_updates_ = updates
        return self

    def _update(self, buffer, target, opt):
        st, act, rew, nxt, done = buffer.sample(self.batch_size)
        y = rew.copy()
        live = ~done
        if self.gamma and live.any():
            best = np.argmax(self.net_.forward(nxt[live]), axis=1)
            y[live] += self.gamma * target.forward(nxt[live])[np.arange(best.size), best]
        loss, dq = action_value_loss(self.net_.forward(st), (act, y))
        self.net_.backward(dq)
        opt.step(self.net_.gradients())
        return loss

    def q_values(self, scenario, snr_db) -> np.ndarray:
        check_is_fitted(self, "net_")
        return self.net_.forward(encode_state(scenario, snr_db))

    def predict(self, scenario, snr_db) -> np.ndarray:
        return np.argmax(self.q_values(scenario, snr_db), axis=1)

    def decide(self, scenario: str, snr_db: float) -> int:
        return int(self.predict(scenario, snr_db)[0])

    def greedy_grid(self, table: GoodputTable) -> np.ndarray:
        return np.array([[self.decide(s, snr) for snr in table.snr_grid] for s in table.scenarios])

    def agreement(self, table: GoodputTable) -> float:
        return float(np.mean(self.greedy_grid(table) == oracle_grid(table)))

    def to_dict(self) -> dict:
        check_is_fitted(self, "net_")
        params = self.get_params()
        return {"version": ARTIFACT_VERSION, "kind": "d3qn_policy", "params": params,
                "config_hash": config_hash(params), "net": self.net_.to_dict(),
                "scenarios": list(self.scenarios_), "snr_grid": self.snr_grid_.tolist()}

    @classmethod
    def from_dict(cls, d) -> D3QNPolicy:
        if d.get("version") != ARTIFACT_VERSION or d.get("kind") != "d3qn_policy":
            raise ValueError("not a D3QN policy artifact of a supported version")
        policy = cls(**d["params"])
        policy.net_ = QNetwork.from_dict(d["net"])
        policy.scenarios_ = tuple(d["scenarios"])
        policy.snr_grid_ = np.array(d["snr_grid"], float)
        return policy


class SnrThresholdPolicy(BaseEstimator):
    """Scenario-agnostic MCS selection by ascending SNR thresholds t_1..t_8.

    Thresholds come from the scenario-averaged goodput table. With
    ``rule="argmax"`` (default) t_i is the first grid SNR from which the
    running maximum of the averaged-table argmax reaches i, so the policy
    reproduces the averaged oracle wherever that oracle is monotone in SNR.
    ``rule="crossing"`` uses the lowest grid SNR at which MCS i beats MCS i-1
    on average, made monotone by a running maximum.
    """

    def __init__(self, rule="argmax"):
        self.rule = rule

    def fit(self, table: GoodputTable):
        avg = table.goodput.mean(axis=0)
        grid = np.asarray(table.snr_grid, float)
        thresholds = np.full(N_ACTIONS - 1, np.inf)
        if self.rule == "crossing":
            for i in range(1, N_ACTIONS):
                above = np.flatnonzero(avg[:, i] > avg[:, i - 1])
                if above.size:
                    thresholds[i - 1] = grid[above[0]]
            thresholds = np.maximum.accumulate(thresholds)
        elif self.rule == "argmax":
            best = np.maximum.accumulate(np.argmax(avg, axis=1))
            for i in range(1, N_ACTIONS):
                reach = np.flatnonzero(best >= i)
                if reach.size:
                    thresholds[i - 1] = grid[reach[0]]
        else:
            raise ValueError(f"unknown threshold rule {self.rule!r}")
        self.thresholds_ = thresholds
        return self

    def predict(self, snr_db) -> np.ndarray:
        check_is_fitted(self, "thresholds_")
        snr = np.atleast_1d(np.asarray(snr_db, dtype=float))
        return np.sum(snr[:, None] >= self.thresholds_[None, :], axis=1)

    def decide(self, scenario: str | None, snr_db: float) -> int:
        return int(self.predict(snr_db)[0])

    def to_dict(self) -> dict:
        check_is_fitted(self, "thresholds_")
        return {"version": ARTIFACT_VERSION, "kind": "snr_threshold_policy", "rule": self.rule,
                "thresholds_db": [None if not np.isfinite(t) else float(t) for t in self.thresholds_]}

    @classmethod
    def from_dict(cls, d) -> SnrThresholdPolicy:
        if d.get("kind") != "snr_threshold_policy":
            raise ValueError("not an SNR threshold policy artifact")
        policy = cls(d.get("rule", "argmax"))
        policy.thresholds_ = np.array([np.inf if t is None else t for t in d["thresholds_db"]])
        return policy


def fit_snr_thresholds(table: GoodputTable, rule: str = "argmax") -> SnrThresholdPolicy:
    return SnrThresholdPolicy(rule).fit(table)


def d3qn_train(table: GoodputTable, **params) -> D3QNPolicy:
    return D3QNPolicy(**params).fit(table)


def save_artifact(obj, path):
    Path(path).write_text(json.dumps(obj.to_dict()))


def load_policy(path):
    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind == "d3qn_policy":
        return D3QNPolicy.from_dict(d)
    if kind == "snr_threshold_policy":
        return SnrThresholdPolicy.from_dict(d)
    raise ValueError(f"{path}: unknown policy artifact kind {kind!r}")
