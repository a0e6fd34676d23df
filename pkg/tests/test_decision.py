import numpy as np
import pytest
from scipy.stats import chisquare

from icsc.decision import (
    N_ACTIONS, STATE_DIM, D3QNPolicy, GoodputTable, QNetwork, ReplayBuffer, SnrThresholdPolicy,
    action_value_loss, build_goodput_table, combine, encode_state, fit_snr_thresholds, load_policy,
    oracle_action, oracle_grid, reward_table, save_artifact, select_action,
)
from icsc.link_sim import SCENARIOS
from icsc.nnet import gradient_check
from icsc.phy import MCS_TABLE

RATES = np.array([m.phy_rate for m in MCS_TABLE])
GRID = np.arange(0, 31, 2.0)


def synthetic_table(offsets=(0.0, 4.0, -2.0), slope=1.2):
    """Logistic FER waterfalls: MCS i needs 3*i dB plus a per-scenario offset."""
    need = 3.0 * np.arange(N_ACTIONS)[None, None, :] + np.asarray(offsets)[:, None, None]
    fer = 1.0 / (1.0 + np.exp(slope * (GRID[None, :, None] - need)))
    ber = 0.1 * fer
    snr_est = np.tile(GRID, (len(offsets), 1))
    return GoodputTable(SCENARIOS[:len(offsets)], GRID.copy(), RATES.copy(), fer, ber, snr_est, 100)


@pytest.fixture(scope="module")
def small_real_table():
    return build_goodput_table(scenarios=("EPA",), snr_grid=[0.0, 30.0], n_frames=40, seed=1)


# goodput table -----------------------------------------------------------------------

def test_real_table_sanity(small_real_table):
    g = small_real_table.goodput[0]
    assert g[1, 0] == pytest.approx(6e6, rel=0.02)          # MCS0 at 30 dB delivers its PHY rate
    assert g[0, 8] < 0.01 * RATES[8]                         # MCS8 at 0 dB delivers almost nothing
    assert oracle_action(small_real_table, "EPA", 0.0) == 0
    assert np.all((small_real_table.fer >= 0) & (small_real_table.fer <= 1))


def test_table_roundtrip(tmp_path, small_real_table):
    small_real_table.save(tmp_path / "t.json")
    t = GoodputTable.load(tmp_path / "t.json")
    assert np.array_equal(t.fer, small_real_table.fer) and t.config == small_real_table.config
    with pytest.raises(ValueError):
        GoodputTable.from_dict({"kind": "other"})


def test_table_build_is_deterministic():
    a = build_goodput_table(scenarios=("TDL_E",), snr_grid=[12.0], n_frames=3, seed=5)
    b = build_goodput_table(scenarios=("TDL_E",), snr_grid=[12.0], n_frames=3, seed=5)
    assert np.array_equal(a.fer, b.fer) and np.array_equal(a.ber, b.ber)


def test_oracle_is_scale_invariant():
    t = synthetic_table()
    assert np.array_equal(oracle_grid(t), oracle_grid(t.scaled(3.7)))
    assert oracle_action(t, "TDL_C", 29.0) == oracle_grid(t)[1, t.snr_index(29.0)]


def test_oracle_ties_go_to_lower_mcs():
    t = synthetic_table()
    t.fer[:] = 0.0
    t.phy_rates[:] = 1.0
    assert np.all(oracle_grid(t) == 0)


def test_reward_table_kinds():
    t = synthetic_table()
    r = reward_table(t)
    assert np.allclose(r.max(axis=2), 1.0) and r.min() >= 0
    assert np.allclose(r, reward_table(t.scaled(0.01)))
    b = reward_table(t, "binary")
    assert np.array_equal(np.argmax(b, axis=2), oracle_grid(t)) and np.all(b.sum(axis=2) == 1)
    t.fer[0, 0, :] = 1.0                                     # every MCS fails in this state
    assert reward_table(t)[0, 0, 0] == 1.0 and reward_table(t)[0, 0, 1:].sum() == 0
    with pytest.raises(ValueError):
        reward_table(t, "log")


# network and agent parts ----------------------------------------------------------------

def test_encode_state():
    s = encode_state(["EPA", "TDL_E"], [15.0, 99.0])
    assert s.shape == (2, STATE_DIM)
    assert np.array_equal(s[0], [1, 0, 0, 0.5]) and np.array_equal(s[1], [0, 0, 1, 1.2])


def test_combine_ignores_constant_advantage_shift():
    rng = np.random.default_rng(0)
    v, a = rng.normal(size=(4, 1)), rng.normal(size=(4, N_ACTIONS))
    assert np.allclose(combine(v, a), combine(v, a + 5.0))
    assert np.allclose(combine(v, a).mean(axis=1, keepdims=True), v)


def test_qnetwork_shape_and_gradient_check():
    net = QNetwork(seed=1)
    x = encode_state(["EPA", "TDL_C", "TDL_E", "EPA"], [3.0, 11.0, 20.0, 30.0])
    assert net.forward(x).shape == (4, N_ACTIONS)
    target = (np.array([0, 3, 8, 5]), np.array([0.2, 1.0, -0.5, 0.7]))
    assert gradient_check(net, x, target, loss=action_value_loss, n_params=400) < 1e-6


def test_qnetwork_roundtrip_and_copy():
    a, b = QNetwork(seed=1), QNetwork(seed=2)
    x = encode_state("TDL_C", 14.0)
    assert not np.allclose(a(x), b(x))
    b.copy_from(a)
    assert np.array_equal(a(x), b(x))
    assert np.array_equal(QNetwork.from_dict(a.to_dict())(x), a(x))


def test_replay_buffer_is_fifo():
    buf = ReplayBuffer(capacity=3, state_dim=1, seed=0)
    for i in range(5):
        buf.add([i], i % N_ACTIONS, float(i))
    assert len(buf) == 3
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]
    st, act, rew, nxt, done = buf.sample(50)
    assert set(rew.tolist()) <= {2.0, 3.0, 4.0} and np.all(done) and np.array_equal(st, nxt)


def test_select_action_uniform_at_full_exploration():
    rng = np.random.default_rng(0)
    net = QNetwork(seed=0)
    state = encode_state("EPA", 10.0)[0]
    counts = np.bincount([select_action(net, state, 1.0, rng) for _ in range(9000)], minlength=N_ACTIONS)
    assert chisquare(counts).pvalue > 0.001
    greedy = int(np.argmax(net(state)[0]))
    assert all(select_action(net, state, 0.0, s) == greedy for s in range(5))


# policies -------------------------------------------------------------------------------

def test_threshold_policy_properties():
    t = synthetic_table()
    pol = fit_snr_thresholds(t)
    assert np.all(np.diff(pol.thresholds_) >= 0)
    acts = pol.predict(GRID)
    assert np.all(np.diff(acts) >= 0) and acts[0] == 0
    assert pol.decide("EPA", 14.0) == pol.decide("TDL_C", 14.0) == pol.decide(None, 14.0)
    avg_oracle = np.argmax(t.goodput.mean(axis=0), axis=1)
    assert np.array_equal(acts, np.maximum.accumulate(avg_oracle))
    crossing = fit_snr_thresholds(t, "crossing")
    assert np.all(np.diff(crossing.thresholds_) >= 0)
    with pytest.raises(ValueError):
        SnrThresholdPolicy("median").fit(t)


def test_scenario_agnostic_baseline_is_suboptimal():
    """When scenarios shift the waterfalls, a single SNR threshold set must miss some cells."""
    t = synthetic_table(offsets=(0.0, 6.0, -4.0))
    base = fit_snr_thresholds(t)
    base_grid = np.tile(base.predict(GRID), (3, 1))
    opt = np.take_along_axis(t.goodput, oracle_grid(t)[..., None], axis=2)[..., 0]
    got = np.take_along_axis(t.goodput, base_grid[..., None], axis=2)[..., 0]
    assert np.all(got <= opt + 1e-9) and got.sum() < opt.sum()


def test_d3qn_learns_synthetic_oracle():
    t = synthetic_table()
    pol = D3QNPolicy(seed=0).fit(t)                          # shipped defaults
    assert pol.agreement(t) >= 0.9
    assert pol.n_updates_ > 0 and len(pol.reward_history_) == pol.episodes
    assert np.mean(pol.reward_history_[-50:]) > np.mean(pol.reward_history_[:50])


def test_d3qn_agreement_invariant_to_goodput_scale():
    t = synthetic_table()
    a = D3QNPolicy(episodes=150, seed=3).fit(t)
    b = D3QNPolicy(episodes=150, seed=3).fit(t.scaled(1e-6))
    assert np.array_equal(a.greedy_grid(t), b.greedy_grid(t))


def test_d3qn_multistep_mode_runs():
    t = synthetic_table()
    pol = D3QNPolicy(episodes=40, gamma=0.5, episode_length=8, batch_size=32, seed=1).fit(t)
    assert pol.greedy_grid(t).shape == (3, GRID.size)
    assert np.all(np.isfinite(pol.q_values("EPA", 10.0)))


def test_d3qn_validation_and_persistence(tmp_path):
    t = synthetic_table()
    with pytest.raises(ValueError):
        D3QNPolicy(episodes=0).fit(t)
    with pytest.raises(ValueError):
        D3QNPolicy(batch_size=2.5).fit(t)
    pol = D3QNPolicy(episodes=30, batch_size=32, seed=2).fit(t)
    base = fit_snr_thresholds(t)
    save_artifact(pol, tmp_path / "p.json")
    save_artifact(base, tmp_path / "b.json")
    p2, b2 = load_policy(tmp_path / "p.json"), load_policy(tmp_path / "b.json")
    assert np.array_equal(p2.greedy_grid(t), pol.greedy_grid(t))
    assert np.array_equal(b2.thresholds_, base.thresholds_)
    (tmp_path / "x.json").write_text('{"kind": "mystery"}')
    with pytest.raises(ValueError):
        load_policy(tmp_path / "x.json")


def test_d3qn_fit_is_deterministic():
    t = synthetic_table()
    a = D3QNPolicy(episodes=40, batch_size=32, seed=4).fit(t)
    b = D3QNPolicy(episodes=40, batch_size=32, seed=4).fit(t)
    assert np.array_equal(a.q_values("TDL_E", 20.0), b.q_values("TDL_E", 20.0))
