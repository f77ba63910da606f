import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harvestplan.env import EnvConfig, initial_state, legal_actions, observation_size, observation_vector, step
from harvestplan.errors import NonFiniteLoss
from harvestplan.layouts import LayoutSpec, generate
from harvestplan.ppo import (
    Adam,
    Batch,
    PolicyNet,
    PPOPlanner,
    Stage,
    TrainConfig,
    act,
    gae_advantages,
    load_checkpoint,
    masked_log_softmax,
    ppo_loss,
    ppo_update,
    save_checkpoint,
    train,
)


# --- advantages ------------------------------------------------------------


def test_gae_two_step_fixture():
    # delta_1 = 1 - 0.5 = 0.5; delta_0 = 1 + 0.95*0.5 - 0.5 = 0.975
    # A_0 = 0.975 + 0.95*0.88*0.5 = 1.393
    adv, ret = gae_advantages([1, 1], [0.5, 0.5, 0.0], [0, 0], 0.95, 0.88)
    assert np.max(np.abs(adv - [1.393, 0.5])) < 1e-9
    assert np.max(np.abs(ret - [1.893, 1.0])) < 1e-9


def _direct_gae(r, v, d, gamma, lam):
    T = len(r)
    delta = [r[t] + gamma * v[t + 1] * (1 - d[t]) - v[t] for t in range(T)]
    out = []
    for t in range(T):
        total, w = 0.0, 1.0
        for s in range(t, T):
            total += w * delta[s]
            if d[s]:
                break
            w *= gamma * lam
        out.append(total)
    return np.array(out)


seqs = st.integers(1, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5), min_size=n, max_size=n),
        st.lists(st.floats(-5, 5), min_size=n + 1, max_size=n + 1),
        st.lists(st.booleans(), min_size=n, max_size=n),
    )
)


@settings(max_examples=60)
@given(seqs, st.floats(0.5, 1.0), st.floats(0.0, 1.0))
def test_gae_matches_direct_sum(seq, gamma, lam):
    r, v, d = seq
    adv, ret = gae_advantages(r, v, d, gamma, lam)
    assert np.allclose(adv, _direct_gae(r, v, d, gamma, lam), atol=1e-9)
    assert np.allclose(ret, adv + np.asarray(v[:-1]), atol=1e-12)


@settings(max_examples=40)
@given(seqs, st.floats(0.5, 1.0))
def test_gae_lambda_zero_is_td(seq, gamma):
    r, v, d = seq
    adv, _ = gae_advantages(r, v, d, gamma, 0.0)
    td = [r[t] + gamma * v[t + 1] * (1 - d[t]) - v[t] for t in range(len(r))]
    assert np.max(np.abs(adv - td)) < 1e-9


@settings(max_examples=40)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
def test_gae_lambda_one_suffix_sums(r):
    n = len(r)
    adv, _ = gae_advantages(r, np.zeros(n + 1), np.zeros(n), 1.0, 1.0)
    assert np.max(np.abs(adv - np.cumsum(r[::-1])[::-1])) < 1e-9


@settings(max_examples=40)
@given(seqs, st.floats(0.5, 1.0))
def test_gae_lambda_one_is_monte_carlo_minus_baseline(seq, gamma):
    r, v, d = seq
    adv, _ = gae_advantages(r, v, d, gamma, 1.0)
    T = len(r)
    G = np.zeros(T)
    nxt = v[T]
    for t in reversed(range(T)):
        nxt = r[t] + gamma * (0.0 if d[t] else nxt)
        G[t] = nxt
    assert np.allclose(adv, G - np.asarray(v[:T]), atol=1e-9)


def test_gae_length_check():
    with pytest.raises(ValueError):
        gae_advantages([1, 2], [0, 0], [0, 0], 0.9, 0.9)


# --- loss and gradients ----------------------------------------------------


def _toy_batch(net, rng, B=6, masked=True):
    obs = rng.normal(size=(B, net.obs_dim))
    masks, actions = [], np.zeros((B, 4), dtype=int)
    for h, k in enumerate(net.head_sizes):
        m = rng.random((B, k)) < 0.7 if masked else np.ones((B, k), bool)
        m[np.arange(B), rng.integers(k, size=B)] = True
        masks.append(m)
        actions[:, h] = [rng.choice(np.flatnonzero(row)) for row in m]
    logits, _, _ = net.forward(obs)
    logp = sum(masked_log_softmax(z, m)[np.arange(B), actions[:, h]] for h, (z, m) in enumerate(zip(logits, masks)))
    return Batch(obs, tuple(masks), actions, logp, rng.normal(size=B), rng.normal(size=B))


def _trained_toy(seed=0):
    net = PolicyNet(3, 2, (5, 4), seed=seed)
    rng = np.random.default_rng(seed)
    for k in net.params:
        net.params[k] = net.params[k] + rng.normal(scale=0.5, size=net.params[k].shape)
    return net, rng


def test_gradient_matches_finite_differences():
    net, rng = _trained_toy()
    batch = _toy_batch(net, rng)
    # offset the old log-probs so that some samples sit in each clip branch
    batch.logp_old[:] = batch.logp_old + np.array([0.0, 0.6, -0.6, 0.1, -0.05, 0.4])
    _, grads, _ = ppo_loss(net, batch, 0.2, 0.5, 0.01)
    eps = 1e-6
    worst = 0.0
    for k, p in net.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            lp, _, _ = ppo_loss(net, batch, 0.2, 0.5, 0.01, grad=False)
            p[idx] = old - eps
            lm, _, _ = ppo_loss(net, batch, 0.2, 0.5, 0.01, grad=False)
            p[idx] = old
            fd = (lp - lm) / (2 * eps)
            an = grads[k][idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    assert worst < 1e-4


def test_zero_advantage_has_no_policy_gradient():
    net, rng = _trained_toy(1)
    batch = _toy_batch(net, rng)
    batch.advantages[:] = 0.0
    loss, grads, stats = ppo_loss(net, batch, 0.2, 0.0, 0.0)
    assert stats["policy_loss"] == 0.0
    assert all(np.all(g == 0) for g in grads.values())
    _, grads, _ = ppo_loss(net, batch, 0.2, 0.5, 0.0)
    assert any(np.any(grads[k] != 0) for k in ("W_v", "W0"))
    assert all(np.all(grads[f"W_{h}"] == 0) for h in ("target_u", "bits_u", "target_d", "bits_d"))


def test_unit_ratio_surrogate_is_mean_advantage():
    net, rng = _trained_toy(2)
    batch = _toy_batch(net, rng)
    _, _, stats = ppo_loss(net, batch, 0.2, 0.5, 0.01, grad=False)
    assert stats["policy_loss"] == pytest.approx(-batch.advantages.mean(), abs=1e-12)
    assert stats["clip_frac"] == 0.0


def test_masked_actions_have_negligible_probability():
    z = np.array([[50.0, -3.0, 400.0, 0.0]])
    mask = np.array([[False, True, False, True]])
    p = np.exp(masked_log_softmax(z, mask))
    assert p[0, 0] < 1e-6 and p[0, 2] < 1e-6
    assert p.sum() == pytest.approx(1.0)


def test_log_prob_consistency(ws):
    cfg = EnvConfig(n_max=8)
    net = PolicyNet(observation_size(8), 8, (32, 32), seed=3)
    rng = np.random.default_rng(0)
    s = initial_state(generate(LayoutSpec(8, seed=2), ws), ws)
    for _ in range(10):
        joint, info = act(net, s, cfg, ws, rng)
        logits, _, _ = net.forward(info["obs"])
        lp = sum(masked_log_softmax(z[0], m)[i] for z, m, i in zip(logits, info["masks"], info["heads"]))
        assert abs(lp - info["logp"]) < 1e-9
        u, d = legal_actions(s, cfg, ws)
        assert joint[0] in u and joint[1] in d
        res = step(s, joint, cfg, ws)
        if res.done:
            break
        s = res.next_state


def test_update_keeps_weights_finite():
    net, rng = _trained_toy(4)
    batch = _toy_batch(net, rng, B=64)
    batch.advantages[:] *= 1e6
    batch.returns[:] *= 1e6
    cfg = TrainConfig(minibatch=16, rollout_horizon=64, epochs_per_batch=3)
    stats = ppo_update(net, Adam(net.params, cfg.lr), batch, cfg, rng)
    assert net.all_finite()
    assert np.isfinite(stats["loss"])


def test_non_finite_loss_raises():
    net, rng = _trained_toy(5)
    batch = _toy_batch(net, rng)
    batch.returns[0] = np.nan
    with pytest.raises(NonFiniteLoss) as e:
        ppo_loss(net, batch, 0.2, 0.5, 0.01)
    assert "value_loss" in e.value.diagnostics


# --- checkpoints and training -----------------------------------------------


def test_checkpoint_round_trip(tmp_path, ws):
    cfg = EnvConfig(n_max=6)
    net = PolicyNet(observation_size(6), 6, (16, 16), seed=9)
    meta = {"env_config": cfg.to_dict(), "workspace": ws.to_dict()}
    path = save_checkpoint(tmp_path / "c.npz", net, meta)
    back, m = load_checkpoint(path)
    obs = observation_vector(initial_state(generate(LayoutSpec(6, seed=1), ws), ws), cfg, ws)
    for a, b in zip(net.forward(obs)[0], back.forward(obs)[0]):
        assert np.array_equal(a, b)
    planner = PPOPlanner.from_checkpoint(path)
    assert planner.cfg == cfg


def _tiny_run(seed, steps):
    from harvestplan.workspace import WorkspaceConfig

    ws = WorkspaceConfig()
    lay = generate(LayoutSpec(4, seed=11), ws)
    cfg = TrainConfig(rollout_horizon=256, minibatch=64, epochs_per_batch=4, hidden=(64, 64), seed=seed, checkpoint_every=10**9, eval_episodes=1, lr=1e-3)
    return train([Stage("fixed", steps, lambda rng: lay)], cfg, EnvConfig(n_max=4), ws, eval_layouts=[lay])


def test_training_is_deterministic():
    a, b = _tiny_run(0, 512), _tiny_run(0, 512)
    assert all(np.array_equal(a.net.params[k], b.net.params[k]) for k in a.net.params)
    assert a.episode_returns == b.episode_returns


def test_training_improves_returns():
    res = _tiny_run(0, 6144)
    rets = [r[2] for r in res.episode_returns]
    k = max(1, len(rets) // 10)
    assert np.mean(rets[-k:]) > np.mean(rets[:k])
