"""PPO for the fully centralized controller, in plain numpy.

One network sees the whole state and emits both groups' actions through
four categorical heads (target-U, bits-U, target-D, bits-D) on a shared
tanh trunk, plus a value head.  Heads are sampled in the order bits-U,
target-U, bits-D, target-D; each head's mask is conditioned on the choices
before it (the target mask depends on which arm enters AEG, and group-D may
not take group-U's fruit).  The joint log-probability is the sum of the
four masked head log-probabilities.

Gradients are written out by hand; :func:`ppo_loss` returns the analytic
gradient of the full PPO objective.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .env import (
    BIT_PAIRS,
    PAUSE_BITS,
    DoneReason,
    EnvConfig,
    action_from_heads,
    initial_state,
    is_complete,
    legal_target_sets,
    observation_size,
    observation_vector,
    run_episode,
    step,
)
from .errors import NonFiniteLoss
from .layouts import Distribution, LayoutSpec, generate, random_layout_source
from .types import FruitLayout
from .workspace import WorkspaceConfig

log = logging.getLogger(__name__)

MASKED_LOGIT = -1e9
CHECKPOINT_VERSION = 1
HEADS = ("target_u", "bits_u", "target_d", "bits_d")

# Training environment for the desk-scale curriculum.  Phase times are a few
# seconds, where exp(-t) is nearly flat and the time reward is close to a
# fixed -alpha per decision; a larger alpha makes that per-decision cost
# outweigh the discounted terminal bonus and pushes the policy toward plans
# with fewer, overlapping joint steps.
DESK_ENV_CONFIG = EnvConfig(n_max=10, alpha=5.0)


@dataclass
class TrainConfig:
    gamma: float = 0.95
    clip_eps: float = 0.20
    lr: float = 5e-4
    gae_lambda: float = 0.88
    epochs_per_batch: int = 8
    minibatch: int = 512
    rollout_horizon: int = 2048
    total_steps: int = 200_000
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    reward_scale: float = 0.01
    hidden: tuple = (256, 256)
    seed: int = 0
    checkpoint_every: int = 50_000
    eval_episodes: int = 5

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.minibatch > self.rollout_horizon:
            raise ValueError("minibatch larger than the rollout buffer")
        self.hidden = tuple(self.hidden)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Network


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class PolicyNet:
    """Shared tanh MLP trunk with four categorical heads and a value head."""

    def __init__(self, obs_dim: int, n_max: int, hidden=(256, 256), seed: int = 0):
        self.obs_dim, self.n_max, self.hidden, self.seed = obs_dim, n_max, tuple(hidden), seed
        rng = np.random.default_rng(seed)
        self.params = {}
        sizes = (obs_dim,) + self.hidden
        for i in range(len(self.hidden)):
            self.params[f"W{i}"] = _orthogonal(rng, (sizes[i], sizes[i + 1]), np.sqrt(2))
            self.params[f"b{i}"] = np.zeros(sizes[i + 1])
        last = sizes[-1]
        for name, k in zip(HEADS, self.head_sizes):
            self.params[f"W_{name}"] = _orthogonal(rng, (last, k), 0.01)
            self.params[f"b_{name}"] = np.zeros(k)
        self.params["W_v"] = _orthogonal(rng, (last, 1), 1.0)
        self.params["b_v"] = np.zeros(1)

    @property
    def head_sizes(self) -> tuple:
        return (self.n_max + 1, 3, self.n_max + 1, 3)

    def forward(self, obs):
        x = np.atleast_2d(obs)
        acts = [x]
        h = x
        for i in range(len(self.hidden)):
            h = np.tanh(h @ self.params[f"W{i}"] + self.params[f"b{i}"])
            acts.append(h)
        logits = [h @ self.params[f"W_{n}"] + self.params[f"b_{n}"] for n in HEADS]
        value = (h @ self.params["W_v"] + self.params["b_v"])[:, 0]
        return logits, value, acts

    def backward(self, acts, dlogits, dvalue) -> dict:
        grads = {}
        h = acts[-1]
        dh = dvalue[:, None] @ self.params["W_v"].T
        grads["W_v"] = h.T @ dvalue[:, None]
        grads["b_v"] = dvalue.sum(keepdims=True)
        for name, dz in zip(HEADS, dlogits):
            grads[f"W_{name}"] = h.T @ dz
            grads[f"b_{name}"] = dz.sum(axis=0)
            dh = dh + dz @ self.params[f"W_{name}"].T
        for i in reversed(range(len(self.hidden))):
            dpre = dh * (1.0 - acts[i + 1] ** 2)
            grads[f"W{i}"] = acts[i].T @ dpre
            grads[f"b{i}"] = dpre.sum(axis=0)
            if i:
                dh = dpre @ self.params[f"W{i}"].T
        return grads

    def copy(self) -> "PolicyNet":
        other = PolicyNet.__new__(PolicyNet)
        other.obs_dim, other.n_max, other.hidden, other.seed = self.obs_dim, self.n_max, self.hidden, self.seed
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def masked_log_softmax(z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    zm = np.where(mask, z, MASKED_LOGIT)
    zmax = zm.max(axis=-1, keepdims=True)
    return zm - zmax - np.log(np.exp(zm - zmax).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# Advantages


def gae_advantages(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimates and returns.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last step.  ``dones[t]`` marks that step t ended an
    episode, which cuts both the bootstrap and the recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    if len(values) != T + 1 or len(dones) != T:
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = np.zeros(T)
    last = 0.0
    for t in reversed(range(T)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + values[:T]


# ---------------------------------------------------------------------------
# Loss and update


@dataclass
class Batch:
    obs: np.ndarray
    masks: tuple  # four boolean arrays, one per head
    actions: np.ndarray  # (B, 4) head indices
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.obs)

    def take(self, idx) -> "Batch":
        return Batch(
            self.obs[idx],
            tuple(m[idx] for m in self.masks),
            self.actions[idx],
            self.logp_old[idx],
            self.advantages[idx],
            self.returns[idx],
        )


def ppo_loss(net: PolicyNet, batch: Batch, clip_eps: float, value_coef: float, entropy_coef: float, grad: bool = True):
    """Clipped-surrogate PPO loss, its parameter gradient and diagnostics.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c_v mean((v - R)^2) - c_e mean(H)
    with r = exp(sum_h log pi_h - logp_old) and H the sum of head entropies.
    Advantages are used as given; normalization happens in :func:`ppo_update`.
    """
    B = len(batch)
    logits, value, acts = net.forward(batch.obs)
    A = batch.advantages
    rows = np.arange(B)
    logp = np.zeros(B)
    entropy = np.zeros(B)
    per_head = []
    for h, z in enumerate(logits):
        lp = masked_log_softmax(z, batch.masks[h])
        p = np.exp(lp)
        plogp = np.where(batch.masks[h], p * lp, 0.0)
        H = -plogp.sum(axis=1)
        logp += lp[rows, batch.actions[:, h]]
        entropy += H
        per_head.append((lp, p, H))
    ratio = np.exp(logp - batch.logp_old)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    surr = np.minimum(ratio * A, clipped * A)
    policy_loss = -surr.mean()
    value_loss = np.mean((value - batch.returns) ** 2)
    ent = entropy.mean()
    loss = policy_loss + value_coef * value_loss - entropy_coef * ent
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent),
        "clip_frac": float(np.mean(np.abs(ratio - 1) > clip_eps)),
        "approx_kl": float(np.mean(batch.logp_old - logp)),
    }
    if not np.isfinite(loss):
        raise NonFiniteLoss("non-finite PPO loss", stats)
    if not grad:
        return loss, None, stats

    # d(surr)/d(logp): r A where the unclipped branch is selected, else 0.
    active = ~(((A > 0) & (ratio > 1 + clip_eps)) | ((A < 0) & (ratio < 1 - clip_eps)))
    dlogp = -(ratio * A * active) / B
    dlogits = []
    for h, (lp, p, H) in enumerate(per_head):
        onehot = np.zeros_like(p)
        onehot[rows, batch.actions[:, h]] = 1.0
        dz = dlogp[:, None] * (onehot - p)
        lp_safe = np.where(batch.masks[h], lp, 0.0)
        dz += (entropy_coef / B) * p * (lp_safe + H[:, None])
        dlogits.append(dz)
    dvalue = value_coef * 2.0 * (value - batch.returns) / B
    grads = net.backward(acts, dlogits, dvalue)
    return loss, grads, stats


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def ppo_update(net: PolicyNet, opt: Adam, batch: Batch, cfg: TrainConfig, rng: np.random.Generator) -> dict:
    """Several epochs of shuffled minibatch Adam steps on one on-policy batch."""
    adv = batch.advantages
    std = adv.std()
    norm = (adv - adv.mean()) / (std + 1e-8)
    batch = Batch(batch.obs, batch.masks, batch.actions, batch.logp_old, norm, batch.returns)
    history = []
    n = len(batch)
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(n)
        for s in range(0, n, cfg.minibatch):
            mb = batch.take(order[s : s + cfg.minibatch])
            _, grads, stats = ppo_loss(net, mb, cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)
            gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if not np.isfinite(gnorm):
                raise NonFiniteLoss("non-finite gradient", stats)
            if cfg.max_grad_norm and gnorm > cfg.max_grad_norm:
                scale = cfg.max_grad_norm / gnorm
                grads = {k: g * scale for k, g in grads.items()}
            opt.step(net.params, grads)
            stats["grad_norm"] = gnorm
            history.append(stats)
    if not net.all_finite():
        raise NonFiniteLoss("weights became non-finite", history[-1])
    return {k: float(np.mean([h[k] for h in history])) for k in history[0]}


# ---------------------------------------------------------------------------
# Acting


def _masks_u(state, cfg, ws, sets):
    k = cfg.n_max + 1
    tm = np.zeros((3, k), dtype=bool)
    left, right = sets[0]
    tm[0, left + 1] = True
    tm[1, right + 1] = True
    tm[PAUSE_BITS, 0] = True
    return tm


def _masks_d(state, cfg, ws, sets, taken: int):
    k = cfg.n_max + 1
    tm = np.zeros((3, k), dtype=bool)
    left, right = sets[1]
    tm[0, left + 1] = True
    tm[1, right + 1] = True
    if taken:
        tm[:2, taken] = False
    tm[PAUSE_BITS, 0] = True
    return tm


def _pick(z, mask, rng, deterministic):
    lp = masked_log_softmax(z, mask)
    if deterministic:
        i = int(np.argmax(np.where(mask, z, -np.inf)))
    else:
        p = np.exp(lp)
        i = int(rng.choice(len(p), p=p / p.sum()))
    return i, float(lp[i])


def act(net: PolicyNet, state, cfg: EnvConfig, ws: WorkspaceConfig, rng=None, deterministic=False):
    """Choose a joint action.

    Returns ``(joint_action, info)`` where ``info`` holds the observation,
    the four head indices and masks, the joint log-probability and the value.
    """
    obs = observation_vector(state, cfg, ws)
    logits, value, _ = net.forward(obs)
    logits = [z[0] for z in logits]
    sets = legal_target_sets(state, cfg, ws)

    tm_u = _masks_u(state, cfg, ws, sets)
    bm_u = tm_u.any(axis=1)
    b_u, lp1 = _pick(logits[1], bm_u, rng, deterministic)
    t_u, lp0 = _pick(logits[0], tm_u[b_u], rng, deterministic)
    tm_d = _masks_d(state, cfg, ws, sets, t_u)
    bm_d = tm_d.any(axis=1)
    b_d, lp3 = _pick(logits[3], bm_d, rng, deterministic)
    t_d, lp2 = _pick(logits[2], tm_d[b_d], rng, deterministic)

    joint = (action_from_heads(t_u, b_u), action_from_heads(t_d, b_d))
    info = {
        "obs": obs,
        "heads": np.array([t_u, b_u, t_d, b_d]),
        "masks": (tm_u[b_u], bm_u, tm_d[b_d], bm_d),
        "logp": lp0 + lp1 + lp2 + lp3,
        "value": float(value[0]),
    }
    return joint, info


class PPOPlanner:
    """Planner wrapper around a trained network."""

    def __init__(self, net: PolicyNet, cfg: EnvConfig, ws: WorkspaceConfig = WorkspaceConfig(), deterministic=True, seed=None):
        self.net, self.cfg, self.ws = net, cfg, ws
        self.deterministic = deterministic
        self.rng = np.random.default_rng(seed)

    def reset(self, layout=None, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)

    def __call__(self, state, legal):
        joint, _ = act(self.net, state, self.cfg, self.ws, self.rng, self.deterministic)
        return joint

    @classmethod
    def from_checkpoint(cls, path, ws=None, deterministic=True, seed=None):
        net, meta = load_checkpoint(path)
        env_cfg = EnvConfig.from_dict(meta["env_config"])
        ws = ws or WorkspaceConfig.from_dict(meta["workspace"])
        return cls(net, env_cfg, ws, deterministic, seed)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, net: PolicyNet, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": net.obs_dim,
        "n_max": net.n_max,
        "hidden": list(net.hidden),
        "seed": net.seed,
    } | meta
    with open(path, "wb") as f:
        np.savez(f, __meta__=np.array(json.dumps(header)), **net.params)
    return path


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        net = PolicyNet.__new__(PolicyNet)
        net.obs_dim, net.n_max = meta["obs_dim"], meta["n_max"]
        net.hidden, net.seed = tuple(meta["hidden"]), meta["seed"]
        net.params = {k: data[k].copy() for k in data.files if k != "__meta__"}
    return net, meta


# ---------------------------------------------------------------------------
# Training


@dataclass
class Stage:
    name: str
    steps: int
    layout_source: Callable  # rng -> FruitLayout


def cycle_source(layouts):
    state = {"i": 0}

    def source(rng):
        lay = layouts[state["i"] % len(layouts)]
        state["i"] += 1
        return lay

    return source


def desk_curriculum(n_fruits: int = 10, steps=(50_000, 50_000, 100_000), ws: WorkspaceConfig = WorkspaceConfig(), seed: int = 0) -> list:
    """Three stages: one fixed layout, a cycle of ten layouts, then a fresh random layout per reset."""
    fixed = generate(LayoutSpec(n_fruits, seed=seed, id="stage1"), ws)
    counts = np.linspace(max(1, n_fruits // 2), n_fruits, 10).round().astype(int)
    ten = [
        generate(LayoutSpec(int(n), Distribution.UNIFORM if i % 2 == 0 else Distribution.CLUSTERED, seed=seed + 100 + i), ws)
        for i, n in enumerate(counts)
    ]
    return [
        Stage("fixed", steps[0], lambda rng: fixed),
        Stage("ten-layouts", steps[1], cycle_source(ten)),
        Stage("random", steps[2], random_layout_source((1, n_fruits), ws=ws)),
    ]


@dataclass
class TrainResult:
    net: PolicyNet
    checkpoints: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)  # (global step, stage, return, makespan)
    update_stats: list = field(default_factory=list)


def evaluate(net, layouts, cfg: EnvConfig, ws: WorkspaceConfig, deterministic=True, seed=0) -> dict:
    planner = PPOPlanner(net, cfg, ws, deterministic=deterministic, seed=seed)
    eps = [run_episode(lay, planner, cfg, ws).metrics for lay in layouts]
    return {
        "makespan_mean": float(np.mean([m.makespan for m in eps])),
        "remaining_mean": float(np.mean([m.remaining for m in eps])),
        "completed": int(sum(m.done_reason == DoneReason.ALL_PICKED.value for m in eps)),
    }


def train(
    stages: list,
    cfg: TrainConfig = TrainConfig(),
    env_cfg: EnvConfig = DESK_ENV_CONFIG,
    ws: WorkspaceConfig = WorkspaceConfig(),
    out_dir=None,
    eval_layouts: Optional[list] = None,
    net: Optional[PolicyNet] = None,
) -> TrainResult:
    """Run the curriculum single-threaded; deterministic for a fixed seed."""
    rng = np.random.default_rng(cfg.seed)
    net = net or PolicyNet(observation_size(env_cfg.n_max), env_cfg.n_max, cfg.hidden, seed=cfg.seed)
    opt = Adam(net.params, cfg.lr)
    result = TrainResult(net)
    eval_layouts = eval_layouts or [generate(LayoutSpec(env_cfg.n_max, seed=10_000 + i), ws) for i in range(cfg.eval_episodes)]
    global_step = 0
    next_ckpt = cfg.checkpoint_every
    H = cfg.rollout_horizon
    k = env_cfg.n_max + 1
    t0 = time.perf_counter()

    for stage in stages:
        stage_end = global_step + stage.steps
        state = initial_state(stage.layout_source(rng), ws)
        ep_ret, ep_len = 0.0, 0
        while global_step < stage_end:
            obs = np.zeros((H, net.obs_dim))
            masks = (np.zeros((H, k), bool), np.zeros((H, 3), bool), np.zeros((H, k), bool), np.zeros((H, 3), bool))
            actions = np.zeros((H, 4), dtype=int)
            logp = np.zeros(H)
            values = np.zeros(H + 1)
            rewards = np.zeros(H)
            dones = np.zeros(H)
            for t in range(H):
                while is_complete(state, env_cfg):
                    state = initial_state(stage.layout_source(rng), ws)
                joint, info = act(net, state, env_cfg, ws, rng)
                res = step(state, joint, env_cfg, ws, check=False)
                obs[t] = info["obs"]
                for h in range(4):
                    masks[h][t] = info["masks"][h]
                actions[t] = info["heads"]
                logp[t] = info["logp"]
                values[t] = info["value"]
                r = sum(res.rewards)
                rewards[t] = r * cfg.reward_scale
                dones[t] = res.done
                ep_ret += r
                ep_len += 1
                state = res.next_state
                global_step += 1
                if res.done:
                    result.episode_returns.append((global_step, stage.name, ep_ret, max(state.agent_clock)))
                    ep_ret, ep_len = 0.0, 0
                    state = initial_state(stage.layout_source(rng), ws)
            values[H] = 0.0 if is_complete(state, env_cfg) else float(net.forward(observation_vector(state, env_cfg, ws))[1][0])
            adv, ret = gae_advantages(rewards, values, dones, cfg.gamma, cfg.gae_lambda)
            batch = Batch(obs, masks, actions, logp, adv, ret)
            stats = ppo_update(net, opt, batch, cfg, rng)
            stats["step"] = global_step
            stats["stage"] = stage.name
            result.update_stats.append(stats)
            if global_step >= next_ckpt or global_step >= sum(s.steps for s in stages):
                next_ckpt += cfg.checkpoint_every
                metrics = evaluate(net, eval_layouts, env_cfg, ws)
                log.info("step %d stage %s eval %s (%.0fs)", global_step, stage.name, metrics, time.perf_counter() - t0)
                if out_dir is not None:
                    meta = {
                        "step": global_step,
                        "stage": stage.name,
                        "train_config": asdict(cfg),
                        "env_config": env_cfg.to_dict(),
                        "workspace": ws.to_dict(),
                        "rng_state": rng.bit_generator.state,
                        "eval": metrics,
                    }
                    path = save_checkpoint(Path(out_dir) / f"ckpt_{global_step:08d}.npz", net, meta)
                    result.checkpoints.append((global_step, str(path), metrics))
                else:
                    result.checkpoints.append((global_step, None, metrics))
    return result
