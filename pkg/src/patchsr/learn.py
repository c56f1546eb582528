"""Training: actor-critic losses, the per-episode loop, the schedule that
alternates worker heads, and checkpoint/metrics plumbing.

An episode processes one batch of image pairs in lockstep. Within an episode
the patch worker is optimized once per outer loop; the two managers are
optimized once at the end. Sampling runs without graph recording; the update
passes recompute the needed forwards (parameters are unchanged in between, so
recomputed values equal the sampled ones bit for bit).

Gradient routing is structural: the manager's value head reads detached
backbone features, the continuous head reads detached worker features, and
every advantage baseline enters losses as a constant. Each optimizer step then
touches exactly the groups its loss is defined over.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import agents, autodiff as ad, env
from .actions import apply_actions
from .agents import NetConfig, init_params, pw_forward, pw_value, spm_forward, tpm_forward
from .autodiff import Adam, LinearDecay, ParamStore, SGD, Tensor
from .imaging import ImagePair

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults are the full-scale settings.

    `total_episodes`, `warmup_episodes`, `decay_horizon` and
    `alternate_period` all count episodes, where one episode is one
    optimization round over a batch of `batch` image pairs.
    """

    gamma: float = 0.5
    patch_size: int = 96
    inner_steps: int = 3
    outer_steps: int = 8
    batch: int = 12
    total_episodes: int = 20_000
    lr_high: float = 1e-3
    lr_tpm: float = 1e-4
    lr_floor: float = 0.0
    decay_horizon: int = 20_000
    warmup_episodes: int = 10_000
    alternate_period: int = 2
    seed: int = 0
    backbone_channels: int = 32
    head_channels: int = 16
    init_gain: float = 0.2
    idle_bias: float = 3.0
    param_optimizer: str = "sgd"
    lr_param: float = 0.0          # 0 means: use lr_high
    lr_policy: float = 0.0         # 0 means: use lr_high
    lr_spm_policy: float = 0.0     # 0 means: use lr_policy
    weight_decay: float = 0.0
    param_noise: float = 0.08
    explore_eps: float = 0.0       # uniform mixing into the sampling policy
    bias_calibration: float = 0.0  # action-prior strength set from warmup stats
    val_interval: int = 500
    val_subset: int = 24
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.inner_steps < 1 or self.outer_steps < 1:
            raise ValueError("inner_steps and outer_steps must be >= 1")
        if self.alternate_period < 1 or self.batch < 1:
            raise ValueError("alternate_period and batch must be >= 1")

    def net(self) -> NetConfig:
        return NetConfig(
            backbone_channels=self.backbone_channels,
            head_channels=self.head_channels,
            init_gain=self.init_gain,
            idle_bias=self.idle_bias,
        )


def desk_config(**overrides) -> TrainConfig:
    """Small-image preset that trains in minutes on a CPU.

    Rewards here live on the unit intensity scale, where plain SGD cannot
    move the continuous head within a short run; the preset uses Adam for it.
    """
    base = dict(
        patch_size=24,
        inner_steps=3,
        outer_steps=4,
        batch=1,
        total_episodes=3000,
        warmup_episodes=500,
        decay_horizon=3000,
        backbone_channels=16,
        head_channels=12,
        idle_bias=2.0,
        init_gain=0.2,
        param_optimizer="sgd",
        param_noise=0.0,
        weight_decay=0.01,
        explore_eps=0.05,
        bias_calibration=2.0,
        lr_policy=1e-3,
        lr_spm_policy=3e-3,
        val_interval=500,
        checkpoint_interval=1000,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TrainingAbort(RuntimeError):
    """Raised when a loss turns non-finite; carries the episode log so far."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def select_log_probs(log_probs: Tensor, action_map: np.ndarray) -> Tensor:
    """Log-probability of each pixel's chosen action: (B,A,P,P) -> (B,1,P,P)."""
    b, n_actions = log_probs.data.shape[:2]
    onehot = np.zeros(log_probs.data.shape)
    np.put_along_axis(onehot, (np.asarray(action_map)[:, None] - 1), 1.0, axis=1)
    return ad.total(ad.mul(log_probs, onehot), axis=1, keepdims=True)


def select_axis_log_prob(log_dist: Tensor, indices: np.ndarray) -> Tensor:
    """Log-probability of the chosen position per batch item: (B,L) -> (B,)."""
    onehot = np.zeros(log_dist.data.shape)
    onehot[np.arange(len(indices)), np.asarray(indices)] = 1.0
    return ad.total(ad.mul(log_dist, onehot), axis=1)


def loss_value_manager(returns, value: Tensor) -> Tensor:
    """Squared TD error of the manager critic; `returns` enters as a constant."""
    return ad.mean(ad.square(ad.sub(value, np.asarray(returns, dtype=np.float64))))


def loss_policy_manager(returns, value_baseline, log_prob_h: Tensor,
                        log_prob_v: Tensor) -> Tensor:
    """Advantage-weighted surprisal of the chosen goal position, both axes.

    The baseline is a constant: no gradient reaches the critic through here.
    """
    adv = np.asarray(returns, dtype=np.float64) - np.asarray(value_baseline, dtype=np.float64)
    per_axis = ad.add(log_prob_h, log_prob_v)
    return ad.mean(ad.mul(ad.mul(per_axis, adv), -1.0))


def loss_temporal(b: Tensor, labels) -> Tensor:
    """Binary cross-entropy of the continuation signal against its label."""
    labels = np.asarray(labels, dtype=np.float64)
    bc = ad.clip(b, BCE_CLAMP, 1.0 - BCE_CLAMP)
    pos = ad.mul(ad.log(bc), labels)
    neg = ad.mul(ad.log(ad.sub(1.0, bc)), 1.0 - labels)
    return ad.mul(ad.mean(ad.add(pos, neg)), -1.0)


def loss_value_worker(returns_map, value_map: Tensor) -> Tensor:
    """Per-pixel squared error between returns and the critic's value map."""
    return ad.mean(ad.square(ad.sub(value_map, np.asarray(returns_map, dtype=np.float64))))


def loss_policy_worker(returns_map, value_baseline_map, selected_log_probs: Tensor) -> Tensor:
    """Per-pixel advantage-weighted surprisal of the chosen actions."""
    adv = np.asarray(returns_map, dtype=np.float64) - np.asarray(
        value_baseline_map, dtype=np.float64
    )
    return ad.mean(ad.mul(ad.mul(selected_log_probs, adv), -1.0))


def loss_param_worker(value_map: Tensor) -> Tensor:
    """Negative critic value; ascending it tunes the continuous gains."""
    return ad.mul(ad.mean(value_map), -1.0)


def _finite(name: str, loss: Tensor, log=None) -> Tensor:
    if not np.isfinite(loss.data).all():
        raise TrainingAbort(f"non-finite {name} loss", log=log)
    return loss


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

PW_CRITIC_GROUPS = ("pw_policy", "pw_value", "pw_backbone")
SPM_POLICY_GROUPS = ("spm_policy_h", "spm_policy_v")
VALUE_GROUPS = ("spm_backbone", "spm_value", "pw_value", "pw_backbone")


def make_optimizers(store: ParamStore, cfg: TrainConfig) -> dict[str, ad.Optimizer]:
    """Adam for the managers and worker critic/policy; the continuous policy
    weights default to SGD (configurable). The stop-signal net runs at its own
    smaller learning rate, and the two policy heads may run slower than their
    critics (two-timescale updates keep the actor from outrunning its
    baseline)."""
    high = LinearDecay(cfg.lr_high, cfg.decay_horizon, cfg.lr_floor)
    lr_pol = cfg.lr_policy or cfg.lr_high
    policy = LinearDecay(lr_pol, cfg.decay_horizon, cfg.lr_floor)
    spm_policy = LinearDecay(cfg.lr_spm_policy or lr_pol, cfg.decay_horizon, cfg.lr_floor)
    tpm = LinearDecay(cfg.lr_tpm, cfg.decay_horizon, cfg.lr_floor)
    param = LinearDecay(cfg.lr_param or cfg.lr_high, cfg.decay_horizon, cfg.lr_floor)
    param_cls = {"sgd": SGD, "adam": Adam}[cfg.param_optimizer]
    return {
        "adam_main": Adam(store, list(VALUE_GROUPS), high, weight_decay=cfg.weight_decay),
        "adam_policy": Adam(store, ["pw_policy"], policy, weight_decay=cfg.weight_decay),
        "adam_spm_policy": Adam(store, list(SPM_POLICY_GROUPS), spm_policy,
                                weight_decay=cfg.weight_decay),
        "adam_tpm": Adam(store, list(agents.TPM_GROUPS), tpm),
        "opt_param": param_cls(store, ["pw_param"], param),
    }


def calibrate_action_bias(store: ParamStore, reward_sum: np.ndarray,
                          reward_count: np.ndarray, strength: float) -> np.ndarray:
    """Seed the action-policy bias from warmup immediate-reward statistics.

    Warmup sampling measures every action's mean one-step reward with high
    confidence (the do-nothing action sits at exactly zero, so there is no
    baseline bias to cancel). Scaling those means so the best one earns
    `strength` logits lands the subsequent policy race in the right basin
    deterministically instead of leaving it to early gradient noise. Returns
    the applied shift.
    """
    mean_r = np.divide(reward_sum, reward_count, out=np.zeros_like(reward_sum),
                       where=reward_count > 0)
    top = mean_r.max()
    if top <= 0:
        return np.zeros_like(mean_r)
    shift = strength * np.clip(mean_r / top, -1.0, 1.0)
    store.group("pw_policy")["conv2_b"].data += shift
    return shift


def pw_phase(episode: int, cfg: TrainConfig) -> str:
    """Which worker heads train this episode: "critic" or "param".

    Warmup trains only the discrete policy and critic; afterwards the
    continuous head takes the first turn and the two alternate every
    `alternate_period` episodes.
    """
    if episode < cfg.warmup_episodes:
        return "critic"
    gap = (episode - cfg.warmup_episodes) // cfg.alternate_period
    return "param" if gap % 2 == 0 else "critic"


# ---------------------------------------------------------------------------
# Episode log
# ---------------------------------------------------------------------------

@dataclass
class OuterLog:
    goals: list[env.Goal]
    b: np.ndarray                 # (B,)
    labels: np.ndarray            # (B,)
    inner_rewards: np.ndarray     # (T, B) scalar rewards
    inner_returns: np.ndarray     # (T, B) scalar returns


@dataclass
class EpisodeLog:
    episode: int
    outer: list[OuterLog] = field(default_factory=list)
    outer_rewards: np.ndarray | None = None   # (N, B)
    outer_returns: np.ndarray | None = None   # (N, B)
    losses: dict[str, float] = field(default_factory=dict)
    mean_reward: float = 0.0
    action_reward_sum: np.ndarray | None = None    # (10,) immediate-reward sums
    action_reward_count: np.ndarray | None = None  # (10,) sample counts by action


# ---------------------------------------------------------------------------
# One training episode (Algorithm: outer patch selection, inner restoration)
# ---------------------------------------------------------------------------

def train_episode(pairs: Sequence[ImagePair], store: ParamStore,
                  optimizers: dict[str, ad.Optimizer], cfg: TrainConfig,
                  rng: np.random.Generator, episode: int) -> EpisodeLog:
    """Run one batched episode and apply all scheduled optimizer updates."""
    bsz = len(pairs)
    states = np.stack([p.lr_up for p in pairs])
    targets = np.stack([p.hr for p in pairs])
    height, width = states.shape[1:]
    if min(height, width) < cfg.patch_size:
        raise env.ImageGeometryError(
            f"images {height}x{width} smaller than patch {cfg.patch_size}"
        )
    n_outer, n_inner = cfg.outer_steps, cfg.inner_steps
    phase = pw_phase(episode, cfg)
    log = EpisodeLog(
        episode=episode,
        action_reward_sum=np.zeros(agents.N_ACTIONS),
        action_reward_count=np.zeros(agents.N_ACTIONS),
    )
    loss_acc: dict[str, float] = {}
    spm_states = np.empty((n_outer,) + states.shape)
    outer_rewards = np.empty((n_outer, bsz))
    all_inner_scalars = []

    for n in range(n_outer):
        spm_states[n] = states

        with ad.no_grad():
            spm_out = spm_forward(store, states, patch_size=cfg.patch_size)
            b_sig = tpm_forward(store, spm_out.g_h.data, spm_out.g_v.data)
        goals = [
            agents.select_goal(spm_out.g_h.data[i], spm_out.g_v.data[i],
                               cfg.patch_size, height, width, mode="sample", rng=rng)
            for i in range(bsz)
        ]

        before = states.copy()
        patches = np.stack(
            [states[i, g.crop_y : g.crop_y + cfg.patch_size,
                    g.crop_x : g.crop_x + cfg.patch_size] for i, g in enumerate(goals)]
        )
        hr_patches = np.stack(
            [targets[i, g.crop_y : g.crop_y + cfg.patch_size,
                     g.crop_x : g.crop_x + cfg.patch_size] for i, g in enumerate(goals)]
        )

        step_patches, step_actions, step_feats, step_params = [], [], [], []
        reward_maps = np.empty((n_inner, bsz, cfg.patch_size, cfg.patch_size))
        for t in range(n_inner):
            step_patches.append(patches.copy())
            with ad.no_grad():
                pw_out = pw_forward(store, patches)
            behavior = pw_out.probs.data
            if cfg.explore_eps > 0:
                # keep every action sampled occasionally so a saturated policy
                # still measures the advantages of its alternatives
                n_act = behavior.shape[1]
                behavior = (1.0 - cfg.explore_eps) * behavior + cfg.explore_eps / n_act
            actions = agents.select_actions(behavior, mode="sample", rng=rng)
            applied = pw_out.params.data
            if cfg.param_noise > 0:
                # gain exploration: the critic must see varied gains to learn
                # how the outcome depends on them
                applied = np.clip(
                    applied + rng.normal(0.0, cfg.param_noise, applied.shape), 0.0, 1.0
                )
            step_actions.append(actions)
            step_feats.append(pw_out.feats.data)
            step_params.append(applied)
            nxt = np.stack(
                [apply_actions(patches[i], actions[i], applied[i, 0])
                 for i in range(bsz)]
            )
            reward_maps[t] = np.abs(patches - hr_patches) - np.abs(nxt - hr_patches)
            acts0 = actions.ravel().astype(np.int64) - 1
            log.action_reward_sum += np.bincount(
                acts0, weights=reward_maps[t].ravel(), minlength=agents.N_ACTIONS)
            log.action_reward_count += np.bincount(acts0, minlength=agents.N_ACTIONS)
            patches = nxt

        return_maps = np.stack(env.discounted_return(list(reward_maps), cfg.gamma))
        inner_scalars = reward_maps.mean(axis=(2, 3))          # (T, B)
        inner_return_scalars = return_maps.mean(axis=(2, 3))   # (T, B)
        all_inner_scalars.append(inner_scalars)
        labels = np.array([env.tpm_label(inner_scalars[:, i]) for i in range(bsz)])

        _update_patch_worker(store, optimizers, cfg, episode, phase, loss_acc,
                             step_patches, step_actions, step_feats, step_params,
                             return_maps, log)

        for i, g in enumerate(goals):
            states[i, g.crop_y : g.crop_y + cfg.patch_size,
                   g.crop_x : g.crop_x + cfg.patch_size] = patches[i]
        outer_rewards[n] = (
            np.abs(before - targets).mean(axis=(1, 2))
            - np.abs(states - targets).mean(axis=(1, 2))
        )

        log.outer.append(OuterLog(
            goals=goals,
            b=b_sig.data.copy(),
            labels=labels,
            inner_rewards=inner_scalars,
            inner_returns=inner_return_scalars,
        ))

    outer_returns = np.stack(env.discounted_return(list(outer_rewards), cfg.gamma))
    log.outer_rewards = outer_rewards
    log.outer_returns = outer_returns
    log.mean_reward = float(np.mean(np.stack(all_inner_scalars)))

    _update_spatial_manager(store, optimizers, cfg, episode, loss_acc,
                            spm_states, log, outer_returns)
    _update_temporal_manager(store, optimizers, cfg, episode, loss_acc, log)

    log.losses = {k: float(v) for k, v in loss_acc.items()}
    return log


def _update_patch_worker(store, optimizers, cfg, episode, phase, loss_acc,
                         step_patches, step_actions, step_feats, step_params,
                         return_maps, log):
    """One worker update for the outer loop just finished.

    Critic phase recomputes the backbone live (its gradients are wanted);
    param phase reuses the sampled features as constants, since only the
    continuous head may move.
    """
    stacked_returns = np.concatenate(return_maps)[:, None]       # (T*B, 1, P, P)

    store.zero_grad()
    if phase == "critic":
        stacked_actions = np.concatenate(step_actions)
        feats = agents.pw_backbone_features(store, np.concatenate(step_patches))
        log_probs = ad.log_softmax(agents.pw_policy_logits(store, feats), axis=1)
        value = pw_value(store, feats, Tensor(np.concatenate(step_params)))
        l_vw = _finite("value_worker", loss_value_worker(stacked_returns, value), log)
        sel = select_log_probs(log_probs, stacked_actions)
        l_pw = _finite(
            "policy_worker",
            loss_policy_worker(stacked_returns, value.data, sel), log)
        ad.add(l_vw, l_pw).backward()
        optimizers["adam_main"].step(episode, groups=["pw_value", "pw_backbone"])
        optimizers["adam_policy"].step(episode, groups=["pw_policy"])
        loss_acc["loss_value_worker"] = loss_acc.get("loss_value_worker", 0.0) + l_vw.data / cfg.outer_steps
        loss_acc["loss_policy_worker"] = loss_acc.get("loss_policy_worker", 0.0) + l_pw.data / cfg.outer_steps
    else:
        feats = Tensor(np.concatenate(step_feats))
        params = agents.pw_param_head(store, feats)
        l_param = _finite("param_worker", loss_param_worker(pw_value(store, feats, params)), log)
        l_param.backward()
        optimizers["opt_param"].step(episode, groups=["pw_param"])
        loss_acc["loss_param_worker"] = loss_acc.get("loss_param_worker", 0.0) + l_param.data / cfg.outer_steps


def _update_spatial_manager(store, optimizers, cfg, episode, loss_acc,
                            spm_states, log, outer_returns):
    """Actor-critic update over all stored outer-loop states, one stacked pass."""
    store.zero_grad()
    n_outer, bsz = outer_returns.shape
    stacked = spm_states.reshape((n_outer * bsz,) + spm_states.shape[2:])
    returns = outer_returns.reshape(n_outer * bsz)
    idx_h = np.array([g.index_x for ol in log.outer for g in ol.goals])
    idx_v = np.array([g.index_y for ol in log.outer for g in ol.goals])

    out = spm_forward(store, stacked, with_value=True)
    l_v = _finite("value_manager", loss_value_manager(returns, out.value), log)
    lp_h = select_axis_log_prob(ad.log_softmax(out.logits_h, axis=1), idx_h)
    lp_v = select_axis_log_prob(ad.log_softmax(out.logits_v, axis=1), idx_v)
    l_p = _finite(
        "policy_manager",
        loss_policy_manager(returns, out.value.data, lp_h, lp_v), log)
    ad.add(l_v, l_p).backward()
    optimizers["adam_main"].step(episode, groups=["spm_backbone", "spm_value"])
    optimizers["adam_spm_policy"].step(episode, groups=["spm_policy_h", "spm_policy_v"])
    loss_acc["loss_value_manager"] = float(l_v.data)
    loss_acc["loss_policy_manager"] = float(l_p.data)


def _update_temporal_manager(store, optimizers, cfg, episode, loss_acc, log):
    store.zero_grad()
    g_h = np.concatenate([[g.g_h for g in ol.goals] for ol in log.outer])
    g_v = np.concatenate([[g.g_v for g in ol.goals] for ol in log.outer])
    labels = np.concatenate([ol.labels for ol in log.outer])
    b = tpm_forward(store, g_h, g_v)
    l_tem = _finite("temporal", loss_temporal(b, labels), log)
    l_tem.backward()
    optimizers["adam_tpm"].step(episode)
    loss_acc["loss_temporal"] = float(l_tem.data)


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------

CSV_FIELDS = [
    "episode", "lr_high", "lr_tpm",
    "loss_value_manager", "loss_policy_manager", "loss_temporal",
    "loss_value_worker", "loss_policy_worker", "loss_param_worker",
    "mean_reward", "val_psnr", "val_ssim", "val_gmsd",
]


@dataclass
class TrainResult:
    store: ParamStore
    optimizers: dict[str, ad.Optimizer]
    checkpoint_path: Path
    csv_path: Path
    episodes_run: int


def train(pairs: Sequence[ImagePair], cfg: TrainConfig, out_dir,
          val_fn: Callable[[ParamStore], dict] | None = None,
          resume_from=None, quiet: bool = True) -> TrainResult:
    """Train from scratch (or resume) and write checkpoint plus metrics CSV.

    `val_fn(store) -> {"psnr":..., "ssim":..., "gmsd":...}` is invoked every
    `val_interval` episodes; the latest values are carried forward in the CSV.
    """
    if len(pairs) == 0:
        raise ValueError("empty training corpus")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.bin"
    csv_path = out_dir / "metrics.csv"

    rng = np.random.default_rng(cfg.seed)
    store = init_params(rng, cfg.net())
    optimizers = make_optimizers(store, cfg)
    start_episode = 0
    if resume_from is not None:
        start_episode = ad.load_checkpoint(resume_from, store, optimizers)

    mode = "a" if (resume_from is not None and csv_path.exists()) else "w"
    val_metrics = {"val_psnr": "", "val_ssim": "", "val_gmsd": ""}
    order = rng.permutation(len(pairs))
    cursor = 0
    t0 = time.time()
    warmup_reward_sum = np.zeros(agents.N_ACTIONS)
    warmup_reward_count = np.zeros(agents.N_ACTIONS)
    calibrated = start_episode >= cfg.warmup_episodes

    with open(csv_path, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if mode == "w":
            writer.writeheader()
        for episode in range(start_episode, cfg.total_episodes):
            if (cfg.bias_calibration > 0 and not calibrated
                    and episode >= cfg.warmup_episodes):
                calibrate_action_bias(store, warmup_reward_sum, warmup_reward_count,
                                      cfg.bias_calibration)
                calibrated = True

            batch = []
            for _ in range(cfg.batch):
                if cursor >= len(order):
                    order = rng.permutation(len(pairs))
                    cursor = 0
                batch.append(pairs[order[cursor]])
                cursor += 1

            elog = train_episode(batch, store, optimizers, cfg, rng, episode)
            if episode < cfg.warmup_episodes:
                warmup_reward_sum += elog.action_reward_sum
                warmup_reward_count += elog.action_reward_count

            if val_fn is not None and (episode + 1) % cfg.val_interval == 0:
                metrics = val_fn(store)
                val_metrics = {f"val_{k}": f"{v:.6f}" for k, v in metrics.items()}
            row = {
                "episode": episode,
                "lr_high": f"{optimizers['adam_main'].schedule.lr(episode):.8f}",
                "lr_tpm": f"{optimizers['adam_tpm'].schedule.lr(episode):.8f}",
                "mean_reward": f"{elog.mean_reward:.8f}",
                **{k: f"{elog.losses.get(k, float('nan')):.8f}" for k in CSV_FIELDS[3:9]},
                **val_metrics,
            }
            writer.writerow(row)
            if (episode + 1) % cfg.checkpoint_interval == 0 or episode + 1 == cfg.total_episodes:
                ad.save_checkpoint(ckpt_path, store, optimizers, episode + 1)
                fh.flush()
            if not quiet and (episode + 1) % 50 == 0:
                print(f"episode {episode + 1}/{cfg.total_episodes} "
                      f"reward {elog.mean_reward:+.5f} "
                      f"({time.time() - t0:.0f}s)")

    if not ckpt_path.exists():
        ad.save_checkpoint(ckpt_path, store, optimizers, cfg.total_episodes)
    return TrainResult(
        store=store,
        optimizers=optimizers,
        checkpoint_path=ckpt_path,
        csv_path=csv_path,
        episodes_run=cfg.total_episodes - start_episode,
    )
