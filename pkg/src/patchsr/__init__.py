"""Patch-level super-resolution by hierarchical reinforcement learning over
interpretable classical filter actions.

A spatial manager picks the most corrupted patch of a degraded image, a patch
worker applies one classical filter per pixel for a few steps, and a temporal
manager decides when further processing would do more harm than good. Every
inference records a trace that replays to the identical output with no
networks involved.
"""

from .actions import ActionKind, apply_actions, filter_response
from .agents import NetConfig, init_params, pw_forward, select_actions, select_goal, spm_forward, tpm_forward
from .autodiff import ParamStore, gradcheck, load_checkpoint, save_checkpoint
from .env import EpisodeState, Goal, RewardRecord, discounted_return, inner_reward, outer_reward, tpm_label
from .imaging import (
    DegradationKind,
    DegradationSpec,
    ImagePair,
    bicubic_resize,
    degrade,
    gaussian_blur,
    gmsd,
    load_image,
    psnr,
    save_image,
    ssim,
)
from .learn import TrainConfig, desk_config, train, train_episode
from .runtime import (
    EpisodeTrace,
    InferConfig,
    evaluate,
    greedy_oracle,
    infer,
    load_corpus,
    load_trace,
    replay,
    save_trace,
    synth_corpus,
)

__version__ = "0.1.0"
