"""Two-level restoration MDP: goal-directed cropping, reward maps, discounted
returns and early-stop labels.

Rewards are per-pixel decreases in absolute error against the clean target, so
summing a loop's rewards telescopes to the total error reduction over that
loop. The scalar view of a reward is the mean of its pixel map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .imaging import ImageGeometryError, as_image


@dataclass(frozen=True)
class Goal:
    """Per-axis categorical position distributions plus the chosen crop corner.

    The 2-D goal map is the rank-1 outer product of the vertical and
    horizontal vectors; its argmax locates the crop window's top-left corner.
    `index_x`/`index_y` keep the raw chosen positions before clamping, which
    is what the policy gradient scores.
    """

    g_h: np.ndarray
    g_v: np.ndarray
    crop_x: int
    crop_y: int
    index_x: int = -1
    index_y: int = -1

    def __post_init__(self):
        for name, g in (("g_h", self.g_h), ("g_v", self.g_v)):
            g = np.asarray(g, dtype=np.float64)
            if g.ndim != 1 or g.min() < 0 or abs(g.sum() - 1.0) > 1e-6:
                raise ValueError(f"{name} is not a probability vector")
            object.__setattr__(self, name, g)
        if self.index_x < 0:
            object.__setattr__(self, "index_x", self.crop_x)
        if self.index_y < 0:
            object.__setattr__(self, "index_y", self.crop_y)

    def map(self) -> np.ndarray:
        """The (H, W) rank-1 goal map g_v (outer) g_h."""
        return np.outer(self.g_v, self.g_h)


def clamp_crop(y: int, x: int, height: int, width: int, patch: int) -> tuple[int, int]:
    """Clamp a crop corner so a patch x patch window fits the image."""
    return (
        int(min(max(y, 0), height - patch)),
        int(min(max(x, 0), width - patch)),
    )


def goal_from_argmax(g_h, g_v, patch: int, height: int, width: int) -> Goal:
    """Deterministic goal: lowest-index argmax of each axis, clamped to fit."""
    g_h = np.asarray(g_h, dtype=np.float64)
    g_v = np.asarray(g_v, dtype=np.float64)
    y, x = clamp_crop(int(np.argmax(g_v)), int(np.argmax(g_h)), height, width, patch)
    return Goal(g_h=g_h, g_v=g_v, crop_x=x, crop_y=y)


@dataclass
class EpisodeState:
    """State of one restoration episode at loop position (n, t)."""

    current: np.ndarray
    hr: np.ndarray
    n: int = 0
    t: int = 0
    goal: Goal | None = None
    patch_size: int = 96

    def __post_init__(self):
        self.current = as_image(self.current)
        self.hr = as_image(self.hr)
        if self.current.shape != self.hr.shape:
            raise ImageGeometryError(
                f"state/target shape mismatch: {self.current.shape} vs {self.hr.shape}"
            )
        if min(self.current.shape) < self.patch_size:
            raise ImageGeometryError(
                f"image {self.current.shape} smaller than patch {self.patch_size}"
            )


def crop_patch(state: EpisodeState) -> tuple[np.ndarray, np.ndarray]:
    """The patch-sized windows of the current image and the target."""
    if state.goal is None:
        raise ValueError("state has no goal to crop at")
    p = state.patch_size
    y, x = state.goal.crop_y, state.goal.crop_x
    return (
        state.current[y : y + p, x : x + p].copy(),
        state.hr[y : y + p, x : x + p].copy(),
    )


def paste_patch(state: EpisodeState, patch: np.ndarray) -> EpisodeState:
    """New state with the goal window replaced; all other pixels unchanged."""
    if state.goal is None:
        raise ValueError("state has no goal to paste at")
    patch = np.asarray(patch, dtype=np.float64)
    p = state.patch_size
    if patch.shape != (p, p):
        raise ImageGeometryError(f"patch shape {patch.shape} != ({p}, {p})")
    current = state.current.copy()
    y, x = state.goal.crop_y, state.goal.crop_x
    current[y : y + p, x : x + p] = patch
    return replace(state, current=current)


@dataclass(frozen=True)
class RewardRecord:
    """Per-pixel reward grid plus its scalar (mean) view."""

    pixel_map: np.ndarray
    scalar: float

    @classmethod
    def from_map(cls, pixel_map: np.ndarray) -> "RewardRecord":
        pixel_map = np.asarray(pixel_map, dtype=np.float64)
        return cls(pixel_map=pixel_map, scalar=float(pixel_map.mean()))


def inner_reward(prev, nxt, hr_patch) -> RewardRecord:
    """Per-pixel decrease of absolute error against the target patch."""
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    hr_patch = np.asarray(hr_patch, dtype=np.float64)
    if not (prev.shape == nxt.shape == hr_patch.shape):
        raise ImageGeometryError("reward inputs must share dimensions")
    return RewardRecord.from_map(np.abs(prev - hr_patch) - np.abs(nxt - hr_patch))


def outer_reward(prev_img, next_img, hr) -> RewardRecord:
    """Same error-decrease reward evaluated over the full image."""
    return inner_reward(prev_img, next_img, hr)


def discounted_return(rewards: Sequence, gamma: float):
    """Discounted returns R_k = sum_{i>=k} gamma^(i-k) r_i for every k.

    Works elementwise for sequences of reward maps as well as scalars.
    """
    if len(rewards) == 0:
        raise ValueError("empty reward sequence")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    out = [None] * len(rewards)
    acc = np.asarray(rewards[-1], dtype=np.float64)
    out[-1] = acc
    for k in range(len(rewards) - 2, -1, -1):
        acc = np.asarray(rewards[k], dtype=np.float64) + gamma * acc
        out[k] = acc
    if np.ndim(rewards[0]) == 0:
        return [float(v) for v in out]
    return out


def tpm_label(inner_rewards: Sequence[float]) -> int:
    """1 if the loop's summed reward is strictly positive, else 0."""
    return int(float(np.sum(inner_rewards)) > 0.0)
