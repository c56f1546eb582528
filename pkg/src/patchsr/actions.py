"""The per-pixel action bank: ten classical filters applied under a discrete
action map and a continuous gain map.

Every action is expressed as a signed residual R so that application is the
uniform update ``out = clamp(in + gain * R)``. The gain is the learned
per-pixel parameter p in [0, 1] for the six parameterized filters and exactly
1 for the rest. This keeps each step auditable: the output is always the input
plus a named classical filter response.
"""

from __future__ import annotations

import enum

import numpy as np

from .imaging import as_image, conv2d_reflect, gaussian_kernel

# Step size of the additive micro-adjustments, on the 8-bit scale.
STEP_1_255 = 1.0 / 255.0


class ActionKind(enum.IntEnum):
    """Discrete filter actions; values match the on-disk trace encoding."""

    SOBEL_LEFT = 1
    SOBEL_RIGHT = 2
    SOBEL_UP = 3
    SOBEL_DOWN = 4
    LAPLACE = 5
    GAUSSIAN = 6
    SHARP = 7
    ADDITION = 8
    SUBTRACTION = 9
    DO_NOTHING = 10


#: Actions whose residual is scaled by the learned per-pixel parameter.
PARAMETERIZED = frozenset(
    {
        ActionKind.SOBEL_LEFT,
        ActionKind.SOBEL_RIGHT,
        ActionKind.SOBEL_UP,
        ActionKind.SOBEL_DOWN,
        ActionKind.LAPLACE,
        ActionKind.SHARP,
    }
)

N_ACTIONS = len(ActionKind)
N_PARAMETERIZED = len(PARAMETERIZED)

SOBEL_RIGHT_KERNEL = np.array(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)
SOBEL_LEFT_KERNEL = -SOBEL_RIGHT_KERNEL
SOBEL_DOWN_KERNEL = SOBEL_RIGHT_KERNEL.T
SOBEL_UP_KERNEL = -SOBEL_DOWN_KERNEL
LAPLACE_KERNEL = np.array(
    [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]
)

_KERNELS = {
    ActionKind.SOBEL_LEFT: SOBEL_LEFT_KERNEL,
    ActionKind.SOBEL_RIGHT: SOBEL_RIGHT_KERNEL,
    ActionKind.SOBEL_UP: SOBEL_UP_KERNEL,
    ActionKind.SOBEL_DOWN: SOBEL_DOWN_KERNEL,
    ActionKind.LAPLACE: LAPLACE_KERNEL,
}

_SMOOTH_SIGMA = 0.5
_SMOOTH_KSIZE = 5


def smoothing_kernel() -> np.ndarray:
    """The 5x5 sigma=0.5 Gaussian used by the smoothing/sharpening actions."""
    return gaussian_kernel(_SMOOTH_SIGMA, _SMOOTH_KSIZE)


def filter_response(patch, kind: ActionKind) -> np.ndarray:
    """Signed residual of one action over the whole patch (no clamping)."""
    patch = as_image(patch)
    kind = ActionKind(kind)
    if kind in _KERNELS:
        return conv2d_reflect(patch, _KERNELS[kind])
    if kind is ActionKind.GAUSSIAN:
        return conv2d_reflect(patch, smoothing_kernel()) - patch
    if kind is ActionKind.SHARP:
        return patch - conv2d_reflect(patch, smoothing_kernel())
    if kind is ActionKind.ADDITION:
        return np.full(patch.shape, STEP_1_255)
    if kind is ActionKind.SUBTRACTION:
        return np.full(patch.shape, -STEP_1_255)
    return np.zeros(patch.shape)  # DO_NOTHING


def all_responses(patch) -> np.ndarray:
    """Residuals of every action, stacked as (N_ACTIONS, H, W).

    Index k holds the response of the action with value k+1.
    """
    patch = as_image(patch)
    out = np.empty((N_ACTIONS,) + patch.shape)
    for kind in ActionKind:
        out[kind - 1] = filter_response(patch, kind)
    return out


def validate_action_map(actions: np.ndarray) -> np.ndarray:
    actions = np.asarray(actions)
    if actions.size == 0 or actions.min() < 1 or actions.max() > N_ACTIONS:
        raise ValueError("action map contains indices outside 1..10")
    return actions.astype(np.int64)


def param_gains(actions: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Effective per-pixel gain: p where the action is parameterized, else 1."""
    gains = np.ones(actions.shape)
    for kind in PARAMETERIZED:
        gains = np.where(actions == int(kind), params, gains)
    return gains


def apply_actions(patch, actions, params) -> np.ndarray:
    """Apply one action step: per pixel, ``clamp(in + gain * R(action))``.

    DO_NOTHING pixels (and parameterized actions with p = 0) come back
    bit-identical. Responses are computed from the unmodified input patch, so
    changing one pixel's action affects only that pixel's output.
    """
    patch = as_image(patch)
    actions = validate_action_map(actions)
    params = np.asarray(params, dtype=np.float64)
    if actions.shape != patch.shape or params.shape != patch.shape:
        raise ValueError(
            f"shape mismatch: patch {patch.shape}, actions {actions.shape}, "
            f"params {params.shape}"
        )
    if params.min() < 0.0 or params.max() > 1.0:
        raise ValueError("param map values must lie in [0, 1]")

    residual = np.zeros(patch.shape)
    for kind in ActionKind:
        mask = actions == int(kind)
        if not mask.any():
            continue
        if kind is ActionKind.DO_NOTHING:
            continue
        resp = filter_response(patch, kind)
        gain = params if kind in PARAMETERIZED else 1.0
        residual = np.where(mask, gain * resp, residual)

    out = np.clip(patch + residual, 0.0, 1.0)
    # keep untouched pixels bit-identical (clip may renormalize -0.0 etc.)
    untouched = (actions == int(ActionKind.DO_NOTHING)) | (residual == 0.0)
    return np.where(untouched, patch, out)
