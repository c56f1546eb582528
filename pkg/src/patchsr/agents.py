"""The three cooperating networks: a spatial manager that scores patch
locations, a temporal manager that votes on stopping, and a patch worker that
picks a per-pixel filter action and gain.

All convolutions are reflect-padded and size-preserving, and the spatial
manager's pooling runs at stride 1, so the whole goal pathway is fully
convolutional: images of any size yield position distributions of matching
length. Only the patch worker requires a fixed input size (the patch).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .actions import ActionKind
from .autodiff import ParamStore, Tensor
from .env import Goal, clamp_crop
from .imaging import ImageGeometryError

SPM_GROUPS = ("spm_backbone", "spm_policy_h", "spm_policy_v", "spm_value")
TPM_GROUPS = ("tpm",)
PW_GROUPS = ("pw_backbone", "pw_policy", "pw_param", "pw_value")
ALL_GROUPS = SPM_GROUPS + TPM_GROUPS + PW_GROUPS

N_ACTIONS = 10


@dataclass(frozen=True)
class NetConfig:
    """Channel widths; defaults keep the total parameter budget near 0.5 MB.

    `idle_bias` is the initial logit advantage of the do-nothing action. A
    mostly-idle starting policy keeps early sampled returns low-variance, so
    the small per-pixel error-decrease signal is not drowned out by the other
    actions' exploration noise. `init_gain` sets where the continuous head's
    sigmoid starts: gentle gains keep repeated filter applications from
    overshooting before the gain policy has adapted.
    """

    backbone_channels: int = 32
    head_channels: int = 16
    tpm_hidden: int = 32
    tpm_pool: int = 16
    policy_blocks: int = 4
    value_convs: int = 4
    idle_bias: float = 3.0
    init_gain: float = 0.2


def _he(rng, shape, fan_in, scale=1.0):
    return rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), size=shape)


def _add_conv(store, rng, group, name, c_out, c_in, k, zero=False):
    w = np.zeros((c_out, c_in, k, k)) if zero else _he(rng, (c_out, c_in, k, k), c_in * k * k)
    store.add(group, f"{name}_w", w)
    store.add(group, f"{name}_b", np.zeros(c_out))


def _add_dense(store, rng, group, name, n_out, n_in, zero=False):
    w = np.zeros((n_out, n_in)) if zero else _he(rng, (n_out, n_in), n_in)
    store.add(group, f"{name}_w", w)
    store.add(group, f"{name}_b", np.zeros(n_out))


def init_params(rng: np.random.Generator, net: NetConfig = NetConfig()) -> ParamStore:
    """Fresh parameter store with all nine groups, seeded from `rng`.

    Every output layer starts at zero, so the initial position and action
    policies are exactly uniform, values are 0, gains and the stop signal sit
    at 0.5. The reward scale here is small (error decreases per step), and a
    neutral start keeps early advantages from being swamped by init noise.
    """
    store = ParamStore()
    c, h = net.backbone_channels, net.head_channels

    _add_conv(store, rng, "spm_backbone", "conv1", c, 1, 3)
    _add_conv(store, rng, "spm_backbone", "conv2", c, c, 3)
    for group in ("spm_policy_h", "spm_policy_v"):
        _add_conv(store, rng, group, "block1", h, c, 1)
        for i in range(2, net.policy_blocks + 1):
            _add_conv(store, rng, group, f"block{i}", h, h, 1)
        _add_conv(store, rng, group, "head", 1, h, 1, zero=True)
    _add_conv(store, rng, "spm_value", "conv1", h, c, 3)
    for i in range(2, net.value_convs + 1):
        _add_conv(store, rng, "spm_value", f"conv{i}", h, h, 3)
    _add_dense(store, rng, "spm_value", "fc1", h, h)
    _add_dense(store, rng, "spm_value", "fc2", 1, h, zero=True)

    _add_dense(store, rng, "tpm", "fc1", net.tpm_hidden, 2 * net.tpm_pool)
    _add_dense(store, rng, "tpm", "fc2", 1, net.tpm_hidden, zero=True)

    _add_conv(store, rng, "pw_backbone", "conv1", c, 1, 3)
    for i in range(2, 5):
        _add_conv(store, rng, "pw_backbone", f"conv{i}", c, c, 3)
    _add_conv(store, rng, "pw_policy", "conv1", h, c, 3)
    _add_conv(store, rng, "pw_policy", "conv2", N_ACTIONS, h, 3, zero=True)
    store.group("pw_policy")["conv2_b"].data[int(ActionKind.DO_NOTHING) - 1] = net.idle_bias
    _add_conv(store, rng, "pw_param", "conv1", h, c, 3)
    _add_conv(store, rng, "pw_param", "conv2", 1, h, 3, zero=True)
    store.group("pw_param")["conv2_b"].data[0] = np.log(net.init_gain / (1.0 - net.init_gain))
    _add_conv(store, rng, "pw_value", "conv1", h, c + 1, 3)
    _add_conv(store, rng, "pw_value", "conv2", 1, h, 3, zero=True)
    return store


def param_count(store: ParamStore) -> int:
    return sum(t.data.size for _, _, t in store.items())


# ---------------------------------------------------------------------------
# Shared layer helpers
# ---------------------------------------------------------------------------

def _conv(group, name, x):
    return ad.conv2d(x, group[f"{name}_w"], group[f"{name}_b"])


def _dense(group, name, x):
    return ad.linear(x, group[f"{name}_w"], group[f"{name}_b"])


def _maxpool_same(x, horizontal_only=False):
    """Window-3 stride-1 max pooling under reflect padding (size preserving)."""
    if horizontal_only:
        return ad.maxpool2d(ad.reflect_pad2d(x, 0, 1), (1, 3), (1, 1))
    return ad.maxpool2d(ad.reflect_pad2d(x, 1, 1), (3, 3), (1, 1))


def _as_batched(images) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1:
        raise ImageGeometryError(f"expected (B, 1, H, W) images, got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Spatial manager
# ---------------------------------------------------------------------------

@dataclass
class SpmForward:
    """Live graph pieces from one spatial-manager evaluation."""

    feats: Tensor
    logits_h: Tensor
    logits_v: Tensor
    g_h: Tensor
    g_v: Tensor
    value: Tensor | None = None


def _layer_count(group, prefix) -> int:
    return sum(1 for k in group if k.startswith(prefix) and k.endswith("_w"))


def _spm_policy_head(group, profile):
    x = profile
    for i in range(1, _layer_count(group, "block") + 1):
        x = _maxpool_same(x, horizontal_only=True)
        x = ad.relu(_conv(group, f"block{i}", x))
    logits = _conv(group, "head", x)  # (B, 1, 1, L)
    b, _, _, length = logits.data.shape
    return ad.reshape(logits, (b, length))


def spm_forward(store: ParamStore, images, with_value: bool = False,
                patch_size: int | None = None) -> SpmForward:
    """Evaluate the spatial manager on a batch of images of any size.

    Returns per-axis position distributions of length W (horizontal) and H
    (vertical). The state value, when requested, is computed from detached
    backbone features so value-loss gradients stay inside the value head.
    """
    x = _as_batched(images)
    if patch_size is not None and min(x.shape[2], x.shape[3]) < patch_size:
        raise ImageGeometryError(
            f"image {x.shape[2]}x{x.shape[3]} smaller than patch {patch_size}"
        )
    g = store.group("spm_backbone")
    hmap = ad.relu(_conv(g, "conv1", Tensor(x)))
    hmap = _maxpool_same(hmap)
    feats = ad.relu(_conv(g, "conv2", hmap))

    hprof, vprof = ad.axis_avg_pool(feats)
    logits_h = _spm_policy_head(store.group("spm_policy_h"), hprof)
    logits_v = _spm_policy_head(store.group("spm_policy_v"), vprof)

    out = SpmForward(
        feats=feats,
        logits_h=logits_h,
        logits_v=logits_v,
        g_h=ad.softmax(logits_h, axis=1),
        g_v=ad.softmax(logits_v, axis=1),
    )
    if with_value:
        out.value = spm_value(store, feats.detach())
    return out


def spm_value(store: ParamStore, feats) -> Tensor:
    """State-value head: stacked convs, one maxpool, global mean, two FCs."""
    g = store.group("spm_value")
    x = feats
    for i in range(1, _layer_count(g, "conv") + 1):
        x = ad.relu(_conv(g, f"conv{i}", x))
    x = ad.maxpool2d(x, (2, 2), (2, 2))
    x = ad.mean(x, axis=(2, 3))
    x = ad.relu(_dense(g, "fc1", x))
    v = _dense(g, "fc2", x)
    return ad.reshape(v, (v.data.shape[0],))


# ---------------------------------------------------------------------------
# Temporal manager
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _pool_matrix(length: int, out_len: int) -> np.ndarray:
    return ad.adaptive_pool_matrix(length, out_len)


def tpm_forward(store: ParamStore, g_h, g_v, pool_len: int = 16) -> Tensor:
    """Continuation probability in (0, 1) from the two goal distributions.

    Each distribution is adaptively average-pooled to `pool_len` bins so the
    MLP accepts goals from images of any size.
    """
    g = store.group("tpm")
    gh = g_h if isinstance(g_h, Tensor) else Tensor(np.atleast_2d(np.asarray(g_h, dtype=np.float64)))
    gv = g_v if isinstance(g_v, Tensor) else Tensor(np.atleast_2d(np.asarray(g_v, dtype=np.float64)))
    mh = Tensor(_pool_matrix(gh.data.shape[1], pool_len))
    mv = Tensor(_pool_matrix(gv.data.shape[1], pool_len))
    pooled = ad.concat([ad.linear(gh, mh), ad.linear(gv, mv)], axis=1)
    hid = ad.relu(_dense(g, "fc1", pooled))
    b = ad.sigmoid(_dense(g, "fc2", hid))
    return ad.reshape(b, (b.data.shape[0],))


# ---------------------------------------------------------------------------
# Patch worker
# ---------------------------------------------------------------------------

@dataclass
class PwForward:
    """Live graph pieces from one patch-worker evaluation.

    `params` is computed from detached features, so its gradient path reaches
    only the continuous head. `value` consumes live features plus the detached
    parameter plane: the critic-training graph.
    """

    feats: Tensor
    log_probs: Tensor
    probs: Tensor
    params: Tensor
    value: Tensor | None = None


def pw_backbone_features(store: ParamStore, patches) -> Tensor:
    x = _as_batched(patches)
    g = store.group("pw_backbone")
    h = ad.relu(_conv(g, "conv1", Tensor(x)))
    h = ad.relu(_conv(g, "conv2", h))
    h = ad.relu(_conv(g, "conv3", h))
    return ad.relu(_conv(g, "conv4", h))


def pw_policy_logits(store: ParamStore, feats) -> Tensor:
    g = store.group("pw_policy")
    h = ad.relu(_conv(g, "conv1", feats))
    return _conv(g, "conv2", h)  # (B, 10, P, P)


def pw_forward(store: ParamStore, patches, with_value: bool = False) -> PwForward:
    feats = pw_backbone_features(store, patches)
    logits = pw_policy_logits(store, feats)
    params = pw_param_head(store, feats.detach())
    out = PwForward(
        feats=feats,
        log_probs=ad.log_softmax(logits, axis=1),
        probs=ad.softmax(logits, axis=1),
        params=params,
    )
    if with_value:
        out.value = pw_value(store, feats, params.detach())
    return out


def pw_param_head(store: ParamStore, feats) -> Tensor:
    """Continuous gain map in (0, 1) from (already detached) features."""
    g = store.group("pw_param")
    h = ad.relu(_conv(g, "conv1", feats))
    return ad.sigmoid(_conv(g, "conv2", h))  # (B, 1, P, P)


def pw_value(store: ParamStore, feats, params) -> Tensor:
    """Per-pixel value map from features plus the parameter plane.

    Callers choose what is detached: the critic trains with live features and
    detached params; the continuous head trains through detached features and
    live params.
    """
    g = store.group("pw_value")
    x = ad.concat([feats, params], axis=1)
    x = ad.relu(_conv(g, "conv1", x))
    return _conv(g, "conv2", x)  # (B, 1, P, P)


# ---------------------------------------------------------------------------
# Sampling rules
# ---------------------------------------------------------------------------

def _sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(probs), u, side="right"), len(probs) - 1))


def select_goal(g_h: np.ndarray, g_v: np.ndarray, patch_size: int,
                height: int, width: int, mode: str = "argmax",
                rng: np.random.Generator | None = None) -> Goal:
    """Pick the crop corner: categorical per axis when sampling, else argmax.

    Argmax ties resolve to the lowest index; coordinates are clamped so the
    patch window fits.
    """
    g_h = np.asarray(g_h, dtype=np.float64)
    g_v = np.asarray(g_v, dtype=np.float64)
    if mode == "sample":
        if rng is None:
            raise ValueError("sampling requires an rng")
        ix = _sample_categorical(g_h, rng)
        iy = _sample_categorical(g_v, rng)
    elif mode == "argmax":
        ix = int(np.argmax(g_h))
        iy = int(np.argmax(g_v))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    y, x = clamp_crop(iy, ix, height, width, patch_size)
    return Goal(g_h=g_h, g_v=g_v, crop_x=x, crop_y=y, index_x=ix, index_y=iy)


def select_actions(probs: np.ndarray, mode: str = "argmax",
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-pixel action choice from (B, 10, P, P) probabilities -> 1..10 map."""
    probs = np.asarray(probs, dtype=np.float64)
    if mode == "argmax":
        return (probs.argmax(axis=1) + 1).astype(np.uint8)
    if mode != "sample":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("sampling requires an rng")
    cum = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1) + probs.shape[2:])
    idx = (u > cum).sum(axis=1)
    return (np.minimum(idx, probs.shape[1] - 1) + 1).astype(np.uint8)
