import numpy as np
import pytest

from patchsr.actions import apply_actions
from patchsr.env import (
    EpisodeState,
    Goal,
    RewardRecord,
    clamp_crop,
    crop_patch,
    discounted_return,
    goal_from_argmax,
    inner_reward,
    outer_reward,
    paste_patch,
    tpm_label,
)
from patchsr.imaging import ImageGeometryError


def one_hot(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def make_state(rng, size=48, patch=24, goal_at=(0, 0)):
    g = goal_from_argmax(
        one_hot(size, goal_at[1]), one_hot(size, goal_at[0]), patch, size, size
    )
    return EpisodeState(
        current=rng.random((size, size)),
        hr=rng.random((size, size)),
        goal=g,
        patch_size=patch,
    )


# ---------------------------------------------------------------------------
# Goals, crop, paste
# ---------------------------------------------------------------------------

def test_goal_validates_distributions():
    with pytest.raises(ValueError):
        Goal(g_h=np.array([0.5, 0.6]), g_v=np.array([1.0]), crop_x=0, crop_y=0)


def test_goal_map_rank1_and_argmax(rng):
    g_h = rng.random(12)
    g_h /= g_h.sum()
    g_v = rng.random(8)
    g_v /= g_v.sum()
    goal = goal_from_argmax(g_h, g_v, patch=4, height=8, width=12)
    gmap = goal.map()
    assert gmap.shape == (8, 12)
    np.testing.assert_allclose(gmap, np.outer(g_v, g_h), atol=1e-15)
    y, x = np.unravel_index(np.argmax(gmap), gmap.shape)
    assert (y, x) == (np.argmax(g_v), np.argmax(g_h))


def test_crop_at_origin(rng):
    st = make_state(rng, goal_at=(0, 0))
    cur, hr = crop_patch(st)
    np.testing.assert_array_equal(cur, st.current[:24, :24])
    np.testing.assert_array_equal(hr, st.hr[:24, :24])


def test_crop_clamped_to_fit(rng):
    st = make_state(rng, goal_at=(47, 47))
    assert (st.goal.crop_y, st.goal.crop_x) == (24, 24)
    cur, _ = crop_patch(st)
    np.testing.assert_array_equal(cur, st.current[24:, 24:])


def test_uniform_goal_tie_breaks_to_origin():
    g = goal_from_argmax(np.full(48, 1 / 48), np.full(48, 1 / 48), 24, 48, 48)
    assert (g.crop_y, g.crop_x) == (0, 0)


def test_clamp_crop_bounds():
    assert clamp_crop(-3, 100, 48, 48, 24) == (0, 24)


def test_paste_crop_roundtrip(rng):
    st = make_state(rng, goal_at=(10, 5))
    cur, _ = crop_patch(st)
    st2 = paste_patch(st, cur)
    np.testing.assert_array_equal(st2.current, st.current)


def test_paste_zeros_touches_only_window(rng):
    st = EpisodeState(
        current=np.ones((4, 4)),
        hr=np.ones((4, 4)),
        goal=goal_from_argmax(one_hot(4, 0), one_hot(4, 0), 2, 4, 4),
        patch_size=2,
    )
    st2 = paste_patch(st, np.zeros((2, 2)))
    assert st2.current.sum() == 12.0
    assert (st2.current[:2, :2] == 0).all()


def test_paste_then_recrop_returns_patch(rng):
    st = make_state(rng, goal_at=(7, 31))
    patch = rng.random((24, 24))
    st2 = paste_patch(st, patch)
    cur, _ = crop_patch(st2)
    np.testing.assert_array_equal(cur, patch)


def test_paste_rejects_wrong_size(rng):
    st = make_state(rng)
    with pytest.raises(ImageGeometryError):
        paste_patch(st, np.zeros((23, 24)))


def test_state_rejects_undersized_image(rng):
    with pytest.raises(ImageGeometryError):
        EpisodeState(current=np.zeros((16, 16)), hr=np.zeros((16, 16)), patch_size=24)


# ---------------------------------------------------------------------------
# Rewards, returns, labels
# ---------------------------------------------------------------------------

def test_inner_reward_next_equals_hr(rng):
    prev = rng.random((6, 6))
    hr = rng.random((6, 6))
    rec = inner_reward(prev, hr, hr)
    np.testing.assert_allclose(rec.pixel_map, np.abs(prev - hr), atol=1e-15)
    assert (rec.pixel_map >= 0).all()


def test_inner_reward_no_change_is_zero(rng):
    prev = rng.random((6, 6))
    rec = inner_reward(prev, prev, rng.random((6, 6)))
    assert not rec.pixel_map.any()
    assert rec.scalar == 0.0


def test_inner_reward_single_pixel_arithmetic():
    rec = inner_reward(np.array([[0.5]]), np.array([[0.6]]), np.array([[1.0]]))
    assert rec.pixel_map[0, 0] == pytest.approx(0.1, abs=1e-12)


def test_reward_record_scalar_is_mean(rng):
    m = rng.normal(size=(5, 5))
    rec = RewardRecord.from_map(m)
    assert rec.scalar == pytest.approx(m.mean(), abs=1e-12)


def test_outer_reward_masked_mean_identity(rng):
    prev = rng.random((48, 48))
    hr = rng.random((48, 48))
    nxt = prev.copy()
    patch = rng.random((24, 24))
    nxt[8 : 8 + 24, 16 : 16 + 24] = patch
    inner = inner_reward(prev[8:32, 16:40], patch, hr[8:32, 16:40])
    outer = outer_reward(prev, nxt, hr)
    assert outer.scalar == pytest.approx(inner.scalar * (24 * 24) / (48 * 48), abs=1e-12)


def test_discounted_return_geometric():
    assert discounted_return([1.0, 1.0, 1.0], 0.5)[0] == pytest.approx(1.75)


def test_discounted_return_single():
    assert discounted_return([0.3], 0.9) == [pytest.approx(0.3)]


def test_discounted_return_direct_eval():
    rs = [0.1, -0.2, 0.4]
    out = discounted_return(rs, 0.5)
    assert out[0] == pytest.approx(0.1 - 0.1 + 0.1, abs=1e-12)
    assert out[1] == pytest.approx(-0.2 + 0.2, abs=1e-12)
    assert out[2] == pytest.approx(0.4, abs=1e-12)


def test_discounted_return_on_maps(rng):
    maps = [rng.normal(size=(3, 3)) for _ in range(3)]
    out = discounted_return(maps, 0.5)
    np.testing.assert_allclose(out[0], maps[0] + 0.5 * maps[1] + 0.25 * maps[2], atol=1e-12)


def test_discounted_return_rejects_empty():
    with pytest.raises(ValueError):
        discounted_return([], 0.5)


def test_tpm_label_rules():
    assert tpm_label([0.1, 0.2, -0.05]) == 1
    assert tpm_label([-0.1, 0.0, 0.0]) == 0
    assert tpm_label([0.0, 0.0, 0.0]) == 0


# ---------------------------------------------------------------------------
# Telescoping and isolation properties
# ---------------------------------------------------------------------------

def random_episode_rollout(rng, T=3):
    """Apply T random action maps to a random patch, collecting rewards."""
    patch = rng.random((16, 16))
    hr = rng.random((16, 16))
    start = patch.copy()
    rewards = []
    for _ in range(T):
        actions = rng.integers(1, 11, size=(16, 16))
        params = rng.random((16, 16))
        nxt = apply_actions(patch, actions, params)
        rewards.append(inner_reward(patch, nxt, hr))
        patch = nxt
    return start, patch, hr, rewards


def test_inner_telescoping(rng):
    for _ in range(20):
        start, end, hr, rewards = random_episode_rollout(rng)
        total = sum(r.scalar for r in rewards)
        expected = np.abs(start - hr).mean() - np.abs(end - hr).mean()
        assert total == pytest.approx(expected, abs=1e-9)


def test_reward_sign_iff_error_decreased(rng):
    for _ in range(20):
        start, end, hr, rewards = random_episode_rollout(rng, T=1)
        decreased = np.abs(end - hr).mean() < np.abs(start - hr).mean()
        assert (rewards[0].scalar > 0) == decreased


def test_outer_telescoping_and_isolation(rng):
    img = rng.random((48, 48))
    hr = rng.random((48, 48))
    st = EpisodeState(current=img, hr=hr, patch_size=24)
    outer_rewards = []
    for n in range(4):
        gh = np.zeros(48)
        gv = np.zeros(48)
        gh[rng.integers(48)] = 1.0
        gv[rng.integers(48)] = 1.0
        st.goal = goal_from_argmax(gh, gv, 24, 48, 48)
        cur, hr_patch = crop_patch(st)
        before = st.current.copy()
        for _ in range(3):
            cur = apply_actions(cur, rng.integers(1, 11, size=(24, 24)), rng.random((24, 24)))
        st = paste_patch(st, cur)
        outer_rewards.append(outer_reward(before, st.current, hr).scalar)
        # pixels outside the goal window are untouched this loop
        mask = np.ones((48, 48), bool)
        y, x = st.goal.crop_y, st.goal.crop_x
        mask[y : y + 24, x : x + 24] = False
        np.testing.assert_array_equal(st.current[mask], before[mask])
    expected = np.abs(img - hr).mean() - np.abs(st.current - hr).mean()
    assert sum(outer_rewards) == pytest.approx(expected, abs=1e-9)
