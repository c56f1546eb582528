import numpy as np
import pytest

from patchsr.actions import (
    N_ACTIONS,
    N_PARAMETERIZED,
    PARAMETERIZED,
    STEP_1_255,
    ActionKind,
    LAPLACE_KERNEL,
    SOBEL_DOWN_KERNEL,
    SOBEL_LEFT_KERNEL,
    SOBEL_RIGHT_KERNEL,
    SOBEL_UP_KERNEL,
    all_responses,
    apply_actions,
    filter_response,
    smoothing_kernel,
)

import oracles


def test_action_space_shape():
    assert N_ACTIONS == 10
    assert N_PARAMETERIZED == 6
    assert ActionKind.DO_NOTHING not in PARAMETERIZED
    assert ActionKind.GAUSSIAN not in PARAMETERIZED
    assert ActionKind.ADDITION not in PARAMETERIZED
    assert ActionKind.SUBTRACTION not in PARAMETERIZED
    assert set(int(a) for a in ActionKind) == set(range(1, 11))


def test_classical_kernels():
    np.testing.assert_array_equal(
        SOBEL_RIGHT_KERNEL, [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    )
    np.testing.assert_array_equal(SOBEL_LEFT_KERNEL, -SOBEL_RIGHT_KERNEL)
    np.testing.assert_array_equal(SOBEL_DOWN_KERNEL, SOBEL_RIGHT_KERNEL.T)
    np.testing.assert_array_equal(SOBEL_UP_KERNEL, -SOBEL_RIGHT_KERNEL.T)
    np.testing.assert_array_equal(LAPLACE_KERNEL, [[0, 1, 0], [1, -4, 1], [0, 1, 0]])


def test_do_nothing_zero_residual(rng):
    patch = rng.random((6, 6))
    assert not filter_response(patch, ActionKind.DO_NOTHING).any()


def test_addition_constant_residual(rng):
    patch = rng.random((5, 7))
    np.testing.assert_array_equal(
        filter_response(patch, ActionKind.ADDITION), np.full((5, 7), STEP_1_255)
    )
    np.testing.assert_array_equal(
        filter_response(patch, ActionKind.SUBTRACTION), np.full((5, 7), -STEP_1_255)
    )


def test_sobel_on_ramp_matches_bruteforce():
    ramp = np.tile(np.linspace(0.0, 1.0, 8), (8, 1))
    resp = filter_response(ramp, ActionKind.SOBEL_LEFT)
    expected = oracles.conv2d_loop(ramp, np.asarray([[1, 0, -1], [2, 0, -2], [1, 0, -1]], float))
    np.testing.assert_allclose(resp, expected, atol=1e-12)


def test_all_fixed_kernels_match_bruteforce(rng):
    kernels = {
        ActionKind.SOBEL_LEFT: SOBEL_LEFT_KERNEL,
        ActionKind.SOBEL_RIGHT: SOBEL_RIGHT_KERNEL,
        ActionKind.SOBEL_UP: SOBEL_UP_KERNEL,
        ActionKind.SOBEL_DOWN: SOBEL_DOWN_KERNEL,
        ActionKind.LAPLACE: LAPLACE_KERNEL,
    }
    patch = rng.random((9, 9))
    for kind, kernel in kernels.items():
        np.testing.assert_allclose(
            filter_response(patch, kind), oracles.conv2d_loop(patch, kernel), atol=1e-12
        )
    gk = smoothing_kernel()
    np.testing.assert_allclose(
        filter_response(patch, ActionKind.GAUSSIAN),
        oracles.conv2d_loop(patch, gk) - patch,
        atol=1e-12,
    )
    np.testing.assert_allclose(
        filter_response(patch, ActionKind.SHARP),
        patch - oracles.conv2d_loop(patch, gk),
        atol=1e-12,
    )


def test_apply_do_nothing_identity(rng):
    patch = rng.random((6, 6))
    actions = np.full((6, 6), int(ActionKind.DO_NOTHING))
    out = apply_actions(patch, actions, rng.random((6, 6)))
    assert (out == patch).all()


def test_apply_addition_on_half_gray():
    patch = np.full((4, 4), 0.5)
    actions = np.full((4, 4), int(ActionKind.ADDITION))
    out = apply_actions(patch, actions, np.zeros((4, 4)))
    np.testing.assert_allclose(out, 0.5 + STEP_1_255, atol=1e-15)


def test_apply_mixed_sharp_gaussian_matches_oracle(rng):
    # blurred step edge
    step = np.zeros((8, 8))
    step[:, 4:] = 1.0
    patch = np.clip(oracles.conv2d_loop(step, oracles.gaussian_kernel_loop(1.0, 3)), 0, 1)
    actions = np.full((8, 8), int(ActionKind.SHARP))
    actions[:, 4:] = int(ActionKind.GAUSSIAN)
    params = np.ones((8, 8))
    out = apply_actions(patch, actions, params)

    smoothed = oracles.conv2d_loop(patch, oracles.gaussian_kernel_loop(0.5, 5))
    expected_left = np.clip(patch + (patch - smoothed), 0, 1)[:, :4]
    expected_right = np.clip(smoothed, 0, 1)[:, 4:]
    np.testing.assert_allclose(out[:, :4], expected_left, atol=1e-12)
    np.testing.assert_allclose(out[:, 4:], expected_right, atol=1e-12)


def test_locality_single_pixel_change(rng):
    patch = rng.random((6, 6))
    params = rng.random((6, 6))
    actions = np.full((6, 6), int(ActionKind.DO_NOTHING))
    base = apply_actions(patch, actions, params)
    actions2 = actions.copy()
    actions2[3, 2] = int(ActionKind.LAPLACE)
    out = apply_actions(patch, actions2, params)
    diff = out != base
    assert diff.sum() <= 1
    assert diff[3, 2] or out[3, 2] == base[3, 2]


def test_gain_zero_equals_do_nothing(rng):
    patch = rng.random((5, 5))
    params = np.zeros((5, 5))
    for kind in PARAMETERIZED:
        actions = np.full((5, 5), int(kind))
        out = apply_actions(patch, actions, params)
        assert (out == patch).all()


def test_gaussian_never_increases_total_variation(rng):
    def tv(x):
        return np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()

    actions = np.full((16, 16), int(ActionKind.GAUSSIAN))
    params = np.zeros((16, 16))
    for _ in range(25):
        patch = rng.random((16, 16))
        out = apply_actions(patch, actions, params)
        assert tv(out) <= tv(patch) + 1e-12


def test_clamp_closure(rng):
    patch = rng.random((8, 8))
    actions = rng.integers(1, 11, size=(8, 8))
    params = rng.random((8, 8))
    out = apply_actions(patch, actions, params)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_apply_rejects_bad_inputs(rng):
    patch = rng.random((4, 4))
    with pytest.raises(ValueError):
        apply_actions(patch, np.zeros((4, 4)), np.zeros((4, 4)))  # index 0 invalid
    with pytest.raises(ValueError):
        apply_actions(patch, np.full((4, 5), 10), np.zeros((4, 5)))  # shape mismatch
    with pytest.raises(ValueError):
        apply_actions(patch, np.full((4, 4), 10), np.full((4, 4), 1.5))  # p out of range


def test_all_responses_stacking(rng):
    patch = rng.random((5, 5))
    stack = all_responses(patch)
    assert stack.shape == (10, 5, 5)
    for kind in ActionKind:
        np.testing.assert_array_equal(stack[kind - 1], filter_response(patch, kind))
