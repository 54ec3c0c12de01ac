"""Loop space: construction, evaluation, projections, pairings, adjoint."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brakeorbits.loops import (
    FourierLoop,
    L2Loop,
    LoopError,
    adjoint_embed,
    apply_n0,
    e_plus,
    evaluate,
    evaluate_at,
    evaluate_velocity,
    inner,
    lagrangian_embed,
    make_loop,
    norm,
    parse_loop,
    project,
    rotation,
    s_allowed_modes,
    s_matrix,
    s_symmetry_project,
    serialize_loop,
)
from conftest import random_l2_loop, random_symmetric_loop


def test_make_loop_single_mode():
    loop = make_loop(1, 1, {1: (0.0, 1.0)})
    assert np.allclose(loop.coefficient(1), [0.0, 1.0])
    assert np.allclose(loop.coefficient(0), 0.0)
    assert np.allclose(loop.coefficient(-1), 0.0)


def test_make_loop_rejects_x_part():
    with pytest.raises(LoopError, match="not in L0"):
        make_loop(1, 1, {1: (1.0, 0.0)})


def test_make_loop_rejects_bad_length():
    with pytest.raises(LoopError, match="length"):
        make_loop(2, 1, {0: (0.0, 1.0)})


def test_constant_loop_norm():
    # single zero mode at (0, 0, 3, 4): |x_0|^2 = 25 and no weighted tail
    loop = make_loop(2, 0, {0: (0.0, 0.0, 3.0, 4.0)})
    assert norm(loop, 0.5) ** 2 == pytest.approx(25.0, rel=1e-15)


def test_evaluate_constant():
    loop = make_loop(1, 0, {0: (0.0, 1.0)})
    traj = evaluate(loop, 8)
    assert np.allclose(traj, np.array([0.0, 1.0]))


def test_evaluate_single_mode_quarter_turn():
    loop = make_loop(1, 1, {1: (0.0, 1.0)})
    traj = evaluate_at(loop, np.array([0.0, 0.25]))
    assert np.allclose(traj[0], [0.0, 1.0], atol=1e-15)
    # e^{pi J / 2} (0, 1) = (-1, 0)
    assert np.allclose(traj[1], [-1.0, 0.0], atol=1e-15)


def test_evaluate_nyquist_guard():
    loop = make_loop(1, 3, {3: (0.0, 1.0)})
    with pytest.raises(LoopError, match="alias"):
        evaluate(loop, 6)


def test_time_reversal_symmetry(rng):
    for n, k_max in [(1, 4), (2, 6), (3, 5)]:
        loop = random_symmetric_loop(rng, n, k_max)
        ts = np.linspace(0.0, 1.0, 4 * k_max, endpoint=False)
        forward = evaluate_at(loop, ts)
        backward = evaluate_at(loop, -ts)
        assert np.max(np.abs(backward - apply_n0(forward))) < 1e-12


def test_projtopology_partition(rng):
    loop = make_loop(1, 2, {-1: (0, 2.0), 0: (0, 3.0), 2: (0, 5.0)})
    plus = project(loop, "plus")
    assert np.allclose(plus.coefficient(2), [0, 5.0])
    assert np.allclose(plus.coefficient(-1), 0.0)
    assert np.allclose(plus.coefficient(0), 0.0)
    total = project(loop, "plus").coeffs + project(loop, "minus").coeffs + project(loop, "zero").coeffs
    assert np.array_equal(total, loop.coeffs)


def test_projections_idempotent_and_orthogonal(rng):
    loop = random_symmetric_loop(rng, 2, 5)
    for sector in ("plus", "minus", "zero"):
        once = project(loop, sector)
        assert np.array_equal(project(once, sector).coeffs, once.coeffs)
    assert inner(project(loop, "plus"), project(loop, "minus"), 0.5) == 0.0
    assert inner(project(loop, "plus"), project(loop, "zero"), 0.5) == 0.0


def test_inner_reference_values():
    x = e_plus(1, 2)
    assert inner(x, x, 0.5) == pytest.approx(2.0 * np.pi, rel=1e-15)
    assert inner(x, x, 0) == pytest.approx(1.0, rel=1e-15)
    y = make_loop(1, 2, {2: (0.0, 1.0)})
    assert inner(y, y, 1) == pytest.approx(8.0 * np.pi, rel=1e-15)


def test_adjoint_embed_zero_mode():
    y = L2Loop(1, 0, np.array([[5.0, 7.0]]))
    out = adjoint_embed(y)
    assert np.allclose(out.coefficient(0), [0.0, 7.0])


def test_adjoint_embed_scaling():
    coeffs = np.zeros((7, 2))
    coeffs[3 + 3] = [0.0, 1.0]
    out = adjoint_embed(L2Loop(1, 3, coeffs))
    assert np.allclose(out.coefficient(3), [0.0, 1.0 / (6.0 * np.pi)])


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("k_max", [4, 16, 64])
def test_adjointness_identity(rng, n, k_max):
    for _ in range(12):
        x = random_symmetric_loop(rng, n, k_max)
        y = random_l2_loop(rng, n, k_max)
        lhs = float(np.sum(x.coeffs * y.coeffs))  # <j(x), y>_0
        rhs = inner(x, adjoint_embed(y), 0.5)
        bound = 1e-10 * (1.0 + norm(x, 0.5) * y.l2_norm)
        assert abs(lhs - rhs) < bound
        assert norm(adjoint_embed(y), 1) <= y.l2_norm * (1 + 1e-12)


def test_parseval_l2(rng):
    for n, k_max in [(1, 8), (2, 5)]:
        loop = random_symmetric_loop(rng, n, k_max)
        traj = evaluate(loop, 2 * k_max + 1)
        time_mean = np.mean(np.sum(traj**2, axis=1))
        assert time_mean == pytest.approx(inner(loop, loop, 0), rel=1e-10)


def _shift_residual(loop, m):
    ts = np.linspace(0.0, 1.0, 4 * loop.k_max + 5, endpoint=False)
    shifted = evaluate_at(loop, ts + 1.0 / m)
    rotated = evaluate_at(loop, ts) @ s_matrix(loop.n, m).T
    return float(np.max(np.abs(shifted - rotated)))


def test_s_projection_mode_selection():
    loop = make_loop(1, 3, {0: (0, 1.0), 1: (0, 1.0), 2: (0, 1.0), 3: (0, 1.0)})
    kept = s_symmetry_project(loop, 2)
    assert np.allclose(kept.coefficient(1), [0, 1.0])
    assert np.allclose(kept.coefficient(3), [0, 1.0])
    assert np.allclose(kept.coefficient(0), 0.0)
    assert np.allclose(kept.coefficient(2), 0.0)


@pytest.mark.parametrize("m,j,kept", [(2, 2, False), (3, 4, True), (2, 1, True), (3, 2, False)])
def test_s_projection_single_mode_oracle(m, j, kept):
    loop = make_loop(1, 5, {j: (0.0, 1.0)})
    out = s_symmetry_project(loop, m)
    if kept:
        assert np.allclose(out.coeffs, loop.coeffs)
        assert _shift_residual(out, m) < 1e-12
    else:
        assert np.allclose(out.coeffs, 0.0)


def test_s_projection_idempotent_and_symmetric(rng):
    for m in (2, 3, 4):
        loop = random_symmetric_loop(rng, 2, 7)
        once = s_symmetry_project(loop, m)
        assert np.array_equal(s_symmetry_project(once, m).coeffs, once.coeffs)
        assert _shift_residual(once, m) < 1e-12


def test_rotation_helper():
    pts = np.array([[0.0, 1.0]])
    out = rotation(np.pi / 2.0, 1, pts)
    assert np.allclose(out, [[-1.0, 0.0]], atol=1e-15)


def test_serialization_round_trip(rng):
    loop = random_symmetric_loop(rng, 2, 6)
    text = serialize_loop(loop)
    back = parse_loop(text)
    assert isinstance(back, FourierLoop)
    assert np.array_equal(back.coeffs, loop.coeffs)

    l2 = random_l2_loop(rng, 1, 4)
    back2 = parse_loop(serialize_loop(l2), symmetric=False)
    assert np.array_equal(back2.coeffs, l2.coeffs)


@settings(max_examples=40, deadline=None)
@given(
    k_max=st.integers(min_value=1, max_value=8),
    m=st.integers(min_value=2, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_s_mask_matches_shift_identity(k_max, m, seed):
    gen = np.random.default_rng(seed)
    mask = s_allowed_modes(k_max, m)
    modes = np.arange(-k_max, k_max + 1)
    free = np.where(mask[:, None], gen.standard_normal((2 * k_max + 1, 1)), 0.0)
    loop = FourierLoop(1, k_max, lagrangian_embed(free))
    assert _shift_residual(loop, m) < 1e-11


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=3),
    k_max=st.integers(min_value=0, max_value=6),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_norm_formula_vs_definition(n, k_max, seed):
    gen = np.random.default_rng(seed)
    free = gen.standard_normal((2 * k_max + 1, n))
    loop = FourierLoop(n, k_max, lagrangian_embed(free))
    modes = np.arange(-k_max, k_max + 1)
    expected = float(np.sum(free[k_max] ** 2))
    expected += 2.0 * np.pi * float(
        np.sum(np.abs(modes)[:, None] * free**2) - 0.0
    )
    assert norm(loop, 0.5) ** 2 == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_velocity_consistency(rng):
    loop = random_symmetric_loop(rng, 1, 5)
    N = 64
    traj = evaluate(loop, N)
    vel = evaluate_velocity(loop, N)
    # spectral differentiation of the sampled trajectory must agree
    freqs = np.fft.fftfreq(N, d=1.0 / N)
    vel_fft = np.real(np.fft.ifft(2j * np.pi * freqs[:, None] * np.fft.fft(traj, axis=0), axis=0))
    assert np.max(np.abs(vel - vel_fft)) < 1e-9
