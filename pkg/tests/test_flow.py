"""Descent flow integrator: linear exactness, order, oracle comparison."""

import math

import numpy as np
import pytest

from brakeorbits.action import phi_and_grad
from brakeorbits.flow import flow_step, flow_to_time, reference_flow
from brakeorbits.hamiltonians import PI, HamiltonianModel, builtin, extend
from brakeorbits.loops import default_samples, get_engine, make_loop, norm
from conftest import random_symmetric_loop


def constant_model(n, c):
    return HamiltonianModel(
        n=n,
        value=lambda z: np.full(z.shape[:-1], float(c)),
        gradient=lambda z: np.zeros_like(z),
        grad_lipschitz=0.0,
        name="constant",
    )


@pytest.fixture(scope="module")
def ext_bump():
    return extend(builtin("radial_bump", n=1, m=PI + 0.5), K=1, eps=0.25)


@pytest.fixture(scope="module")
def ext_smooth():
    # wide ramp edges keep the third derivative small, isolating the
    # integrator's own convergence from model stiffness
    model = builtin("radial_bump", n=1, m=PI + 0.5, r0sq=0.05, r1sq=0.9, edge=0.2)
    return extend(model, K=1, eps=0.25)


def test_pure_linear_flow_exact():
    H = constant_model(1, 1.0)
    loop = make_loop(1, 2, {1: (0.0, 1.0), -1: (0.0, 2.0), 0: (0.0, 3.0)})
    dt = 0.37
    out = flow_step(loop, dt, H)
    assert out.coefficient(1)[1] == pytest.approx(math.exp(-dt), rel=1e-15)
    assert out.coefficient(-1)[1] == pytest.approx(2.0 * math.exp(dt), rel=1e-15)
    assert out.coefficient(0)[1] == pytest.approx(3.0, rel=1e-15)


def test_one_step_vs_two_half_steps(rng, ext_bump):
    x = random_symmetric_loop(rng, 1, 8, scale=0.3)
    diffs = []
    for dt in (0.08, 0.04, 0.02):
        one = flow_step(x, dt, ext_bump)
        two = flow_step(flow_step(x, dt / 2, ext_bump), dt / 2, ext_bump)
        diffs.append(norm(one - two, 0.5))
    # local error scales at least quadratically (observed: cubically)
    order1 = math.log2(diffs[0] / diffs[1])

    order2 = math.log2(diffs[1] / diffs[2])
    assert order1 >= 1.9
    assert order2 >= 1.9


def test_terminal_state_tracks_reference(rng, ext_smooth):
    # strict 1e-6 agreement is exercised in the acceptance suite with a
    # much smaller step; here we check the same comparison at test scale
    x = random_symmetric_loop(rng, 1, 6, scale=0.25)
    ref = reference_flow(x, ext_smooth, 1.0)
    steps = 2000
    cur = x
    for _ in range(steps):
        cur = flow_step(cur, 1.0 / steps, ext_smooth)
    assert norm(cur - ref, 0.5) < 5e-3


def test_global_convergence_order(rng, ext_smooth):
    x = random_symmetric_loop(rng, 1, 6, scale=0.25)
    ref = reference_flow(x, ext_smooth, 1.0)
    errs = []
    for steps in (250, 500, 1000):
        cur = x
        for _ in range(steps):
            cur = flow_step(cur, 1.0 / steps, ext_smooth)
        errs.append(norm(cur - ref, 0.5))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    assert min(orders) >= 1.9


def test_flow_to_time_monotone(rng, ext_bump):
    eng = get_engine(1, 8, default_samples(8))
    free = np.stack([random_symmetric_loop(rng, 1, 8, scale=0.4).free_coeffs for _ in range(12)])
    from brakeorbits.action import phi_batch

    phi0 = phi_batch(free, ext_bump, eng)
    out, phi1 = flow_to_time(free, ext_bump, eng, t_end=0.5)
    assert np.all(phi1 <= phi0 + 1e-10)


def test_descent_decreases_phi(rng, ext_bump):
    x = random_symmetric_loop(rng, 1, 8, scale=0.4)
    prev = phi_and_grad(x, ext_bump).phi
    cur = x
    for _ in range(50):
        cur = flow_step(cur, 5e-3, ext_bump)
        now = phi_and_grad(cur, ext_bump).phi
        assert now <= prev + 1e-12
        prev = now
