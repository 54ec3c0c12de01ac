"""Action functional: reference values, gradient exactness, both Phi forms."""

import math

import numpy as np
import pytest

from brakeorbits.action import (
    action_a,
    action_b,
    phi_and_grad,
    symplectic_action_form,
)
from brakeorbits.hamiltonians import PI, HamiltonianModel, builtin, extend
from brakeorbits.loops import e_plus, inner, make_loop, norm, project, zero_loop
from conftest import random_symmetric_loop


def constant_model(n, c):
    return HamiltonianModel(
        n=n,
        value=lambda z: np.full(z.shape[:-1], float(c)),
        gradient=lambda z: np.zeros_like(z),
        grad_lipschitz=0.0,
        name="constant",
    )


def test_action_a_reference_values():
    assert action_a(e_plus(1, 2)) == pytest.approx(PI, rel=1e-15)
    assert action_a(make_loop(1, 1, {0: (0.0, 2.0)})) == 0.0
    assert action_a(make_loop(1, 2, {-2: (0.0, 1.0)})) == pytest.approx(-2.0 * PI, rel=1e-15)


def test_action_a_ignores_zero_mode(rng):
    loop = random_symmetric_loop(rng, 2, 5)
    shifted = loop + make_loop(2, 5, {0: (0, 0, 0.7, -0.2)})
    assert action_a(shifted) == pytest.approx(action_a(loop), rel=1e-12, abs=1e-12)


def test_action_b_quadratic_on_circle():
    H = builtin("quadratic_Q", n=1, K=1, eps=0.0)
    assert action_b(e_plus(1, 4), H) == pytest.approx(PI, rel=1e-13)


def test_action_b_constant_hamiltonian(rng):
    H = constant_model(1, 2.5)
    loop = random_symmetric_loop(rng, 1, 4)
    assert action_b(loop, H) == pytest.approx(2.5, rel=1e-15)


def test_action_b_constant_loop():
    H = builtin("radial_bump", n=1, m=4.0)
    z_star = np.array([0.0, 0.5])
    loop = make_loop(1, 2, {0: z_star})
    assert action_b(loop, H) == pytest.approx(float(H(z_star)), rel=1e-14)


def test_action_b_undersampling_rejected(rng):
    H = builtin("quadratic_Q", n=1)
    loop = random_symmetric_loop(rng, 1, 8)
    with pytest.raises(Exception, match="undersample"):
        action_b(loop, H, num_samples=20)


def test_gradient_vanishes_on_linear_orbit():
    # x(t) = e^{2 pi J t} (0, r) solves the linear system with H = pi |z|^2
    H = builtin("quadratic_Q", n=1, K=1, eps=0.0)
    loop = make_loop(1, 6, {1: (0.0, 0.37)})
    ev = phi_and_grad(loop, H)
    assert ev.grad_norm < 1e-12


def test_zero_loop_with_vanishing_hamiltonian():
    H = builtin("radial_bump", n=1, m=4.0)
    ev = phi_and_grad(zero_loop(1, 4), H)
    assert ev.phi == 0.0
    assert ev.grad_norm == 0.0


def test_gradient_matches_directional_fd(rng):
    model = builtin("radial_bump", n=1, m=PI + 0.5)
    ext = extend(model, K=1, eps=0.25)
    for n, k_max in [(1, 8), (2, 8)]:
        mdl = builtin("radial_bump", n=n, m=PI + 0.5)
        ext_n = extend(mdl, K=1, eps=0.25)
        x = random_symmetric_loop(rng, n, k_max, scale=0.3)
        ev = phi_and_grad(x, ext_n)
        for _ in range(20):
            h = random_symmetric_loop(rng, n, k_max, scale=1.0)
            h = h * (1.0 / norm(h, 0.5))
            step = 1e-5
            plus = phi_and_grad(x + h * step, ext_n).phi
            minus = phi_and_grad(x - h * step, ext_n).phi
            fd = (plus - minus) / (2.0 * step)
            pairing = inner(ev.grad, h, 0.5)
            assert fd == pytest.approx(pairing, rel=1e-5, abs=1e-8)


def test_two_phi_forms_agree(rng):
    model = builtin("radial_bump", n=1, m=PI + 0.5)
    ext = extend(model, K=1, eps=0.25)
    for _ in range(10):
        x = random_symmetric_loop(rng, 1, 16, scale=0.4)
        ev = phi_and_grad(x, ext)
        direct = symplectic_action_form(x, ext)
        assert abs(direct - ev.phi) < 1e-9


def test_symplectic_action_circle_zero_hamiltonian():
    H = constant_model(1, 0.0)
    assert symplectic_action_form(e_plus(1, 4), H) == pytest.approx(PI, rel=1e-12)


def test_symplectic_action_constant_loop():
    H = builtin("radial_bump", n=1, m=4.0)
    z_star = np.array([0.0, 0.4])
    loop = make_loop(1, 2, {0: z_star})
    assert symplectic_action_form(loop, H) == pytest.approx(-float(H(z_star)), rel=1e-13)


def test_grad_b_lipschitz(rng):
    model = builtin("radial_bump", n=1, m=PI + 0.5)
    ext = extend(model, K=1, eps=0.25)
    M = ext.grad_lipschitz
    for _ in range(25):
        x = random_symmetric_loop(rng, 1, 8, scale=0.5)
        y = random_symmetric_loop(rng, 1, 8, scale=0.5)
        gx = phi_and_grad(x, ext)
        gy = phi_and_grad(y, ext)
        # grad b = (x^+ - x^-) - grad Phi
        diff = (project(x, "plus") - project(x, "minus")) - gx.grad
        diff = diff - ((project(y, "plus") - project(y, "minus")) - gy.grad)
        assert norm(diff, 0.5) <= M * norm(x - y, 0.5) * (1.0 + 1e-9)


def test_b_bounded_by_l2_norm(rng):
    model = builtin("radial_bump", n=1, m=PI + 0.5)
    ext = extend(model, K=1, eps=0.25)
    M = ext.grad_lipschitz
    for _ in range(25):
        x = random_symmetric_loop(rng, 1, 8, scale=1.5)
        b = action_b(x, ext)
        assert abs(b) <= 0.5 * M * inner(x, x, 0) + 1e-9
