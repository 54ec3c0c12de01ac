import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_free_coeffs(rng, n, k_max, scale=1.0):
    return scale * rng.standard_normal((2 * k_max + 1, n))


def random_symmetric_loop(rng, n, k_max, scale=1.0):
    from brakeorbits.loops import FourierLoop, lagrangian_embed

    free = random_free_coeffs(rng, n, k_max, scale)
    return FourierLoop(n, k_max, lagrangian_embed(free))


def random_l2_loop(rng, n, k_max, scale=1.0):
    from brakeorbits.loops import L2Loop

    return L2Loop(n, k_max, scale * rng.standard_normal((2 * k_max + 1, 2 * n)))
