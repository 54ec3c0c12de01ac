"""Dual action functional on the truncated symmetric loop space.

Phi(x) = a(x) - b(x) with the quadratic part

    a(x) = 1/2 ||x^+||^2 - 1/2 ||x^-||^2 = pi sum_j j |x_j|^2

and the Hamiltonian part b(x) = int_0^1 H(x(t)) dt evaluated by the uniform
rectangle rule, which is exact for trigonometric polynomials below the grid
order.  The gradient with respect to the 1/2-inner product is

    grad Phi(x) = x^+ - x^- - j*(grad H o x),

where the composition grad H o x is sampled on the same grid and transformed
back to Fourier modes; modes above the truncation order are discarded.  With
that convention the computed gradient is the exact gradient of the discrete
functional, so finite-difference checks hold to machine precision.  This
Galerkin truncation of the nonlinearity is the one place where
discretization and differentiation of the continuum functional do not
commute exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from brakeorbits.loops import (
    FourierLoop,
    LoopError,
    SpectralEngine,
    apply_j,
    default_samples,
    get_engine,
)


@dataclass(frozen=True)
class ActionEvaluation:
    a: float
    b: float
    phi: float
    grad: FourierLoop
    grad_norm: float


def _engine_for(x: FourierLoop, num_samples: int | None) -> SpectralEngine:
    N = default_samples(x.k_max) if num_samples is None else num_samples
    if N < default_samples(x.k_max):
        raise LoopError(
            f"num_samples={N} undersamples the nonlinearity; need >= {default_samples(x.k_max)}"
        )
    return get_engine(x.n, x.k_max, N)


# ---------------------------------------------------------------------------
# batched core (free y-part coefficients, shape (B, K, n))
# ---------------------------------------------------------------------------

def a_batch(free: np.ndarray, engine: SpectralEngine) -> np.ndarray:
    weights = np.pi * engine.modes.astype(float)
    return np.einsum("k,bkn->b", weights, free**2)


def b_batch(free: np.ndarray, H, engine: SpectralEngine) -> np.ndarray:
    traj = engine.eval_batch(free)
    return np.mean(H.value(traj), axis=-1)


def phi_batch(free: np.ndarray, H, engine: SpectralEngine) -> np.ndarray:
    return a_batch(free, engine) - b_batch(free, H, engine)


def grad_b_batch(free: np.ndarray, H, engine: SpectralEngine,
                 mask: np.ndarray | None = None) -> np.ndarray:
    """grad b = j*(grad H o x) as free coefficients (B, K, n)."""
    traj = engine.eval_batch(free)
    modes = engine.samples_to_modes(H.gradient(traj))
    out = engine.jstar_free(modes)
    if mask is not None:
        out = np.where(mask[:, None], out, 0.0)
    return out


def phi_grad_batch(free: np.ndarray, H, engine: SpectralEngine,
                   mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    traj = engine.eval_batch(free)
    vals = np.mean(H.value(traj), axis=-1)
    modes = engine.samples_to_modes(H.gradient(traj))
    grad_b = engine.jstar_free(modes)
    sign = np.sign(engine.modes).astype(float)
    grad = sign[:, None] * free - grad_b
    if mask is not None:
        grad = np.where(mask[:, None], grad, 0.0)
    phi = a_batch(free, engine) - vals
    return phi, grad


# ---------------------------------------------------------------------------
# spec operations on single loops
# ---------------------------------------------------------------------------

def action_a(x: FourierLoop) -> float:
    """Quadratic part: half the signed spectral energy, pi sum_j j |x_j|^2."""
    modes = x.modes.astype(float)
    return float(np.pi * np.sum(modes[:, None] * x.free_coeffs**2))


def action_b(x: FourierLoop, H, num_samples: int | None = None) -> float:
    """Rectangle-rule quadrature of H along the evaluated loop."""
    eng = _engine_for(x, num_samples)
    return float(b_batch(x.free_coeffs[None], H, eng)[0])


def phi_and_grad(x: FourierLoop, H, num_samples: int | None = None,
                 mode_mask: np.ndarray | None = None) -> ActionEvaluation:
    """Phi, its parts and its gradient loop in one pass."""
    eng = _engine_for(x, num_samples)
    free = x.free_coeffs[None]
    phi, grad = phi_grad_batch(free, H, eng, mask=mode_mask)
    a_val = float(a_batch(free, eng)[0])
    grad_loop = x.with_free_coeffs(grad[0])
    grad_norm = float(np.sqrt(max(eng.half_norm_sq(grad)[0], 0.0)))
    return ActionEvaluation(
        a=a_val,
        b=float(a_val - phi[0]),
        phi=float(phi[0]),
        grad=grad_loop,
        grad_norm=grad_norm,
    )


def symplectic_action_form(x: FourierLoop, H, num_samples: int | None = None) -> float:
    """Time-domain form of Phi: int { 1/2 <-J x'(t), x(t)> - H(x(t)) } dt.

    Agrees with a(x) - b(x) to quadrature tolerance; the quadratic part is
    exact on the grid because the integrand is a trigonometric polynomial
    below the grid order.
    """
    eng = _engine_for(x, num_samples)
    free = x.free_coeffs[None]
    traj = eng.eval_batch(free)[0]
    vel = eng.velocity_batch(free)[0]
    loop_term = -0.5 * np.sum(apply_j(vel) * traj, axis=-1)
    return float(np.mean(loop_term - H.value(traj)))
