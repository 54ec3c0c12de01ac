"""Exponential-splitting integrator for the negative action gradient flow.

The flow dx/dt = -grad Phi(x) splits into a mode-diagonal linear part
(contraction e^{-t} on positive modes, expansion e^{t} on negative modes,
frozen zero mode) plus the smoothing nonlinearity grad b.  One step applies
the linear factors exactly and treats the Duhamel integral of grad b by the
midpoint rule, with the midpoint state predicted by an exponential Euler
half-step:

    u      = E(h/2) x + phi1(h/2) grad_b(x)
    x_next = E(h) x + h E(h/2) grad_b(u)

This is second order in h; with grad_b = 0 it reproduces the linear flow to
machine precision mode by mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from brakeorbits.action import grad_b_batch, phi_batch
from brakeorbits.loops import FourierLoop, SpectralEngine, default_samples, get_engine


def mode_rates(modes: np.ndarray) -> np.ndarray:
    """Linear flow rates: -1 on positive modes, +1 on negative, 0 on the zero mode."""
    return -np.sign(modes).astype(float)


def _factors(mu: np.ndarray, dt: np.ndarray):
    """exp(mu dt) and the phi1 integral (e^{mu dt} - 1)/mu, vectorized.

    dt has shape (B,) and mu (K,); outputs broadcast to (B, K, 1).
    """
    arg = dt[:, None] * mu[None, :]
    E = np.exp(arg)
    phi1 = np.where(mu[None, :] == 0.0, dt[:, None], (E - 1.0) / np.where(mu == 0.0, 1.0, mu))
    return E[..., None], phi1[..., None]


def step_batch(free: np.ndarray, dt: np.ndarray | float, H, engine: SpectralEngine,
               mask: np.ndarray | None = None) -> np.ndarray:
    """One exponential-midpoint step for a batch of loops (per-sample dt)."""
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (free.shape[0],))
    mu = mode_rates(engine.modes)
    E_half, phi1_half = _factors(mu, dt / 2.0)
    E_full = E_half * E_half
    k1 = grad_b_batch(free, H, engine, mask=mask)
    u = E_half * free + phi1_half * k1
    k2 = grad_b_batch(u, H, engine, mask=mask)
    out = E_full * free + dt[:, None, None] * E_half * k2
    if mask is not None:
        out = np.where(mask[:, None], out, 0.0)
    return out


def flow_step(x: FourierLoop, dt: float, H) -> FourierLoop:
    """Single-loop step of the descent flow."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    eng = get_engine(x.n, x.k_max, default_samples(x.k_max))
    out = step_batch(x.free_coeffs[None], float(dt), H, eng)[0]
    return x.with_free_coeffs(out)


def flow_to_time(free: np.ndarray, H, engine: SpectralEngine, t_end: float,
                 dt0: float = 1e-2, dt_min: float = 1e-7,
                 mask: np.ndarray | None = None,
                 dt_state: np.ndarray | None = None,
                 return_dt: bool = False):
    """Advance a batch to a common time with monotone adaptive steps.

    Steps that raise Phi are retried at half the step size; the per-sample
    step size can be threaded through consecutive calls via ``dt_state``.
    Returns the terminal coefficients and Phi values (plus the step sizes
    when ``return_dt``).
    """
    B = free.shape[0]
    t = np.zeros(B)
    dt = np.full(B, dt0) if dt_state is None else np.array(dt_state, dtype=float)
    phi = phi_batch(free, H, engine)
    free = free.copy()
    while True:
        active = t < t_end - 1e-14
        if not np.any(active):
            break
        step = np.where(active, np.minimum(dt, t_end - t), 0.0)
        idx = np.flatnonzero(active)
        trial = step_batch(free[idx], step[idx], H, engine, mask=mask)
        phi_trial = phi_batch(trial, H, engine)
        worse = phi_trial > phi[idx] + 1e-12
        retry = idx[worse & (dt[idx] > dt_min)]
        ok = idx[~worse | (dt[idx] <= dt_min)]
        sel = np.isin(idx, ok)
        free[ok] = trial[sel]
        phi[ok] = phi_trial[sel]
        t[ok] += step[ok]
        dt[ok] = np.minimum(dt[ok] * 1.3, dt0)
        dt[retry] = np.maximum(dt[retry] / 2.0, dt_min)
    if return_dt:
        return free, phi, dt
    return free, phi


def reference_flow(x: FourierLoop, H, t_end: float, rtol: float = 1e-12,
                   atol: float = 1e-12) -> FourierLoop:
    """High-accuracy direct integration of dx/dt = -grad Phi(x) (the oracle)."""
    from scipy.integrate import solve_ivp

    from brakeorbits.action import phi_grad_batch

    eng = get_engine(x.n, x.k_max, default_samples(x.k_max))
    shape = x.free_coeffs.shape

    def rhs(_t, y):
        _, grad = phi_grad_batch(y.reshape((1,) + shape), H, eng)
        return -grad.ravel()

    sol = solve_ivp(rhs, (0.0, t_end), x.free_coeffs.ravel(), method="RK45",
                    rtol=rtol, atol=atol, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return x.with_free_coeffs(sol.y[:, -1].reshape(shape))


@dataclass
class FlowTrace:
    """Checkpoint log of a descent run: sup Phi, argmax diagnostics, snapshots."""

    times: list[float] = field(default_factory=list)
    sup_phi: list[float] = field(default_factory=list)
    argmax_grad_norm: list[float] = field(default_factory=list)
    sup_loop_norm: list[float] = field(default_factory=list)
    snapshot_ids: list[int] = field(default_factory=list)
    snapshots: dict[int, FourierLoop] = field(default_factory=dict)
    terminal: FourierLoop | None = None
    refinements: int = 0
    notes: list[str] = field(default_factory=list)

    def record(self, time: float, sup_phi: float, grad_norm: float, loop_norm: float,
               snapshot: FourierLoop | None = None) -> None:
        sid = -1
        if snapshot is not None:
            sid = len(self.snapshots)
            self.snapshots[sid] = snapshot
        self.times.append(float(time))
        self.sup_phi.append(float(sup_phi))
        self.argmax_grad_norm.append(float(grad_norm))
        self.sup_loop_norm.append(float(loop_norm))
        self.snapshot_ids.append(sid)

    @property
    def max_loop_norm(self) -> float:
        return max(self.sup_loop_norm, default=float("nan"))

    def is_monotone(self, slack: float = 1e-12) -> bool:
        sup = self.sup_phi
        return all(sup[i + 1] <= sup[i] + slack for i in range(len(sup) - 1))

    def to_csv(self) -> str:
        lines = ["time,sup_phi,argmax_grad_norm,sup_loop_norm,snapshot_id"]
        for row in zip(self.times, self.sup_phi, self.argmax_grad_norm,
                       self.sup_loop_norm, self.snapshot_ids):
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        return "\n".join(lines) + "\n"
