"""Linking sets and the minimax search for a positive critical value.

The geometry: inside the filled cylinder

    Omega_tau = { x^- + x^0 + s e^+ : ||x^- + x^0|| <= tau, 0 <= s <= tau }

the action functional is <= 0 on the boundary once tau clears an explicit
threshold derived from the lower bound H >= (pi + eps) q_K - gamma, while on
the sphere Gamma_alpha = { x in X^+ : ||x|| = alpha } it stays >= beta > 0
for small alpha because the Hamiltonian part grows at most cubically near
the origin.  Flowing Omega down the action gradient and tracking the sample
supremum therefore traps a critical value c >= beta; the sample attaining
the running supremum hovers near the mountain pass and is polished into a
critical point by a damped Newton iteration on grad Phi = 0.

The flowed surface is discretized by representative rays (random unit
directions of X^- + X^0 at several radii, times an s-grid along e^+, plus
the pure e^+ ray) and refined adaptively near the running maximizer; every
inserted sample is flowed from time zero so that it genuinely lies on the
evolved surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from brakeorbits.action import phi_batch, phi_grad_batch
from brakeorbits.flow import FlowTrace, flow_to_time
from brakeorbits.hamiltonians import PI, ExtendedHamiltonian
from brakeorbits.loops import (
    FourierLoop,
    SpectralEngine,
    default_samples,
    get_engine,
    lagrangian_embed,
    s_allowed_modes,
)


class MinimaxError(RuntimeError):
    """The linking search could not produce a verified candidate."""


class RefinementStall(RuntimeError):
    """Newton polish failed to reach the gradient tolerance."""

    def __init__(self, message: str, best: FourierLoop | None = None,
                 grad_norm: float = math.inf):
        super().__init__(message)
        self.best = best
        self.grad_norm = grad_norm


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

@dataclass
class MinimaxProblem:
    ext: ExtendedHamiltonian
    k_max: int
    tau: float
    alpha: float
    beta: float
    seed: int = 0
    s_order: int | None = None
    num_samples: int | None = None
    # probe set
    n_dirs: int = 64
    s_points: int = 33
    off_r_fracs: tuple = (0.2, 0.6, 1.0)
    off_s_points: int = 5
    # flow control
    dt0: float = 1e-2
    dt_min: float = 1e-6
    check_interval: float = 0.25
    stall_window: float = 1.0
    sup_stall_tol: float = 1e-8
    t_max: float = 40.0
    grad_tol: float = 1e-8
    max_insertions: int = 400

    def __post_init__(self):
        if self.tau <= self.alpha:
            raise MinimaxError(
                f"need tau > alpha for the linking geometry (tau={self.tau}, alpha={self.alpha})"
            )
        if self.beta <= 0:
            raise MinimaxError("need a positive lower level beta on Gamma_alpha")
        if self.num_samples is None:
            self.num_samples = default_samples(self.k_max)

    @property
    def n(self) -> int:
        return self.ext.n

    @property
    def mode_mask(self) -> np.ndarray | None:
        if self.s_order is None:
            return None
        return s_allowed_modes(self.k_max, self.s_order)

    def engine(self) -> SpectralEngine:
        return get_engine(self.n, self.k_max, self.num_samples)

    def e_plus_loop(self) -> FourierLoop:
        from brakeorbits.loops import e_plus

        return e_plus(self.n, self.k_max)


@dataclass
class MinimaxResult:
    candidate: FourierLoop
    c_value: float
    trace: FlowTrace
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers on the coefficient arrays
# ---------------------------------------------------------------------------

def _half_norm(engine: SpectralEngine, free: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(engine.half_norm_sq(free), 0.0))


def _random_unit_dirs(rng, engine: SpectralEngine, count: int, sectors: str,
                      mask: np.ndarray | None) -> np.ndarray:
    """Unit vectors (w.r.t. the 1/2-norm) supported on the requested sectors."""
    modes = engine.modes
    allowed = np.ones_like(modes, dtype=bool) if mask is None else mask.copy()
    if sectors == "minus_zero":
        allowed &= modes <= 0
    elif sectors == "plus":
        allowed &= modes >= 1
    else:
        raise ValueError(sectors)
    if not np.any(allowed):
        raise MinimaxError(f"no admissible modes in sector {sectors}")
    out = rng.standard_normal((count, modes.size, engine.n))
    out = np.where(allowed[:, None], out, 0.0)
    # deterministic axis directions improve coverage of the zero sector
    norms = _half_norm(engine, out)
    return out / norms[:, None, None]


def _axis_dirs(engine: SpectralEngine, mask: np.ndarray | None) -> np.ndarray:
    """+/- coordinate rays of the zero mode (when the sector contains it)."""
    modes = engine.modes
    if mask is not None and not mask[modes == 0][0]:
        return np.zeros((0, modes.size, engine.n))
    k0 = np.flatnonzero(modes == 0)[0]
    out = []
    for i in range(engine.n):
        for sign in (+1.0, -1.0):
            d = np.zeros((modes.size, engine.n))
            d[k0, i] = sign
            out.append(d)
    return np.stack(out)


def vanishing_radius(H, n: int, rng=None, n_dirs: int = 128, n_radii: int = 512,
                     r_max: float = 1.0, tol: float = 1e-13) -> float:
    """Largest sampled ball radius around the origin on which |H| < tol."""
    rng = np.random.default_rng(0) if rng is None else rng
    dirs = rng.standard_normal((n_dirs, 2 * n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.linspace(r_max / n_radii, r_max, n_radii)
    pts = radii[:, None, None] * dirs[None, :, :]
    vals = np.abs(H.value(pts.reshape(-1, 2 * n))).reshape(n_radii, n_dirs)
    bad = np.any(vals > tol, axis=1)
    if bad[0]:
        return 0.0
    first_bad = int(np.argmax(bad)) if np.any(bad) else n_radii
    return float(radii[first_bad - 1])


def sup_embedding_constant(k_max: int) -> float:
    """sup_t |x(t)| <= C ||x||_{1/2} for x in the positive sector, truncated.

    C = sqrt( sum_{j=1}^{k_max} 1 / (2 pi j) ) by Cauchy-Schwarz on the
    coefficient sum.
    """
    return math.sqrt(sum(1.0 / (2.0 * PI * j) for j in range(1, k_max + 1)))


# ---------------------------------------------------------------------------
# linking estimates
# ---------------------------------------------------------------------------

def boundary_samples(problem_or_ext, k_max: int, tau: float, rng,
                     n_dirs: int = 96, n_s: int = 17,
                     mask: np.ndarray | None = None,
                     num_samples: int | None = None) -> np.ndarray:
    """Points of the three boundary faces of Omega_tau (free coefficients)."""
    ext = problem_or_ext
    eng = get_engine(ext.n, k_max, num_samples or default_samples(k_max))
    dirs = np.concatenate([
        _random_unit_dirs(rng, eng, n_dirs, "minus_zero", mask),
        _axis_dirs(eng, mask),
    ])
    k1 = np.flatnonzero(eng.modes == 1)[0]
    s_grid = np.linspace(0.0, tau, n_s)
    batches = []
    # side face: ||x^- + x^0|| = tau, 0 <= s <= tau
    for s in s_grid:
        block = tau * dirs
        block[:, k1, 0] += s
        batches.append(block)
    # lid s = tau and base s = 0, radii spanning the disc
    for s in (0.0, tau):
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            block = frac * tau * dirs
            block[:, k1, 0] += s
            batches.append(block)
    return np.concatenate(batches, axis=0)


def estimate_tau_star(ext: ExtendedHamiltonian, k_max: int, seed: int = 0,
                      s_order: int | None = None,
                      max_doublings: int = 24) -> float:
    """Radius tau* with Phi <= 0 on the sampled boundary of Omega_tau.

    Starts from the explicit bound tau0 = sqrt(gamma / c) with
    c = min(1/2, (pi+eps)/K^2, eps) and doubles until the sampled check
    passes (it normally passes immediately).
    """
    eps = ext.eps
    c = min(0.5, (PI + eps) / ext.q.K**2, eps)
    tau = math.sqrt(ext.gamma / c)
    rng = np.random.default_rng(seed)
    mask = None if s_order is None else s_allowed_modes(k_max, s_order)
    eng = get_engine(ext.n, k_max, default_samples(k_max))
    for _ in range(max_doublings):
        pts = boundary_samples(ext, k_max, tau, rng, mask=mask)
        worst = float(np.max(phi_batch(pts, ext, eng)))
        if worst <= 1e-9:
            return tau
        tau *= 2.0
    raise MinimaxError("no tau with nonpositive boundary action after doubling")


def estimate_alpha_beta(ext: ExtendedHamiltonian, k_max: int, seed: int = 0,
                        s_order: int | None = None,
                        n_check: int = 200) -> tuple[float, float]:
    """Sphere radius alpha and level beta with Phi >= beta > 0 on Gamma_alpha.

    The Hamiltonian vanishes on a ball of radius r around the origin, so any
    alpha with C(k_max) * alpha < r makes the Hamiltonian part vanish on the
    sphere; a sampled cubic bound b <= K ||x||^3 picks the radius maximizing
    alpha^2/2 - K alpha^3 when that is the tighter restriction.
    """
    rng = np.random.default_rng(seed + 1)
    r_v = vanishing_radius(ext, ext.n, rng)
    if r_v <= 0.0:
        raise MinimaxError(
            "the Hamiltonian does not vanish near the origin; displace it first"
        )
    mask = None if s_order is None else s_allowed_modes(k_max, s_order)
    eng = get_engine(ext.n, k_max, default_samples(k_max))
    C = sup_embedding_constant(k_max)
    alpha_support = 0.9 * r_v / C

    # sampled cubic constant: b(x) <= K ||x||^3 on the positive sector
    dirs = _random_unit_dirs(rng, eng, 64, "plus", mask)
    sigmas = np.geomspace(0.25 * alpha_support, 4.0 * alpha_support, 12)
    K_est = 0.0
    for sigma in sigmas:
        traj_free = sigma * dirs
        b_vals = phi_batch(traj_free, ext, eng)
        b_vals = np.einsum("k,bkn->b", np.pi * eng.modes.astype(float), traj_free**2) - b_vals
        K_est = max(K_est, float(np.max(np.abs(b_vals))) / sigma**3)

    alpha = alpha_support if K_est == 0.0 else min(alpha_support, 1.0 / (3.0 * K_est))
    for _ in range(8):
        beta = 0.5 * alpha**2 - K_est * alpha**3
        check = alpha * _random_unit_dirs(rng, eng, n_check, "plus", mask)
        worst = float(np.min(phi_batch(check, ext, eng)))
        if beta > 0.0 and worst >= beta - 1e-9:
            return alpha, beta
        alpha *= 0.5
    raise MinimaxError("no positive lower level found on Gamma_alpha")


def build_problem(ext: ExtendedHamiltonian, k_max: int, seed: int = 0,
                  s_order: int | None = None, **overrides) -> MinimaxProblem:
    """Estimate the linking parameters and assemble a search problem."""
    tau = estimate_tau_star(ext, k_max, seed=seed, s_order=s_order)
    alpha, beta = estimate_alpha_beta(ext, k_max, seed=seed, s_order=s_order)
    return MinimaxProblem(ext=ext, k_max=k_max, tau=tau, alpha=alpha, beta=beta,
                          seed=seed, s_order=s_order, **overrides)


# ---------------------------------------------------------------------------
# Newton polish
# ---------------------------------------------------------------------------

def refine_critical(x0: FourierLoop, ext, grad_tol: float = 1e-10,
                    mode_mask: np.ndarray | None = None,
                    coarse_tol: float = 1.0, max_iter: int = 60,
                    num_samples: int | None = None) -> FourierLoop:
    """Damped Newton iteration on grad Phi = 0 in the truncated space.

    Requires the starting gradient to be below ``coarse_tol`` (the polish is
    a local method); raises RefinementStall when it diverges or stagnates.
    """
    eng = get_engine(x0.n, x0.k_max, num_samples or default_samples(x0.k_max))
    K = 2 * x0.k_max + 1
    n = x0.n
    if mode_mask is None:
        dof = np.arange(K * n)
    else:
        dof = np.flatnonzero(np.repeat(mode_mask, n))
    free = x0.free_coeffs.copy()

    def grad_of(vec: np.ndarray) -> np.ndarray:
        arr = free.copy().reshape(-1)
        arr[dof] = vec
        _, g = phi_grad_batch(arr.reshape(1, K, n), ext, eng, mask=mode_mask)
        return g.reshape(-1)[dof]

    vec = free.reshape(-1)[dof].copy()
    g = grad_of(vec)
    gn = float(np.linalg.norm(g))
    if gn > coarse_tol:
        raise RefinementStall(
            f"initial gradient {gn:.3e} above the coarse threshold {coarse_tol:.3e}",
            best=x0, grad_norm=gn,
        )
    stall = 0
    for _ in range(max_iter):
        if gn < grad_tol:
            out = free.reshape(-1)
            out[dof] = vec
            return x0.with_free_coeffs(out.reshape(K, n))
        # forward-difference Jacobian, all columns in one batched call
        h = 1e-6 * (1.0 + float(np.max(np.abs(vec))))
        batch = np.tile(vec, (dof.size + 1, 1))
        batch[1:] += h * np.eye(dof.size)
        full = np.tile(free.reshape(-1), (dof.size + 1, 1))
        full[:, dof] = batch
        _, grads = phi_grad_batch(full.reshape(-1, K, n), ext, eng, mask=mode_mask)
        grads = grads.reshape(dof.size + 1, -1)[:, dof]
        jac = (grads[1:] - grads[0]) / h
        try:
            delta = np.linalg.solve(jac.T, -g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jac.T, -g, rcond=None)[0]
        step_norm = float(np.linalg.norm(delta))
        if step_norm > 1.0:
            delta *= 1.0 / step_norm
        improved = False
        for lam in (1.0, 0.5, 0.25, 0.1, 0.02):
            g_new = grad_of(vec + lam * delta)
            gn_new = float(np.linalg.norm(g_new))
            if gn_new < gn * (1.0 - 1e-4 * lam) or gn_new < grad_tol:
                vec = vec + lam * delta
                g, gn = g_new, gn_new
                improved = True
                break
        stall = 0 if improved else stall + 1
        if stall >= 3:
            break
    out = free.reshape(-1)
    out[dof] = vec
    best = x0.with_free_coeffs(out.reshape(K, n))
    raise RefinementStall(f"Newton polish stalled at |grad| = {gn:.3e}",
                          best=best, grad_norm=gn)


# ---------------------------------------------------------------------------
# minimax search
# ---------------------------------------------------------------------------

class _SampleSet:
    """Flowed probe samples of Omega with their originating parameters."""

    def __init__(self, problem: MinimaxProblem, rng):
        self.problem = problem
        eng = problem.engine()
        self.eng = eng
        mask = problem.mode_mask
        self.k1 = int(np.flatnonzero(eng.modes == 1)[0])
        dirs = [_random_unit_dirs(rng, eng, problem.n_dirs, "minus_zero", mask)]
        axis = _axis_dirs(eng, mask)
        if axis.size:
            dirs.append(axis)
        self.dirs = list(np.concatenate(dirs))

        params = [(-1, 0.0, s) for s in np.linspace(0.0, problem.tau, problem.s_points)]
        off_s = np.linspace(0.0, problem.tau, problem.off_s_points)
        for d in range(len(self.dirs)):
            for frac in problem.off_r_fracs:
                for s in off_s:
                    params.append((d, frac * problem.tau, s))
        self.params = params
        self.free = np.stack([self._make(p) for p in params])
        self.phi = phi_batch(self.free, problem.ext, eng)
        self.active = np.ones(len(params), dtype=bool)
        self.dt = np.full(len(params), problem.dt0)

    def _make(self, param) -> np.ndarray:
        d, r, s = param
        base = r * self.dirs[d] if d >= 0 else np.zeros((len(self.eng.modes), self.eng.n))
        base = base.copy()
        base[self.k1, 0] += s
        return base

    def insert(self, new_params, t_now: float):
        """Add samples at new surface parameters, flowed from time zero."""
        if not new_params:
            return
        fresh = np.stack([self._make(p) for p in new_params])
        prob = self.problem
        if t_now > 0:
            fresh, phi = flow_to_time(fresh, prob.ext, self.eng, t_now,
                                      dt0=prob.dt0, dt_min=prob.dt_min,
                                      mask=prob.mode_mask)
        else:
            phi = phi_batch(fresh, prob.ext, self.eng)
        self.params.extend(new_params)
        self.free = np.concatenate([self.free, fresh])
        self.phi = np.concatenate([self.phi, phi])
        self.active = np.concatenate([self.active, np.ones(len(new_params), dtype=bool)])

    def argmax_index(self) -> int:
        act = np.flatnonzero(self.active)
        return int(act[np.argmax(self.phi[act])])

    def refinement_params(self, rng, max_new: int = 10):
        """Parameter refinements bracketing the current maximizer.

        The unstable direction of the pass separates neighbouring samples
        exponentially, so each round inserts half- and quarter-points
        between the maximizer and both of its s-neighbours (enough bits per
        round to outpace the divergence), plus radial midpoints and jiggled
        directions for maximizers off the central ray.
        """
        if not np.any(self.active):
            return []
        idx = self.argmax_index()
        d_star, r_star, s_star = self.params[idx]
        existing = {(d, round(r, 12), round(s, 12)) for d, r, s in self.params}
        out = []

        def propose(d, r, s):
            key = (d, round(r, 12), round(s, 12))
            if key not in existing and len(out) < max_new:
                existing.add(key)
                out.append((d, r, s))

        same_ray_s = sorted({s for d, r, s in self.params
                             if d == d_star and abs(r - r_star) < 1e-12})
        i = same_ray_s.index(min(same_ray_s, key=lambda s: abs(s - s_star)))
        for j in (i - 1, i + 1):
            if 0 <= j < len(same_ray_s):
                nb = same_ray_s[j]
                propose(d_star, r_star, 0.5 * (s_star + nb))
                propose(d_star, r_star, 0.75 * s_star + 0.25 * nb)
                propose(d_star, r_star, 0.875 * s_star + 0.125 * nb)
        if d_star >= 0:
            same_dir_r = sorted({r for d, r, s in self.params if d == d_star})
            i = same_dir_r.index(min(same_dir_r, key=lambda r: abs(r - r_star)))
            for j in (i - 1, i + 1):
                if 0 <= j < len(same_dir_r):
                    propose(d_star, 0.5 * (same_dir_r[i] + same_dir_r[j]), s_star)
            # jiggled directions around the maximizer's ray
            base = self.dirs[d_star]
            for _ in range(2):
                cand = base + 0.25 * _random_unit_dirs(rng, self.eng, 1, "minus_zero",
                                                       self.problem.mode_mask)[0]
                cand /= max(_half_norm(self.eng, cand[None])[0], 1e-300)
                self.dirs.append(cand)
                propose(len(self.dirs) - 1, r_star if r_star > 0 else 0.25 * self.problem.tau,
                        s_star)
        return out


def _try_polish(problem: MinimaxProblem, free: np.ndarray, failures: list[str]):
    """Attempt the Newton polish on one state; None when it does not verify."""
    ext, eng, mask = problem.ext, problem.engine(), problem.mode_mask
    loop = FourierLoop(problem.n, problem.k_max, lagrangian_embed(free))
    try:
        polished = refine_critical(loop, ext, grad_tol=problem.grad_tol,
                                   mode_mask=mask,
                                   coarse_tol=10.0 * (1.0 + ext.gamma),
                                   num_samples=problem.num_samples)
    except RefinementStall as exc:
        failures.append(str(exc))
        return None
    phi_val, g = phi_grad_batch(polished.free_coeffs[None], ext, eng, mask=mask)
    c_value = float(phi_val[0])
    if c_value < problem.beta - 1e-6 * max(1.0, problem.beta):
        failures.append(f"polished candidate has value {c_value:.3e} below beta")
        return None
    return polished, c_value, float(_half_norm(eng, g)[0])


def minimax_search(problem: MinimaxProblem) -> MinimaxResult:
    """Descend the probe surface, track the supremum, polish the maximizer.

    The maximizing sample hovers near the pass once the bracketing
    refinement has tightened; the Newton polish is attempted as soon as its
    gradient is moderate, and a polished point is accepted only with
    Phi >= beta (which excludes the trivial and the negative-action
    critical points).
    """
    rng = np.random.default_rng(problem.seed)
    ext = problem.ext
    eng = problem.engine()
    mask = problem.mode_mask
    drop_floor = -max(1.0, 2.0 * ext.gamma)

    densify = 1
    last_error = "sampling collapsed"
    for attempt in range(3):
        samples = _SampleSet(problem, rng)
        trace = FlowTrace()
        t = 0.0
        insertions = 0
        history: list[tuple[float, float]] = []
        failures: list[str] = []
        failed = False
        polish_budget = 24

        def finish(polished, c_value, grad_norm):
            trace.terminal = polished
            return MinimaxResult(
                candidate=polished,
                c_value=c_value,
                trace=trace,
                diagnostics={
                    "sup_history": history,
                    "insertions": insertions,
                    "densify_attempts": densify,
                    "polish_failures": failures,
                    "max_loop_norm": trace.max_loop_norm,
                    "grad_norm": grad_norm,
                },
            )

        while t < problem.t_max:
            act = np.flatnonzero(samples.active)
            flowed, phi = flow_to_time(samples.free[act], ext, eng,
                                       problem.check_interval, dt0=problem.dt0,
                                       dt_min=problem.dt_min, mask=mask)
            samples.free[act] = flowed
            samples.phi[act] = phi
            t += problem.check_interval
            keep = phi > drop_floor
            samples.active[act[~keep]] = False
            if not np.any(samples.active):
                failed = True
                last_error = "all samples dropped below the floor"
                break

            act = np.flatnonzero(samples.active)
            top = act[int(np.argmax(samples.phi[act]))]
            sup = float(samples.phi[top])
            _, g = phi_grad_batch(samples.free[top][None], ext, eng, mask=mask)
            grad_norm = float(_half_norm(eng, g)[0])
            loop_norm = float(np.max(_half_norm(eng, samples.free[act])))
            trace.record(t, sup, grad_norm, loop_norm)
            history.append((t, sup))

            # polish as soon as the maximizer's gradient is moderate
            if sup >= problem.beta - 1e-9 and grad_norm < 1.0 and polish_budget > 0:
                polish_budget -= 1
                hit = _try_polish(problem, samples.free[top], failures)
                if hit is not None:
                    return finish(*hit)

            if sup < problem.beta - 1e-9:
                # emergency polish of the best candidates before declaring
                # the sampling too coarse
                order = act[np.argsort(samples.phi[act])[::-1]][:3]
                for idx in order:
                    hit = _try_polish(problem, samples.free[idx], failures)
                    if hit is not None:
                        return finish(*hit)
                failed = True
                last_error = (
                    f"sampled supremum {sup:.3e} fell below beta = {problem.beta:.3e}"
                )
                break

            olds = [s for (tt, s) in history if tt <= t - problem.stall_window]
            stable = bool(olds) and abs(olds[-1] - sup) <= problem.sup_stall_tol * max(1.0, abs(sup))
            if stable:
                break
            if insertions < problem.max_insertions:
                new_params = samples.refinement_params(rng)
                samples.insert(new_params, t)
                insertions += len(new_params)
                trace.refinements = insertions

        if not failed:
            # final polish pass over the best distinct candidates
            act = np.flatnonzero(samples.active)
            order = act[np.argsort(samples.phi[act])[::-1]]
            chosen: list[int] = []
            for idx in order:
                if len(chosen) >= 6:
                    break
                if all(_half_norm(eng, (samples.free[idx] - samples.free[j])[None])[0] > 1e-6
                       for j in chosen):
                    chosen.append(int(idx))
            for idx in chosen:
                hit = _try_polish(problem, samples.free[idx], failures)
                if hit is not None:
                    return finish(*hit)
            last_error = "gradient refinement failed: " + "; ".join(failures[-4:])

        problem.n_dirs *= 2
        problem.s_points = 2 * problem.s_points - 1
        densify += 1

    raise MinimaxError(f"minimax search failed after {densify - 1} attempts: {last_error}")
