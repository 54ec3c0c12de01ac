"""Hamiltonian models, admissibility checks and the quadratic-at-infinity extension.

A model packages a vectorized value/gradient pair on R^{2n} together with the
metadata the orbit pipeline needs: the plateau value reached outside a
compact set, where the function vanishes, a Lipschitz bound for the gradient
and the symmetry flags (invariance under N0(x, y) = (-x, y) and, optionally,
under the cyclic rotation S = e^{2 pi J / m}).

``extend`` glues a compactly supported model to a function of the weighted
quadratic form q_K so that the result grows exactly like (pi + eps) q_K far
out.  The radial profile used for the gluing is the piecewise polynomial

    f(s) = m                                  s <= 1
    f(s) = m + g1 (2 u^3 - u^4)               1 < s < s_inf,  u = (s-1)/L
    f(s) = (pi + eps) s                       s >= s_inf

with g1 = m - (pi + eps), L = 2 g1 / (pi + eps) and s_inf = 1 + L.  This is
the unique low-degree ramp that is C^2 at both knots, strictly increasing
inside, satisfies 0 < f' <= pi + eps, and stays on or above the line
(pi + eps) s until it merges with it tangentially.  In particular
f >= (pi + eps) s everywhere, so the extended function satisfies
H >= (pi + eps) q_K - gamma with gamma = pi + eps coming from the bounded
region alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from brakeorbits.loops import apply_n0, s_matrix

PI = math.pi


class ModelError(ValueError):
    """Invalid Hamiltonian model construction or use."""


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HamiltonianModel:
    """Evaluatable Hamiltonian with gradient and pipeline metadata.

    value / gradient accept arrays of shape (..., 2n) and are vectorized over
    the leading axes.  ``plateau`` is the constant value taken outside the
    ball of radius ``support_radius`` (None when the model has no plateau);
    ``vanish_radius`` is a ball radius around the origin on which the model
    is identically zero (0.0 when there is none).
    """

    n: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    grad_lipschitz: float
    plateau: float | None = None
    n0_invariant: bool = True
    s_order: int | None = None
    vanish_radius: float = 0.0
    support_radius: float = math.inf
    name: str = "custom"
    params: dict = field(default_factory=dict)
    domain: str = "plane"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.value(np.asarray(points, dtype=float))

    def grad(self, points: np.ndarray) -> np.ndarray:
        return self.gradient(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class QuadraticForm:
    """q_K(z) = (x_1^2 + y_1^2) + K^{-2} sum_{j>=2} (x_j^2 + y_j^2)."""

    n: int
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ModelError("scale K must be a positive integer")

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n, 1.0 / self.K**2)
        w[0] = 1.0
        return np.concatenate([w, w])

    def value(self, points: np.ndarray) -> np.ndarray:
        return np.sum(self.weights * np.asarray(points, dtype=float) ** 2, axis=-1)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return 2.0 * self.weights * np.asarray(points, dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.value(points)

    def inside(self, points: np.ndarray) -> np.ndarray:
        return self.value(points) < 1.0


# ---------------------------------------------------------------------------
# extension profile and extended Hamiltonian
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtensionProfile:
    """The C^2 ramp f joining the plateau m to the line (pi + eps) s."""

    m: float
    eps: float

    def __post_init__(self):
        if self.m <= PI + self.eps:
            raise ModelError(
                f"plateau m={self.m} must exceed pi + eps = {PI + self.eps}"
            )

    @property
    def gap(self) -> float:
        return self.m - (PI + self.eps)

    @property
    def ramp_length(self) -> float:
        return 2.0 * self.gap / (PI + self.eps)

    @property
    def s_inf(self) -> float:
        return 1.0 + self.ramp_length

    def f(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = np.clip((s - 1.0) / self.ramp_length, 0.0, 1.0)
        ramp = self.m + self.gap * (2.0 * u**3 - u**4)
        line = (PI + self.eps) * s
        return np.where(s <= 1.0, self.m, np.where(s >= self.s_inf, line, ramp))

    def df(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = np.clip((s - 1.0) / self.ramp_length, 0.0, 1.0)
        ramp = (self.gap / self.ramp_length) * (6.0 * u**2 - 4.0 * u**3)
        return np.where(s <= 1.0, 0.0, np.where(s >= self.s_inf, PI + self.eps, ramp))

    def d2f(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = np.clip((s - 1.0) / self.ramp_length, 0.0, 1.0)
        ramp = (self.gap / self.ramp_length**2) * (12.0 * u - 12.0 * u**2)
        return np.where((s <= 1.0) | (s >= self.s_inf), 0.0, ramp)


@dataclass(frozen=True)
class ExtendedHamiltonian:
    """Model glued to f(q_K) outside the sublevel set {q_K < 1}."""

    base: HamiltonianModel
    q: QuadraticForm
    eps: float
    profile: ExtensionProfile
    gamma: float

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def plateau(self) -> float:
        return self.base.plateau

    @property
    def vanish_radius(self) -> float:
        return self.base.vanish_radius

    @property
    def far_radius(self) -> float:
        """Beyond this Euclidean radius the function equals (pi+eps) q_K."""
        return self.q.K * math.sqrt(self.profile.s_inf)

    @property
    def grad_lipschitz(self) -> float:
        s = np.linspace(1.0, self.profile.s_inf, 513)
        outer = float(np.max(2.0 * self.profile.df(s) + 4.0 * s * np.abs(self.profile.d2f(s))))
        return max(self.base.grad_lipschitz, outer, 2.0 * (PI + self.eps))

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        qv = self.q.value(points)
        return np.where(qv < 1.0, self.base.value(points), self.profile.f(qv))

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        qv = self.q.value(points)
        outer = self.profile.df(qv)[..., None] * self.q.gradient(points)
        return np.where((qv < 1.0)[..., None], self.base.gradient(points), outer)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.value(points)


def extend(H: HamiltonianModel, K: int, eps: float) -> ExtendedHamiltonian:
    """Glue a compactly supported model to the quadratic form at infinity.

    Requires m(H) > pi + eps and the model to sit at its plateau on a collar
    just inside the boundary of {q_K < 1}.
    """
    if H.plateau is None:
        raise ModelError("extension needs a model with a plateau value")
    if eps <= 0:
        raise ModelError("eps must be positive")
    profile = ExtensionProfile(H.plateau, eps)
    q = QuadraticForm(H.n, K)

    # the model must already be constant near the gluing locus; since
    # q_K <= |z|^2 every point of the shell {q_K = level} has |z|^2 >= level,
    # so the collar must start above the model's support radius
    if not math.isfinite(H.support_radius) or H.support_radius**2 >= 0.999:
        raise ModelError("model support reaches the gluing locus q_K = 1")
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((256, 2 * H.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lo = max(0.5 * (H.support_radius**2 + 1.0), 0.99 * 1.0 - 0.01)
    for level in np.linspace(lo, 0.9999, 6):
        # points with q_K exactly at `level`: scale along each direction
        scale = np.sqrt(level / q.value(dirs))
        pts = scale[:, None] * dirs
        if np.max(np.abs(H.value(pts) - H.plateau)) > 1e-10 * (1.0 + abs(H.plateau)):
            raise ModelError(
                "model is not locally constant near the gluing locus q_K = 1"
            )

    # H >= 0 and q_K < 1 inside, f >= (pi+eps)s outside: gamma = pi + eps
    gamma = PI + eps
    return ExtendedHamiltonian(base=H, q=q, eps=eps, profile=profile, gamma=gamma)


# ---------------------------------------------------------------------------
# scaled / translated view used by the pipeline
# ---------------------------------------------------------------------------

def scaled_model(H: HamiltonianModel, R: float, z0: np.ndarray | None = None) -> HamiltonianModel:
    """G(w) = H(R w + z0) / R^2: the symplectically rescaled (and shifted) model.

    z0 must lie in the Lagrangian plane {0} x R^n so that the N0 symmetry
    survives; cyclic symmetry survives only for z0 = 0.
    """
    n = H.n
    z0 = np.zeros(2 * n) if z0 is None else np.asarray(z0, dtype=float)
    if z0.shape != (2 * n,):
        raise ModelError("translation vector has wrong dimension")
    if np.any(z0[:n] != 0.0):
        raise ModelError("translation vector must lie in the Lagrangian plane")
    shift = float(np.linalg.norm(z0))

    def value(points):
        return H.value(R * points + z0) / R**2

    def gradient(points):
        return H.gradient(R * points + z0) / R

    return HamiltonianModel(
        n=n,
        value=value,
        gradient=gradient,
        grad_lipschitz=H.grad_lipschitz,
        plateau=None if H.plateau is None else H.plateau / R**2,
        n0_invariant=H.n0_invariant,
        s_order=H.s_order if shift == 0.0 else None,
        vanish_radius=(H.vanish_radius / R) if shift == 0.0 else 0.0,
        support_radius=(H.support_radius + shift) / R,
        name=H.name,
        params={**H.params, "rescale": R, "shift": z0.tolist()},
        domain=H.domain,
    )


# ---------------------------------------------------------------------------
# built-in model library
# ---------------------------------------------------------------------------

def _smoothstep(u):
    return 3.0 * u**2 - 2.0 * u**3


def _smoothstep_int(u):
    return u**3 - 0.5 * u**4


@dataclass(frozen=True)
class RadialRamp:
    """C^2 profile h on s = |z|^2 rising 0 -> m with a flat-topped derivative.

    h' climbs from 0 to ``peak`` over [s0, s0+w] (cubic smoothstep), stays at
    ``peak``, and descends over [s1-w, s1]; the peak is m / (s1 - s0 - w), so
    h(s1) = m exactly and the maximal slope is the peak with no overshoot.
    """

    m: float
    s0: float
    s1: float
    w: float

    def __post_init__(self):
        if not (0.0 < self.s0 < self.s1) or self.w <= 0 or 2.0 * self.w > self.s1 - self.s0:
            raise ModelError("radial ramp needs 0 < s0 < s1 and 0 < 2w <= s1 - s0")

    @property
    def peak(self) -> float:
        return self.m / (self.s1 - self.s0 - self.w)

    def h(self, s):
        s = np.asarray(s, dtype=float)
        u = np.clip((s - self.s0) / self.w, 0.0, 1.0)
        v = np.clip((self.s1 - s) / self.w, 0.0, 1.0)
        rise = self.w * _smoothstep_int(u)
        plateau_len = np.clip(s - self.s0 - self.w, 0.0, self.s1 - self.s0 - 2.0 * self.w)
        fall_gain = self.w * (0.5 - _smoothstep_int(v))
        area = rise + plateau_len + np.where(s > self.s1 - self.w, fall_gain, 0.0)
        return self.peak * np.clip(area, 0.0, self.s1 - self.s0 - self.w)

    def dh(self, s):
        s = np.asarray(s, dtype=float)
        u = np.clip((s - self.s0) / self.w, 0.0, 1.0)
        v = np.clip((self.s1 - s) / self.w, 0.0, 1.0)
        prof = np.where(s <= self.s1 - self.w, _smoothstep(u), _smoothstep(v))
        prof = np.where((s <= self.s0) | (s >= self.s1), 0.0, prof)
        return self.peak * prof

    def d2h(self, s):
        s = np.asarray(s, dtype=float)
        u = (s - self.s0) / self.w
        v = (self.s1 - s) / self.w
        rising = (s > self.s0) & (s < self.s0 + self.w)
        falling = (s > self.s1 - self.w) & (s < self.s1)
        out = np.zeros_like(s)
        out = np.where(rising, (6.0 * np.clip(u, 0, 1) * (1.0 - np.clip(u, 0, 1))) / self.w, out)
        out = np.where(falling, -(6.0 * np.clip(v, 0, 1) * (1.0 - np.clip(v, 0, 1))) / self.w, out)
        return self.peak * out

    def slope_crossings(self, slope: float) -> list[float]:
        """Values of s with h'(s) = slope, one per ramp edge (if reached)."""
        if slope <= 0 or slope > self.peak:
            return []
        frac = slope / self.peak
        # invert the cubic smoothstep on [0, 1]
        from scipy.optimize import brentq

        u = brentq(lambda t: _smoothstep(t) - frac, 0.0, 1.0)
        out = [self.s0 + self.w * u]
        if slope < self.peak:
            out.append(self.s1 - self.w * u)
        return out


def _radial_lipschitz(ramp: RadialRamp) -> float:
    s = np.linspace(0.0, ramp.s1 * 1.05, 4097)
    return float(np.max(np.abs(2.0 * ramp.dh(s)) + 4.0 * s * np.abs(ramp.d2h(s))))


def radial_bump_model(n: int, m: float, r0sq: float = 0.01, r1sq: float = 0.99,
                      edge: float = 0.012) -> HamiltonianModel:
    ramp = RadialRamp(m=m, s0=r0sq, s1=r1sq, w=edge)

    def value(points):
        return ramp.h(np.sum(points**2, axis=-1))

    def gradient(points):
        s = np.sum(points**2, axis=-1)
        return 2.0 * ramp.dh(s)[..., None] * points

    model = HamiltonianModel(
        n=n,
        value=value,
        gradient=gradient,
        grad_lipschitz=_radial_lipschitz(ramp),
        plateau=m,
        n0_invariant=True,
        s_order=None,
        vanish_radius=math.sqrt(r0sq),
        support_radius=math.sqrt(r1sq),
        name="radial_bump",
        params={"n": n, "m": m, "r0sq": r0sq, "r1sq": r1sq, "edge": edge},
    )
    object.__setattr__(model, "ramp", ramp)
    return model


def builtin(name: str, **params) -> HamiltonianModel:
    """Construct one of the built-in models by name."""
    if name == "quadratic_Q":
        n = int(params.get("n", 1))
        K = int(params.get("K", 1))
        eps = float(params.get("eps", 0.0))
        q = QuadraticForm(n, K)
        coef = PI + eps
        return HamiltonianModel(
            n=n,
            value=lambda z: coef * q.value(z),
            gradient=lambda z: coef * q.gradient(z),
            grad_lipschitz=2.0 * coef,
            plateau=None,
            name="quadratic_Q",
            params={"n": n, "K": K, "eps": eps},
        )

    if name == "radial_bump":
        return radial_bump_model(
            n=int(params.get("n", 1)),
            m=float(params["m"]),
            r0sq=float(params.get("r0sq", 0.01)),
            r1sq=float(params.get("r1sq", 0.99)),
            edge=float(params.get("edge", 0.012)),
        )

    if name == "ellipsoid_level":
        n = int(params.get("n", 1))
        ax = np.broadcast_to(np.asarray(params.get("ax", 1.0), dtype=float), (n,)).copy()
        ay = np.broadcast_to(np.asarray(params.get("ay", 1.0), dtype=float), (n,)).copy()
        w = np.concatenate([1.0 / ax**2, 1.0 / ay**2])
        return HamiltonianModel(
            n=n,
            value=lambda z: np.sum(w * z**2, axis=-1),
            gradient=lambda z: 2.0 * w * z,
            grad_lipschitz=float(2.0 * np.max(w)),
            plateau=None,
            name="ellipsoid_level",
            params={"n": n, "ax": ax.tolist(), "ay": ay.tolist()},
        )

    if name == "torus_kinetic":
        n = int(params.get("n", 1))
        v_amp = float(params.get("v_amp", 0.0))

        def value(z):
            theta, y = z[..., :n], z[..., n:]
            return 0.5 * np.sum(y**2, axis=-1) + v_amp * np.sum(1.0 - np.cos(theta), axis=-1)

        def gradient(z):
            theta, y = z[..., :n], z[..., n:]
            return np.concatenate([v_amp * np.sin(theta), y], axis=-1)

        return HamiltonianModel(
            n=n,
            value=value,
            gradient=gradient,
            grad_lipschitz=max(1.0, v_amp),
            plateau=None,
            name="torus_kinetic",
            params={"n": n, "v_amp": v_amp},
            domain="torus",
        )

    if name == "s_symmetric_radial":
        n = int(params.get("n", 1))
        scale = float(params.get("scale", 1.0))
        m_sym = int(params.get("m_sym", 2))
        return HamiltonianModel(
            n=n,
            value=lambda z: scale * np.sum(z**2, axis=-1),
            gradient=lambda z: 2.0 * scale * z,
            grad_lipschitz=2.0 * scale,
            plateau=None,
            s_order=m_sym,
            name="s_symmetric_radial",
            params={"n": n, "scale": scale, "m_sym": m_sym},
        )

    if name == "pinched_star":
        n = int(params.get("n", 1))
        a = float(params.get("a", 0.5))

        def value(z):
            x, y = z[..., :n], z[..., n:]
            return (np.sum(x**2, axis=-1) - a) ** 2 + np.sum(y**2, axis=-1)

        def gradient(z):
            x, y = z[..., :n], z[..., n:]
            gx = 4.0 * (np.sum(x**2, axis=-1) - a)[..., None] * x
            return np.concatenate([gx, 2.0 * y], axis=-1)

        return HamiltonianModel(
            n=n,
            value=value,
            gradient=gradient,
            grad_lipschitz=12.0 + 8.0 * a,
            plateau=None,
            name="pinched_star",
            params={"n": n, "a": a},
        )

    raise ModelError(f"unknown builtin model {name!r}")


# ---------------------------------------------------------------------------
# admissibility checks
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilitySampler:
    """Sample points feeding the admissibility report.

    ``plateau`` points should lie where the model is expected to be constant,
    ``vanish`` inside the declared zero set, and ``vanish_l0`` on the
    Lagrangian plane inside the zero set (the witness that O meets L0).
    """

    interior: np.ndarray
    plateau: np.ndarray
    vanish: np.ndarray
    vanish_l0: np.ndarray


def default_sampler(model: HamiltonianModel, rng, count: int = 400) -> AdmissibilitySampler:
    n = model.n
    dirs = rng.standard_normal((count, 2 * n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if math.isfinite(model.support_radius):
        outer = model.support_radius
        interior = dirs * (rng.uniform(0.0, 1.2 * outer, count))[:, None]
        plateau = dirs * (rng.uniform(1.02 * outer, 2.0 * outer, count))[:, None]
    else:
        interior = dirs * (rng.uniform(0.0, 2.0, count))[:, None]
        plateau = dirs * (rng.uniform(3.0, 8.0, count))[:, None]
    if model.vanish_radius > 0:
        vanish = dirs * (rng.uniform(0.0, 0.8 * model.vanish_radius, count))[:, None]
    else:
        vanish = np.zeros((0, 2 * n))
    k = max(4, count // 8)
    y_dirs = rng.standard_normal((k, n))
    y_dirs /= np.linalg.norm(y_dirs, axis=1, keepdims=True)
    # with no declared zero ball, probe a small one anyway: the report should
    # then fail the vanishing-set property rather than silently pass
    radius = 0.8 * model.vanish_radius if model.vanish_radius > 0 else 0.05
    vanish_l0 = np.concatenate(
        [np.zeros((k, n)), radius * rng.uniform(0.2, 1, k)[:, None] * y_dirs], axis=1
    )
    return AdmissibilitySampler(interior, plateau, vanish, vanish_l0)


@dataclass
class PropertyCheck:
    ok: bool
    detail: str
    witness: np.ndarray | None = None


@dataclass
class AdmissibilityReport:
    checks: dict[str, PropertyCheck]

    @property
    def all_pass(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def lines(self) -> list[str]:
        out = []
        for key, c in self.checks.items():
            status = "pass" if c.ok else "FAIL"
            line = f"{key}: {status} ({c.detail})"
            if not c.ok and c.witness is not None:
                line += f" witness={np.array2string(c.witness, precision=5)}"
            out.append(line)
        return out


def check_admissible_class(model: HamiltonianModel, sampler: AdmissibilitySampler,
                           tol: float = 1e-12) -> AdmissibilityReport:
    """Verify the plateau / vanishing / bounds / symmetry properties.

    This is a diagnostic: every property gets a pass/fail entry with a
    witness point for failures.
    """
    checks: dict[str, PropertyCheck] = {}
    all_points = np.concatenate([sampler.interior, sampler.plateau], axis=0)

    plateau_vals = model.value(sampler.plateau)
    m_ref = model.plateau if model.plateau is not None else float(np.median(plateau_vals))
    dev = np.abs(plateau_vals - m_ref)
    i = int(np.argmax(dev))
    ok = bool(dev[i] <= tol * (1.0 + abs(m_ref)))
    checks["H1_plateau"] = PropertyCheck(
        ok, f"max |H - m| = {dev[i]:.3e} at plateau samples, m = {m_ref:.6g}",
        None if ok else sampler.plateau[i],
    )

    if sampler.vanish_l0.size == 0:
        checks["H2_vanishing_set"] = PropertyCheck(False, "no declared zero set meeting L0")
    else:
        zero_pts = np.concatenate([sampler.vanish, sampler.vanish_l0], axis=0)
        vals = np.abs(model.value(zero_pts))
        i = int(np.argmax(vals))
        ok = bool(vals[i] <= tol)
        checks["H2_vanishing_set"] = PropertyCheck(
            ok, f"max |H| = {vals[i]:.3e} on the zero set (incl. L0 witnesses)",
            None if ok else zero_pts[i],
        )

    vals = model.value(all_points)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    ok = lo >= -tol and hi <= m_ref + tol * (1.0 + abs(m_ref))
    checks["H3_bounds"] = PropertyCheck(
        ok, f"range [{lo:.6g}, {hi:.6g}] vs [0, {m_ref:.6g}]",
        None if ok else all_points[int(np.argmax(vals))],
    )

    sym_dev = np.abs(model.value(apply_n0(all_points)) - vals)
    i = int(np.argmax(sym_dev))
    ok = bool(sym_dev[i] <= tol * (1.0 + np.max(np.abs(vals))))
    checks["H4_reversal_symmetry"] = PropertyCheck(
        ok, f"max |H(N0 z) - H(z)| = {sym_dev[i]:.3e}", None if ok else all_points[i]
    )

    if model.s_order is not None:
        S = s_matrix(model.n, model.s_order)
        dev_s = np.abs(model.value(all_points @ S.T) - vals)
        i = int(np.argmax(dev_s))
        ok = bool(dev_s[i] <= tol * (1.0 + np.max(np.abs(vals))))
        checks["HS4_cyclic_symmetry"] = PropertyCheck(
            ok, f"max |H(S z) - H(z)| = {dev_s[i]:.3e}", None if ok else all_points[i]
        )
        origin_ok = model.vanish_radius > 0.0
        checks["HS2_origin_in_zero_set"] = PropertyCheck(
            origin_ok,
            f"vanishing ball radius {model.vanish_radius:.6g} around the origin",
        )

    return AdmissibilityReport(checks)


def finite_difference_gradient(model, points: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient, the oracle for analytic gradients."""
    points = np.asarray(points, dtype=float)
    out = np.zeros_like(points)
    for i in range(points.shape[-1]):
        dp = np.zeros(points.shape[-1])
        dp[i] = h
        out[..., i] = (model.value(points + dp) - model.value(points - dp)) / (2.0 * h)
    return out
