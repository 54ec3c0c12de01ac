"""Truncated symmetric Fourier loop space.

A loop is x(t) = sum_{|j| <= k_max} e^{2 pi j J t} x_j with t running over
[0, 1) and J the standard complex structure J(x, y) = (-y, x) on R^{2n}.
Constraining every coefficient x_j to the Lagrangian plane
L0 = {0} x R^n = Fix(N0), where N0(x, y) = (-x, y), forces the time-reversal
identity x(-t) = N0 x(t) pointwise: this is the discrete model of the
fractional Sobolev space of symmetric loops used by the dual action
principle.

The space splits orthogonally into the negative / zero / positive frequency
sectors; the s-weighted inner product is

    <x, y>_s = <x_0, y_0> + 2 pi sum_{k != 0} |k|^{2s} <x_k, y_k>,

with the s = 0 pairing being the plain coefficient sum (the L^2 pairing).
``adjoint_embed`` realizes the adjoint of the inclusion into L^2: mode k is
scaled by 1 / (2 pi |k|) and projected back onto L0, which is a compact,
norm-1-bounded smoothing operator.

``SpectralEngine`` holds the cached trigonometric tables used to evaluate
batches of loops on uniform time grids and to transform sampled gradient
data back into Fourier modes; everything downstream (action functional,
descent flow, minimax search) runs on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np


class LoopError(ValueError):
    """Invalid loop construction or operation."""


# ---------------------------------------------------------------------------
# linear phase-space maps
# ---------------------------------------------------------------------------

def j_matrix(n: int) -> np.ndarray:
    """Standard complex structure J(x, y) = (-y, x) as a 2n x 2n matrix."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def n0_matrix(n: int) -> np.ndarray:
    """Antisymplectic involution flipping the x-part: diag(-I_n, I_n)."""
    return np.diag(np.concatenate([-np.ones(n), np.ones(n)]))


def apply_j(points: np.ndarray) -> np.ndarray:
    """J acting on points of shape (..., 2n)."""
    n = points.shape[-1] // 2
    return np.concatenate([-points[..., n:], points[..., :n]], axis=-1)


def apply_n0(points: np.ndarray) -> np.ndarray:
    """N0 acting on points of shape (..., 2n)."""
    n = points.shape[-1] // 2
    return np.concatenate([-points[..., :n], points[..., n:]], axis=-1)


def rotation(theta: float | np.ndarray, n: int, points: np.ndarray) -> np.ndarray:
    """e^{theta J} acting on points; theta broadcasts against leading axes."""
    theta = np.asarray(theta)[..., None]
    return np.cos(theta) * points + np.sin(theta) * apply_j(points)


def s_matrix(n: int, m: int) -> np.ndarray:
    """Cyclic symmetry S = e^{2 pi J / m}."""
    theta = 2.0 * np.pi / m
    return np.cos(theta) * np.eye(2 * n) + np.sin(theta) * j_matrix(n)


def lagrangian_embed(y_part: np.ndarray) -> np.ndarray:
    """Embed vectors of R^n into L0 = {0} x R^n."""
    return np.concatenate([np.zeros_like(y_part), y_part], axis=-1)


def lagrangian_project(points: np.ndarray) -> np.ndarray:
    """i*: orthogonal projection of R^{2n} onto L0 (zeroes the x-part)."""
    out = np.array(points, dtype=float)
    n = out.shape[-1] // 2
    out[..., :n] = 0.0
    return out


# ---------------------------------------------------------------------------
# loop containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FourierLoop:
    """Symmetric loop: dense coefficient table over modes -k_max..k_max.

    ``coeffs[j + k_max]`` is x_j in R^{2n}; every row lies in L0, i.e. the
    first n entries are exactly zero.
    """

    n: int
    k_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (2 * self.k_max + 1, 2 * self.n):
            raise LoopError(
                f"coefficient table has shape {coeffs.shape}, expected "
                f"{(2 * self.k_max + 1, 2 * self.n)}"
            )
        if np.any(coeffs[:, : self.n] != 0.0):
            raise LoopError("coefficient outside L0: x-part must be exactly zero")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def free_coeffs(self) -> np.ndarray:
        """The unconstrained y-parts, shape (2 k_max + 1, n)."""
        return self.coeffs[:, self.n:]

    def coefficient(self, j: int) -> np.ndarray:
        if abs(j) > self.k_max:
            return np.zeros(2 * self.n)
        return self.coeffs[j + self.k_max]

    def with_free_coeffs(self, free: np.ndarray) -> "FourierLoop":
        return FourierLoop(self.n, self.k_max, lagrangian_embed(np.asarray(free, dtype=float)))

    def __add__(self, other: "FourierLoop") -> "FourierLoop":
        a, b = _common(self, other)
        return FourierLoop(a.n, a.k_max, a.coeffs + b.coeffs)

    def __sub__(self, other: "FourierLoop") -> "FourierLoop":
        a, b = _common(self, other)
        return FourierLoop(a.n, a.k_max, a.coeffs - b.coeffs)

    def __mul__(self, scalar: float) -> "FourierLoop":
        return FourierLoop(self.n, self.k_max, self.coeffs * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class L2Loop:
    """Loop with unconstrained coefficients in R^{2n} (the ambient L^2 space)."""

    n: int
    k_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (2 * self.k_max + 1, 2 * self.n):
            raise LoopError(
                f"coefficient table has shape {coeffs.shape}, expected "
                f"{(2 * self.k_max + 1, 2 * self.n)}"
            )
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))


def _common(a: FourierLoop, b: FourierLoop) -> tuple[FourierLoop, FourierLoop]:
    if a.n != b.n:
        raise LoopError(f"dimension mismatch: n={a.n} vs n={b.n}")
    k = max(a.k_max, b.k_max)
    return pad_to(a, k), pad_to(b, k)


def pad_to(loop: FourierLoop, k_max: int) -> FourierLoop:
    if loop.k_max == k_max:
        return loop
    if loop.k_max > k_max:
        raise LoopError("cannot truncate implicitly; target k_max too small")
    out = np.zeros((2 * k_max + 1, 2 * loop.n))
    out[k_max - loop.k_max : k_max + loop.k_max + 1] = loop.coeffs
    return FourierLoop(loop.n, k_max, out)


def make_loop(n: int, k_max: int, coeffs: Mapping[int, Iterable[float]]) -> FourierLoop:
    """Build a symmetric loop from a sparse mode -> coefficient mapping.

    Absent modes default to zero.  Coefficients must lie exactly in L0;
    anything with a nonzero x-part is rejected.
    """
    if n < 1 or k_max < 0:
        raise LoopError("need n >= 1 and k_max >= 0")
    table = np.zeros((2 * k_max + 1, 2 * n))
    for j, value in coeffs.items():
        value = np.asarray(value, dtype=float)
        if value.shape != (2 * n,):
            raise LoopError(f"coefficient for mode {j} has length {value.size}, expected {2 * n}")
        if abs(j) > k_max:
            raise LoopError(f"mode {j} outside truncation order {k_max}")
        if np.any(value[:n] != 0.0):
            raise LoopError(f"coefficient for mode {j} is not in L0 (nonzero x-part)")
        table[j + k_max] = value
    return FourierLoop(n, k_max, table)


def zero_loop(n: int, k_max: int) -> FourierLoop:
    return FourierLoop(n, k_max, np.zeros((2 * k_max + 1, 2 * n)))


def e_plus(n: int, k_max: int) -> FourierLoop:
    """The distinguished positive loop e^{2 pi J t} e_1 with e_1 = (0,..,0,1,0,..,0)."""
    if k_max < 1:
        raise LoopError("e_plus needs k_max >= 1")
    e1 = np.zeros(2 * n)
    e1[n] = 1.0
    return make_loop(n, k_max, {1: e1})


# ---------------------------------------------------------------------------
# spectral engine: cached tables for batched evaluation and transforms
# ---------------------------------------------------------------------------

class SpectralEngine:
    """Trigonometric tables for loops of fixed (n, k_max) on an N-point grid.

    Batched coefficient arrays have shape (B, 2*k_max+1, n) and hold the free
    y-parts only; the x-parts of symmetric coefficients are identically zero.
    """

    def __init__(self, n: int, k_max: int, num_samples: int):
        if num_samples < 2 * k_max + 1:
            raise LoopError(
                f"num_samples={num_samples} below the alias-free bound {2 * k_max + 1}"
            )
        self.n = n
        self.k_max = k_max
        self.num_samples = num_samples
        self.modes = np.arange(-k_max, k_max + 1)
        self.times = np.arange(num_samples) / num_samples
        ang = 2.0 * np.pi * np.outer(self.times, self.modes)
        self.cos = np.cos(ang)            # (N, K)
        self.sin = np.sin(ang)            # (N, K)
        self.dmode = 2.0 * np.pi * self.modes
        # <.,.>_{1/2} weights per mode, acting on |coefficient|^2
        w = 2.0 * np.pi * np.abs(self.modes).astype(float)
        w[k_max] = 1.0
        self.half_weights = w
        inv = np.zeros_like(w)
        nz = self.modes != 0
        inv[nz] = 1.0 / (2.0 * np.pi * np.abs(self.modes[nz]))
        inv[k_max] = 1.0
        self.jstar_scale = inv

    # -- evaluation ---------------------------------------------------------

    def eval_batch(self, free: np.ndarray) -> np.ndarray:
        """Trajectories of shape (B, N, 2n) from free coefficients (B, K, n).

        x(t) = sum_j e^{2 pi j J t} (0, c_j) = (-sin * c, cos * c) columnwise.
        """
        x_part = -np.einsum("tk,bkn->btn", self.sin, free)
        y_part = np.einsum("tk,bkn->btn", self.cos, free)
        return np.concatenate([x_part, y_part], axis=-1)

    def velocity_batch(self, free: np.ndarray) -> np.ndarray:
        """d/dt of the trajectories, same shapes as ``eval_batch``."""
        scaled = self.dmode[:, None] * free
        x_part = -np.einsum("tk,bkn->btn", self.cos, scaled)
        y_part = -np.einsum("tk,bkn->btn", self.sin, scaled)
        return np.concatenate([x_part, y_part], axis=-1)

    def eval_at(self, free: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Evaluate at arbitrary phases (in loop time units)."""
        ang = 2.0 * np.pi * np.outer(np.asarray(times, dtype=float), self.modes)
        x_part = -np.einsum("tk,bkn->btn", np.sin(ang), free)
        y_part = np.einsum("tk,bkn->btn", np.cos(ang), free)
        return np.concatenate([x_part, y_part], axis=-1)

    def velocity_at(self, free: np.ndarray, times: np.ndarray) -> np.ndarray:
        ang = 2.0 * np.pi * np.outer(np.asarray(times, dtype=float), self.modes)
        scaled = self.dmode[:, None] * free
        x_part = -np.einsum("tk,bkn->btn", np.cos(ang), scaled)
        y_part = -np.einsum("tk,bkn->btn", np.sin(ang), scaled)
        return np.concatenate([x_part, y_part], axis=-1)

    # -- transforms ---------------------------------------------------------

    def samples_to_modes(self, samples: np.ndarray) -> np.ndarray:
        """Rectangle-rule Fourier coefficients of sampled data (B, N, 2n).

        Returns full R^{2n} mode coefficients (B, K, 2n); modes beyond k_max
        are discarded (Galerkin truncation).
        """
        n, N = self.n, self.num_samples
        gx, gy = samples[..., :n], samples[..., n:]
        mx = (np.einsum("tk,btn->bkn", self.cos, gx) + np.einsum("tk,btn->bkn", self.sin, gy)) / N
        my = (np.einsum("tk,btn->bkn", self.cos, gy) - np.einsum("tk,btn->bkn", self.sin, gx)) / N
        return np.concatenate([mx, my], axis=-1)

    def jstar_free(self, l2_modes: np.ndarray) -> np.ndarray:
        """Adjoint embedding of L^2 mode data: scale and project onto L0.

        Input (B, K, 2n) -> free y-part coefficients (B, K, n).
        """
        return self.jstar_scale[:, None] * l2_modes[..., self.n:]

    # -- norms ---------------------------------------------------------------

    def half_norm_sq(self, free: np.ndarray) -> np.ndarray:
        return np.einsum("k,bkn->b", self.half_weights, free**2)

    def half_inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("k,bkn->b", self.half_weights, a * b)

    def l2_norm_sq(self, free: np.ndarray) -> np.ndarray:
        return np.einsum("bkn->b", free**2)


@lru_cache(maxsize=64)
def get_engine(n: int, k_max: int, num_samples: int) -> SpectralEngine:
    return SpectralEngine(n, k_max, num_samples)


def default_samples(k_max: int) -> int:
    """Default quadrature grid: headroom over the alias-free bound."""
    return 4 * k_max + 1


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def evaluate(loop: FourierLoop, num_samples: int) -> np.ndarray:
    """Sample the loop at t_i = i / num_samples; returns (num_samples, 2n)."""
    eng = get_engine(loop.n, loop.k_max, num_samples)
    return eng.eval_batch(loop.free_coeffs[None])[0]


def evaluate_velocity(loop: FourierLoop, num_samples: int) -> np.ndarray:
    eng = get_engine(loop.n, loop.k_max, num_samples)
    return eng.velocity_batch(loop.free_coeffs[None])[0]


def evaluate_at(loop: FourierLoop, times: np.ndarray) -> np.ndarray:
    eng = get_engine(loop.n, loop.k_max, 2 * loop.k_max + 1)
    return eng.eval_at(loop.free_coeffs[None], times)[0]


_SECTORS = {"plus": 1, "minus": -1, "zero": 0}


def project(loop: FourierLoop, sector: str) -> FourierLoop:
    """Keep the positive / negative / zero frequency modes, zero the rest."""
    if sector not in _SECTORS:
        raise LoopError(f"unknown sector {sector!r}; expected plus/minus/zero")
    sign = _SECTORS[sector]
    keep = np.sign(loop.modes) == sign
    out = np.where(keep[:, None], loop.coeffs, 0.0)
    return FourierLoop(loop.n, loop.k_max, out)


def inner(loop_a: FourierLoop, loop_b: FourierLoop, s: float) -> float:
    """The s-weighted coefficient pairing for s in {0, 1/2, 1}."""
    if s not in (0, 0.5, 1):
        raise LoopError(f"unsupported exponent s={s}; use 0, 1/2 or 1")
    a, b = _common(loop_a, loop_b)
    prod = np.sum(a.coeffs * b.coeffs, axis=1)
    if s == 0:
        return float(np.sum(prod))
    k = np.abs(a.modes).astype(float)
    weights = 2.0 * np.pi * k ** (2.0 * s)
    weights[a.k_max] = 1.0
    return float(np.sum(weights * prod))


def norm(loop: FourierLoop, s: float) -> float:
    return float(np.sqrt(max(inner(loop, loop, s), 0.0)))


def adjoint_embed(y: L2Loop) -> FourierLoop:
    """Adjoint of the inclusion into L^2: smooth, project onto L0.

    Mode k of the output is i*(y_k) / (2 pi |k|) for k != 0 and i*(y_0) for
    k = 0.  The result gains one order of smoothness and its 1-norm is
    bounded by the L^2 norm of the input.
    """
    scale = np.ones(2 * y.k_max + 1)
    k = np.abs(np.arange(-y.k_max, y.k_max + 1))
    nz = k != 0
    scale[nz] = 1.0 / (2.0 * np.pi * k[nz])
    out = lagrangian_project(y.coeffs) * scale[:, None]
    return FourierLoop(y.n, y.k_max, out)


def s_allowed_modes(k_max: int, m: int) -> np.ndarray:
    """Boolean mask of modes compatible with x(t + 1/m) = e^{2 pi J / m} x(t)."""
    if m < 2:
        raise LoopError("cyclic order m must be >= 2")
    modes = np.arange(-k_max, k_max + 1)
    return np.mod(modes - 1, m) == 0


def s_symmetry_project(loop: FourierLoop, m: int) -> FourierLoop:
    """Restrict to the subspace of loops with the order-m cyclic symmetry.

    A single mode j satisfies x(t + 1/m) = S x(t) with S = e^{2 pi J / m}
    exactly when j = 1 (mod m); all other modes are zeroed.
    """
    keep = s_allowed_modes(loop.k_max, m)
    out = np.where(keep[:, None], loop.coeffs, 0.0)
    return FourierLoop(loop.n, loop.k_max, out)


# ---------------------------------------------------------------------------
# serialization: text record, bit-exact round trip
# ---------------------------------------------------------------------------

def serialize_loop(loop: FourierLoop | L2Loop) -> str:
    """One header line ``n k_max`` then one line per mode: ``j c_1 ... c_2n``.

    Floats are written with shortest round-trip repr, so parsing recovers
    the exact doubles.
    """
    lines = [f"{loop.n} {loop.k_max}"]
    for j, row in zip(loop.modes, loop.coeffs):
        lines.append(str(j) + " " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_loop(text: str, symmetric: bool = True) -> FourierLoop | L2Loop:
    rows = [line for line in text.strip().splitlines() if line.strip()]
    if not rows:
        raise LoopError("empty loop record")
    try:
        n, k_max = (int(tok) for tok in rows[0].split())
    except ValueError as exc:
        raise LoopError(f"bad loop header {rows[0]!r}") from exc
    table = np.zeros((2 * k_max + 1, 2 * n))
    for line in rows[1:]:
        toks = line.split()
        j = int(toks[0])
        vals = np.array([float(tok) for tok in toks[1:]])
        if vals.size != 2 * n:
            raise LoopError(f"mode {j}: expected {2 * n} entries, got {vals.size}")
        table[j + k_max] = vals
    cls = FourierLoop if symmetric else L2Loop
    return cls(n, k_max, table)
