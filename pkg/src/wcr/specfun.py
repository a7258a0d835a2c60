"""Special functions and Gaussian-kernel calculus.

Covers Kummer's confluent hypergeometric function on the non-positive real
axis, closed-form derivatives of isotropic Gaussian test functions, and the
fractional Laplacian of a Gaussian along one coordinate axis.

The fractional quantities returned here are ``(-Delta)^{alpha/2} psi``
(positive at the kernel centre).  Sign orientation inside the weak form is
decided by :mod:`wcr.assembly`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SERIES_TOL = 1e-17
_MAX_TERMS = 5000


def check_alpha(alpha: float) -> float:
    """Validate a stability index, rejecting values within 1e-6 of 1."""
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0) or abs(alpha - 1.0) < 1e-6:
        raise ValueError(f"alpha must lie in (0,1) U (1,2), got {alpha!r}")
    return alpha


def _check_b(b: float) -> None:
    if b <= 0 and float(b).is_integer():
        raise ValueError(f"1F1 undefined for non-positive integer b={b}")


def _asymptotic_switch(a: float, b: float) -> float:
    # The recessive e^{-u} u^{2a-b} contribution must sit below 1e-18
    # relative to the algebraic branch before the large-u expansion is used.
    u = 50.0
    p = max(0.0, 2.0 * a - b)
    while -u + p * math.log(u) > math.log(1e-18):
        u += 5.0
    return u


def _kummer_series(a: float, b: float, u: np.ndarray) -> np.ndarray:
    """e^{-u} * sum_n (b-a)_n u^n / ((b)_n n!) for u >= 0."""
    c = b - a
    term = np.ones_like(u)
    total = np.ones_like(u)
    active = np.ones(u.shape, dtype=bool)
    n = 0
    # terms can only stop shrinking permanently once n exceeds both |c| and u
    while active.any():
        ua = u[active]
        term_a = term[active] * ((c + n) * ua / ((b + n) * (n + 1)))
        term[active] = term_a
        total[active] += term_a
        n += 1
        if n > _MAX_TERMS:
            raise RuntimeError("1F1 series failed to converge")
        settled = n > abs(c) + 1
        done = (np.abs(term_a) <= _SERIES_TOL * np.abs(total[active])) & settled & (n > ua)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return np.exp(-u) * total


def _asymptotic(a: float, b: float, u: np.ndarray) -> np.ndarray:
    """Algebraic large-u branch: Gamma(b)/Gamma(b-a) u^{-a} sum (a)_n (a-b+1)_n / n! u^{-n}."""
    c = b - a
    if c <= 0 and float(c).is_integer():
        # 1/Gamma(b-a) = 0: only the exponentially small branch survives
        return _kummer_series(a, b, u)
    lead = math.gamma(b) / math.gamma(c)
    term = np.ones_like(u)
    total = np.ones_like(u)
    frozen = np.zeros(u.shape, dtype=bool)
    for n in range(200):
        nxt = term * ((a + n) * (a - b + 1 + n) / ((n + 1) * u))
        # truncate the divergent series at its smallest term
        frozen |= np.abs(nxt) >= np.abs(term)
        term = np.where(frozen, 0.0, nxt)
        total += term
        if np.all(np.abs(term) <= _SERIES_TOL * np.abs(total)):
            break
    return lead * u ** (-a) * total


def hyp1f1_nonpos(a: float, b: float, z):
    """Kummer's function 1F1(a; b; z) for real ``z <= 0``.

    Uses the Kummer transformation ``1F1(a;b;z) = e^z 1F1(b-a;b;-z)`` so the
    power series runs on a non-negative argument, and the algebraic large-|z|
    expansion past a crossover that depends on ``(a, b)`` (never below 50).

    Parameters
    ----------
    a, b : float
        Positive parameters.  ``b`` may not be a non-positive integer.
    z : float or array_like
        Non-positive argument(s).

    Returns
    -------
    float or ndarray
        Same shape as ``z``.
    """
    a = float(a)
    b = float(b)
    _check_b(b)
    if a <= 0 or b <= 0:
        raise ValueError("hyp1f1_nonpos requires a > 0 and b > 0")
    zarr = np.asarray(z, dtype=float)
    if np.any(zarr > 0) or not np.all(np.isfinite(zarr)):
        raise ValueError("hyp1f1_nonpos requires finite z <= 0")
    u = -np.atleast_1d(zarr).ravel()
    out = np.empty_like(u)
    switch = _asymptotic_switch(a, b)
    near = u <= switch
    if near.any():
        out[near] = _kummer_series(a, b, u[near])
    if (~near).any():
        out[~near] = _asymptotic(a, b, u[~near])
    if zarr.ndim == 0:
        return float(out[0])
    return out.reshape(zarr.shape)


class Hyp1f1Table:
    """Fast piecewise-Chebyshev evaluator of ``u -> 1F1(a; b; -u)``.

    Built once per ``(a, b)`` from :func:`hyp1f1_nonpos`; used in the hot
    loop of system assembly where millions of evaluations share the same
    parameters.  Past the asymptotic crossover the exact large-u branch is
    evaluated directly.
    """

    def __init__(self, a: float, b: float, width: float = 0.25, degree: int = 12):
        self.a = float(a)
        self.b = float(b)
        self.width = float(width)
        self.degree = int(degree)
        self.upper = _asymptotic_switch(self.a, self.b)
        nseg = int(math.ceil(self.upper / self.width))
        self.upper = nseg * self.width
        k = np.arange(degree + 1)
        # Chebyshev points of the first kind on [-1, 1]
        nodes = np.cos(np.pi * (k + 0.5) / (degree + 1))
        lo = np.arange(nseg) * self.width
        u = lo[:, None] + 0.5 * self.width * (nodes[None, :] + 1.0)
        vals = hyp1f1_nonpos(self.a, self.b, -u)
        # discrete Chebyshev transform per segment
        T = np.cos(np.outer(k, np.arccos(nodes)))
        coef = (2.0 / (degree + 1)) * vals @ T.T
        coef[:, 0] *= 0.5
        self.coef = np.ascontiguousarray(coef)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.empty_like(flat)
        inside = flat < self.upper
        if inside.all():
            out[:] = self._clenshaw(flat)
        else:
            out[inside] = self._clenshaw(flat[inside])
            out[~inside] = _asymptotic(self.a, self.b, flat[~inside])
        return out.reshape(u.shape)

    def _clenshaw(self, u: np.ndarray) -> np.ndarray:
        seg = np.minimum((u / self.width).astype(np.intp), self.coef.shape[0] - 1)
        t = 2.0 * (u - seg * self.width) / self.width - 1.0
        c = self.coef[seg]
        t2 = 2.0 * t
        b1 = np.zeros_like(t)
        b2 = np.zeros_like(t)
        for j in range(self.degree, 0, -1):
            b1, b2 = t2 * b1 - b2 + c[:, j], b1
        return t * b1 - b2 + c[:, 0]


@lru_cache(maxsize=32)
def hyp1f1_table(a: float, b: float) -> Hyp1f1Table:
    return Hyp1f1Table(a, b)


@dataclass(frozen=True)
class FracLaplacianSpec:
    """Constants attached to ``(-Delta)^{alpha/2}`` in ``d`` dimensions."""

    alpha: float
    dim: int
    prefactor: float = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        a = check_alpha(self.alpha)
        d = int(self.dim)
        if d < 1:
            raise ValueError("dim must be >= 1")
        g = math.gamma
        object.__setattr__(self, "prefactor", 2.0**a * g((d + a) / 2) / g(d / 2))
        object.__setattr__(
            self, "theta", g((1 + a) / 2) * g(d / 2) / (math.sqrt(math.pi) * g((d + a) / 2))
        )

    @property
    def singular_integral_constant(self) -> float:
        """Normalising constant of the principal-value integral form."""
        a, d = self.alpha, self.dim
        return 2.0 ** (a - 1) * a * math.gamma((a + d) / 2) / (
            math.pi ** (d / 2) * math.gamma(1 - a / 2)
        )

    def of_unit_gaussian(self, x) -> np.ndarray:
        """``(-Delta)^{alpha/2} exp(-|x|^2)`` at points ``x`` of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return self.prefactor * hyp1f1_nonpos(
            (self.dim + self.alpha) / 2, self.dim / 2, -r2
        )


@dataclass(frozen=True)
class GaussianKernel:
    """Isotropic normalised Gaussian test function with centre ``rho`` and width ``gamma``."""

    center: tuple
    width: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if not all(math.isfinite(v) for v in c):
            raise ValueError("kernel centre must be finite")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError("kernel width must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "width", float(self.width))

    @property
    def dim(self) -> int:
        return len(self.center)

    def __call__(self, x) -> float:
        return kernel_derivatives(self, x)[0]


def kernel_derivatives(k: GaussianKernel, x):
    """Value, gradient and Hessian of the kernel at a single point ``x``."""
    x = np.asarray(x, dtype=float)
    rho = np.asarray(k.center)
    g2 = k.width**2
    diff = x - rho
    val = math.exp(-0.5 * float(diff @ diff) / g2) / (_SQRT_2PI * k.width) ** k.dim
    grad = -diff / g2 * val
    outer = np.outer(diff, diff)
    hess = (outer / g2 - np.eye(k.dim)) / g2 * val
    return val, grad, 0.5 * (hess + hess.T)


def _unit_profile_constant(alpha: float) -> float:
    return 2.0**alpha * math.gamma((1 + alpha) / 2) / math.sqrt(math.pi)


def gaussian_frac_1d(diff, width, alpha: float, table: Hyp1f1Table | None = None):
    """Fractional Laplacian of the normalised 1-D Gaussian ``N(0, width^2)`` pdf at ``diff``.

    ``diff`` and ``width`` broadcast.  With ``table`` the fast evaluator is
    used, otherwise the exact series.
    """
    alpha = float(alpha)
    diff = np.asarray(diff, dtype=float)
    width = np.asarray(width, dtype=float)
    u = diff * diff / (2.0 * width * width)
    scale = _unit_profile_constant(alpha) / (_SQRT_2PI * width) / (math.sqrt(2.0) * width) ** alpha
    if table is None:
        f = hyp1f1_nonpos((1 + alpha) / 2, 0.5, -u)
    else:
        f = table(u)
    return scale * f


def frac_deriv_gaussian_1comp(k: GaussianKernel, i: int, alpha: float, x) -> float:
    """``(-Delta_i)^{alpha/2} psi(x)``: fractional Laplacian along axis ``i`` only."""
    alpha = check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    if not 0 <= i < k.dim:
        raise IndexError(f"axis {i} out of range for dim {k.dim}")
    diff = x - np.asarray(k.center)
    g = k.width
    off = np.delete(diff, i)
    other = math.exp(-0.5 * float(off @ off) / g**2) / (_SQRT_2PI * g) ** (k.dim - 1)
    return other * float(gaussian_frac_1d(diff[i], g, alpha))


def frac_laplacian_fft(values, dx: float, alpha: float, axis: int = -1, tol: float = 1e-12):
    """Spectral ``(-Delta)^{alpha/2}`` of samples on a uniform periodic grid.

    Reference path only; ``alpha`` may be any positive value (2 gives the
    classical ``-f''``).  Warns when the function is not negligible at the
    grid boundary.
    """
    f = np.asarray(values, dtype=float)
    edge = max(abs(np.take(f, 0, axis=axis)).max(), abs(np.take(f, -1, axis=axis)).max())
    if edge > tol:
        warnings.warn(f"function not supported inside the grid (edge value {edge:.3e})")
    n = f.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    shape = [1] * f.ndim
    shape[axis] = n
    symbol = np.abs(k).reshape(shape) ** alpha
    return np.real(np.fft.ifft(symbol * np.fft.fft(f, axis=axis), axis=axis))
