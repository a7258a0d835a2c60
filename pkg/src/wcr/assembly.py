"""Assembly of the weak-form regression system ``A zeta = H``.

For a kernel ``psi`` and snapshot samples ``x^k`` the feature row holds
Monte Carlo means of

* ``d psi / d x_i * Lambda_j(x)``            (drift block),
* ``d^2 psi / d x_i d x_j * Lambda_s(x)``    (diffusion block, coefficients of G),
* ``-(-Delta_i)^{alpha/2} psi``              (Levy block, coefficient ``|xi_i|^alpha``).

The Levy column carries an explicit minus sign so the regressed coefficient
is ``+|xi|^alpha``, which is what the generator of ``xi dL`` produces.
In the one-dimensional functional mode the Levy columns are
``-theta (-Delta)^{alpha/2} psi * Lambda^xi_j(x)`` (``theta = 1`` in 1-D).

Time derivatives of the kernel means use the trapezoidal rule between
consecutive snapshots; blocks are stacked kernel-major, snapshot-minor.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collocation import KernelSet
from .dictionary import CoefficientLayout, eval_basis
from .specfun import FracLaplacianSpec, GaussianKernel, check_alpha, gaussian_frac_1d, hyp1f1_table

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_CHUNK_ELEMS = 1 << 22


@dataclass
class FeatureRow:
    b: np.ndarray
    h: float


@dataclass
class LinearSystem:
    A: np.ndarray
    H: np.ndarray
    layout: CoefficientLayout
    kernel_index: np.ndarray
    pair_index: np.ndarray

    def __post_init__(self):
        if self.A.shape != (len(self.H), self.layout.size):
            raise ValueError("system shape does not match the layout")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.H))):
            raise ValueError("assembled system contains non-finite entries")

    @property
    def shape(self) -> tuple:
        return self.A.shape

    def residual(self, zeta) -> float:
        """Relative residual ``|A zeta - H| / |H|``."""
        r = self.A @ np.asarray(zeta, float) - self.H
        return float(np.linalg.norm(r) / np.linalg.norm(self.H))

    def to_csv(self, path) -> None:
        header = ",".join(["kernel", "pair", "H"] + self.layout.names())
        rows = np.column_stack([self.kernel_index, self.pair_index, self.H, self.A])
        fmt = ["%d", "%d"] + ["%.17g"] * (rows.shape[1] - 2)
        np.savetxt(Path(path), rows, fmt=fmt, delimiter=",", header=header, comments="")


class _Bases:
    """Basis evaluations of one snapshot, shared across kernel chunks."""

    def __init__(self, X, layout: CoefficientLayout, alpha):
        self.drift = eval_basis(layout.drift_basis, X)
        self.diffusion = None
        self.levy = None
        if layout.diffusion in ("diagonal", "full"):
            self.diffusion = eval_basis(layout.diffusion_basis, X)
        if layout.levy == "functional":
            self.levy = eval_basis(layout.levy_basis, X, alpha=alpha)


def _chunk_features(X, centers, widths, layout: CoefficientLayout, alpha, bases: _Bases):
    """Feature rows for a chunk of kernels: returns ``(B (m, P), h (m,))``."""
    N, d = X.shape
    inv_n = 1.0 / N
    w = widths[:, None, None]
    diff = X[None, :, :] - centers[:, None, :]
    g1 = np.exp(-0.5 * (diff / w) ** 2) / (_SQRT_2PI * w)
    psi = np.prod(g1, axis=2)
    h = psi.mean(axis=1)
    w2 = widths[:, None] ** 2
    parts = []

    grad = diff * (-psi / w2)[:, :, None]
    parts.append((grad.transpose(0, 2, 1) @ bases.drift) * inv_n)

    if layout.diffusion != "none":
        w4 = w2 * w2
        if layout.diffusion == "full":
            bs = bases.diffusion.shape[1]
            blk = np.empty((len(centers), d, d, bs))
            for i in range(d):
                for j in range(i, d):
                    hij = psi * (diff[:, :, i] * diff[:, :, j] / w4 - (1.0 / w2 if i == j else 0.0))
                    blk[:, i, j] = (hij @ bases.diffusion) * inv_n
                    blk[:, j, i] = blk[:, i, j]
            parts.append(blk)
        else:
            hii = psi[:, :, None] * (diff * diff / w4[:, :, None] - 1.0 / w2[:, :, None])
            if layout.diffusion == "constant":
                parts.append(hii.mean(axis=1))
            else:
                parts.append((hii.transpose(0, 2, 1) @ bases.diffusion) * inv_n)

    if layout.levy != "none":
        table = hyp1f1_table((1.0 + alpha) / 2.0, 0.5)
        fr = np.empty((len(centers), N, d))
        for i in range(d):
            off = np.prod(np.delete(g1, i, axis=2), axis=2) if d > 1 else 1.0
            fr[:, :, i] = off * gaussian_frac_1d(diff[:, :, i], widths[:, None], alpha, table)
        if layout.levy == "constant":
            parts.append(-fr.mean(axis=1))
        else:
            theta = FracLaplacianSpec(alpha, 1).theta
            parts.append(-theta * (fr[:, :, 0] @ bases.levy) * inv_n)

    B = np.concatenate([p.reshape(len(centers), -1) for p in parts], axis=1)
    return B, h


def snapshot_features(samples, kernels: KernelSet, layout: CoefficientLayout,
                      alpha: float | None = None, threads: int | None = 1):
    """Feature rows ``B`` (M, P) and kernel means ``h`` (M,) for one snapshot."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("snapshot is empty")
    if X.shape[1] != layout.dim or kernels.dim != layout.dim:
        raise ValueError("dimension mismatch between samples, kernels and layout")
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise ValueError(f"non-finite sample at index {int(bad[0])}")
    if layout.levy != "none" or layout.drift_basis.needs_alpha():
        alpha = check_alpha(alpha)
    bases = _Bases(X, layout, alpha)
    M = len(kernels)
    step = max(1, _CHUNK_ELEMS // (X.size))
    bounds = [(s, min(s + step, M)) for s in range(0, M, step)]
    work = lambda se: _chunk_features(X, kernels.centers[se[0]:se[1]], kernels.widths[se[0]:se[1]],
                                      layout, alpha, bases)
    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(se) for se in bounds]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def feature_row(samples, kernel: GaussianKernel, layout: CoefficientLayout,
                alpha: float | None = None) -> FeatureRow:
    ks = KernelSet(np.asarray([kernel.center]), np.asarray([kernel.width]),
                   np.asarray(kernel.center), np.asarray(kernel.center))
    B, h = snapshot_features(samples, ks, layout, alpha)
    return FeatureRow(B[0], float(h[0]))


def lmm_trapezoid(row_l: FeatureRow, row_next: FeatureRow, dt: float):
    """Trapezoidal pairing of consecutive snapshots: ``(dt/2 (b_l + b_{l+1}), h_{l+1} - h_l)``."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    return 0.5 * dt * (row_l.b + row_next.b), row_next.h - row_l.h


def assemble(dataset, kernels: KernelSet, layout: CoefficientLayout, alpha: float | None = None,
             threads: int | None = 1) -> LinearSystem:
    """Stack the per-kernel trapezoidal systems into ``(A, H)`` with ``M (L-1)`` rows."""
    L = len(dataset.times)
    if L < 2:
        raise ValueError("at least two snapshots are required")
    if alpha is None:
        alpha = dataset.alpha
    B, h = [], []
    for l, snap in enumerate(dataset.snapshots):
        try:
            Bl, hl = snapshot_features(snap, kernels, layout, alpha, threads)
        except ValueError as exc:
            raise ValueError(f"snapshot {l} (t={dataset.times[l]:g}): {exc}") from exc
        B.append(Bl)
        h.append(hl)
    B = np.stack(B, axis=1)  # (M, L, P)
    h = np.stack(h, axis=1)  # (M, L)
    dt = np.diff(dataset.times)
    A = 0.5 * dt[None, :, None] * (B[:, :-1] + B[:, 1:])
    H = h[:, 1:] - h[:, :-1]
    M = len(kernels)
    kidx = np.repeat(np.arange(M), L - 1)
    pidx = np.tile(np.arange(L - 1), M)
    return LinearSystem(A.reshape(M * (L - 1), -1), H.reshape(-1), layout, kidx, pidx)
