"""Sequential threshold ridge regression (STRidge)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StridgeConfig:
    """``ridge=None`` selects ``1e-5 * trace(A^T A) / P`` in the normalised frame.

    ``threshold`` compares ``|w_j| * rms(A_j) / rms(H)``: the share of the
    response a column explains at unit scale.
    """

    ridge: float | None = None
    threshold: float = 0.05
    max_iter: int = 50
    normalize: bool = True

    def __post_init__(self):
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge weight must be >= 0")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class StridgeResult:
    coef: np.ndarray
    active: np.ndarray
    iterations: int
    residual: float
    rank_deficient: bool = False
    history: list = field(default_factory=list)


def _ridge_solve(A, y, lam):
    """Minimum-norm solution of ``min |A w - y|^2 + lam |w|^2`` via an augmented lstsq."""
    p = A.shape[1]
    if lam > 0:
        A = np.vstack([A, np.sqrt(lam) * np.eye(p)])
        y = np.concatenate([y, np.zeros(p)])
    w, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    return w, rank < p


def stridge(A, H, cfg: StridgeConfig | None = None, mask=None, **overrides) -> StridgeResult:
    """Sparse solution of ``A zeta = H`` by iterated ridge fits and hard thresholding.

    Starts from the ridge fit on all columns, zeroes every coefficient whose
    normalised magnitude falls below the threshold, refits on the survivors,
    and repeats until the active set stops changing or ``max_iter`` is hit.
    Columns outside the boolean ``mask`` are held at zero throughout.
    """
    cfg = cfg or StridgeConfig()
    if overrides:
        cfg = StridgeConfig(**{**cfg.__dict__, **overrides})
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float).ravel()
    n, p = A.shape
    if len(H) != n:
        raise ValueError("A and H disagree in row count")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(H))):
        raise ValueError("non-finite entries in the regression system")
    if n < p:
        warnings.warn(f"underdetermined system: {n} rows for {p} unknowns")

    if cfg.normalize:
        col = np.sqrt(np.mean(A * A, axis=0))
        col[col == 0] = 1.0
        yscale = float(np.sqrt(np.mean(H * H)))
    else:
        col = np.ones(p)
        yscale = 1.0
    if yscale == 0.0:
        return StridgeResult(np.zeros(p), np.zeros(p, bool), 0, 0.0)
    An = A / col
    y = H / yscale
    lam = cfg.ridge
    if lam is None:
        lam = 1e-5 * float(np.sum(An * An)) / p

    active = np.ones(p, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
    if active.shape != (p,):
        raise ValueError("mask length differs from the number of columns")
    w = np.zeros(p)
    deficient = False
    if active.any():
        w[active], deficient = _ridge_solve(An[:, active], y, lam)
    history = [active.copy()]
    it = 0
    for it in range(1, cfg.max_iter + 1):
        new = active & (np.abs(w) >= cfg.threshold)
        if np.array_equal(new, active):
            break
        active = new
        history.append(active.copy())
        w = np.zeros(p)
        if active.any():
            w[active], deficient = _ridge_solve(An[:, active], y, lam)
        else:
            break
    w[~active] = 0.0
    coef = w * yscale / col
    res = float(np.linalg.norm(A @ coef - H) / np.linalg.norm(H))
    return StridgeResult(coef, active, it, res, bool(deficient), history)
