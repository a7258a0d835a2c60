"""Gaussian test-kernel sets: data bounds, Latin hypercube centres, mixed-width groups."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .specfun import GaussianKernel

DEFAULT_M = {1: 100, 2: 150, 5: 600}


@dataclass(frozen=True)
class KernelGroupSpec:
    """One group of kernels sharing a width and a sampling box.

    ``lhs_ratio`` scales the data box about its midpoint: 1 keeps it, >1
    expands, <1 shrinks.
    """

    width: float = 1.0
    fraction: float = 1.0
    lhs_ratio: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("kernel width must be positive")
        if not 0 < self.fraction <= 1:
            raise ValueError("group fraction must lie in (0, 1]")
        if not self.lhs_ratio > 0:
            raise ValueError("lhs_ratio must be positive")


@dataclass(frozen=True)
class KernelSet:
    centers: np.ndarray
    widths: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    seed: int | None = None
    groups: tuple = field(default=())

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float)).copy()
        w = np.broadcast_to(np.asarray(self.widths, dtype=float), (c.shape[0],)).copy()
        if c.shape[0] < 1:
            raise ValueError("kernel set needs at least one kernel")
        if np.any(w <= 0) or not np.all(np.isfinite(c)):
            raise ValueError("invalid kernel centres or widths")
        for name, arr in (("centers", c), ("widths", w),
                          ("lower", np.asarray(self.lower, float).copy()),
                          ("upper", np.asarray(self.upper, float).copy())):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.centers.shape[0]

    def __getitem__(self, m: int) -> GaussianKernel:
        return GaussianKernel(tuple(self.centers[m]), float(self.widths[m]))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def take(self, order) -> "KernelSet":
        order = np.asarray(order)
        return KernelSet(self.centers[order], self.widths[order], self.lower, self.upper,
                         self.seed, self.groups)

    def to_json(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "widths": self.widths.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "seed": self.seed,
            "groups": [vars(g) if isinstance(g, KernelGroupSpec) else g for g in self.groups],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KernelSet":
        groups = tuple(KernelGroupSpec(**g) for g in obj.get("groups", ()))
        return cls(np.asarray(obj["centers"], float), np.asarray(obj["widths"], float),
                   np.asarray(obj["lower"], float), np.asarray(obj["upper"], float),
                   obj.get("seed"), groups)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "KernelSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def data_bounds(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Coordinatewise min and max over every sample of every snapshot."""
    snaps = getattr(dataset, "snapshots", dataset)
    snaps = [np.atleast_2d(s) for s in snaps if np.size(s)]
    if not snaps:
        raise ValueError("cannot take bounds of an empty dataset")
    lo = np.min([s.min(axis=0) for s in snaps], axis=0)
    hi = np.max([s.max(axis=0) for s in snaps], axis=0)
    return lo, hi


def scaled_box(lower, upper, ratio: float) -> tuple[np.ndarray, np.ndarray]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mid = 0.5 * (lower + upper)
    half = 0.5 * ratio * (upper - lower)
    return mid - half, mid + half


def lhs_centers(M: int, lower, upper, lhs_ratio: float = 1.0, seed=None) -> np.ndarray:
    """Latin hypercube sample of ``M`` points in the scaled box.

    Each dimension is cut into ``M`` equal strata; every stratum receives
    exactly one point, placed uniformly inside it, with strata assigned by an
    independent random permutation per dimension.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if np.any(upper < lower):
        raise ValueError("upper bound below lower bound")
    lo, hi = scaled_box(lower, upper, lhs_ratio)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = lower.size
    u = np.empty((M, d))
    for j in range(d):
        u[:, j] = (rng.permutation(M) + rng.uniform(size=M)) / M
    return lo + (hi - lo) * u


def _largest_remainder(M: int, fractions) -> list[int]:
    quotas = np.asarray(fractions, dtype=float) * M
    counts = np.floor(quotas).astype(int)
    short = M - counts.sum()
    # ties resolve toward the earlier group
    order = sorted(range(len(quotas)), key=lambda g: (-(quotas[g] - counts[g]), g))
    for g in order[:short]:
        counts[g] += 1
    return counts.tolist()


def build_kernel_set(dataset, groups=None, M: int | None = None, seed=0) -> KernelSet:
    """Kernel centres by per-group LHS over the data box, total count ``M``."""
    groups = tuple(groups or (KernelGroupSpec(),))
    total = sum(g.fraction for g in groups)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"group fractions must sum to 1, got {total}")
    lower, upper = data_bounds(dataset)
    if M is None:
        M = DEFAULT_M.get(lower.size, 100 * lower.size)
    counts = _largest_remainder(M, [g.fraction for g in groups])
    if M >= len(groups) and any(c == 0 for c in counts):
        raise ValueError(f"a kernel group received no kernels (counts {counts})")
    centers, widths = [], []
    for gi, (g, n) in enumerate(zip(groups, counts)):
        if n == 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(gi,)))
        centers.append(lhs_centers(n, lower, upper, g.lhs_ratio, rng))
        widths.append(np.full(n, g.width))
    return KernelSet(np.concatenate(centers), np.concatenate(widths), lower, upper, seed, groups)
