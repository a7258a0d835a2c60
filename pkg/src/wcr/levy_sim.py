"""Forward simulation of SDEs driven by Gaussian and symmetric alpha-stable noise.

The Euler step is::

    X <- X + m(X) dt + sigma(X) sqrt(dt) eta + xi(X) dt^(1/alpha) S

with ``eta`` standard normal and ``S ~ S_alpha(1, 0, 0)`` drawn by the
Chambers-Mallows-Stuck transform, independently per coordinate.

Paths are simulated in fixed-size chunks.  Each chunk owns RNG substreams
derived from ``(seed, chunk index)`` and always draws a full chunk, so the
trajectory of path ``i`` depends only on ``(seed, i)``.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dictionary import CoefficientLayout, eval_basis
from .specfun import check_alpha

GENERATOR_VERSION = "wcr-levy-sim/1"
CHUNK = 4096
BLOWUP = 1e6


class SimulationBlowUp(RuntimeError):
    """Raised when a simulated coordinate becomes non-finite or exceeds the guard."""

    def __init__(self, path: int, time: float, value: float):
        super().__init__(f"path {path} blew up at t={time:.6g} (|x|={value:.3g})")
        self.path = path
        self.time = time


@dataclass(frozen=True)
class StableSamplerConfig:
    """Stable sampler settings.

    ``bounding`` is ``"none"``, ``"v-perturbation"`` (keep the uniform angle
    ``epsilon`` away from +-pi/2) or ``"clip"`` (hard clip at ``radius``).
    """

    alpha: float
    bounding: str = "none"
    epsilon: float = 1e-3
    radius: float | None = None
    seed: int | None = None

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.bounding not in ("none", "v-perturbation", "clip"):
            raise ValueError(f"unknown bounding mode {self.bounding!r}")
        if self.bounding == "v-perturbation" and not (0 < self.epsilon < math.pi / 2):
            raise ValueError("epsilon must lie in (0, pi/2)")
        if self.bounding == "clip" and not (self.radius is not None and self.radius > 0):
            raise ValueError("clip mode needs a positive radius")


@dataclass(frozen=True)
class NoisePerturbation:
    kind: str = "additive"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("additive", "multiplicative"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not self.scale >= 0:
            raise ValueError("perturbation scale must be >= 0")


def cms_transform(V, W, alpha: float) -> np.ndarray:
    """Chambers-Mallows-Stuck map from ``V ~ U(-pi/2, pi/2)``, ``W ~ Exp(1)`` to ``S_alpha(1,0,0)``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos(V - alpha * V) / W) ** ((1.0 - alpha) / alpha))


def draw_stable(cfg: StableSamplerConfig, size, rng: np.random.Generator) -> np.ndarray:
    half = math.pi / 2
    if cfg.bounding == "v-perturbation":
        V = rng.uniform(-half + cfg.epsilon, half - cfg.epsilon, size)
    else:
        V = rng.uniform(-half, half, size)
    W = rng.standard_exponential(size)
    X = cms_transform(V, W, cfg.alpha)
    if cfg.bounding == "clip":
        np.clip(X, -cfg.radius, cfg.radius, out=X)
    return X


def sample_standard_stable(cfg: StableSamplerConfig, n: int, rng: np.random.Generator | None = None):
    """``n`` i.i.d. draws from ``S_alpha(1, 0, 0)`` (bounded if configured)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return draw_stable(cfg, n, rng)


@dataclass
class SdeModel:
    """SDE ``dX = m dt + sigma dB + xi dL`` expanded over basis dictionaries.

    ``coefficients`` is the flat vector in regression frame: drift
    coefficients, coefficients of ``G = sigma sigma^T / 2``, and coefficients
    of ``|xi|^alpha``.
    """

    layout: CoefficientLayout
    coefficients: np.ndarray
    alpha: float = 1.5

    def __post_init__(self):
        self.alpha = check_alpha(self.alpha)
        self.coefficients = np.asarray(self.coefficients, dtype=float).copy()
        if self.coefficients.shape != (self.layout.size,):
            raise ValueError(
                f"expected {self.layout.size} coefficients, got {self.coefficients.shape}"
            )

    @classmethod
    def build(cls, layout: CoefficientLayout, alpha: float, drift, sigma=None, xi=None,
              G=None, levy=None) -> "SdeModel":
        """Construct from natural parameters.

        ``sigma`` (constant mode, per axis) and ``xi`` (constant mode) are
        converted to ``G = sigma^2/2`` and ``|xi|^alpha``; ``G`` and ``levy``
        give regression-frame blocks directly.
        """
        if sigma is not None:
            G = 0.5 * np.asarray(sigma, dtype=float) ** 2
        if xi is not None:
            levy = np.abs(np.asarray(xi, dtype=float)) ** alpha
        return cls(layout, layout.join(drift, G, levy), alpha)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def blocks(self) -> dict:
        return self.layout.split(self.coefficients)

    def drift(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return eval_basis(self.layout.drift_basis, X) @ self.blocks["drift"].T

    def diffusion_G(self, X) -> np.ndarray:
        """``G(x)`` as an (N, d, d) array."""
        X = np.atleast_2d(X)
        n, d = X.shape
        G = np.zeros((n, d, d))
        lay, blk = self.layout, self.blocks["diffusion"]
        if lay.diffusion == "constant":
            G[:, np.arange(d), np.arange(d)] = blk
        elif lay.diffusion == "diagonal":
            G[:, np.arange(d), np.arange(d)] = eval_basis(lay.diffusion_basis, X) @ blk.T
        elif lay.diffusion == "full":
            G = np.einsum("ns,ijs->nij", eval_basis(lay.diffusion_basis, X), blk)
        return G

    def _levy_raw(self, X) -> np.ndarray:
        lay, blk = self.layout, self.blocks["levy"]
        if lay.levy == "constant":
            return np.broadcast_to(blk, X.shape)
        if lay.levy == "functional":
            vals = eval_basis(lay.levy_basis, X, alpha=self.alpha) @ blk
            return vals[:, None]
        return np.zeros(X.shape)

    def levy_intensity(self, X) -> np.ndarray:
        """``xi(x)`` per axis, shape (N, d); negative ``|xi|^alpha`` values clamp to 0."""
        X = np.atleast_2d(X)
        return np.maximum(self._levy_raw(X), 0.0) ** (1.0 / self.alpha)

    @property
    def has_gaussian(self) -> bool:
        return self.layout.diffusion != "none" and bool(np.any(self.blocks["diffusion"]))

    @property
    def has_levy(self) -> bool:
        return self.layout.levy != "none" and bool(np.any(self.blocks["levy"]))

    def gaussian_increment(self, X, eta, dt) -> np.ndarray:
        lay = self.layout
        blk = self.blocks["diffusion"]
        if lay.diffusion == "constant":
            return np.sqrt(np.maximum(2.0 * blk, 0.0)) * math.sqrt(dt) * eta
        if lay.diffusion == "diagonal":
            g = eval_basis(lay.diffusion_basis, X) @ blk.T
            return np.sqrt(np.maximum(2.0 * g, 0.0)) * math.sqrt(dt) * eta
        # symmetric square root of 2G(x); any sigma with sigma sigma^T = 2G has the same law
        w, V = np.linalg.eigh(2.0 * self.diffusion_G(X))
        root = np.einsum("nij,nj,nkj->nik", V, np.sqrt(np.maximum(w, 0.0)), V)
        return math.sqrt(dt) * np.einsum("nij,nj->ni", root, eta)

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "layout": self.layout.to_json(),
                "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SdeModel":
        return cls(CoefficientLayout.from_json(obj["layout"]), obj["coefficients"], obj["alpha"])


@dataclass
class SnapshotDataset:
    """Aggregate data: ``L`` unlinked snapshots of d-dimensional samples."""

    times: np.ndarray
    snapshots: list
    alpha: float | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.snapshots = [np.atleast_2d(np.asarray(s, dtype=float)) for s in self.snapshots]
        if self.times.ndim != 1 or len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots must have equal length")
        if len(self.times) == 0:
            raise ValueError("dataset has no snapshots")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        dims = {s.shape[1] for s in self.snapshots}
        if len(dims) != 1:
            raise ValueError("all snapshots must share one dimension")
        for l, s in enumerate(self.snapshots):
            if s.shape[0] == 0:
                raise ValueError(f"snapshot {l} (t={self.times[l]:g}) is empty")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"snapshot {l} (t={self.times[l]:g}) has non-finite values")

    @property
    def dim(self) -> int:
        return self.snapshots[0].shape[1]

    @property
    def counts(self) -> list[int]:
        return [s.shape[0] for s in self.snapshots]

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        hit = np.flatnonzero(np.abs(self.times - t) <= tol)
        if hit.size == 0:
            raise KeyError(f"no snapshot at t={t:g}")
        return int(hit[0])

    def snapshot_at(self, t: float) -> np.ndarray:
        return self.snapshots[self.index_of(t)]

    def select(self, times=None, t_max: float | None = None, t_min: float | None = None):
        """Sub-dataset restricted to given times and/or a time window."""
        keep = np.ones(len(self.times), dtype=bool)
        if times is not None:
            keep[:] = False
            for t in np.atleast_1d(times):
                keep[self.index_of(float(t))] = True
        if t_max is not None:
            keep &= self.times <= t_max + 1e-12
        if t_min is not None:
            keep &= self.times >= t_min - 1e-12
        idx = np.flatnonzero(keep)
        return replace(self, times=self.times[idx], snapshots=[self.snapshots[i] for i in idx],
                       meta=dict(self.meta))

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.json`` (metadata) and ``<stem>.csv`` (samples)."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        meta = {"dim": self.dim, "times": [float(t) for t in self.times], "counts": self.counts,
                "alpha": self.alpha, "seed": self.seed, "generator_version": GENERATOR_VERSION}
        jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
        jpath.write_text(json.dumps(meta, indent=2) + "\n")
        header = ",".join(["snapshot_index"] + [f"x{i + 1}" for i in range(self.dim)])
        with open(cpath, "w", newline="\n") as fh:
            fh.write(header + "\n")
            for l, s in enumerate(self.snapshots):
                rows = np.column_stack([np.full(len(s), l), s])
                np.savetxt(fh, rows, fmt=["%d"] + ["%.17g"] * self.dim, delimiter=",")
        return jpath, cpath

    @classmethod
    def load(cls, stem) -> "SnapshotDataset":
        stem = Path(stem)
        if stem.suffix in (".json", ".csv"):
            stem = stem.with_suffix("")
        meta = json.loads(stem.with_suffix(".json").read_text())
        with open(stem.with_suffix(".csv")) as fh:
            header = fh.readline().strip().split(",")
            if header[0] != "snapshot_index" or len(header) != meta["dim"] + 1:
                raise ValueError(f"bad CSV header {header}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        idx = data[:, 0].astype(int) if len(data) else np.zeros(0, int)
        if np.any(np.diff(idx) < 0):
            raise ValueError("rows must be grouped by ascending snapshot_index")
        counts = np.bincount(idx, minlength=len(meta["times"]))
        if len(counts) != len(meta["times"]) or list(counts) != list(meta["counts"]):
            raise ValueError(f"count mismatch: metadata {meta['counts']} vs samples {list(counts)}")
        bounds = np.concatenate([[0], np.cumsum(counts)])
        snaps = [data[bounds[l]:bounds[l + 1], 1:] for l in range(len(counts))]
        return cls(meta["times"], snaps, meta.get("alpha"), meta.get("seed"),
                   {"generator_version": meta.get("generator_version")})


def _grid_steps(times, t0: float, dt: float) -> np.ndarray:
    rel = (np.asarray(times, dtype=float) - t0) / dt
    steps = np.rint(rel).astype(int)
    if np.any(np.abs(rel - steps) > 1e-6) or np.any(steps < 0):
        raise ValueError("observation times must lie on the simulation grid at or after t0")
    return steps


def _substream(seed: int, chunk: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk, stream)))


def _simulate_chunk(model: SdeModel, chunk: int, n: int, steps: np.ndarray, dt: float,
                    t0: float, init, sampler: StableSamplerConfig, seed: int) -> np.ndarray:
    d = model.dim
    g_init, g_gauss, g_levy = (_substream(seed, chunk, s) for s in range(3))
    if isinstance(init, np.ndarray):
        X = init[g_init.integers(0, len(init), CHUNK)][:n].copy()
    else:
        mean, var = init
        X = (mean + math.sqrt(var) * g_init.standard_normal((CHUNK, d)))[:n]
    out = np.empty((len(steps), n, d))
    use_gauss, use_levy = model.has_gaussian, model.has_levy
    levy_scale = dt ** (1.0 / model.alpha)
    k_obs = 0
    while k_obs < len(steps) and steps[k_obs] == 0:
        out[k_obs] = X
        k_obs += 1
    for k in range(1, int(steps[-1]) + 1):
        inc = model.drift(X) * dt
        if use_gauss:
            eta = g_gauss.standard_normal((CHUNK, d))[:n]
            inc += model.gaussian_increment(X, eta, dt)
        if use_levy:
            S = draw_stable(sampler, (CHUNK, d), g_levy)[:n]
            inc += model.levy_intensity(X) * levy_scale * S
        X = X + inc
        bad = ~np.isfinite(X) | (np.abs(X) > BLOWUP)
        if bad.any():
            row = int(np.flatnonzero(bad.any(axis=1))[0])
            raise SimulationBlowUp(chunk * CHUNK + row, t0 + k * dt, float(np.abs(X[row]).max()))
        while k_obs < len(steps) and steps[k_obs] == k:
            out[k_obs] = X
            k_obs += 1
    return out


def simulate(model: SdeModel, n_paths: int, obs_times, *, dt: float = 1e-3,
             init_mean=0.0, init_var: float = 0.2, initial_samples=None,
             sampler: StableSamplerConfig | None = None, seed: int = 0, t0: float = 0.0,
             threads: int | None = 1) -> SnapshotDataset:
    """Euler simulation recorded at ``obs_times`` (one sample per path per snapshot).

    The initial state is ``N(init_mean, init_var I)`` unless
    ``initial_samples`` is given, in which case each path starts from a
    draw with replacement from those samples.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    obs_times = np.asarray(obs_times, dtype=float)
    steps = _grid_steps(obs_times, t0, dt)
    if np.any(np.diff(steps) <= 0):
        raise ValueError("observation times must be strictly increasing")
    if sampler is None:
        sampler = StableSamplerConfig(model.alpha)
    elif abs(sampler.alpha - model.alpha) > 1e-12:
        raise ValueError("sampler alpha differs from model alpha")
    if initial_samples is not None:
        init = np.atleast_2d(np.asarray(initial_samples, dtype=float))
        if init.shape[1] != model.dim:
            raise ValueError("initial samples have the wrong dimension")
    else:
        if not init_var > 0:
            raise ValueError("initial variance must be positive")
        init = (np.broadcast_to(np.asarray(init_mean, float), (model.dim,)), float(init_var))
    nchunks = -(-n_paths // CHUNK)
    sizes = [min(CHUNK, n_paths - c * CHUNK) for c in range(nchunks)]
    work = lambda c: _simulate_chunk(model, c, sizes[c], steps, dt, t0, init, sampler, seed)
    threads = threads or os.cpu_count() or 1
    if threads > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(nchunks)))
    else:
        parts = [work(c) for c in range(nchunks)]
    paths = np.concatenate(parts, axis=1)
    return SnapshotDataset(obs_times, list(paths), model.alpha, seed,
                           {"generator_version": GENERATOR_VERSION, "dt": dt})


def perturb(dataset: SnapshotDataset, p: NoisePerturbation, seed: int = 0) -> SnapshotDataset:
    """Copy of ``dataset`` with uniform observation noise ``U[-1, 1]`` scaled by ``p.scale``."""
    rng = np.random.default_rng(seed)
    snaps = []
    for s in dataset.snapshots:
        U = rng.uniform(-1.0, 1.0, s.shape)
        if p.kind == "additive":
            snaps.append(s + p.scale * U)
        else:
            snaps.append(s * (1.0 + p.scale * U))
    return replace(dataset, snapshots=snaps, meta=dict(dataset.meta))
