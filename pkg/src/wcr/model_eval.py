"""Reconstruction of fitted SDEs, error metrics and forward prediction.

Parameters are reported in the following frame:

* drift coefficients as regressed,
* constant diffusion as ``sigma_i = sqrt(2 G_ii)``,
* state-dependent diffusion as coefficients of ``sigma^2 = 2 G``,
* constant Levy intensity as ``xi_i = c_i^(1/alpha)``,
* functional Levy intensity as the regressed coefficients of ``|xi(x)|^alpha``.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from .dictionary import CoefficientLayout
from .levy_sim import SdeModel, SnapshotDataset, StableSamplerConfig, simulate


def report_parameters(model: SdeModel) -> tuple[list[str], np.ndarray]:
    """Names and values of ``model`` in the reporting frame."""
    lay = model.layout
    names = lay.names()
    vals = model.coefficients.copy()
    sl = lay.slices
    dif = np.arange(sl["diffusion"].start, sl["diffusion"].stop)
    lev = np.arange(sl["levy"].start, sl["levy"].stop)
    if lay.diffusion == "constant":
        vals[dif] = np.sqrt(2.0 * np.maximum(vals[dif], 0.0))
        for k in dif:
            names[k] = f"sigma{k - sl['diffusion'].start + 1}"
    elif lay.diffusion in ("diagonal", "full"):
        vals[dif] = 2.0 * vals[dif]
        for k in dif:
            names[k] = "sigma^2_" + names[k][1:]
    if lay.levy == "constant":
        vals[lev] = np.maximum(vals[lev], 0.0) ** (1.0 / model.alpha)
        for k in lev:
            names[k] = f"xi{k - sl['levy'].start + 1}"
    return names, vals


def reconstruct(zeta, layout: CoefficientLayout, alpha: float, clamp_tol: float = 0.0):
    """Fitted model from a regression vector.

    Negative constant noise coefficients are clamped to 0. Returns
    ``(model, flags)``; ``flags`` lists the clamped parameter names, and
    a warning is issued whenever a clamp exceeds ``clamp_tol`` in magnitude.
    """
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (layout.size,):
        raise ValueError(f"coefficient vector must have length {layout.size}, got {zeta.shape}")
    coef = zeta.copy()
    names = layout.names()
    flags = []
    blocks = []
    if layout.diffusion == "constant":
        blocks.append(layout.slices["diffusion"])
    if layout.levy == "constant":
        blocks.append(layout.slices["levy"])
    for sl in blocks:
        for k in range(sl.start, sl.stop):
            if coef[k] < 0:
                flags.append(names[k])
                if -coef[k] > clamp_tol:
                    warnings.warn(f"negative noise coefficient {names[k]}={coef[k]:.3g} clamped to 0")
                coef[k] = 0.0
    return SdeModel(layout, coef, alpha), flags


def _param_map(model) -> dict:
    names, vals = report_parameters(model)
    return dict(zip(names, vals))


def relative_errors(truth: SdeModel, fitted: SdeModel) -> dict:
    """Relative error per truth-nonzero parameter, matched by name."""
    t = _param_map(truth)
    f = _param_map(fitted)
    return {k: abs(f.get(k, 0.0) - v) / abs(v) for k, v in t.items() if v != 0}


def mre(truth: SdeModel, fitted: SdeModel) -> float:
    """Maximum relative error over the nonzero parameters of ``truth``.

    Parameters are matched by name, so the two models may use different
    dictionaries; a truth parameter missing from ``fitted`` counts as 0.
    """
    errs = relative_errors(truth, fitted)
    if not errs:
        raise ValueError("truth model has no nonzero parameters")
    return float(max(errs.values()))


def _field(m):
    return m.drift if isinstance(m, SdeModel) else m


def drift_l2_rel(truth, fitted, lower, upper, n_samples: int = 10000, seed=0) -> float:
    """Monte Carlo ``|m_fit - m| / |m|`` over uniform points in a box.

    ``truth`` and ``fitted`` are SDE models or callables mapping (n, d)
    arrays to (n, d) drift values.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise ValueError("invalid box")
    rng = np.random.default_rng(seed)
    X = rng.uniform(lower, upper, (n_samples, lower.size))
    mt = np.asarray(_field(truth)(X), dtype=float).reshape(n_samples, -1)
    mf = np.asarray(_field(fitted)(X), dtype=float).reshape(n_samples, -1)
    den = np.linalg.norm(mt)
    if den == 0:
        raise ValueError("truth drift vanishes on the box")
    return float(np.linalg.norm(mf - mt) / den)


def wd1_marginal(samples_a, samples_b) -> np.ndarray:
    """Wasserstein-1 distance between the empirical marginals, one value per coordinate."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample set")
    if a.shape[1] != b.shape[1]:
        raise ValueError("sample sets differ in dimension")
    if len(a) == len(b):
        return np.mean(np.abs(np.sort(a, axis=0) - np.sort(b, axis=0)), axis=0)
    return np.array([wasserstein_distance(a[:, j], b[:, j]) for j in range(a.shape[1])])


def predict(fitted: SdeModel, initial, times, sampler: StableSamplerConfig | None = None,
            n_paths: int | None = None, *, t0: float = 0.0, dt: float = 1e-3, seed: int = 0,
            threads: int | None = 1) -> SnapshotDataset:
    """Forward simulation from the empirical law of ``initial`` (resampled with replacement)."""
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    if n_paths is None:
        n_paths = len(initial)
    return simulate(fitted, n_paths, times, dt=dt, initial_samples=initial, sampler=sampler,
                    seed=seed, t0=t0, threads=threads)


def histogram_table(data, model, bins: int = 100) -> np.ndarray:
    """Fixed-bin densities of two 1-D sample sets over their joint range.

    Columns: left edge, right edge, data density, model density.
    """
    data = np.ravel(data)
    model = np.ravel(model)
    lo = min(data.min(), model.min())
    hi = max(data.max(), model.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    hd, _ = np.histogram(data, edges, density=True)
    hm, _ = np.histogram(model, edges, density=True)
    return np.column_stack([edges[:-1], edges[1:], hd, hm])


def histogram_l1(table: np.ndarray) -> float:
    width = table[:, 1] - table[:, 0]
    return float(np.sum(np.abs(table[:, 2] - table[:, 3]) * width))


@dataclass
class FitReport:
    model: SdeModel
    zeta: np.ndarray
    names: list
    estimates: np.ndarray
    truth: np.ndarray | None = None
    mre: float | None = None
    active: np.ndarray | None = None
    residual: float | None = None
    timings: dict = field(default_factory=dict)
    clamped: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, zeta, layout: CoefficientLayout, alpha: float, truth: SdeModel | None = None,
              residual: float | None = None, timings: dict | None = None, clamp_tol: float = 0.0):
        zeta = np.asarray(zeta, dtype=float)
        model, flags = reconstruct(zeta, layout, alpha, clamp_tol)
        names, est = report_parameters(model)
        tvals, err = None, None
        if truth is not None:
            tmap = _param_map(truth)
            tvals = np.array([tmap.get(n, 0.0) for n in names])
            # MRE is undefined when the dictionary cannot represent the truth
            if all(n in names for n, v in tmap.items() if v != 0):
                err = mre(truth, model)
        return cls(model, zeta, names, est, tvals, err, zeta != 0, residual, dict(timings or {}),
                   flags)

    def estimate(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def active_names(self) -> list[str]:
        return [n for n, a in zip(self.names, self.active) if a]

    def to_json(self) -> dict:
        rows = []
        for k, n in enumerate(self.names):
            row = {"name": n, "estimate": float(self.estimates[k]), "active": bool(self.active[k])}
            if self.truth is not None:
                row["truth"] = float(self.truth[k])
            rows.append(row)
        return {
            "model": self.model.to_json(),
            "zeta": self.zeta.tolist(),
            "parameters": rows,
            "mre": self.mre,
            "residual": self.residual,
            "timings": self.timings,
            "clamped": self.clamped,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FitReport":
        rows = obj["parameters"]
        truth = np.array([r["truth"] for r in rows]) if rows and "truth" in rows[0] else None
        return cls(SdeModel.from_json(obj["model"]), np.asarray(obj["zeta"], float),
                   [r["name"] for r in rows], np.array([r["estimate"] for r in rows]), truth,
                   obj.get("mre"), np.array([r["active"] for r in rows]), obj.get("residual"),
                   obj.get("timings", {}), obj.get("clamped", []), obj.get("extra", {}))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FitReport":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "truth", "estimate"])
            for k, n in enumerate(self.names):
                t = "" if self.truth is None else repr(float(self.truth[k]))
                w.writerow([n, t, repr(float(self.estimates[k]))])
