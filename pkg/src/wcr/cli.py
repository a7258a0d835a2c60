"""Command-line front end: ``wcr simulate|fit|evaluate|reproduce|sweep|presets``.

Experiments are JSON documents; named presets ship under ``wcr/presets``.
Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .assembly import assemble
from .collocation import KernelGroupSpec, KernelSet, build_kernel_set
from .dictionary import CoefficientLayout, basis_from_json, own_axis_mask
from .levy_sim import (NoisePerturbation, SdeModel, SimulationBlowUp, SnapshotDataset,
                       StableSamplerConfig, perturb, simulate)
from .model_eval import FitReport, drift_l2_rel, histogram_l1, histogram_table, predict, wd1_marginal
from .regression import StridgeConfig, stridge

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _times(spec) -> np.ndarray:
    if isinstance(spec, dict):
        n = int(round((spec["stop"] - spec["start"]) / spec["step"]))
        return np.round(spec["start"] + spec["step"] * np.arange(n + 1), 10)
    return np.asarray(spec, dtype=float)


def layout_from_json(obj: dict, dim: int) -> CoefficientLayout:
    kw = {}
    if "diffusion_basis" in obj:
        kw["diffusion_basis"] = basis_from_json(obj["diffusion_basis"], dim)
    if "levy_basis" in obj:
        kw["levy_basis"] = basis_from_json(obj["levy_basis"], dim)
    drift = basis_from_json(obj["drift_basis"], dim)
    mask = obj.get("drift_mask")
    if mask == "own_axis":
        mask = own_axis_mask(drift)
    return CoefficientLayout(dim, drift, obj.get("diffusion", "constant"),
                             levy=obj.get("levy", "constant"),
                             drift_mask=None if mask is None else np.asarray(mask, bool), **kw)


def sampler_from_json(obj: dict | None, alpha: float) -> StableSamplerConfig:
    obj = dict(obj or {})
    return StableSamplerConfig(alpha, obj.get("bounding", "none"), obj.get("epsilon", 1e-3),
                               obj.get("radius"))


@dataclass
class ExperimentConfig:
    """Parsed experiment: truth model, data protocol, fit and evaluation settings."""

    raw: dict
    name: str
    dim: int
    alpha: float
    truth: SdeModel | None
    fit_layout: CoefficientLayout

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        try:
            dim = int(obj["dim"])
            alpha = float(obj.get("alpha", 1.5))
            truth = None
            if "model" in obj:
                m = obj["model"]
                lay = layout_from_json(m, dim)
                truth = SdeModel.build(lay, alpha, m["drift"], sigma=m.get("sigma"), xi=m.get("xi"),
                                       G=m.get("G"), levy=m.get("levy_coef"))
            fit = obj.get("fit", {})
            fit_layout = layout_from_json(fit["layout"], dim) if "layout" in fit else truth.layout
            if "dataset" in obj:
                _times(obj["dataset"]["times"])
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"invalid experiment config: {exc!r}") from exc
        return cls(obj, obj.get("name", "experiment"), dim, alpha, truth, fit_layout)

    @property
    def dataset(self) -> dict:
        return self.raw.get("dataset", {})

    @property
    def fit(self) -> dict:
        return self.raw.get("fit", {})

    @property
    def evaluate(self) -> dict:
        return self.raw.get("evaluate", {})

    @property
    def seed(self) -> int:
        return int(self.dataset.get("seed", 0))

    @property
    def sampler(self) -> StableSamplerConfig:
        return sampler_from_json(self.dataset.get("sampler"), self.alpha)

    @property
    def dt(self) -> float:
        return float(self.dataset.get("dt", 1e-3))


def preset_names() -> list[str]:
    root = resources.files("wcr") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(ref: str, seed: int | None = None) -> ExperimentConfig:
    """Load a preset by name or a config by path; ``seed`` overrides the dataset seed."""
    path = Path(ref)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    else:
        res = resources.files("wcr") / "presets" / f"{ref}.json"
        if not res.is_file():
            raise ConfigError(f"unknown preset or missing config file: {ref}")
        text = res.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{ref}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if seed is not None:
        obj = copy.deepcopy(obj)
        obj.setdefault("dataset", {})["seed"] = int(seed)
    return ExperimentConfig.from_json(obj)


# ---------------------------------------------------------------- pipeline


def run_simulation(cfg: ExperimentConfig, threads: int | None = 1) -> SnapshotDataset:
    if cfg.truth is None:
        raise ConfigError("config has no truth model to simulate")
    ds = cfg.dataset
    data = simulate(cfg.truth, int(ds["n"]), _times(ds["times"]), dt=cfg.dt,
                    init_mean=ds.get("init_mean", 0.0), init_var=ds.get("init_var", 0.2),
                    sampler=cfg.sampler, seed=cfg.seed, threads=threads)
    pert = cfg.raw.get("perturbation")
    if pert and pert.get("scale", 0) > 0:
        data = perturb(data, NoisePerturbation(pert.get("kind", "additive"), pert["scale"]),
                       seed=int(pert.get("seed", cfg.seed + 1)))
    return data


def training_data(cfg: ExperimentConfig, data: SnapshotDataset) -> SnapshotDataset:
    fit = cfg.fit
    if "times" in fit:
        return data.select(times=_times(fit["times"]))
    return data.select(t_max=fit.get("t_max", 1.0), t_min=fit.get("t_min"))


def build_kernels(cfg: ExperimentConfig, train: SnapshotDataset) -> KernelSet:
    k = cfg.fit.get("kernels", {})
    groups = [KernelGroupSpec(**g) for g in k.get("groups", [{}])]
    return build_kernel_set(train, groups, k.get("M"), seed=int(k.get("seed", 0)))


def stridge_config(cfg: ExperimentConfig) -> StridgeConfig:
    return StridgeConfig(**cfg.fit.get("stridge", {}))


def fit_dataset(cfg: ExperimentConfig, data: SnapshotDataset, threads: int | None = 1,
                threshold: float | None = None) -> FitReport:
    """Weak-form regression on the training window of ``data``."""
    t0 = time.perf_counter()
    train = training_data(cfg, data)
    if train.dim != cfg.dim:
        raise ConfigError(f"dataset dimension {train.dim} does not match config dimension {cfg.dim}")
    kernels = build_kernels(cfg, train)
    t1 = time.perf_counter()
    system = assemble(train, kernels, cfg.fit_layout, cfg.alpha, threads)
    t2 = time.perf_counter()
    scfg = stridge_config(cfg)
    if threshold is not None:
        scfg = StridgeConfig(**{**scfg.__dict__, "threshold": threshold})
    res = stridge(system.A, system.H, scfg, mask=cfg.fit_layout.free)
    t3 = time.perf_counter()
    rep = FitReport.build(res.coef, cfg.fit_layout, cfg.alpha, cfg.truth, res.residual,
                          {"kernels": t1 - t0, "assembly": t2 - t1, "regression": t3 - t2,
                           "total": t3 - t0}, clamp_tol=scfg.threshold)
    rep.extra.update({"experiment": cfg.name, "rows": int(system.A.shape[0]),
                      "iterations": res.iterations, "rank_deficient": res.rank_deficient,
                      "train_times": [float(t) for t in train.times],
                      "threshold": scfg.threshold})
    box = cfg.evaluate.get("drift_l2_box")
    if box is not None and cfg.truth is not None:
        rep.extra["drift_l2"] = drift_l2_rel(cfg.truth, rep.model, box[0], box[1])
    return rep


def evaluate_fit(cfg: ExperimentConfig, report: FitReport, data: SnapshotDataset, times=None,
                 out_dir: Path | None = None, threads: int | None = 1) -> dict:
    """wd1 per axis between held-out snapshots and the fitted model's prediction.

    When a truth model is known, an independent truth prediction from the
    same initial snapshot gives the Monte Carlo noise floor.
    """
    ev = cfg.evaluate
    times = [float(t) for t in (times if times is not None else ev.get("times", [1.2]))]
    t_init = float(ev.get("initial_time", data.times[0]))
    init = data.snapshot_at(t_init)
    n = int(ev.get("n_paths", len(init)))
    seed = int(ev.get("seed", cfg.seed + 1000))
    known = [t for t in times if np.any(np.abs(data.times - t) <= 1e-9)]
    missing = [t for t in times if t not in known]
    if missing and cfg.truth is None:
        raise ConfigError(f"times {missing} are absent from the dataset and there is no truth model")
    kw = dict(t0=t_init, dt=cfg.dt, threads=threads)
    pred = predict(report.model, init, times, cfg.sampler, n, seed=seed, **kw)
    floor = None
    if cfg.truth is not None:
        floor = predict(cfg.truth, init, times, cfg.sampler, n, seed=seed + 1, **kw)
    ref = None
    if missing:
        ref = predict(cfg.truth, init, times, cfg.sampler, n, seed=seed + 2, **kw)
    out = {"times": times, "initial_time": t_init, "wd1": [], "wd1_noise_floor": [],
           "hist_l1": []}
    for l, t in enumerate(times):
        target = data.snapshot_at(t) if t in known else ref.snapshots[l]
        out["wd1"].append(wd1_marginal(target, pred.snapshots[l]).tolist())
        if floor is not None:
            out["wd1_noise_floor"].append(wd1_marginal(target, floor.snapshots[l]).tolist())
        l1 = []
        for j in range(cfg.dim):
            tab = histogram_table(target[:, j], pred.snapshots[l][:, j])
            l1.append(histogram_l1(tab))
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                np.savetxt(out_dir / f"hist_t{t:g}_x{j + 1}.csv", tab, delimiter=",", fmt="%.10g",
                           header="left,right,data_density,model_density", comments="")
        out["hist_l1"].append(l1)
    return out


def tau_sweep(cfg: ExperimentConfig, data: SnapshotDataset, taus, threads: int | None = 1):
    """Refit at each threshold; assembly is shared."""
    train = training_data(cfg, data)
    system = assemble(train, build_kernels(cfg, train), cfg.fit_layout, cfg.alpha, threads)
    base = stridge_config(cfg)
    rows = []
    for tau in taus:
        res = stridge(system.A, system.H, StridgeConfig(**{**base.__dict__, "threshold": tau}),
                      mask=cfg.fit_layout.free)
        rep = FitReport.build(res.coef, cfg.fit_layout, cfg.alpha, cfg.truth, res.residual,
                              clamp_tol=tau)
        rows.append({"tau": tau, "active": int(np.sum(rep.active)), "residual": res.residual,
                     "mre": rep.mre})
    return rows


# ---------------------------------------------------------------- commands


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("WCR_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"WCR_SEED must be an integer, got {env!r}") from None
    return None


def _out(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _env_seed(args))
    data = run_simulation(cfg, args.threads)
    j, c = data.save(_out(args, cfg.name))
    print(f"wrote {j} and {c}")
    return EXIT_OK


def _read_dataset(stem) -> SnapshotDataset:
    try:
        return SnapshotDataset.load(stem)
    except ValueError as exc:
        raise ConfigError(f"invalid dataset {stem}: {exc}") from exc


def _load_data(args, cfg):
    if args.data:
        return _read_dataset(args.data)
    return run_simulation(cfg, args.threads)


def _print_report(rep: FitReport) -> None:
    width = max(len(n) for n in rep.names)
    for k, n in enumerate(rep.names):
        t = "" if rep.truth is None else f"  truth {rep.truth[k]: .4f}"
        print(f"  {n:<{width}}  {rep.estimates[k]: .6f}{t}")
    if rep.mre is not None:
        print(f"MRE {rep.mre:.4f}")
    if "drift_l2" in rep.extra:
        print(f"drift relative L2 {rep.extra['drift_l2']:.4f}")
    print(f"residual {rep.residual:.4g}  time {rep.timings.get('total', 0):.2f} s")


def cmd_fit(args) -> int:
    cfg = load_config(args.config, _env_seed(args))
    data = _load_data(args, cfg)
    rep = fit_dataset(cfg, data, args.threads)
    out = _out(args, f"{cfg.name}-report.json")
    rep.save(out)
    rep.to_csv(out.with_suffix(".csv"))
    _print_report(rep)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    rpath = Path(args.report)
    if not rpath.is_file():
        raise ConfigError(f"missing report file: {rpath}")
    rep = FitReport.load(rpath)
    exp = rep.extra.get("experiment")
    cfg = load_config(args.config or exp, _env_seed(args))
    data = _read_dataset(args.data) if args.data else run_simulation(cfg, args.threads)
    out_dir = _out(args, f"{cfg.name}-eval")
    metrics = evaluate_fit(cfg, rep, data, args.times, out_dir, args.threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    for t, w, f in zip(metrics["times"], metrics["wd1"], metrics["wd1_noise_floor"] or
                       [None] * len(metrics["times"])):
        extra = "" if f is None else f"  noise floor {np.round(f, 4).tolist()}"
        print(f"t={t:g}  wd1 {np.round(w, 4).tolist()}{extra}")
    print(f"wrote {out_dir / 'metrics.json'}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = load_config(args.config, _env_seed(args))
    out_dir = _out(args, cfg.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = run_simulation(cfg, args.threads)
    data.save(out_dir / "data")
    rep = fit_dataset(cfg, data, args.threads)
    rep.save(out_dir / "report.json")
    rep.to_csv(out_dir / "report.csv")
    _print_report(rep)
    if cfg.evaluate.get("times"):
        metrics = evaluate_fit(cfg, rep, data, None, out_dir / "hist", args.threads)
        (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
        for t, w in zip(metrics["times"], metrics["wd1"]):
            print(f"t={t:g}  wd1 {np.round(w, 4).tolist()}")
    print(f"wrote {out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, _env_seed(args))
    data = _load_data(args, cfg)
    for row in tau_sweep(cfg, data, args.taus, args.threads):
        m = "" if row["mre"] is None else f"  MRE {row['mre']:.4f}"
        print(f"tau {row['tau']:<8g} active {row['active']:3d}  residual {row['residual']:.4g}{m}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wcr", description="Weak collocation regression for SDEs with Levy noise.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="preset name or path to a JSON config")
        sp.add_argument("--seed", type=int, default=None, help="override the dataset seed")
        sp.add_argument("--out", default=None, help="output path or directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores)")

    sp = sub.add_parser("simulate", help="simulate a dataset")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit an SDE to a dataset")
    common(sp)
    sp.add_argument("--data", default=None, help="dataset stem (simulated from the config if absent)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("evaluate", help="compare a fitted model with held-out snapshots")
    sp.add_argument("report", help="fit report JSON")
    common(sp, config=False)
    sp.add_argument("--config", default=None, help="config (default: the report's experiment)")
    sp.add_argument("--data", default=None, help="dataset stem")
    sp.add_argument("--times", type=float, nargs="+", default=None, help="evaluation times")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("reproduce", help="simulate, fit and evaluate a preset")
    common(sp)
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("sweep", help="refit over a list of thresholds")
    common(sp)
    sp.add_argument("--data", default=None)
    sp.add_argument("--taus", type=float, nargs="+", default=[0.0, 0.01, 0.02, 0.05, 0.1, 0.2])
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("presets", help="list bundled presets")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"wcr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationBlowUp, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"wcr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"wcr: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
