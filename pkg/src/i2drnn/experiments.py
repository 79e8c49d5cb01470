"""Named end-to-end experiment drivers.

Each driver runs a multi-seed comparison, writes one subdirectory per run
(checkpoint, report, loss curve) plus a runs.csv / summary.json pair at the
top level, and returns the summary dict. Runs are independent (seed, config)
jobs fanned out over a thread pool; every job re-derives its dataset from
its own seeded stream, so results do not depend on scheduling order.

fig4b        two-scale recall, hierarchical vs stacked, 5 seeds
fig4cde      robustness sweeps over channel count, first-segment length,
             and gap length (adjusted MSE for the gap sweep)
fig4fg       depth comparison H60 / H30-30 / H20-20-20 on the two- and
             three-scale tasks
fig6         per-layer lagged-MI profiles after training on a learnable
             single-channel recall task
farima_config  capacity pipeline on FARIMA series plus a grid-search over
             total hidden size
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .capacity import (DEFAULT_SIZE_GRID, config_curve, necessary_config,
                       split_size, sufficient_config)
from .datagen import (CopyTaskSpec, FarimaSpec, Sample, SequenceDataset,
                      gen_copy_task, gen_farima, normalize_split)
from .diagnostics import layer_mi_profile, save_profile_csv
from .infotheory import fit_exponential, lagged_mi_curve
from .model import ARCH_I2DRNN, ARCH_STACKED, ModelConfig, save_params
from .numerics import Rng
from .training import Hyper, evaluate, save_loss_csv, save_report, train

EXPERIMENT_NAMES = ("fig4b", "fig4cde", "fig4fg", "fig6", "farima_config")

BASE_COPY = CopyTaskSpec(n_channels=80, s1=10, t1=15, s2=10, t2=15)
COPY_SAMPLES = 200

# reduced channel count keeps the longer three-scale sequences affordable
THREE_SCALE_COPY = CopyTaskSpec(n_channels=40, s1=10, t1=15, s2=10, t2=15,
                                scales=3, s3=10, t3=15)

# single channel with short payloads keeps both recall spans learnable at
# 10+10 units, and the scalar input keeps the binned MI estimate nearly
# bias-free; wider tasks sit at the mean-prediction floor where per-layer
# MI comparisons measure estimator noise
FIG6_COPY = CopyTaskSpec(n_channels=1, s1=4, t1=6, s2=4, t2=6)
FIG6_MI_BINS = 8

FARIMA_MI_BINS = 10       # coarse bins keep the plug-in bias floor low
FARIMA_MI_MAX_LAG = 60
FARIMA_TRAIN_WINDOW = 100

DEFAULT_HYPER = {
    "fig4b": Hyper(max_epochs=250, patience=25),
    "fig4cde": Hyper(max_epochs=200, patience=20),
    "fig4fg": Hyper(max_epochs=150, patience=20),
    "fig6": Hyper(max_epochs=600, patience=60),
    "farima_config": Hyper(max_epochs=60, patience=10),
}


def _write_rows(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _run_dir(out_dir, tag: str) -> Path | None:
    if out_dir is None:
        return None
    d = Path(out_dir) / tag
    d.mkdir(parents=True, exist_ok=True)
    return d


def _copy_dataset(spec: CopyTaskSpec, seed: int) -> SequenceDataset:
    rng = Rng(seed)
    ds = gen_copy_task(spec, COPY_SAMPLES, rng.split("data"))
    return normalize_split(ds, rng.split("norm"))


def copy_run(spec: CopyTaskSpec, arch: str, layer_dims: tuple[int, ...],
             seed: int, hyper: Hyper, out_dir=None, tag: str = "") -> dict:
    """One seeded train/eval on a recall task; returns a flat metrics row."""
    ds = _copy_dataset(spec, seed)
    cfg = ModelConfig(arch=arch, layer_dims=layer_dims,
                      input_dim=spec.n_channels, output_dim=spec.n_channels)
    rng = Rng(seed)
    params, report = train(ds, cfg, hyper, rng.split(f"train.{arch}.{tag}"))
    metrics = evaluate(params, ds, "test")
    run_dir = _run_dir(out_dir, tag)
    if run_dir is not None:
        save_params(params, run_dir / "checkpoint.json")
        save_report(report, run_dir / "report.json")
        save_loss_csv(report, run_dir / "loss.csv")
    row = {"arch": arch, "seed": seed,
           "layers": "-".join(str(d) for d in layer_dims),
           "rmse": metrics["rmse"], "mae": metrics["mae"],
           "best_val_loss": report.best_val_loss,
           "epochs": report.epochs_run}
    if "adjusted_mse" in metrics:
        row["adjusted_mse"] = metrics["adjusted_mse"]
    return row


def _fan_out(jobs, threads: int):
    if threads <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _mean_sd(vals) -> tuple[float, float]:
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def run_fig4b(out_dir=None, seeds=range(5), hyper: Hyper | None = None,
              threads: int = 1) -> dict:
    """Two-scale recall: hierarchical vs stacked at 10+10 units per seed."""
    hyper = hyper or DEFAULT_HYPER["fig4b"]
    jobs = []
    for seed in seeds:
        for arch in (ARCH_I2DRNN, ARCH_STACKED):
            tag = f"{arch}_s{seed}"
            jobs.append(lambda a=arch, s=seed, t=tag: copy_run(
                BASE_COPY, a, (10, 10), s, hyper, out_dir, t))
    rows = sorted(_fan_out(jobs, threads), key=lambda r: (r["arch"], r["seed"]))
    summary = {"experiment": "fig4b", "seeds": list(seeds), "per_arch": {}}
    for arch in (ARCH_I2DRNN, ARCH_STACKED):
        vals = [r["rmse"] for r in rows if r["arch"] == arch]
        mean, sd = _mean_sd(vals)
        summary["per_arch"][arch] = {"rmse_mean": mean, "rmse_sd": sd,
                                     "rmse": vals}
    summary["hierarchical_better"] = (
        summary["per_arch"][ARCH_I2DRNN]["rmse_mean"]
        < summary["per_arch"][ARCH_STACKED]["rmse_mean"])
    if out_dir is not None:
        _write_rows(Path(out_dir) / "runs.csv",
                    ["arch", "seed", "layers", "rmse", "mae", "adjusted_mse",
                     "best_val_loss", "epochs"], rows)
        _write_json(Path(out_dir) / "summary.json", summary)
    return summary


def sweep_settings() -> list[dict]:
    """The three robustness sweeps; each setting names its metric."""
    base = BASE_COPY
    settings = []
    for n in (10, 30, 50, 70, 90):
        settings.append({"sweep": "N", "name": f"N{n}", "metric": "rmse",
                         "spec": CopyTaskSpec(n_channels=n, s1=base.s1,
                                              t1=base.t1, s2=base.s2,
                                              t2=base.t2)})
    for s1 in (5, 10, 15, 20, 25, 30):
        settings.append({"sweep": "S1", "name": f"S1_{s1}", "metric": "rmse",
                         "spec": CopyTaskSpec(n_channels=base.n_channels,
                                              s1=s1, t1=base.t1, s2=base.s2,
                                              t2=base.t2)})
    for ts in (5, 10, 15, 20, 25):
        settings.append({"sweep": "Ts", "name": f"Ts{ts}",
                         "metric": "adjusted_mse",
                         "spec": CopyTaskSpec(n_channels=base.n_channels,
                                              s1=base.s1, t1=ts, s2=base.s2,
                                              t2=ts)})
    return settings


def run_fig4cde(out_dir=None, seeds=range(3), hyper: Hyper | None = None,
                threads: int = 1) -> dict:
    """Robustness sweeps; per sweep, count the settings the hierarchical
    net wins on the sweep's metric (mean over seeds)."""
    hyper = hyper or DEFAULT_HYPER["fig4cde"]
    settings = sweep_settings()
    jobs = []
    for st in settings:
        for seed in seeds:
            for arch in (ARCH_I2DRNN, ARCH_STACKED):
                tag = f"{st['name']}_{arch}_s{seed}"
                jobs.append(lambda sp=st["spec"], a=arch, s=seed, t=tag,
                            nm=st["name"]: dict(copy_run(
                                sp, a, (10, 10), s, hyper, out_dir, t),
                                setting=nm))
    rows = sorted(_fan_out(jobs, threads),
                  key=lambda r: (r["setting"], r["arch"], r["seed"]))
    summary = {"experiment": "fig4cde", "seeds": list(seeds), "sweeps": {}}
    for st in settings:
        sweep = summary["sweeps"].setdefault(
            st["sweep"], {"metric": "", "settings": {}, "wins": 0, "total": 0})
        sweep["metric"] = st["metric"]
        means = {}
        for arch in (ARCH_I2DRNN, ARCH_STACKED):
            vals = [r[st["metric"]] for r in rows
                    if r["setting"] == st["name"] and r["arch"] == arch]
            means[arch], _ = _mean_sd(vals)
        win = means[ARCH_I2DRNN] < means[ARCH_STACKED]
        sweep["settings"][st["name"]] = {
            "hierarchical": means[ARCH_I2DRNN],
            "stacked": means[ARCH_STACKED], "win": win}
        sweep["wins"] += int(win)
        sweep["total"] += 1
    for sweep in summary["sweeps"].values():
        sweep["required"] = math.ceil(0.8 * sweep["total"])
        sweep["passed"] = sweep["wins"] >= sweep["required"]
    if out_dir is not None:
        _write_rows(Path(out_dir) / "runs.csv",
                    ["setting", "arch", "seed", "layers", "rmse", "mae",
                     "adjusted_mse", "best_val_loss", "epochs"], rows)
        _write_json(Path(out_dir) / "summary.json", summary)
    return summary


DEPTH_CONFIGS = (("H60", (60,)), ("H30-30", (30, 30)),
                 ("H20-20-20", (20, 20, 20)))


def run_fig4fg(out_dir=None, seeds=range(5), hyper: Hyper | None = None,
               threads: int = 1) -> dict:
    """Depth effect: one wide layer against two- and three-layer splits of
    the same budget, on both recall tasks."""
    hyper = hyper or DEFAULT_HYPER["fig4fg"]
    tasks = (("two_scale", BASE_COPY), ("three_scale", THREE_SCALE_COPY))
    jobs = []
    for task_name, spec in tasks:
        for cfg_name, dims in DEPTH_CONFIGS:
            for seed in seeds:
                tag = f"{task_name}_{cfg_name}_s{seed}"
                jobs.append(lambda sp=spec, d=dims, s=seed, t=tag,
                            tn=task_name, cn=cfg_name: dict(copy_run(
                                sp, ARCH_I2DRNN, d, s, hyper, out_dir, t),
                                task=tn, config=cn))
    rows = sorted(_fan_out(jobs, threads),
                  key=lambda r: (r["task"], r["config"], r["seed"]))
    summary = {"experiment": "fig4fg", "seeds": list(seeds), "tasks": {}}
    for task_name, _ in tasks:
        per = {}
        for cfg_name, _dims in DEPTH_CONFIGS:
            vals = [r["rmse"] for r in rows
                    if r["task"] == task_name and r["config"] == cfg_name]
            mean, sd = _mean_sd(vals)
            per[cfg_name] = {"rmse_mean": mean, "rmse_sd": sd, "rmse": vals}
        summary["tasks"][task_name] = per
    two = summary["tasks"]["two_scale"]
    three = summary["tasks"]["three_scale"]
    summary["verdicts"] = {
        "two_scale_2layer_beats_wide":
            two["H30-30"]["rmse_mean"] < two["H60"]["rmse_mean"],
        "two_scale_3layer_beats_wide":
            two["H20-20-20"]["rmse_mean"] < two["H60"]["rmse_mean"],
        "three_scale_3layer_beats_2layer":
            three["H20-20-20"]["rmse_mean"] < three["H30-30"]["rmse_mean"],
    }
    if out_dir is not None:
        _write_rows(Path(out_dir) / "runs.csv",
                    ["task", "config", "arch", "seed", "layers", "rmse",
                     "mae", "adjusted_mse", "best_val_loss", "epochs"], rows)
        _write_json(Path(out_dir) / "summary.json", summary)
    return summary


def fig6_run(seed: int, hyper: Hyper, out_dir=None) -> dict:
    """Train the hierarchical net once and profile per-layer lagged MI."""
    spec = FIG6_COPY
    ds = _copy_dataset(spec, seed)
    cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(10, 10),
                      input_dim=spec.n_channels, output_dim=spec.n_channels)
    rng = Rng(seed)
    params, report = train(ds, cfg, hyper, rng.split("train.i2drnn.fig6"))
    metrics = evaluate(params, ds, "test")
    long_lag = int(ds.metadata["long_recall_lag"])
    prof = layer_mi_profile(params, ds, split="test", max_lag=long_lag,
                            bins=FIG6_MI_BINS)
    bottom, top = prof.curves[0], prof.curves[-1]
    run_dir = _run_dir(out_dir, f"s{seed}")
    if run_dir is not None:
        save_params(params, run_dir / "checkpoint.json")
        save_report(report, run_dir / "report.json")
        save_loss_csv(report, run_dir / "loss.csv")
        save_profile_csv(prof, run_dir / "profile.csv")
    return {"seed": seed, "rmse": metrics["rmse"], "long_lag": long_lag,
            "bottom_mi_lag0": bottom.value_at(0),
            "top_mi_lag0": top.value_at(0),
            "bottom_mi_long": bottom.value_at(long_lag),
            "top_mi_long": top.value_at(long_lag),
            "top_wins_long": top.value_at(long_lag) > bottom.value_at(long_lag),
            "bottom_wins_lag0": bottom.value_at(0) > top.value_at(0),
            "epochs": report.epochs_run}


def run_fig6(out_dir=None, seeds=range(5), hyper: Hyper | None = None,
             threads: int = 1) -> dict:
    """Layer specialization: does the top layer carry the long-range lag
    while the bottom carries lag 0, seed by seed."""
    hyper = hyper or DEFAULT_HYPER["fig6"]
    jobs = [lambda s=seed: fig6_run(s, hyper, out_dir) for seed in seeds]
    rows = sorted(_fan_out(jobs, threads), key=lambda r: r["seed"])
    n = len(rows)
    top_long = sum(int(r["top_wins_long"]) for r in rows)
    bottom0 = sum(int(r["bottom_wins_lag0"]) for r in rows)
    required = math.ceil(0.8 * n)
    summary = {"experiment": "fig6", "seeds": list(seeds),
               "long_lag": rows[0]["long_lag"] if rows else None,
               "top_wins_long": top_long, "bottom_wins_lag0": bottom0,
               "required": required,
               "top_long_passed": top_long >= required,
               "bottom_lag0_passed": bottom0 >= required}
    if out_dir is not None:
        _write_rows(Path(out_dir) / "runs.csv",
                    ["seed", "rmse", "long_lag", "bottom_mi_lag0",
                     "top_mi_lag0", "bottom_mi_long", "top_mi_long",
                     "top_wins_long", "bottom_wins_lag0", "epochs"], rows)
        _write_json(Path(out_dir) / "summary.json", summary)
    return summary


def window_training(dataset: SequenceDataset, window: int) -> SequenceDataset:
    """Chop a chronological dataset's training segment into fixed windows.

    The recurrent state resets at window boundaries, trading some context
    for many more optimizer updates per epoch. Leftover steps beyond the
    last full window are dropped. Validation and test segments are kept
    whole.
    """
    if len(dataset.train_idx) != 1:
        raise ValueError("windowing expects a single training segment")
    tr = dataset.samples[dataset.train_idx[0]]
    n_win = tr.length // window
    if n_win < 1:
        raise ValueError(f"training segment of {tr.length} steps is shorter "
                         f"than one window of {window}")

    def cut(a, b):
        return Sample(
            same=tr.same[a:b], targets=tr.targets[a:b],
            coarse=None if tr.coarse is None else tr.coarse[a:b],
            fine=None if tr.fine is None else tr.fine[a:b])

    wins = [cut(i * window, (i + 1) * window) for i in range(n_win)]
    others = [dataset.samples[i] for i in dataset.val_idx + dataset.test_idx]
    meta = dict(dataset.metadata)
    meta["train_window"] = window
    return SequenceDataset(
        samples=wins + others,
        train_idx=list(range(n_win)),
        val_idx=[n_win + i for i in range(len(dataset.val_idx))],
        test_idx=[n_win + len(dataset.val_idx) + i
                  for i in range(len(dataset.test_idx))],
        norm=dataset.norm, metadata=meta)


def farima_dataset(n_series: int, seed: int,
                   length: int = 3000) -> SequenceDataset:
    rng = Rng(seed)
    spec = FarimaSpec(n_series=n_series, length=length)
    ds = gen_farima(spec, rng.split("data"))
    return normalize_split(ds)


def farima_fit(dataset: SequenceDataset, max_lag: int = FARIMA_MI_MAX_LAG,
               bins: int = FARIMA_MI_BINS):
    """Exponential fit of the training segment's lagged-MI curve.

    The plug-in estimator has a positive bias floor; entries are kept for
    the fit only while they stand clear of the curve's own tail level.
    """
    tr = dataset.samples[dataset.train_idx[0]]
    curve = lagged_mi_curve(tr.same, tr.targets, max_lag=max_lag, bins=bins)
    tail = float(np.mean(curve.mi[-max(3, max_lag // 4):]))
    floor = max(1e-6, 1.5 * tail)
    return curve, fit_exponential(curve, floor=floor)


def farima_train_run(n_series: int, total_size: int, seed: int, hyper: Hyper,
                     out_dir=None, tag: str = "") -> dict:
    ds = farima_dataset(n_series, seed)
    ds = window_training(ds, FARIMA_TRAIN_WINDOW)
    dims = split_size(total_size, 2)
    cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=dims,
                      input_dim=n_series, output_dim=n_series)
    rng = Rng(seed)
    params, report = train(ds, cfg, hyper, rng.split(f"train.h{total_size}"))
    metrics = evaluate(params, ds, "test")
    run_dir = _run_dir(out_dir, tag)
    if run_dir is not None:
        save_params(params, run_dir / "checkpoint.json")
        save_report(report, run_dir / "report.json")
        save_loss_csv(report, run_dir / "loss.csv")
    return {"n_series": n_series, "size": total_size, "seed": seed,
            "layers": "-".join(str(d) for d in dims),
            "best_val_loss": report.best_val_loss, "rmse": metrics["rmse"],
            "mae": metrics["mae"], "epochs": report.epochs_run}


def run_farima_config(out_dir=None, seeds=range(3), hyper: Hyper | None = None,
                      threads: int = 1, d_values=(5, 10),
                      sizes=DEFAULT_SIZE_GRID, train_grid: bool = True,
                      data_seed: int = 0) -> dict:
    """Capacity pipeline on FARIMA data plus an optional training grid.

    Per channel count: fit (a, k) from the lagged-MI curve, derive the
    configuration curve and its necessary/sufficient sizes, and (when
    train_grid) grid-search the same sizes with seeded training runs,
    reporting the best-validation size.
    """
    hyper = hyper or DEFAULT_HYPER["farima_config"]
    summary = {"experiment": "farima_config", "seeds": list(seeds),
               "sizes": [int(s) for s in sizes], "per_d": {}}
    all_rows = []
    for d in d_values:
        ds = farima_dataset(d, data_seed)
        curve, fit = farima_fit(ds)
        cc = config_curve(fit, sizes=sizes, n_layers=2)
        i_n, flags_n = necessary_config(cc)
        i_s, flags_s = sufficient_config(cc)
        entry = {
            "fit_a": fit.a, "fit_k": fit.k, "fit_points": fit.n_used,
            "lambdas": list(cc.lambdas), "curve_flags": list(cc.flags),
            "necessary": i_n, "necessary_flags": flags_n,
            "sufficient": i_s, "sufficient_flags": flags_s,
            "total_info": cc.total_info,
            "icap": {str(s): v for s, v in zip(cc.sizes, cc.icap)},
        }
        if train_grid:
            jobs = []
            for size in sizes:
                for seed in seeds:
                    tag = f"d{d}_h{size}_s{seed}"
                    jobs.append(lambda n=d, h=size, s=seed, t=tag:
                                farima_train_run(n, h, s, hyper, out_dir, t))
            rows = sorted(_fan_out(jobs, threads),
                          key=lambda r: (r["size"], r["seed"]))
            all_rows.extend(rows)
            by_size = {}
            for size in sizes:
                vals = [r["best_val_loss"] for r in rows if r["size"] == size]
                by_size[int(size)], _ = _mean_sd(vals)
            best = min(by_size, key=by_size.get)
            entry["val_by_size"] = {str(s): v for s, v in by_size.items()}
            entry["best_size"] = best
            entry["best_within_bounds"] = bool(i_n <= best <= i_s)
        summary["per_d"][str(d)] = entry
    if out_dir is not None:
        if all_rows:
            _write_rows(Path(out_dir) / "runs.csv",
                        ["n_series", "size", "seed", "layers",
                         "best_val_loss", "rmse", "mae", "epochs"], all_rows)
        _write_json(Path(out_dir) / "summary.json", summary)
    return summary


def run_experiment(name: str, out_dir=None, seeds=None,
                   hyper: Hyper | None = None, threads: int = 1) -> dict:
    """Dispatch a named experiment; unknown names raise ValueError."""
    if name == "fig4b":
        return run_fig4b(out_dir, seeds if seeds is not None else range(5),
                         hyper, threads)
    if name == "fig4cde":
        return run_fig4cde(out_dir, seeds if seeds is not None else range(3),
                           hyper, threads)
    if name == "fig4fg":
        return run_fig4fg(out_dir, seeds if seeds is not None else range(5),
                          hyper, threads)
    if name == "fig6":
        return run_fig6(out_dir, seeds if seeds is not None else range(5),
                        hyper, threads)
    if name == "farima_config":
        return run_farima_config(out_dir,
                                 seeds if seeds is not None else range(3),
                                 hyper, threads)
    raise ValueError(f"unknown experiment {name!r}; "
                     f"choose from {EXPERIMENT_NAMES}")
