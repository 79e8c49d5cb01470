"""Command-line entry point.

Subcommands: gen, train, eval, micurve, capacity, configure, diagnose,
reproduce. Every command reads a flat ``key = value`` config file (``#``
comments allowed), applies command-line overrides (``--seed``, ``--out``,
``--threads``, ``--format``, plus trailing ``key=value`` tokens), rejects
unknown keys, and persists the fully resolved config next to its outputs
together with a manifest listing every produced file and its sha256.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O error.
Identical (config, seed) pairs produce byte-identical numeric outputs;
wall-clock data lives only in the manifest, which is never hashed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import subprocess
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import (LayerPlan, config_curve, lambda_chain, necessary_config,
                       plan_capacity, sufficient_config)
from .datagen import (CopyTaskSpec, FarimaSpec, gen_copy_task, gen_farima,
                      load_dataset, normalize_split, save_dataset)
from .diagnostics import (default_region_labels, empirical_rates,
                          layer_mi_profile, save_correlation_csv,
                          save_profile_csv, scale_correlations, top_correlated)
from .experiments import EXPERIMENT_NAMES, run_experiment
from .infotheory import (DEFAULT_BINS, HX_UNIT_GAUSSIAN, fit_exponential,
                         lagged_mi_curve)
from .model import ARCH_I2DRNN, ARCH_STACKED, ModelConfig, load_params
from .numerics import ConvergenceError, Rng
from .training import (Hyper, TrainingDivergedError, evaluate, save_loss_csv,
                       save_report, train)


class ConfigError(ValueError):
    """Bad key, value, or combination in a resolved config."""


# ---------------------------------------------------------------------------
# config files


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments skipped."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = val.strip()
    return out


def _to_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_int_list(s: str) -> tuple[int, ...]:
    vals = tuple(int(p) for p in s.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _to_size_grid(s: str) -> tuple[int, ...]:
    """Either ``lo:hi:step`` (inclusive) or an explicit comma list."""
    if ":" in s:
        lo, hi, step = (int(p) for p in s.split(":"))
        if step < 1 or hi < lo:
            raise ValueError(f"bad size range {s!r}")
        return tuple(range(lo, hi + 1, step))
    return _to_int_list(s)


def _to_hx(s: str) -> float:
    if s.lower() in ("gauss", "gaussian", "default"):
        return HX_UNIT_GAUSSIAN
    return float(s)


_CONVERTERS = {
    "int": int, "float": float, "str": str, "bool": _to_bool,
    "ints": _to_int_list, "sizes": _to_size_grid, "hx": _to_hx,
}

# every command understands these
COMMON_KEYS = {
    "seed": ("int", 0),
    "out": ("str", None),
    "threads": ("int", 1),
    "format": ("str", "json"),
}

SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "gen": {
        "task": ("str", None),
        "n_samples": ("int", 200),
        "n_channels": ("int", 80),
        "s1": ("int", 10), "t1": ("int", 15),
        "s2": ("int", 10), "t2": ("int", 15),
        "s3": ("int", 10), "t3": ("int", 15),
        "train_frac": ("float", 0.7),
        "val_frac": ("float", 0.2),
        "n_series": ("int", 20),
        "length": ("int", 3000),
        "p": ("float", 0.9), "d": ("float", 0.1), "q": ("float", 0.0),
        "burn_in": ("int", 1000), "trunc": ("int", 1000),
    },
    "train": {
        "data": ("str", None),
        "arch": ("str", None),
        "layers": ("ints", None),
        "encoder_dim": ("int", 0),
        "step_size": ("float", 1e-3),
        "beta1": ("float", 0.9), "beta2": ("float", 0.999),
        "eps": ("float", 1e-8),
        "max_epochs": ("int", 500), "patience": ("int", 20),
        "grad_clip": ("float", 0.0),
        "update_every": ("str", "sample"),
        "rec_radius": ("float", 0.9),
        "resume": ("str", None),
        "start_epoch": ("int", -1),   # -1: take it from the resumed report
    },
    "eval": {
        "checkpoint": ("str", None),
        "data": ("str", None),
        "split": ("str", "test"),
        "denormalized": ("bool", False),
    },
    "micurve": {
        "data": ("str", None),
        "split": ("str", "train"),
        "max_lag": ("int", 20),
        "bins": ("int", DEFAULT_BINS),
        "fit": ("bool", True),
        "fit_floor": ("str", "auto"),
    },
    "capacity": {
        "a": ("float", None),
        "k": ("float", None),
        "layers": ("ints", None),
        "eta": ("float", 1.0),
        "hx": ("hx", HX_UNIT_GAUSSIAN),
        "tau_max": ("int", 0),        # 0: derived from k
    },
    "configure": {
        "data": ("str", ""),
        "a": ("float", 0.0),
        "k": ("float", 0.0),
        "max_lag": ("int", 60),
        "bins": ("int", 10),
        "fit_floor": ("str", "auto"),
        "sizes": ("sizes", tuple(range(20, 301, 20))),
        "n_layers": ("int", 2),
        "eta": ("float", 1.0),
        "hx": ("hx", HX_UNIT_GAUSSIAN),
        "tau_max": ("int", 0),
    },
    "diagnose": {
        "checkpoint": ("str", None),
        "data": ("str", None),
        "split": ("str", "test"),
        "max_lag": ("int", 20),
        "bins": ("int", DEFAULT_BINS),
        "tau_max": ("int", 100),
        "region": ("int", -1),        # -1: skip the ranking
        "top_k": ("int", 5),
    },
    "reproduce": {
        "experiment": ("str", None),
        "seeds": ("int", 0),          # 0: experiment default
        "max_epochs": ("int", 0),     # 0: experiment default
        "patience": ("int", -1),
        "step_size": ("float", 0.0),
    },
}

# keys that must be present after resolution
REQUIRED = {
    "gen": ("task", "out"),
    "train": ("data", "arch", "layers", "out"),
    "eval": ("checkpoint", "data"),
    "micurve": ("data", "out"),
    "capacity": ("a", "k", "layers"),
    "configure": (),
    "diagnose": ("checkpoint", "data", "out"),
    "reproduce": ("experiment", "out"),
}


def resolve_config(command: str, config_path: str | None,
                   overrides: dict[str, str]) -> dict:
    """File keys, then overrides, coerced against the command's schema."""
    schema = dict(COMMON_KEYS)
    schema.update(SCHEMAS[command])
    raw: dict[str, str] = {}
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}") from e
        raw.update(parse_config_text(text))
    raw.update(overrides)

    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(unknown)}")
    resolved: dict = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            try:
                resolved[key] = _CONVERTERS[kind](raw[key])
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({e})") \
                    from e
        else:
            resolved[key] = default
    for key in REQUIRED[command]:
        if resolved.get(key) in (None, ""):
            raise ConfigError(f"{command} requires {key}")
    if resolved["format"] not in ("json", "csv"):
        raise ConfigError(f"format must be json or csv, "
                          f"got {resolved['format']!r}")
    return resolved


def config_to_text(resolved: dict) -> str:
    lines = []
    for key in sorted(resolved):
        val = resolved[key]
        if val is None:
            continue
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manifests


def _source_id() -> str:
    try:
        rev = subprocess.run(
            ["git", "-C", str(Path(__file__).resolve().parent), "rev-parse",
             "HEAD"], capture_output=True, text=True, timeout=5)
        if rev.returncode == 0:
            return rev.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"i2drnn-{__version__}"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, resolved: dict,
                   started: str) -> Path:
    """Hash every file under out_dir (manifest excluded) and record the run."""
    files = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    doc = {
        "command": command,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in resolved.items() if v is not None},
        "source": _source_id(),
        "seed": resolved["seed"],
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "files": files,
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def verify_manifest(out_dir) -> bool:
    """True when every listed file exists and matches its recorded hash."""
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    return all((out_dir / rel).is_file()
               and sha256_file(out_dir / rel) == digest
               for rel, digest in doc["files"].items())


def _prepare_out(resolved: dict) -> Path | None:
    if not resolved.get("out"):
        return None
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.txt", "w", encoding="utf-8") as fh:
        fh.write(config_to_text(resolved))
    return out


def emit(doc: dict, fmt: str, stream=None) -> None:
    """Scalars to stdout: JSON document or flat key,value CSV."""
    stream = stream or sys.stdout
    if fmt == "json":
        json.dump(doc, stream, indent=1, sort_keys=True)
        stream.write("\n")
    else:
        w = csv.writer(stream)
        w.writerow(["key", "value"])
        for key in sorted(doc):
            val = doc[key]
            if isinstance(val, (dict, list, tuple)):
                val = json.dumps(val, sort_keys=True)
            w.writerow([key, val])


# ---------------------------------------------------------------------------
# commands


def cmd_gen(resolved: dict) -> dict:
    task = resolved["task"]
    rng = Rng(resolved["seed"])
    if task in ("copy2", "copy3"):
        spec = CopyTaskSpec(
            n_channels=resolved["n_channels"], s1=resolved["s1"],
            t1=resolved["t1"], s2=resolved["s2"], t2=resolved["t2"],
            scales=2 if task == "copy2" else 3,
            s3=resolved["s3"] if task == "copy3" else 0,
            t3=resolved["t3"] if task == "copy3" else 0)
        ds = gen_copy_task(spec, resolved["n_samples"], rng.split("data"))
        ds = normalize_split(ds, rng, train_frac=resolved["train_frac"],
                             val_frac=resolved["val_frac"])
    elif task == "farima":
        spec = FarimaSpec(n_series=resolved["n_series"],
                          length=resolved["length"], p=resolved["p"],
                          d=resolved["d"], q=resolved["q"],
                          burn_in=resolved["burn_in"],
                          trunc=resolved["trunc"])
        ds = gen_farima(spec, rng.split("data"))
        ds = normalize_split(ds)
    else:
        raise ConfigError(f"unknown task {task!r}; "
                          "choose copy2, copy3 or farima")
    out = _prepare_out(resolved)
    save_dataset(ds, out)
    return {"task": task, "samples": len(ds.samples),
            "splits": [len(ds.train_idx), len(ds.val_idx), len(ds.test_idx)]}


def _resume_start_epoch(resolved: dict) -> int:
    if resolved["start_epoch"] >= 0:
        return resolved["start_epoch"]
    if not resolved["resume"]:
        return 0
    report_path = Path(resolved["resume"]).parent / "report.json"
    if report_path.is_file():
        with open(report_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return int(doc.get("start_epoch", 0)) + int(doc.get("epochs_run", 0))
    return 0


def cmd_train(resolved: dict) -> dict:
    ds = load_dataset(resolved["data"])
    if resolved["arch"] not in (ARCH_I2DRNN, ARCH_STACKED):
        raise ConfigError(f"arch must be {ARCH_I2DRNN} or {ARCH_STACKED}")
    enc = resolved["encoder_dim"]
    cfg = ModelConfig(arch=resolved["arch"], layer_dims=resolved["layers"],
                      input_dim=ds.same_dim + ds.coarse_dim + enc,
                      output_dim=ds.target_dim, encoder_dim=enc,
                      fine_dim=ds.fine_dim)
    hyper = Hyper(step_size=resolved["step_size"], beta1=resolved["beta1"],
                  beta2=resolved["beta2"], eps=resolved["eps"],
                  max_epochs=resolved["max_epochs"],
                  patience=resolved["patience"],
                  grad_clip=resolved["grad_clip"],
                  update_every=resolved["update_every"])
    init = load_params(resolved["resume"]) if resolved["resume"] else None
    start = _resume_start_epoch(resolved)
    rng = Rng(resolved["seed"])
    params, report = train(ds, cfg, hyper, rng.split("train"), init=init,
                           rec_radius=resolved["rec_radius"],
                           start_epoch=start)
    out = _prepare_out(resolved)
    from .model import save_params
    save_params(params, out / "checkpoint.json")
    save_report(report, out / "report.json")
    save_loss_csv(report, out / "loss.csv")
    return {"best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "epochs_run": report.epochs_run,
            "checkpoint": str(out / "checkpoint.json")}


def cmd_eval(resolved: dict) -> dict:
    params = load_params(resolved["checkpoint"])
    ds = load_dataset(resolved["data"])
    metrics = evaluate(params, ds, resolved["split"],
                       denormalized=resolved["denormalized"])
    out = _prepare_out(resolved)
    if out is not None:
        with open(out / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return metrics


def _auto_floor(curve) -> float:
    tail = curve.mi[-max(3, len(curve.mi) // 4):]
    return max(1e-6, 1.5 * float(np.mean(tail)))


def cmd_micurve(resolved: dict) -> dict:
    ds = load_dataset(resolved["data"])
    idx = ds.split_indices(resolved["split"])
    if len(idx) != 1:
        raise ConfigError(f"micurve needs a single-sequence split, "
                          f"{resolved['split']!r} has {len(idx)} samples")
    s = ds.samples[idx[0]]
    curve = lagged_mi_curve(s.same, s.targets, max_lag=resolved["max_lag"],
                            bins=resolved["bins"])
    out = _prepare_out(resolved)
    with open(out / "micurve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lag", "mi", "estimator", "clamped"])
        for (lag, mi, flag), cl in zip(curve.rows(), curve.clamped):
            w.writerow([lag, repr(mi), flag, int(cl)])
    summary: dict = {"max_lag": resolved["max_lag"], "bins": resolved["bins"]}
    if resolved["fit"]:
        floor = (_auto_floor(curve) if resolved["fit_floor"] == "auto"
                 else float(resolved["fit_floor"]))
        try:
            fit = fit_exponential(curve, floor=floor)
        except ValueError as e:
            raise ConfigError(f"exponential fit failed: {e}; raise max_lag "
                              "or lower fit_floor") from e
        summary.update(fit_a=fit.a, fit_k=fit.k, fit_floor=floor,
                       fit_points=fit.n_used, fit_clamped=fit.clamped)
    return summary


def cmd_capacity(resolved: dict) -> dict:
    from .infotheory import ExpFit
    fit = ExpFit(a=resolved["a"], k=resolved["k"], residual=0.0)
    tau_max = resolved["tau_max"] or None
    lams, flags = lambda_chain(resolved["k"], len(resolved["layers"]),
                               eta=resolved["eta"], hx=resolved["hx"])
    est = plan_capacity(fit, LayerPlan(resolved["layers"]),
                        eta=resolved["eta"], hx=resolved["hx"],
                        tau_max=tau_max, lams=lams)
    return {"tau_max": est.tau_max, "total_info": est.total_info,
            "capacity": est.capacity, "icap": est.icap, "alpha": est.alpha,
            "lambdas": lams, "flags": sorted(set(est.flags) | set(flags))}


def cmd_configure(resolved: dict) -> dict:
    if resolved["data"]:
        ds = load_dataset(resolved["data"])
        idx = ds.train_idx
        if len(idx) != 1:
            raise ConfigError("configure needs a single-sequence training "
                              f"split, got {len(idx)} samples")
        s = ds.samples[idx[0]]
        curve = lagged_mi_curve(s.same, s.targets,
                                max_lag=resolved["max_lag"],
                                bins=resolved["bins"])
        floor = (_auto_floor(curve) if resolved["fit_floor"] == "auto"
                 else float(resolved["fit_floor"]))
        try:
            fit = fit_exponential(curve, floor=floor)
        except ValueError as e:
            raise ConfigError(f"exponential fit failed: {e}; raise max_lag "
                              "or lower fit_floor") from e
    elif resolved["a"] > 0.0 and 0.0 < resolved["k"] < 1.0:
        from .infotheory import ExpFit
        fit = ExpFit(a=resolved["a"], k=resolved["k"], residual=0.0)
    else:
        raise ConfigError("configure needs either data or both a and k")
    tau_max = resolved["tau_max"] or None
    cc = config_curve(fit, sizes=resolved["sizes"],
                      n_layers=resolved["n_layers"], eta=resolved["eta"],
                      hx=resolved["hx"], tau_max=tau_max)
    i_n, flags_n = necessary_config(cc)
    i_s, flags_s = sufficient_config(cc)
    out = _prepare_out(resolved)
    if out is not None:
        with open(out / "config_curve.csv", "w", encoding="utf-8",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "icap"])
            for size, val in zip(cc.sizes, cc.icap):
                w.writerow([size, repr(val)])
    return {"fit_a": fit.a, "fit_k": fit.k,
            "lambdas": cc.lambdas, "curve_flags": cc.flags,
            "total_info": cc.total_info, "tau_max": cc.tau_max,
            "necessary": i_n, "necessary_flags": flags_n,
            "sufficient": i_s, "sufficient_flags": flags_s}


def cmd_diagnose(resolved: dict) -> dict:
    params = load_params(resolved["checkpoint"])
    ds = load_dataset(resolved["data"])
    out = _prepare_out(resolved)
    profile = layer_mi_profile(params, ds, split=resolved["split"],
                               max_lag=resolved["max_lag"],
                               bins=resolved["bins"])
    save_profile_csv(profile, out / "profile.csv")
    rates = []
    for layer in range(1, params.config.num_layers + 1):
        r = empirical_rates(params, layer, ds, split=resolved["split"],
                            tau_max=resolved["tau_max"])
        rates.append({"layer": r.layer, "lam": r.lam, "eta": r.eta,
                      "hx": r.hx, "dim": r.dim, "input_rate": r.input_rate,
                      "flags": list(r.flags)})
    with open(out / "rates.json", "w", encoding="utf-8") as fh:
        json.dump(rates, fh, indent=1, sort_keys=True)
        fh.write("\n")
    summary: dict = {"layers": params.config.num_layers,
                     "profile": "profile.csv", "levels": []}
    for corr in scale_correlations(params):
        name = f"cov_l{corr.level}.csv"
        save_correlation_csv(corr, out / name)
        summary["levels"].append(corr.level)
        if resolved["region"] >= 0 and corr.num_regions >= 2:
            if resolved["region"] >= corr.num_regions:
                raise ConfigError(f"region must lie in 0.."
                                  f"{corr.num_regions - 1}, "
                                  f"got {resolved['region']}")
            # top_k is an upper bound; never ask for more candidates
            # than exist
            k = min(resolved["top_k"], corr.num_regions - 1)
            ranked, flags = top_correlated(corr, resolved["region"], k)
            labels = default_region_labels(corr.num_regions)
            summary[f"top_l{corr.level}"] = {
                "region": labels[resolved["region"]],
                "ranked": [labels[j] for j in ranked], "flags": flags}
    return summary


def _format_table(summary: dict) -> str:
    """Small fixed-width comparison table for reproduce output."""
    lines = []
    if summary["experiment"] == "fig4b":
        lines.append(f"{'model':<12} {'rmse mean':>10} {'sd':>8}")
        for arch, st in summary["per_arch"].items():
            lines.append(f"{arch:<12} {st['rmse_mean']:>10.5f} "
                         f"{st['rmse_sd']:>8.5f}")
    elif summary["experiment"] == "fig4cde":
        lines.append(f"{'sweep':<6} {'metric':<13} {'wins':>6}")
        for name, sw in summary["sweeps"].items():
            lines.append(f"{name:<6} {sw['metric']:<13} "
                         f"{sw['wins']:>3}/{sw['total']}")
    elif summary["experiment"] == "fig4fg":
        lines.append(f"{'task':<12} {'config':<10} {'rmse mean':>10}")
        for task, per in summary["tasks"].items():
            for cfg_name, st in per.items():
                lines.append(f"{task:<12} {cfg_name:<10} "
                             f"{st['rmse_mean']:>10.5f}")
    elif summary["experiment"] == "fig6":
        lines.append(f"{'check':<22} {'seeds':>8}")
        n = len(summary["seeds"])
        lines.append(f"{'top wins long lag':<22} "
                     f"{summary['top_wins_long']:>4}/{n}")
        lines.append(f"{'bottom wins lag 0':<22} "
                     f"{summary['bottom_wins_lag0']:>4}/{n}")
    elif summary["experiment"] == "farima_config":
        lines.append(f"{'D':<4} {'necessary':>10} {'sufficient':>11} "
                     f"{'best':>6}")
        for d, entry in summary["per_d"].items():
            best = entry.get("best_size", "-")
            lines.append(f"{d:<4} {entry['necessary']:>10} "
                         f"{entry['sufficient']:>11} {best:>6}")
    return "\n".join(lines)


def cmd_reproduce(resolved: dict) -> dict:
    name = resolved["experiment"]
    if name not in EXPERIMENT_NAMES:
        raise ConfigError(f"unknown experiment {name!r}; "
                          f"choose from {', '.join(EXPERIMENT_NAMES)}")
    seeds = range(resolved["seeds"]) if resolved["seeds"] > 0 else None
    hyper = None
    if resolved["max_epochs"] or resolved["patience"] >= 0 \
            or resolved["step_size"] > 0.0:
        from .experiments import DEFAULT_HYPER
        base = DEFAULT_HYPER[name]
        hyper = Hyper(
            step_size=resolved["step_size"] or base.step_size,
            max_epochs=resolved["max_epochs"] or base.max_epochs,
            patience=(resolved["patience"] if resolved["patience"] >= 0
                      else base.patience))
    out = _prepare_out(resolved)
    summary = run_experiment(name, out, seeds=seeds, hyper=hyper,
                             threads=resolved["threads"])
    print(_format_table(summary))
    return summary


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
    "micurve": cmd_micurve, "capacity": cmd_capacity,
    "configure": cmd_configure, "diagnose": cmd_diagnose,
    "reproduce": cmd_reproduce,
}

# commands whose out dir gets a manifest (eval/capacity print to stdout and
# only write files when --out is given)
_MANIFEST_ALWAYS = ("gen", "train", "micurve", "diagnose", "reproduce")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="i2drnn",
        description="Hierarchical RNN training, capacity analysis and "
                    "experiment reproduction.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, metavar="PATH")
        p.add_argument("--seed", default=None, metavar="N")
        p.add_argument("--out", default=None, metavar="DIR")
        p.add_argument("--threads", default=None, metavar="N")
        p.add_argument("--format", default=None, choices=("json", "csv"))
        p.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                       help="config overrides; reproduce also accepts a "
                            "bare experiment name")
    return parser


def _collect_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for token in args.overrides:
        if "=" in token:
            key, val = token.split("=", 1)
            overrides[key.strip()] = val.strip()
        elif args.command == "reproduce":
            overrides["experiment"] = token
        else:
            raise ConfigError(f"expected KEY=VALUE, got {token!r}")
    for key in ("seed", "out", "threads", "format"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        resolved = resolve_config(args.command, args.config,
                                  _collect_overrides(args))
        started = datetime.now(timezone.utc).isoformat()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            result = COMMANDS[args.command](resolved)
        if args.command in _MANIFEST_ALWAYS or resolved.get("out"):
            write_manifest(Path(resolved["out"]), args.command, resolved,
                           started)
        if args.command != "reproduce":
            emit(result, resolved["format"])
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ConvergenceError, TrainingDivergedError, FloatingPointError,
            np.linalg.LinAlgError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
