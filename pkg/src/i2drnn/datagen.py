"""Dataset construction: synthetic generators, CSV ingestion, splits.

Two synthetic families are built in:

* Multi-scale symbol recall ("copy") sequences. Each channel presents one
  payload per dependency scale and must reproduce each payload at a marked
  recall segment later in the sequence; the distance between presentation
  and recall differs per scale, so solving the task needs memory at several
  time scales at once.

* FARIMA series: fractionally integrated Gaussian noise (long memory) pushed
  through a first-order autoregressive filter, with the next step of every
  channel as the prediction target.

Datasets carry raw values until `normalize_split` fixes the train/val/test
split and rescales every stream into [0, 1] using training-split minima and
maxima only.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .numerics import Rng

DATASET_FORMAT_VERSION = 1

# symbol alphabet for the recall task, one decade per dependency scale:
# scale 1 (long range):      payload 1..8,  recall marker 9
# scale 2 (short range):     payload 11..18, delimiter 19 (recall site)
# scale 3 (extreme range):   payload 21..28, delimiter 29, recall marker 20
PAY1_LO, PAY1_HI, MARK1 = 1, 8, 9
PAY2_LO, PAY2_HI, DELIM2 = 11, 18, 19
PAY3_LO, PAY3_HI, DELIM3, MARK3 = 21, 28, 29, 20


@dataclass
class Sample:
    """One sequence: same-scale stream, targets, optional coarse/fine streams.

    same: (T, same_dim); targets: (T, out_dim); coarse: (T, coarse_dim)
    already aligned per step; fine: (T, block, fine_dim) encoder windows.
    """

    same: np.ndarray
    targets: np.ndarray
    coarse: np.ndarray | None = None
    fine: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.same.shape[0]


@dataclass
class SequenceDataset:
    samples: list[Sample]
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)
    test_idx: list[int] = field(default_factory=list)
    norm: "Normalization | None" = None
    metadata: dict = field(default_factory=dict)

    def split_indices(self, name: str) -> list[int]:
        if name == "train":
            return self.train_idx
        if name == "val":
            return self.val_idx
        if name == "test":
            return self.test_idx
        if name == "all":
            return list(range(len(self.samples)))
        raise ValueError(f"unknown split {name!r}")

    @property
    def same_dim(self) -> int:
        return self.samples[0].same.shape[1]

    @property
    def target_dim(self) -> int:
        return self.samples[0].targets.shape[1]

    @property
    def coarse_dim(self) -> int:
        c = self.samples[0].coarse
        return 0 if c is None else c.shape[1]

    @property
    def fine_dim(self) -> int:
        f = self.samples[0].fine
        return 0 if f is None else f.shape[2]


# ---------------------------------------------------------------------------
# multi-scale recall task


@dataclass(frozen=True)
class CopyTaskSpec:
    """Segment lengths for the recall task.

    Input per channel (two scales):
        [pay1 x s1 | 0 x t1 | pay2 x s2 | 19 x s2 | 0 x t2 | 9 x s1]
    and the required output:
        [0 x (s1+t1+s2) | pay2 | 0 x t2 | pay1]
    so pay2 is echoed immediately at its delimiter (lag s2) while pay1 must
    survive until the end-of-sequence marker (lag s1+t1+2*s2+t2).

    With scales=3 an extreme-range pair wraps the whole two-scale block:
        [pay3 x s3 | 29 x s3 | 0 x t3 | ...two-scale input... | 0 x t3 | 20 x s3]
    with pay3 reproduced at the final marker segment.
    """

    n_channels: int
    s1: int
    t1: int
    s2: int
    t2: int
    scales: int = 2
    s3: int = 0
    t3: int = 0

    def __post_init__(self):
        if self.scales not in (2, 3):
            raise ValueError("scales must be 2 or 3")
        if self.n_channels < 1:
            raise ValueError("need at least one channel")
        if self.s1 < 1 or self.s2 < 1:
            raise ValueError("payload lengths must be >= 1")
        if self.t1 < 0 or self.t2 < 0:
            raise ValueError("gap lengths must be >= 0")
        if self.scales == 3 and (self.s3 < 1 or self.t3 < 0):
            raise ValueError("three-scale task needs s3 >= 1 and t3 >= 0")

    @property
    def length(self) -> int:
        base = 2 * self.s1 + self.t1 + 2 * self.s2 + self.t2
        if self.scales == 3:
            base += 3 * self.s3 + 2 * self.t3
        return base

    @property
    def long_recall_lag(self) -> int:
        """Presentation-to-recall distance for pay1."""
        return self.s1 + self.t1 + 2 * self.s2 + self.t2

    @property
    def short_recall_lag(self) -> int:
        """Presentation-to-recall distance for pay2."""
        return self.s2

    @property
    def extreme_recall_lag(self) -> int:
        if self.scales != 3:
            raise ValueError("no third scale configured")
        return 2 * self.s3 + 2 * self.t3 + 2 * self.s1 + self.t1 + 2 * self.s2 + self.t2


def _copy_channel(spec: CopyTaskSpec, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    pay1 = rng.integers(PAY1_LO, PAY1_HI, spec.s1).astype(np.float64)
    pay2 = rng.integers(PAY2_LO, PAY2_HI, spec.s2).astype(np.float64)
    zeros = np.zeros
    inp = [pay1, zeros(spec.t1), pay2, np.full(spec.s2, float(DELIM2)),
           zeros(spec.t2), np.full(spec.s1, float(MARK1))]
    out = [zeros(spec.s1 + spec.t1 + spec.s2), pay2, zeros(spec.t2), pay1]
    if spec.scales == 3:
        pay3 = rng.integers(PAY3_LO, PAY3_HI, spec.s3).astype(np.float64)
        inp = [pay3, np.full(spec.s3, float(DELIM3)), zeros(spec.t3)] + inp \
            + [zeros(spec.t3), np.full(spec.s3, float(MARK3))]
        out = [zeros(2 * spec.s3 + spec.t3)] + out + [zeros(spec.t3), pay3]
    return np.concatenate(inp), np.concatenate(out)


def gen_copy_task(spec: CopyTaskSpec, n_samples: int, rng: Rng) -> SequenceDataset:
    """Generate `n_samples` raw (unnormalized, unsplit) recall sequences.

    Channels are drawn independently; inputs double as the same-scale stream.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    samples = []
    for i in range(n_samples):
        srng = rng.split(f"sample{i}")
        cols_in = []
        cols_out = []
        for c in range(spec.n_channels):
            ci, co = _copy_channel(spec, srng.split(f"ch{c}"))
            cols_in.append(ci)
            cols_out.append(co)
        samples.append(Sample(same=np.stack(cols_in, axis=1),
                              targets=np.stack(cols_out, axis=1)))
    meta = {
        "task": "copy2" if spec.scales == 2 else "copy3",
        "n_channels": spec.n_channels,
        "s1": spec.s1, "t1": spec.t1, "s2": spec.s2, "t2": spec.t2,
        "long_recall_lag": spec.long_recall_lag,
        "short_recall_lag": spec.short_recall_lag,
    }
    if spec.t1 == spec.t2:
        meta["ts"] = spec.t2
    if spec.scales == 3:
        meta.update(s3=spec.s3, t3=spec.t3,
                    extreme_recall_lag=spec.extreme_recall_lag)
    return SequenceDataset(samples=samples, metadata=meta)


# ---------------------------------------------------------------------------
# FARIMA series


@dataclass(frozen=True)
class FarimaSpec:
    """FARIMA(1, d, 1) with AR coefficient p, MA coefficient q.

    Unit Gaussian noise is fractionally integrated with truncated weights
    psi_0 = 1, psi_j = psi_{j-1} (j - 1 + d) / j up to lag `trunc`, passed
    through the MA term, then the AR recursion x_t = p x_{t-1} + u_t. The
    first `burn_in` steps are discarded. Target: next step of every channel.
    """

    n_series: int = 20
    length: int = 3000
    p: float = 0.9
    d: float = 0.1
    q: float = 0.0
    burn_in: int = 1000
    trunc: int = 1000

    def __post_init__(self):
        if self.n_series < 1:
            raise ValueError("n_series must be >= 1")
        if self.length < 2:
            raise ValueError("length must be >= 2")
        if not (-0.5 < self.d < 0.5):
            raise ValueError("d must lie in (-0.5, 0.5) for a stationary series")
        if abs(self.p) >= 1.0:
            raise ValueError("|p| must be < 1 for a stable AR filter")
        if self.burn_in < 0 or self.trunc < 1:
            raise ValueError("burn_in must be >= 0 and trunc >= 1")


def fractional_weights(d: float, trunc: int) -> np.ndarray:
    """Truncated fractional-integration impulse response (psi weights)."""
    psi = np.empty(trunc + 1)
    psi[0] = 1.0
    for j in range(1, trunc + 1):
        psi[j] = psi[j - 1] * ((j - 1 + d) / j)
    return psi


def gen_farima(spec: FarimaSpec, rng: Rng) -> SequenceDataset:
    """One raw sample holding all channels; inputs x_t, targets x_{t+1}."""
    n = spec.burn_in + spec.length + 1
    eps = rng.split("noise").normal((n, spec.n_series))
    psi = fractional_weights(spec.d, spec.trunc)
    u = lfilter(psi, [1.0], eps, axis=0)
    if spec.q != 0.0:
        u = lfilter([1.0, spec.q], [1.0], u, axis=0)
    x = lfilter([1.0], [1.0, -spec.p], u, axis=0)
    x = x[spec.burn_in:]
    sample = Sample(same=x[:-1], targets=x[1:])
    meta = {"task": "farima", "n_series": spec.n_series, "length": spec.length,
            "p": spec.p, "d": spec.d, "q": spec.q,
            "burn_in": spec.burn_in, "trunc": spec.trunc}
    return SequenceDataset(samples=[sample], metadata=meta)


# ---------------------------------------------------------------------------
# CSV ingestion


def _read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        width = len(header)
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{ln}: ragged row "
                                 f"({len(row)} cells, header has {width})")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{ln}: non-numeric cell") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def load_csv_series(target_path, same_paths=(), coarse=(), fine=(),
                    include_target_history: bool = True) -> SequenceDataset:
    """Build a single-sequence dataset from aligned CSV files.

    `target_path` fixes the step count T and the prediction target. Each
    same-scale covariate file must also have T rows. Coarse files are
    (path, ratio) pairs with T / ratio rows; each row is repeated ratio
    times. Fine files are (path, ratio) pairs with T * ratio rows, grouped
    into per-step blocks for the input encoder. With
    `include_target_history` the previous target row (zeros at t=0) is
    prepended to the same-scale stream, so the target's own past is an input.
    """
    _, y = _read_numeric_csv(target_path)
    steps = y.shape[0]

    same_parts = []
    if include_target_history:
        hist = np.vstack([np.zeros((1, y.shape[1])), y[:-1]])
        same_parts.append(hist)
    for p in same_paths:
        _, v = _read_numeric_csv(p)
        if v.shape[0] != steps:
            raise ValueError(f"{p}: {v.shape[0]} rows, target has {steps}")
        same_parts.append(v)
    if not same_parts:
        raise ValueError("no same-scale inputs: give a covariate file or "
                         "enable include_target_history")
    same = np.hstack(same_parts)

    coarse_arr = None
    coarse_meta = []
    if coarse:
        parts = []
        for p, ratio in coarse:
            ratio = int(ratio)
            if ratio < 1:
                raise ValueError(f"{p}: coarse ratio must be >= 1")
            _, v = _read_numeric_csv(p)
            if steps % ratio != 0 or v.shape[0] != steps // ratio:
                raise ValueError(f"{p}: {v.shape[0]} rows at ratio {ratio} "
                                 f"cannot align with {steps} target steps")
            parts.append(np.repeat(v, ratio, axis=0))
            coarse_meta.append(ratio)
        coarse_arr = np.hstack(parts)

    fine_arr = None
    fine_meta = []
    if fine:
        if len(fine) > 1:
            raise ValueError("at most one fine-scale file is supported")
        p, ratio = fine[0]
        ratio = int(ratio)
        if ratio < 1:
            raise ValueError(f"{p}: fine ratio must be >= 1")
        _, v = _read_numeric_csv(p)
        if v.shape[0] != steps * ratio:
            raise ValueError(f"{p}: {v.shape[0]} rows at ratio {ratio} "
                             f"cannot align with {steps} target steps")
        fine_arr = v.reshape(steps, ratio, v.shape[1])
        fine_meta.append(ratio)

    sample = Sample(same=same, targets=y, coarse=coarse_arr, fine=fine_arr)
    meta = {"task": "csv", "coarse_ratios": coarse_meta, "fine_ratios": fine_meta,
            "include_target_history": include_target_history}
    return SequenceDataset(samples=[sample], metadata=meta)


# ---------------------------------------------------------------------------
# normalization and splits


def _fit_minmax(arrays) -> tuple[np.ndarray, np.ndarray]:
    stacked = np.vstack(arrays)
    return stacked.min(axis=0), stacked.max(axis=0)


def _apply_minmax(a, lo, hi, what: str):
    span = hi - lo
    safe = np.where(span == 0.0, 1.0, span)
    out = (a - lo) / safe
    out = np.where(span == 0.0, 0.0, out)
    if np.any(out < 0.0) or np.any(out > 1.0):
        warnings.warn(f"{what}: values outside the training range map outside "
                      "[0, 1]", RuntimeWarning)
    return out


@dataclass
class Normalization:
    """Per-dimension min-max record, fitted on the training portion only."""

    same_lo: np.ndarray
    same_hi: np.ndarray
    target_lo: np.ndarray
    target_hi: np.ndarray
    coarse_lo: np.ndarray | None = None
    coarse_hi: np.ndarray | None = None
    fine_lo: np.ndarray | None = None
    fine_hi: np.ndarray | None = None

    def apply(self, s: Sample, warn: bool = True) -> Sample:
        ctx = warnings.catch_warnings()
        with ctx:
            if not warn:
                warnings.simplefilter("ignore", RuntimeWarning)
            same = _apply_minmax(s.same, self.same_lo, self.same_hi, "same stream")
            targets = _apply_minmax(s.targets, self.target_lo, self.target_hi,
                                    "target stream")
            coarse = None
            if s.coarse is not None:
                coarse = _apply_minmax(s.coarse, self.coarse_lo, self.coarse_hi,
                                       "coarse stream")
            fine = None
            if s.fine is not None:
                fine = _apply_minmax(s.fine, self.fine_lo, self.fine_hi,
                                     "fine stream")
        return Sample(same=same, targets=targets, coarse=coarse, fine=fine)

    def denormalize_targets(self, arr: np.ndarray) -> np.ndarray:
        span = self.target_hi - self.target_lo
        return arr * span + self.target_lo

    def to_dict(self) -> dict:
        doc = {}
        for name in ("same", "target", "coarse", "fine"):
            lo = getattr(self, f"{name}_lo")
            hi = getattr(self, f"{name}_hi")
            doc[name] = None if lo is None else {
                "lo": [float(v) for v in np.ravel(lo)],
                "hi": [float(v) for v in np.ravel(hi)],
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalization":
        kw = {}
        for name in ("same", "target", "coarse", "fine"):
            entry = doc.get(name)
            kw[f"{name}_lo"] = None if entry is None else np.asarray(entry["lo"])
            kw[f"{name}_hi"] = None if entry is None else np.asarray(entry["hi"])
        return cls(**kw)


def fit_normalization(dataset: SequenceDataset, idx) -> Normalization:
    """Min-max per dimension over the samples listed in idx."""
    if not idx:
        raise ValueError("cannot fit normalization on an empty index list")
    samples = [dataset.samples[i] for i in idx]
    same_lo, same_hi = _fit_minmax([s.same for s in samples])
    tgt_lo, tgt_hi = _fit_minmax([s.targets for s in samples])
    norm = Normalization(same_lo, same_hi, tgt_lo, tgt_hi)
    if samples[0].coarse is not None:
        norm.coarse_lo, norm.coarse_hi = _fit_minmax([s.coarse for s in samples])
    if samples[0].fine is not None:
        flat = [s.fine.reshape(-1, s.fine.shape[2]) for s in samples]
        norm.fine_lo, norm.fine_hi = _fit_minmax(flat)
    if np.any(same_hi == same_lo) or np.any(tgt_hi == tgt_lo):
        warnings.warn("constant dimension in training data scales to 0",
                      RuntimeWarning)
    return norm


def normalize_split(dataset: SequenceDataset, rng: Rng | None = None, *,
                    mode: str | None = None, train_frac: float = 0.7,
                    val_frac: float = 0.2,
                    chrono_fracs: tuple[float, float, float] = (0.64, 0.16, 0.20),
                    ) -> SequenceDataset:
    """Fix splits, fit normalization on the training portion, rescale all.

    mode "samples" (default for multi-sample datasets): a seeded permutation
    reserves train_frac of the samples for training and the rest for test;
    the last val_frac share of the training selection becomes validation.

    mode "chronological" (default for single-sequence datasets): the one
    sequence is cut into contiguous train/val/test segments by chrono_fracs.
    """
    n = len(dataset.samples)
    if mode is None:
        mode = "chronological" if n == 1 else "samples"

    if mode == "samples":
        if rng is None:
            raise ValueError("samples mode needs an rng for the split draw")
        if not (0.0 < train_frac < 1.0):
            raise ValueError("train_frac must lie in (0, 1)")
        if not (0.0 <= val_frac < 1.0):
            raise ValueError("val_frac must lie in [0, 1)")
        perm = [int(i) for i in rng.split("split").permutation(n)]
        n_train_total = int(round(train_frac * n))
        if n_train_total < 1 or n_train_total >= n:
            raise ValueError(f"train_frac {train_frac} leaves an empty split "
                             f"for {n} samples")
        chosen = perm[:n_train_total]
        test_idx = sorted(perm[n_train_total:])
        n_val = int(round(val_frac * n_train_total))
        val_idx = sorted(chosen[n_train_total - n_val:]) if n_val else []
        train_idx = sorted(chosen[:n_train_total - n_val])
        samples = list(dataset.samples)
    elif mode == "chronological":
        if n != 1:
            raise ValueError("chronological mode expects a single sequence")
        fr = chrono_fracs
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"chrono_fracs must be three positive shares "
                             f"summing to 1, got {fr}")
        s = dataset.samples[0]
        steps = s.length
        a = int(round(fr[0] * steps))
        b = a + int(round(fr[1] * steps))
        if a < 1 or b <= a or b >= steps:
            raise ValueError(f"sequence of {steps} steps is too short for "
                             f"fractions {fr}")
        samples = [_slice_sample(s, 0, a), _slice_sample(s, a, b),
                   _slice_sample(s, b, steps)]
        train_idx, val_idx, test_idx = [0], [1], [2]
    else:
        raise ValueError(f"unknown split mode {mode!r}")

    tmp = SequenceDataset(samples=samples, metadata=dict(dataset.metadata))
    norm = fit_normalization(tmp, train_idx)
    normed = []
    for i, s in enumerate(samples):
        # spillover warnings only matter outside the fitting split
        normed.append(norm.apply(s, warn=(i not in train_idx)))
    meta = dict(dataset.metadata)
    meta["normalized"] = True
    meta["split_mode"] = mode
    return SequenceDataset(samples=normed, train_idx=train_idx, val_idx=val_idx,
                           test_idx=test_idx, norm=norm, metadata=meta)


def _slice_sample(s: Sample, a: int, b: int) -> Sample:
    return Sample(same=s.same[a:b], targets=s.targets[a:b],
                  coarse=None if s.coarse is None else s.coarse[a:b],
                  fine=None if s.fine is None else s.fine[a:b])


# ---------------------------------------------------------------------------
# directory export / import


def save_dataset(dataset: SequenceDataset, out_dir) -> list[Path]:
    """Write the dataset as CSV streams plus a JSON manifest; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(name, rows, header):
        path = out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    def stream_rows(get):
        for i, s in enumerate(dataset.samples):
            arr = get(s)
            for t in range(arr.shape[0]):
                yield [i, t] + [repr(float(v)) for v in arr[t]]

    dump("inputs.csv", stream_rows(lambda s: s.same),
         ["sample", "t"] + [f"x{d}" for d in range(dataset.same_dim)])
    dump("targets.csv", stream_rows(lambda s: s.targets),
         ["sample", "t"] + [f"y{d}" for d in range(dataset.target_dim)])
    if dataset.samples[0].coarse is not None:
        dump("coarse.csv", stream_rows(lambda s: s.coarse),
             ["sample", "t"] + [f"c{d}" for d in range(dataset.coarse_dim)])
    if dataset.samples[0].fine is not None:
        rows = []
        for i, s in enumerate(dataset.samples):
            for t in range(s.fine.shape[0]):
                for u in range(s.fine.shape[1]):
                    rows.append([i, t, u] + [repr(float(v)) for v in s.fine[t, u]])
        dump("fine.csv", rows,
             ["sample", "t", "step"] + [f"f{d}" for d in range(dataset.fine_dim)])

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "n_samples": len(dataset.samples),
        "metadata": dataset.metadata,
        "splits": {"train": dataset.train_idx, "val": dataset.val_idx,
                   "test": dataset.test_idx},
        "normalization": None if dataset.norm is None else dataset.norm.to_dict(),
    }
    mpath = out / "dataset.json"
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    written.append(mpath)
    return written


def load_dataset(in_dir) -> SequenceDataset:
    src = Path(in_dir)
    with open(src / "dataset.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format_version "
                         f"{manifest.get('format_version')!r}")
    n = manifest["n_samples"]

    def read_stream(name, index_cols):
        path = src / name
        if not path.exists():
            return None
        _, data = _read_numeric_csv(path)
        per_sample = [[] for _ in range(n)]
        keys = [[] for _ in range(n)]
        for row in data:
            i = int(row[0])
            per_sample[i].append(row[index_cols:])
            keys[i].append(tuple(row[1:index_cols]))
        arrays = []
        for i in range(n):
            order = np.lexsort(tuple(np.asarray([k[c] for k in keys[i]])
                                     for c in range(index_cols - 2, -1, -1)))
            arrays.append(np.asarray(per_sample[i])[order])
        return arrays

    same = read_stream("inputs.csv", 2)
    targets = read_stream("targets.csv", 2)
    coarse = read_stream("coarse.csv", 2)
    fine_flat = read_stream("fine.csv", 3)
    samples = []
    for i in range(n):
        fine = None
        if fine_flat is not None:
            t_count = same[i].shape[0]
            block = fine_flat[i].shape[0] // t_count
            fine = fine_flat[i].reshape(t_count, block, -1)
        samples.append(Sample(same=same[i], targets=targets[i],
                              coarse=None if coarse is None else coarse[i],
                              fine=fine))
    norm = manifest.get("normalization")
    return SequenceDataset(
        samples=samples,
        train_idx=[int(i) for i in manifest["splits"]["train"]],
        val_idx=[int(i) for i in manifest["splits"]["val"]],
        test_idx=[int(i) for i in manifest["splits"]["test"]],
        norm=None if norm is None else Normalization.from_dict(norm),
        metadata=manifest["metadata"],
    )
