"""Post-training analyses of a trained network.

Three views of what a model learned: lagged mutual information between each
hidden layer and the input stream (which layer holds which time scale),
closed-form input/memory rates evaluated at the trained weights' spectral
statistics, and per-level output-weight covariances whose normalized
off-diagonals rank the most correlated output regions.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import SequenceDataset
from .infotheory import (DEFAULT_BINS, MiCurve, RateParams, analytic_rates,
                         binned_mi, estimate_hx)
from .model import ARCH_I2DRNN, ModelParams, forward_sample
from .numerics import largest_eigenvalue

RANKING_TIE_TOL = 1e-12


@dataclass
class LayerMiProfile:
    """One lagged-MI curve per layer, lags shared across layers."""

    curves: list[MiCurve]
    max_lag: int
    bins: int

    @property
    def num_layers(self) -> int:
        return len(self.curves)

    def rows(self):
        """(layer, lag, mi, estimator_flag) rows in layer-major order."""
        for l, curve in enumerate(self.curves, start=1):
            for lag, v, flag in curve.rows():
                yield l, lag, v, flag


def _sample_traces(params: ModelParams, dataset: SequenceDataset, split: str):
    idx = dataset.split_indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    return [forward_sample(params, dataset.samples[i].same,
                           coarse=dataset.samples[i].coarse,
                           fine=dataset.samples[i].fine)
            for i in idx]


def layer_mi_profile(params: ModelParams, dataset: SequenceDataset,
                     split: str = "test", max_lag: int = 20,
                     bins: int = DEFAULT_BINS) -> LayerMiProfile:
    """Lagged MI between every layer's state and the assembled input.

    Entry (layer l, lag tau) pools the pairs (x_{t-tau}, h^l_t) over all
    steps of all samples in the split and estimates their binned MI. The
    estimator's proxy/clamped flags are kept per entry.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    traces = _sample_traces(params, dataset, split)
    min_len = min(tr.x.shape[0] for tr in traces)
    if max_lag > min_len - 2:
        raise ValueError(f"max_lag {max_lag} too large for sequences of "
                         f"{min_len} steps")
    L = params.config.num_layers
    curves = []
    for l in range(L):
        lags, mi, proxy, clamped = [], [], [], []
        for tau in range(max_lag + 1):
            xs = np.concatenate([tr.x[:tr.x.shape[0] - tau] for tr in traces])
            hs = np.concatenate([tr.h[l][tau:] for tr in traces])
            est = binned_mi(xs, hs, bins)
            lags.append(tau)
            mi.append(est.value)
            proxy.append(est.proxy)
            clamped.append(est.clamped)
        curves.append(MiCurve(lags=lags, mi=mi, proxy=proxy, clamped=clamped))
    return LayerMiProfile(curves=curves, max_lag=max_lag, bins=bins)


def save_profile_csv(profile: LayerMiProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "lag", "mi", "estimator_flag"])
        for layer, lag, v, flag in profile.rows():
            w.writerow([layer, lag, repr(float(v)), flag])


@dataclass
class EmpiricalRates:
    """Closed-form rates at one layer's trained spectral statistics.

    lam and eta are the largest eigenvalues of W^T W and U^T U for the
    layer's own recurrent and feed matrices; hx is estimated from the
    dataset inputs. When lam >= 1 the contraction precondition of the
    rate formulas fails: the values are still reported but the curves
    are omitted and a flag is set.
    """

    layer: int
    lam: float
    eta: float
    hx: float
    dim: int
    input_rate: float | None = None
    memory_curve: MiCurve | None = None
    flags: tuple[str, ...] = ()


def _dataset_hx(dataset: SequenceDataset, split: str, order: int) -> float:
    idx = dataset.split_indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    vals = []
    for i in idx:
        s = dataset.samples[i]
        stream = s.same if s.coarse is None else np.hstack([s.same, s.coarse])
        vals.append(estimate_hx(stream, order=order))
    return float(np.mean(vals))


def empirical_rates(params: ModelParams, layer: int, dataset: SequenceDataset,
                    split: str = "all", tau_max: int = 100,
                    ar_order: int = 5) -> EmpiricalRates:
    """Analytic rate curves evaluated at a trained layer's spectra."""
    cfg = params.config
    if not (1 <= layer <= cfg.num_layers):
        raise ValueError(f"layer must lie in 1..{cfg.num_layers}, got {layer}")
    W = params.rec[(layer, layer)]
    U = params.feed[layer]
    lam = largest_eigenvalue(W.T @ W)
    eta = largest_eigenvalue(U.T @ U)
    if eta <= 0.0:
        raise ValueError(f"layer {layer} feed matrix is zero; eta must be "
                         "positive")
    hx = _dataset_hx(dataset, split, ar_order)
    dim = cfg.layer_dims[layer - 1]
    if lam >= 1.0:
        warnings.warn(f"layer {layer} recurrent spectrum {lam:.4f} >= 1; "
                      "rate curves omitted", RuntimeWarning)
        return EmpiricalRates(layer=layer, lam=lam, eta=eta, hx=hx, dim=dim,
                              flags=("contraction_violated",))
    rp = RateParams(lam=lam, eta=eta, hx=hx, dim=dim)
    in_rate, curve = analytic_rates(rp, tau_max)
    return EmpiricalRates(layer=layer, lam=lam, eta=eta, hx=hx, dim=dim,
                          input_rate=in_rate, memory_curve=curve)


@dataclass(frozen=True)
class ScaleCorrelation:
    """Output-weight covariance of one readout level: Cov = V V^T, where V
    is the level's readout matrix. Symmetric PSD by construction, one row
    and column per output region."""

    level: int
    cov: np.ndarray

    @property
    def num_regions(self) -> int:
        return self.cov.shape[0]


def scale_correlations(params: ModelParams) -> list[ScaleCorrelation]:
    """One covariance per readout level, bottom-up.

    The hierarchical net reads out every layer, so each level gets a
    matrix; the stacked net only reads the top layer and yields a single
    entry.
    """
    levels = (sorted(params.out) if params.config.arch == ARCH_I2DRNN
              else [params.config.num_layers])
    return [ScaleCorrelation(level=l, cov=params.out[l] @ params.out[l].T)
            for l in levels]


def top_correlated(corr: ScaleCorrelation, region: int,
                   k: int) -> tuple[list[int], list[str]]:
    """Indices of the k regions most correlated with `region`.

    Off-diagonal entries are normalized by the diagonal before ranking, so
    the result is invariant under uniform scaling of the readout. Regions
    with zero variance cannot be ranked and are dropped with a flag; an
    all-tied candidate set (an identity covariance, say) has no meaningful
    ranking and comes back empty, flagged.
    """
    cov = corr.cov
    n = cov.shape[0]
    if not (0 <= region < n):
        raise ValueError(f"region must lie in 0..{n - 1}, got {region}")
    if not (1 <= k < n):
        raise ValueError(f"k must lie in 1..{n - 1}, got {k}")
    diag = np.diag(cov)
    if diag[region] <= 0.0:
        raise ValueError(f"region {region} has zero variance")
    flags: list[str] = []
    cand = [j for j in range(n) if j != region and diag[j] > 0.0]
    if len(cand) < n - 1:
        flags.append("zero_variance_excluded")
    if not cand:
        return [], flags + ["degenerate_ranking"]
    vals = np.array([cov[region, j] / np.sqrt(diag[region] * diag[j])
                     for j in cand])
    if float(vals.max() - vals.min()) <= RANKING_TIE_TOL:
        return [], flags + ["degenerate_ranking"]
    order = sorted(range(len(cand)), key=lambda i: (-vals[i], cand[i]))
    return [cand[i] for i in order[:k]], flags


def default_region_labels(n: int) -> list[str]:
    return [f"r{i}" for i in range(n)]


def save_correlation_csv(corr: ScaleCorrelation, path,
                         labels: list[str] | None = None) -> None:
    """Square CSV: header row of region labels, one value row per region."""
    n = corr.num_regions
    if labels is None:
        labels = default_region_labels(n)
    if len(labels) != n:
        raise ValueError(f"need {n} labels, got {len(labels)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(labels)
        for i in range(n):
            w.writerow([repr(float(v)) for v in corr.cov[i]])


def load_correlation_csv(path, level: int = 0) -> tuple[ScaleCorrelation, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0]
    mat = np.array([[float(v) for v in row] for row in rows[1:]])
    if mat.shape != (len(labels), len(labels)):
        raise ValueError(f"matrix in {Path(path).name} is not square against "
                         "its header")
    return ScaleCorrelation(level=level, cov=mat), labels
