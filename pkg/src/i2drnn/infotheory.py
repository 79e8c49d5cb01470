"""Information estimates, all in nats.

Binned mutual information uses equal-width per-coordinate bins and the
plug-in entropy formula. When the joint grid over all coordinates would
exceed JOINT_CELL_LIMIT cells the estimate switches to a labelled proxy:
the sum of scalar pairwise MI over every (source dim, target dim) pair.
Results carry the proxy and clamping flags so downstream consumers can
report which estimator produced each number.

The analytic side covers a linear-Gaussian channel determinant formula and
closed-form input/memory information rates for a contractive tanh layer,
parameterized by the largest eigenvalues of the recurrent and input Gram
matrices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BINS = 30
JOINT_CELL_LIMIT = 1_000_000
FIT_FLOOR = 1e-6
K_CLAMP = 1e-6

LN_2PI_E = math.log(2.0 * math.pi * math.e)
# differential entropy of a unit Gaussian, the default innovation entropy
HX_UNIT_GAUSSIAN = 0.5 * LN_2PI_E


def to_bits(nats: float) -> float:
    return nats / math.log(2.0)


@dataclass(frozen=True)
class MiEstimate:
    value: float          # nats
    proxy: bool = False   # pairwise-sum proxy instead of the full joint
    clamped: bool = False # a negative plug-in sum was clamped to zero

    def __float__(self) -> float:
        return self.value


def _as_samples(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be (n,) or (n, dims), got {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _bin_codes(arr: np.ndarray, bins: int) -> np.ndarray:
    """Equal-width bin index per coordinate; constant coordinates get bin 0."""
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    span = hi - lo
    codes = np.zeros(arr.shape, dtype=np.int64)
    live = span > 0.0
    if np.any(live):
        scaled = (arr[:, live] - lo[live]) / span[live] * bins
        codes[:, live] = np.minimum(scaled.astype(np.int64), bins - 1)
    return codes


def _entropy_of_codes(flat: np.ndarray) -> float:
    _, counts = np.unique(flat, return_counts=True)
    p = counts / flat.shape[0]
    return float(-np.sum(p * np.log(p)))


def _flatten_codes(codes: np.ndarray, bins: int) -> np.ndarray:
    flat = codes[:, 0].copy()
    for c in range(1, codes.shape[1]):
        flat *= bins
        flat += codes[:, c]
    return flat


def _plugin_mi(xc: np.ndarray, yc: np.ndarray, bins: int) -> tuple[float, bool]:
    fx = _flatten_codes(xc, bins)
    fy = _flatten_codes(yc, bins)
    hx = _entropy_of_codes(fx)
    hy = _entropy_of_codes(fy)
    hxy = _entropy_of_codes(fx * (bins ** yc.shape[1]) + fy)
    mi = hx + hy - hxy
    if mi < 0.0:
        return 0.0, True
    return mi, False


def binned_mi(xs, ys, bins: int = DEFAULT_BINS) -> MiEstimate:
    """Plug-in binned MI between two aligned sample collections.

    Falls back to the pairwise-sum proxy (flagged) whenever the full joint
    grid bins**(dx+dy) would exceed JOINT_CELL_LIMIT cells.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = _as_samples(xs, "xs")
    y = _as_samples(ys, "ys")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    xc = _bin_codes(x, bins)
    yc = _bin_codes(y, bins)
    dims = x.shape[1] + y.shape[1]
    if bins ** dims <= JOINT_CELL_LIMIT:
        mi, clamped = _plugin_mi(xc, yc, bins)
        return MiEstimate(mi, proxy=False, clamped=clamped)
    total = 0.0
    clamped = False
    for i in range(x.shape[1]):
        xi = xc[:, i:i + 1]
        for j in range(y.shape[1]):
            mi, cl = _plugin_mi(xi, yc[:, j:j + 1], bins)
            total += mi
            clamped = clamped or cl
    return MiEstimate(total, proxy=True, clamped=clamped)


def gaussian_linear_mi(w, sigma) -> float:
    """0.5 * ln det(I + S W^T W S) with S the inverse square root of sigma.

    sigma must be symmetric positive definite.
    """
    W = np.asarray(w, dtype=np.float64)
    S = np.asarray(sigma, dtype=np.float64)
    if W.ndim != 2 or S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("w must be a matrix and sigma a square matrix")
    if W.shape[1] != S.shape[0]:
        raise ValueError(f"w columns {W.shape[1]} must match sigma {S.shape[0]}")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, float(np.abs(S).max()))):
        raise ValueError("sigma must be symmetric")
    vals, vecs = np.linalg.eigh(S)
    if np.any(vals <= 0.0):
        raise ValueError("sigma must be positive definite")
    inv_sqrt = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    m = inv_sqrt @ (W.T @ W) @ inv_sqrt
    sign, logdet = np.linalg.slogdet(np.eye(m.shape[0]) + m)
    if sign <= 0.0:
        raise ValueError("determinant is not positive; sigma is ill-conditioned")
    return 0.5 * float(logdet)


@dataclass
class MiCurve:
    """MI per lag with per-entry estimator flags."""

    lags: list[int]
    mi: list[float]
    proxy: list[bool] = field(default_factory=list)
    clamped: list[bool] = field(default_factory=list)
    normalized: bool = False

    def __post_init__(self):
        if len(self.lags) != len(self.mi):
            raise ValueError("lags and mi must have equal length")
        if not self.proxy:
            self.proxy = [False] * len(self.lags)
        if not self.clamped:
            self.clamped = [False] * len(self.lags)

    def value_at(self, lag: int) -> float:
        return self.mi[self.lags.index(lag)]

    def rows(self):
        """(lag, mi, flag) rows; flag names the estimator that produced mi."""
        for lag, v, p in zip(self.lags, self.mi, self.proxy):
            yield lag, v, ("proxy" if p else "joint")


def lagged_mi_curve(source, target, max_lag: int, bins: int = DEFAULT_BINS,
                    normalize: bool = False) -> MiCurve:
    """MI between source at lag tau and target now, for tau = 0..max_lag.

    Entry tau pools the aligned pairs (source[t - tau], target[t]). With
    `normalize` every entry is divided by the lag-0 value (skipped with a
    warning if that value is 0).
    """
    src = _as_samples(source, "source")
    tgt = _as_samples(target, "target")
    if src.shape[0] != tgt.shape[0]:
        raise ValueError(f"length mismatch: {src.shape[0]} vs {tgt.shape[0]}")
    T = src.shape[0]
    if not (0 <= max_lag <= T - 2):
        raise ValueError(f"max_lag must lie in [0, {T - 2}] for {T} steps")
    lags, mi, proxy, clamped = [], [], [], []
    for tau in range(max_lag + 1):
        est = binned_mi(src[:T - tau], tgt[tau:], bins)
        lags.append(tau)
        mi.append(est.value)
        proxy.append(est.proxy)
        clamped.append(est.clamped)
    normalized = False
    if normalize:
        base = mi[0]
        if base > 0.0:
            mi = [v / base for v in mi]
            normalized = True
        else:
            warnings.warn("lag-0 MI is zero; normalization skipped", RuntimeWarning)
    return MiCurve(lags=lags, mi=mi, proxy=proxy, clamped=clamped,
                   normalized=normalized)


@dataclass(frozen=True)
class ExpFit:
    """Least-squares fit of mi(tau) = a * k**tau on the log scale."""

    a: float
    k: float
    residual: float       # rms of the log-scale residuals
    clamped: bool = False # k was pushed back into (K_CLAMP, 1 - K_CLAMP)
    n_used: int = 0

    def value(self, tau) -> np.ndarray:
        return self.a * np.power(self.k, np.asarray(tau, dtype=np.float64))


def fit_exponential(curve: MiCurve, floor: float = FIT_FLOOR) -> ExpFit:
    """Fit a * k**tau to the curve entries above `floor` (needs >= 3)."""
    lags = np.asarray(curve.lags, dtype=np.float64)
    vals = np.asarray(curve.mi, dtype=np.float64)
    keep = vals > floor
    if int(keep.sum()) < 3:
        raise ValueError(f"only {int(keep.sum())} entries above the fit floor "
                         f"{floor}; need at least 3")
    x = lags[keep]
    y = np.log(vals[keep])
    slope, intercept = np.polyfit(x, y, 1)
    a = float(np.exp(intercept))
    k = float(np.exp(slope))
    clamped = False
    if not (K_CLAMP < k < 1.0 - K_CLAMP):
        k = min(max(k, K_CLAMP), 1.0 - K_CLAMP)
        clamped = True
    resid = y - (intercept + slope * x)
    return ExpFit(a=a, k=k, residual=float(np.sqrt(np.mean(resid * resid))),
                  clamped=clamped, n_used=int(keep.sum()))


@dataclass(frozen=True)
class RateParams:
    """Closed-form rate inputs for one recurrent layer.

    lam: largest eigenvalue of W^T W for the layer's recurrent matrix;
    eta: largest eigenvalue of U^T U for its input matrix; hx: differential
    entropy rate of the driving input; dim: the layer's state width.
    """

    lam: float
    eta: float
    hx: float = HX_UNIT_GAUSSIAN
    dim: int = 1

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if self.eta <= 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def input_rate(rp: RateParams) -> float:
    """Fresh information absorbed per step: (dim/2) ln(1 + eta/lam)."""
    return 0.5 * rp.dim * math.log(1.0 + rp.eta / rp.lam)


def memory_rate(rp: RateParams, tau: int) -> float:
    """Information retained about the input tau steps back:
    (dim/2) ln(1 + 2*pi*e (1-lam) lam^tau / ((1-lam^tau) eta e^(2 hx)))."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    lam = rp.lam
    num = 2.0 * math.pi * math.e * (1.0 - lam) * lam ** tau
    den = (1.0 - lam ** tau) * rp.eta * math.exp(2.0 * rp.hx)
    return 0.5 * rp.dim * math.log1p(num / den)


def analytic_rates(rp: RateParams, tau_max: int) -> tuple[float, MiCurve]:
    """(input rate, memory-rate curve over lags 1..tau_max)."""
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    lags = list(range(1, tau_max + 1))
    return input_rate(rp), MiCurve(lags=lags,
                                   mi=[memory_rate(rp, t) for t in lags])


def decay_rate(curve: MiCurve, tail_start: int) -> float:
    """Exponential tail rate: exp of the log-scale slope for lags >= tail_start."""
    pts = [(lag, v) for lag, v in zip(curve.lags, curve.mi)
           if lag >= tail_start and v > 0.0]
    if len(pts) < 2:
        raise ValueError("need at least 2 positive tail entries")
    x = np.asarray([p[0] for p in pts], dtype=np.float64)
    y = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(x, y, 1)
    return float(np.exp(slope))


def estimate_hx(series, order: int = 5) -> float:
    """Innovation entropy of a series: fit a linear AR(order) per dimension by
    least squares and return the mean of 0.5 ln(2 pi e var(residual))."""
    arr = _as_samples(series, "series")
    T, D = arr.shape
    if T <= order + 1:
        raise ValueError(f"series of {T} steps too short for AR({order})")
    rows = T - order
    out = []
    for d in range(D):
        col = arr[:, d]
        design = np.empty((rows, order + 1))
        design[:, 0] = 1.0
        for j in range(1, order + 1):
            design[:, j] = col[order - j:T - j]
        y = col[order:]
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        var = float(np.mean(resid * resid))
        if var <= 1e-300:
            raise ValueError(f"dimension {d} is (near) deterministic; "
                             "innovation entropy undefined")
        out.append(0.5 * math.log(2.0 * math.pi * math.e * var))
    return float(np.mean(out))
