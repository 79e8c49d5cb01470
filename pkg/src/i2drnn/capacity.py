"""Layer-capacity estimation and network sizing.

Pipeline: fit the data's lagged-MI curve as g(tau) = a k^tau, choose one
memory-tradeoff coefficient lambda per layer (closed forms cross-checked
against a golden-section maximization of the long-range objective, which
is authoritative when they disagree), turn each (lambda, width) pair into an
analytic information curve over lags, and compare against g to get the
achievable information (icap) of a candidate network. Sweeping the total
hidden size yields a curve whose concave turning point marks the necessary
size and whose saturation point marks the sufficient size.

Throughout, eta (the input-gain eigenvalue) defaults to 1 and the innovation
entropy defaults to the unit Gaussian value; both can be overridden with
data-driven estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .infotheory import (HX_UNIT_GAUSSIAN, ExpFit, MiCurve, input_rate,
                         memory_rate, RateParams)

LAMBDA_DOMAIN = (1e-4, 1.0 - 1e-4)
LAMBDA3_TOL = 1e-10
CLOSED_FORM_TOL = 0.05   # closed form vs numeric agreement gate
COVERAGE = 0.99
TAU_MAX_CAP = 500
DEFAULT_SIZE_GRID = tuple(range(20, 301, 20))
SATURATION_TOL = 0.01


def default_tau_max(k: float, coverage: float = COVERAGE,
                    cap: int = TAU_MAX_CAP) -> int:
    """Smallest tau whose cumulative share of sum a*k^t reaches `coverage`,
    capped at `cap`."""
    if not (0.0 < k < 1.0):
        raise ValueError(f"k must lie in (0, 1), got {k}")
    m = math.log(1.0 - coverage) / math.log(k)
    return max(1, min(int(math.ceil(m - 1.0 - 1e-12)), cap))


@dataclass(frozen=True)
class ObjectiveSpec:
    """Weighted memory objective for one layer's lambda.

    value() is the long-range objective

        f(lam) = sum_{tau=1..horizon} 2 pi e (1-lam) lam^tau e^(-2 hx)
                 * (a k^tau - prev(tau)),

    the small-gain limit of the per-lag memory rate weighted by the
    information left over for this layer. The closed-form lambdas are
    exact stationary points of this form, so it is what the numeric
    solver maximizes. eta cancels out of it.

    log_kernel_value() keeps the saturating log kernel instead. Each of
    its lag terms grows monotonically in lam toward a positive limit, so
    the whole sum rewards lam -> 1 and has no interior maximum under the
    default constants; it is exposed for diagnostics only.

    prev is the information already captured by lower layers per lag
    (index tau-1); missing entries count as zero.
    """

    a: float
    k: float
    eta: float = 1.0
    hx: float = HX_UNIT_GAUSSIAN
    prev: tuple[float, ...] = ()

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError("a must be positive")
        if not (0.0 < self.k < 1.0):
            raise ValueError(f"k must lie in (0, 1), got {self.k}")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")

    def weights(self, horizon: int) -> np.ndarray:
        tau = np.arange(1, horizon + 1, dtype=np.float64)
        w = self.a * np.power(self.k, tau)
        for i, p in enumerate(self.prev[:horizon]):
            w[i] -= p
        return w

    def value(self, lam: float, horizon: int) -> float:
        tau = np.arange(1, horizon + 1, dtype=np.float64)
        lam_tau = np.power(lam, tau)
        gain = 2.0 * math.pi * math.e * math.exp(-2.0 * self.hx)
        return float(gain * (1.0 - lam)
                     * np.sum(lam_tau * self.weights(horizon)))

    def log_kernel_value(self, lam: float, horizon: int) -> float:
        tau = np.arange(1, horizon + 1, dtype=np.float64)
        lam_tau = np.power(lam, tau)
        c = 2.0 * math.pi * math.e
        num = c * (1.0 - lam) * self.eta * lam_tau
        den = c * lam_tau * lam * (1.0 - lam) \
            + self.eta * math.exp(2.0 * self.hx) * (1.0 - lam_tau)
        terms = np.log1p(num / den)
        return float(np.sum(terms * self.weights(horizon)))


_INV_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def solve_lambda_numeric(spec, tau_horizon: int, tol: float = 1e-9) -> float:
    """Golden-section maximization over the open lambda domain.

    `spec` is an ObjectiveSpec (its long-range value() is maximized) or
    any callable lam -> value. A flat objective returns the domain
    midpoint with a warning. This solver is authoritative over the
    closed forms."""
    if tau_horizon < 1:
        raise ValueError("tau_horizon must be >= 1")
    if isinstance(spec, ObjectiveSpec):
        def f(lam: float) -> float:
            return spec.value(lam, tau_horizon)
    else:
        f = spec
    lo, hi = LAMBDA_DOMAIN
    c = hi - _INV_GOLD * (hi - lo)
    d = lo + _INV_GOLD * (hi - lo)
    fc = f(c)
    fd = f(d)
    seen_min = min(fc, fd)
    seen_max = max(fc, fd)
    while hi - lo > tol:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_GOLD * (hi - lo)
            fc = f(c)
            seen_min, seen_max = min(seen_min, fc), max(seen_max, fc)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_GOLD * (hi - lo)
            fd = f(d)
            seen_min, seen_max = min(seen_min, fd), max(seen_max, fd)
    if seen_max - seen_min <= 1e-12 * max(1.0, abs(seen_max)):
        warnings.warn("flat lambda objective; returning the domain midpoint",
                      RuntimeWarning)
        return 0.5
    return 0.5 * (lo + hi)


def lambda1(k: float) -> float:
    """First-layer tradeoff: root of 1 - 2 lam + k lam^2 in (0, 1), written
    in the cancellation-free form 1 / (1 + sqrt(1 - k))."""
    if not (0.0 < k < 1.0):
        raise ValueError(f"k must lie in (0, 1), got {k}")
    return 1.0 / (1.0 + math.sqrt(1.0 - k))


def lambda2(k: float, q: float, eta: float = 1.0, hx: float = HX_UNIT_GAUSSIAN,
            tau_horizon: int | None = None) -> tuple[float, bool]:
    """Second-layer tradeoff given the first layer's decay q.

    Returns (value, fallback_used). When s = k + q + k q < 1 the closed
    quadratic root (1 - sqrt(1 - s)) / s applies; otherwise the numeric
    maximizer of the residual-weighted objective (weights k^tau - q^tau,
    treating the lag-0 amplitudes of data and first layer as equal) decides.
    """
    if not (0.0 < k < 1.0):
        raise ValueError(f"k must lie in (0, 1), got {k}")
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q}")
    s = k + q + k * q
    if s < 1.0:
        return 1.0 / (1.0 + math.sqrt(1.0 - s)), False
    horizon = tau_horizon if tau_horizon is not None else max(default_tau_max(k), 30)
    prev = tuple(q ** t for t in range(1, horizon + 1))
    spec = ObjectiveSpec(a=1.0, k=k, eta=eta, hx=hx, prev=prev)
    if k <= q:
        warnings.warn("residual information curve is nonpositive; the layer "
                      "has nothing left to capture", RuntimeWarning)
    return solve_lambda_numeric(spec, horizon), True


def lambda3(k: float, lam2: float) -> float:
    """Third-layer tradeoff: bisection root of
    1 - 2 lam + (k + lam2) lam^2 - k lam2 lam^3 in (0, 1)."""
    if not (0.0 < k < 1.0):
        raise ValueError(f"k must lie in (0, 1), got {k}")
    if not (0.0 < lam2 < 1.0):
        raise ValueError(f"lam2 must lie in (0, 1), got {lam2}")

    def p(x: float) -> float:
        return 1.0 - 2.0 * x + (k + lam2) * x * x - k * lam2 * x ** 3

    lo, hi = 0.0, 1.0
    # p(0) = 1 > 0 and p(1) = -(1-k)(1-lam2) < 0, so the root is bracketed
    while hi - lo > LAMBDA3_TOL:
        mid = 0.5 * (lo + hi)
        if p(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_chain(k: float, n_layers: int, eta: float = 1.0,
                 hx: float = HX_UNIT_GAUSSIAN,
                 tau_horizon: int | None = None) -> tuple[list[float], list[str]]:
    """Per-layer lambdas for a template of up to three layers.

    The first layer's closed form is checked against the numeric solver;
    if they disagree beyond CLOSED_FORM_TOL the numeric value wins and a
    flag records the override.
    """
    if not (1 <= n_layers <= 3):
        raise ValueError("lambda chain supports 1 to 3 layers")
    horizon = tau_horizon if tau_horizon is not None else max(default_tau_max(k), 30)
    flags: list[str] = []

    lam1 = lambda1(k)
    numeric = solve_lambda_numeric(ObjectiveSpec(a=1.0, k=k, eta=eta, hx=hx),
                                   horizon)
    if abs(lam1 - numeric) > CLOSED_FORM_TOL:
        flags.append("lambda1_numeric_override")
        lam1 = numeric
    lams = [lam1]
    if n_layers >= 2:
        lam2, fallback = lambda2(k, lams[0], eta=eta, hx=hx, tau_horizon=horizon)
        if fallback:
            flags.append("lambda2_numeric_fallback")
        lams.append(lam2)
    if n_layers == 3:
        lams.append(lambda3(k, lams[1]))
    return lams, flags


def layer_info_curve(lam: float, dim: int, eta: float = 1.0,
                     hx: float = HX_UNIT_GAUSSIAN, tau_max: int = 100) -> MiCurve:
    """Analytic information curve of one layer over lags 0..tau_max: the
    input rate at lag 0, the memory rate beyond."""
    rp = RateParams(lam=lam, eta=eta, hx=hx, dim=dim)
    mi = [input_rate(rp)] + [memory_rate(rp, t) for t in range(1, tau_max + 1)]
    return MiCurve(lags=list(range(tau_max + 1)), mi=mi)


@dataclass(frozen=True)
class CapacityEstimate:
    """Totals over the shared lag grid 0..tau_max."""

    tau_max: int
    total_info: float      # sum of g
    capacity: float        # sum of the per-lag max over layer curves
    icap: float            # sum of min(g, best layer curve)
    alpha: float           # icap / total_info
    flags: tuple[str, ...] = ()


def icap_estimate(fit: ExpFit, curves: list[MiCurve],
                  tau_max: int | None = None) -> CapacityEstimate:
    """Achievable information of a network against the data curve g = a k^tau.

    Every layer curve must cover the shared grid 0..tau_max. A tau_max too
    small to cover 99% of the data curve's mass is flagged.
    """
    if not curves:
        raise ValueError("need at least one layer curve")
    if tau_max is None:
        tau_max = curves[0].lags[-1]
    grid = list(range(tau_max + 1))
    vals = []
    for c in curves:
        if c.lags[:tau_max + 1] != grid:
            raise ValueError("layer curve does not cover the lag grid "
                             f"0..{tau_max}")
        vals.append(np.asarray(c.mi[:tau_max + 1]))
    tau = np.arange(tau_max + 1, dtype=np.float64)
    g = fit.a * np.power(fit.k, tau)
    best = np.maximum.reduce(vals)
    flags = []
    if fit.k ** (tau_max + 1) > 1.0 - COVERAGE:
        flags.append("tau_max_coverage")
        warnings.warn(f"tau_max {tau_max} covers less than {COVERAGE:.0%} of "
                      "the data curve mass", RuntimeWarning)
    total = float(np.sum(g))
    icap = float(np.sum(np.minimum(g, best)))
    return CapacityEstimate(tau_max=tau_max, total_info=total,
                            capacity=float(np.sum(best)), icap=icap,
                            alpha=icap / total, flags=tuple(flags))


@dataclass(frozen=True)
class LayerPlan:
    """Concrete layer widths for a capacity evaluation (1 to 3 layers)."""

    layer_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_dims",
                           tuple(int(d) for d in self.layer_dims))
        if not (1 <= len(self.layer_dims) <= 3):
            raise ValueError("plan must have 1 to 3 layers")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError("layer widths must be positive")

    @property
    def total(self) -> int:
        return sum(self.layer_dims)


def split_size(total: int, n_layers: int) -> tuple[int, ...]:
    """Split a total width as evenly as possible, extras to lower layers."""
    base, rem = divmod(total, n_layers)
    if base < 1:
        raise ValueError(f"total {total} too small for {n_layers} layers")
    return tuple(base + (1 if i < rem else 0) for i in range(n_layers))


def plan_capacity(fit: ExpFit, plan: LayerPlan, eta: float = 1.0,
                  hx: float = HX_UNIT_GAUSSIAN, tau_max: int | None = None,
                  lams: list[float] | None = None) -> CapacityEstimate:
    """icap of one concrete plan; lambdas come from the chain unless given."""
    if tau_max is None:
        tau_max = default_tau_max(fit.k)
    if lams is None:
        lams, _ = lambda_chain(fit.k, len(plan.layer_dims), eta=eta, hx=hx)
    curves = [layer_info_curve(lam, dim, eta=eta, hx=hx, tau_max=tau_max)
              for lam, dim in zip(lams, plan.layer_dims)]
    return icap_estimate(fit, curves, tau_max)


@dataclass
class ConfigCurve:
    """Achievable information as a function of total hidden size."""

    sizes: list[int]
    icap: list[float]
    n_layers: int
    lambdas: list[float]
    total_info: float
    tau_max: int
    flags: list[str] = field(default_factory=list)

    def first_differences(self) -> np.ndarray:
        """Central first differences; endpoints one-sided."""
        return np.gradient(np.asarray(self.icap),
                           np.asarray(self.sizes, dtype=np.float64))

    def second_differences(self) -> np.ndarray:
        """Central second differences on the uniform grid; nan at endpoints."""
        step = self._step()
        vals = np.asarray(self.icap)
        d2 = np.full(len(vals), np.nan)
        d2[1:-1] = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / (step * step)
        return d2

    def _step(self) -> float:
        diffs = np.diff(np.asarray(self.sizes, dtype=np.float64))
        if len(diffs) == 0 or not np.allclose(diffs, diffs[0]):
            raise ValueError("size grid must be uniform")
        return float(diffs[0])


def config_curve(fit: ExpFit, sizes=DEFAULT_SIZE_GRID, n_layers: int = 2,
                 eta: float = 1.0, hx: float = HX_UNIT_GAUSSIAN,
                 tau_max: int | None = None) -> ConfigCurve:
    """icap over a grid of total sizes, each split evenly across n_layers.

    The lambda chain is computed once from the fitted decay and reused at
    every grid point.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ValueError("size grid needs at least 3 points")
    if sorted(set(sizes)) != sizes:
        raise ValueError("sizes must be strictly increasing")
    if tau_max is None:
        tau_max = default_tau_max(fit.k)
    lams, flags = lambda_chain(fit.k, n_layers, eta=eta, hx=hx)
    icap_vals = []
    total_info = None
    for h in sizes:
        est = plan_capacity(fit, LayerPlan(split_size(h, n_layers)), eta=eta,
                            hx=hx, tau_max=tau_max, lams=lams)
        icap_vals.append(est.icap)
        total_info = est.total_info
        for f in est.flags:
            if f not in flags:
                flags.append(f)
    drops = np.diff(np.asarray(icap_vals))
    if np.any(drops < -1e-12):
        flags.append("nonmonotone")
        warnings.warn("icap decreased along the size grid", RuntimeWarning)
    return ConfigCurve(sizes=sizes, icap=icap_vals, n_layers=n_layers,
                       lambdas=lams, total_info=float(total_info),
                       tau_max=tau_max, flags=flags)


def necessary_config(curve: ConfigCurve) -> tuple[int, list[str]]:
    """Grid size at the concave turning point: the interior point whose
    central second difference is most negative; ties break toward the
    smaller size. Flat curvature and convex curves are flagged."""
    if len(curve.sizes) < 3:
        raise ValueError("need at least 3 grid points")
    d2 = curve.second_differences()[1:-1]
    flags: list[str] = []
    scale = max(1.0, float(np.max(np.abs(curve.icap))))
    if np.all(np.abs(d2) <= 1e-12 * scale):
        flags.append("no_curvature")
        warnings.warn("config curve has no curvature", RuntimeWarning)
        return curve.sizes[1], flags
    if np.min(d2) > 0.0:
        flags.append("convex")
        warnings.warn("config curve is convex; no concave turning point",
                      RuntimeWarning)
    best = int(np.argmin(d2))          # first (smallest size) wins ties
    return curve.sizes[best + 1], flags


def sufficient_config(curve: ConfigCurve, total_info: float | None = None,
                      tol: float = SATURATION_TOL) -> tuple[int, list[str]]:
    """Smallest grid size whose icap reaches (1 - tol) of the data curve
    mass; the largest size with an "unsaturated" flag if none does."""
    if total_info is None:
        total_info = curve.total_info
    threshold = (1.0 - tol) * total_info
    for size, val in zip(curve.sizes, curve.icap):
        if val >= threshold:
            return size, []
    warnings.warn("no grid size saturates the data curve", RuntimeWarning)
    return curve.sizes[-1], ["unsaturated"]
