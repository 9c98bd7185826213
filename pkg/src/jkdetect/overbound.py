"""Nominal-error bounding: Gaussian overbound search and the Principal
Gaussian overbound built from a zero-mean bimodal Gaussian mixture.

The Gaussian overbound is the minimal-sigma zero-mean Gaussian whose CDF
dominates the empirical CDF below zero and is dominated above zero. The
Principal Gaussian overbound (PGO) fits a two-component zero-mean mixture
by EM, splits the axis at the point where the component responsibilities
cross, keeps the narrow component (plus a constant offset) in the core,
and inflates the wide component in the tail; the inflation and offset are
pinned by continuity at the partition point and unit total mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate as _integrate
from scipy.special import ndtr

from .dist import GRID_N, GriddedPdf, _build, from_gaussian, symmetric_grid
from .errors import FitDegenerateError, PartitionFailureError

# Elevation bins for per-elevation error models, degrees
BIN_EDGES_DEG = tuple(float(e) for e in range(15, 80, 5))

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _normal_pdf(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT_2PI)


@dataclass(frozen=True)
class EmpiricalSample:
    """Sorted residual sample used for overbound fitting."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.shape[0] < 2:
            raise ValueError("need a one-dimensional sample")
        if not np.isfinite(v).all():
            raise ValueError("sample values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def std(self) -> float:
        return float(self.values.std())


def dominance_constraints(sample: EmpiricalSample):
    """Binding (x, probability) pairs for two-sided CDF dominance.

    The bound must sit above the empirical CDF at every negative sample
    point, using the step value just before the jump ((i-1)/n, the
    left-limit), and below it at every nonnegative point, using the value
    just after (i/n, the right-limit); the one-step slack keeps a single
    sample from dictating the bound. Points whose step probability falls
    within 25/sqrt(n) of one half are excluded: order statistics near the
    median wander by O(1/sqrt(n)) in probability while a zero-mean bound
    is pinned to one half at zero, so constraints there would say nothing
    about the distribution and could not be met at any finite sigma.
    """
    xs = sample.values
    n = sample.n
    band = min(0.45, 25.0 / np.sqrt(n))
    ranks = np.arange(1, n + 1)
    upper = ranks / n
    lower = (ranks - 1) / n
    neg = (xs < 0.0) & (lower > 0.0) & (lower < 0.5 - band)
    pos = (xs >= 0.0) & (upper < 1.0) & (upper > 0.5 + band)
    return xs[neg], lower[neg], xs[pos], upper[pos]


def dominance_holds(sample: EmpiricalSample, sigma: float) -> bool:
    """Two-sided CDF dominance of the sample at the given sigma."""
    x_neg, p_neg, x_pos, p_pos = dominance_constraints(sample)
    if x_neg.size and np.any(ndtr(x_neg / sigma) < p_neg):
        return False
    if x_pos.size and np.any(ndtr(x_pos / sigma) > p_pos):
        return False
    return True


def gaussian_overbound(sample: EmpiricalSample, tol_factor: float = 1e-4) -> float:
    """Minimal sigma of a zero-mean Gaussian CDF overbound of the sample.

    Bisects sigma until the bracket shrinks below ``tol_factor`` times the
    sample standard deviation, checking the dominance constraints of
    :func:`dominance_constraints` at every enforced sample point.
    """
    std = sample.std
    if std <= 0.0:
        raise FitDegenerateError("sample has no spread")
    x_neg, p_neg, x_pos, p_pos = dominance_constraints(sample)

    def feasible(sigma: float) -> bool:
        if x_neg.size and np.any(ndtr(x_neg / sigma) < p_neg):
            return False
        if x_pos.size and np.any(ndtr(x_pos / sigma) > p_pos):
            return False
        return True

    lo, hi = 0.5 * std, 20.0 * std
    for _ in range(40):
        if feasible(hi):
            break
        hi *= 2.0
    else:
        raise FitDegenerateError("no Gaussian overbound within the search range")
    for _ in range(40):
        if not feasible(lo):
            break
        lo *= 0.5
        if lo < 1e-12 * std:
            return lo
    tol = tol_factor * std
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class Bgmm:
    """Zero-mean two-component Gaussian mixture; component 2 is the tail."""

    p1: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        if not 0.0 < self.p1 < 1.0:
            raise ValueError("p1 must lie in (0, 1)")
        if self.sigma1 <= 0.0 or self.sigma2 < self.sigma1:
            raise ValueError("need 0 < sigma1 <= sigma2")

    def pdf(self, x):
        return (self.p1 * _normal_pdf(x, self.sigma1)
                + (1.0 - self.p1) * _normal_pdf(x, self.sigma2))

    def cdf(self, x):
        return (self.p1 * ndtr(np.asarray(x) / self.sigma1)
                + (1.0 - self.p1) * ndtr(np.asarray(x) / self.sigma2))

    @property
    def variance(self) -> float:
        return self.p1 * self.sigma1**2 + (1.0 - self.p1) * self.sigma2**2


def _em_run(sq: np.ndarray, p1: float, var1: float, var2: float,
            max_iter: int, rel_tol: float, floor: float):
    """EM on squared samples; only the weight and the two variances move."""
    ll_trace = []
    ll_prev = -np.inf
    for _ in range(max_iter):
        log_a = np.log(p1) - 0.5 * sq / var1 - 0.5 * np.log(2.0 * np.pi * var1)
        log_b = np.log1p(-p1) - 0.5 * sq / var2 - 0.5 * np.log(2.0 * np.pi * var2)
        top = np.maximum(log_a, log_b)
        log_mix = top + np.log(np.exp(log_a - top) + np.exp(log_b - top))
        ll = float(log_mix.sum())
        ll_trace.append(ll)
        gamma1 = np.exp(log_a - log_mix)
        w1 = float(gamma1.sum())
        w2 = sq.shape[0] - w1
        if w1 > 1e-10 * sq.shape[0]:
            var1 = float((gamma1 @ sq) / w1)
        if w2 > 1e-10 * sq.shape[0]:
            var2 = float(((1.0 - gamma1) @ sq) / w2)
        if var1 < floor or var2 < floor:
            raise FitDegenerateError("mixture variance collapsed")
        p1 = min(max(w1 / sq.shape[0], 1e-12), 1.0 - 1e-12)
        if ll - ll_prev < rel_tol * abs(ll) and np.isfinite(ll_prev):
            break
        ll_prev = ll
    return p1, var1, var2, ll_trace


def fit_bgmm_em(sample: EmpiricalSample, seed=0, max_iter: int = 500,
                rel_tol: float = 1e-8, restarts: int = 10, full_output: bool = False):
    """Fit a zero-mean two-component mixture by EM with random restarts.

    The first start biases toward the core/tail split the PGO expects
    (weight 0.9, sigmas at half and twice the sample spread); the rest
    jitter those initials. The best final log-likelihood wins and the
    components are relabeled so sigma2 >= sigma1.
    """
    if sample.n < 100:
        raise ValueError("need at least 100 samples to fit a mixture")
    std = sample.std
    if std <= 0.0:
        raise FitDegenerateError("sample has no spread")
    sq = sample.values**2
    floor = (1e-8 * std) ** 2
    rng = np.random.default_rng(seed)

    best = None
    for trial in range(max(restarts, 1)):
        if trial == 0:
            init = (0.9, (0.5 * std) ** 2, (2.0 * std) ** 2)
        else:
            jitter = rng.lognormal(0.0, 0.35, size=2)
            p_init = float(np.clip(0.9 + rng.normal(0.0, 0.05), 0.55, 0.98))
            init = (p_init, (0.5 * std * jitter[0]) ** 2, (2.0 * std * jitter[1]) ** 2)
        try:
            p1, var1, var2, trace = _em_run(sq, *init, max_iter=max_iter,
                                            rel_tol=rel_tol, floor=floor)
        except FitDegenerateError:
            continue
        if best is None or trace[-1] > best[3][-1]:
            best = (p1, var1, var2, trace)
    if best is None:
        raise FitDegenerateError("every EM start collapsed")

    p1, var1, var2, trace = best
    s1, s2 = np.sqrt(var1), np.sqrt(var2)
    if s2 < s1:
        s1, s2 = s2, s1
        p1 = 1.0 - p1
    model = Bgmm(p1=p1, sigma1=float(s1), sigma2=float(s2))
    if full_output:
        return model, {"log_likelihood": trace, "iterations": len(trace)}
    return model


@dataclass(frozen=True)
class PgoParams:
    """Principal Gaussian overbound parameters.

    Core region |x| <= x_rp carries p1 * N(0, sigma1) + c; the tail carries
    (1 + k) * (1 - p1) * N(0, sigma2). Continuity at x_rp and unit total
    mass pin k and c.
    """

    p1: float
    sigma1: float
    sigma2: float
    k: float
    c: float
    x_rp: float

    def __post_init__(self):
        if self.x_rp <= 0.0:
            raise ValueError("partition point must be positive")
        if self.k < 0.0:
            raise ValueError("tail inflation must be nonnegative")
        if self.p1 * _normal_pdf(self.x_rp, self.sigma1) + self.c < -1e-12:
            raise ValueError("core density is negative at the partition point")


def _solve_pgo_at(bgmm: Bgmm, x_rp: float) -> PgoParams:
    """Tail inflation and core offset for a given partition point.

    Continuity at x_rp and unit total mass determine both in closed form:
    core and tail Gaussian masses come from the normal CDF and the core
    offset integrates to 2 * c * x_rp.
    """
    p1, s1, s2 = bgmm.p1, bgmm.sigma1, bgmm.sigma2
    f1 = float(_normal_pdf(x_rp, s1))
    f2 = float(_normal_pdf(x_rp, s2))
    core1 = p1 * (2.0 * float(ndtr(x_rp / s1)) - 1.0)
    tail2 = 1.0 - float(ndtr(x_rp / s2))
    numerator = 1.0 - core1 + 2.0 * x_rp * p1 * f1
    denominator = 2.0 * (1.0 - p1) * (x_rp * f2 + tail2)
    one_plus_k = numerator / denominator
    k = one_plus_k - 1.0
    if k < -1e-9:
        raise PartitionFailureError("mixture is not bimodal enough for a tail inflation")
    k = max(k, 0.0)
    c = (1.0 + k) * (1.0 - p1) * f2 - p1 * f1
    return PgoParams(p1=p1, sigma1=s1, sigma2=s2, k=float(k), c=float(c),
                     x_rp=float(x_rp))


def _tail_targets(sample: EmpiricalSample, floor: float, band: float):
    """Tail sample points and the CDF/CCDF levels the bound must reach."""
    xs = sample.values
    n = sample.n
    lo = max(floor, 20.0 / n)
    ranks = np.arange(1, n + 1)
    left_lev = ranks / n
    right_lev = (n - ranks + 1) / n
    left = (xs < 0.0) & (left_lev >= lo) & (left_lev <= band)
    right = (xs > 0.0) & (right_lev >= lo) & (right_lev <= band)
    return xs[left], left_lev[left], xs[right], right_lev[right]


def _bounds_tail(params: PgoParams, targets) -> bool:
    x_l, lev_l, x_r, lev_r = targets
    if x_l.size and np.any(pgo_cdf(x_l, params) < lev_l):
        return False
    if x_r.size and np.any(1.0 - pgo_cdf(x_r, params) < lev_r):
        return False
    return True


def responsibility_crossing(bgmm: Bgmm) -> float:
    """Positive root of p1 * N(x; 0, s1) = (1 - p1) * N(x; 0, s2)."""
    p1, s1, s2 = bgmm.p1, bgmm.sigma1, bgmm.sigma2
    if s2 <= s1:
        raise PartitionFailureError("components have equal spread, no crossing")
    log_ratio = np.log(p1 * s2 / ((1.0 - p1) * s1))
    if log_ratio <= 0.0:
        raise PartitionFailureError("narrow component never dominates the core")
    inv_gap = 1.0 / s1**2 - 1.0 / s2**2
    x_rp = float(np.sqrt(2.0 * log_ratio / inv_gap))
    if not x_rp < 20.0 * s2:
        raise PartitionFailureError("no responsibility crossing within 20 sigma")
    return x_rp


def build_pgo(bgmm: Bgmm, sample: EmpiricalSample | None = None,
              tail_floor: float = 1e-3, tail_band: float = 0.05) -> PgoParams:
    """Construct the PGO from a fitted mixture.

    The partition point starts where the component responsibilities
    cross; the tail inflation and core offset then follow from continuity
    at x_rp plus unit total mass. When the fitted sample is supplied, the
    partition is pushed outward to the first point where the resulting
    tail bounds the empirical CDF/CCDF at every tail sample point between
    probability levels ``tail_floor`` and ``tail_band``; a maximum-
    likelihood mixture on heavy-tailed data otherwise leaves the deep
    tail unbounded, which would defeat the overbound.
    """
    x_rp = responsibility_crossing(bgmm)
    if sample is None:
        return _solve_pgo_at(bgmm, x_rp)
    targets = _tail_targets(sample, tail_floor, tail_band)
    limit = 20.0 * bgmm.sigma2
    while x_rp < limit:
        try:
            params = _solve_pgo_at(bgmm, x_rp)
        except PartitionFailureError:
            x_rp *= 1.03
            continue
        if _bounds_tail(params, targets):
            return params
        x_rp *= 1.03
    raise PartitionFailureError(
        "no partition point bounds the sample tail at the requested level")


def pgo_pdf(x, params: PgoParams):
    """Piecewise PGO density."""
    arr = np.asarray(x, dtype=float)
    core = params.p1 * _normal_pdf(arr, params.sigma1) + params.c
    tail = (1.0 + params.k) * (1.0 - params.p1) * _normal_pdf(arr, params.sigma2)
    out = np.where(np.abs(arr) <= params.x_rp, core, tail)
    return float(out) if out.ndim == 0 else out


def pgo_cdf(x, params: PgoParams):
    """Closed-form PGO cumulative distribution."""
    arr = np.asarray(x, dtype=float)
    p1, s1, s2 = params.p1, params.sigma1, params.sigma2
    scale = (1.0 + params.k) * (1.0 - p1)
    left = scale * ndtr(arr / s2)
    cdf_at_minus = scale * ndtr(-params.x_rp / s2)
    mid = (cdf_at_minus
           + p1 * (ndtr(arr / s1) - ndtr(-params.x_rp / s1))
           + params.c * (arr + params.x_rp))
    right = 1.0 - scale * ndtr(-arr / s2)
    out = np.where(arr < -params.x_rp, left, np.where(arr <= params.x_rp, mid, right))
    return float(out) if out.ndim == 0 else out


def pgo_variance(params: PgoParams) -> float:
    """Variance of the PGO by numerical integration of x^2 * pdf."""
    def integrand(x):
        return x * x * pgo_pdf(x, params)

    core, _ = _integrate.quad(integrand, 0.0, params.x_rp, epsabs=1e-13, epsrel=1e-10)
    tail, _ = _integrate.quad(integrand, params.x_rp, np.inf, epsabs=1e-13, epsrel=1e-10)
    return 2.0 * (core + tail)


@dataclass(frozen=True)
class GaussianOverbound:
    """Zero-mean Gaussian overbound model."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")

    @property
    def variance(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class Pgo:
    """Principal Gaussian overbound model."""

    params: PgoParams

    @cached_property
    def variance(self) -> float:
        return pgo_variance(self.params)


OverboundModel = GaussianOverbound | Pgo

_GRID_CACHE: dict = {}


def to_gridded_pdf(model: OverboundModel, n: int = GRID_N, cache: bool = True) -> GriddedPdf:
    """Sample an overbound model onto the standard grid for convolution."""
    key = (model, n)
    if cache and key in _GRID_CACHE:
        return _GRID_CACHE[key]
    if isinstance(model, GaussianOverbound):
        grid = from_gaussian(model.sigma, n=n)
    else:
        p = model.params
        half = max(10.0 * np.sqrt(model.variance), 8.0 * p.sigma2)
        x = symmetric_grid(half, n)
        grid = _build(half, pgo_pdf(x, p))
    if cache:
        _GRID_CACHE[key] = grid
    return grid


def clear_grid_cache() -> None:
    _GRID_CACHE.clear()


def fit_gaussian_overbound(sample: EmpiricalSample) -> GaussianOverbound:
    if sample.n < 100:
        raise ValueError("need at least 100 samples")
    return GaussianOverbound(sigma=gaussian_overbound(sample))


def fit_pgo(sample: EmpiricalSample, seed=0, tail_floor: float = 1e-3) -> Pgo:
    return Pgo(params=build_pgo(fit_bgmm_em(sample, seed=seed), sample=sample,
                                tail_floor=tail_floor))


class UniformModelBank:
    """One overbound model applied to every measurement."""

    def __init__(self, model: OverboundModel):
        self.model = model

    def model_for(self, elevation_deg: float) -> OverboundModel:
        return self.model

    def models_for(self, elevations_deg) -> list:
        return [self.model] * len(np.atleast_1d(elevations_deg))


class BinnedModelBank:
    """Per-elevation-bin overbound models; out-of-range queries clamp."""

    def __init__(self, edges_deg, models):
        self.edges = np.asarray(edges_deg, dtype=float)
        if self.edges.ndim != 1 or self.edges.shape[0] < 2:
            raise ValueError("need at least one bin")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must increase")
        if len(models) != self.edges.shape[0] - 1:
            raise ValueError("need one model per bin")
        self.models = list(models)

    def bin_index(self, elevation_deg: float) -> int:
        idx = int(np.searchsorted(self.edges, elevation_deg, side="right")) - 1
        return min(max(idx, 0), len(self.models) - 1)

    def model_for(self, elevation_deg: float) -> OverboundModel:
        return self.models[self.bin_index(elevation_deg)]

    def models_for(self, elevations_deg) -> list:
        return [self.model_for(e) for e in np.atleast_1d(elevations_deg)]


def fit_binned_bank(values, elevations_deg, method: str = "pgo",
                    edges_deg=BIN_EDGES_DEG, seed=0) -> BinnedModelBank:
    """Fit one overbound per elevation bin; samples outside clamp inward."""
    values = np.asarray(values, dtype=float)
    elev = np.asarray(elevations_deg, dtype=float)
    edges = np.asarray(edges_deg, dtype=float)
    clamped = np.clip(elev, edges[0], np.nextafter(edges[-1], -np.inf))
    models = []
    for i in range(edges.shape[0] - 1):
        mask = (clamped >= edges[i]) & (clamped < edges[i + 1])
        if i == edges.shape[0] - 2:
            mask |= clamped >= edges[i + 1]
        sample = EmpiricalSample(values[mask])
        if method == "gaussian":
            models.append(fit_gaussian_overbound(sample))
        elif method == "pgo":
            models.append(fit_pgo(sample, seed=seed))
        else:
            raise ValueError(f"unknown overbound method {method!r}")
    return BinnedModelBank(edges, models)


def model_to_dict(model: OverboundModel) -> dict:
    if isinstance(model, GaussianOverbound):
        return {"kind": "gaussian", "sigma": model.sigma}
    p = model.params
    return {"kind": "pgo", "p1": p.p1, "sigma1": p.sigma1, "sigma2": p.sigma2,
            "k": p.k, "c": p.c, "x_rp": p.x_rp}


def model_from_dict(d: dict) -> OverboundModel:
    kind = d.get("kind")
    if kind == "gaussian":
        return GaussianOverbound(sigma=float(d["sigma"]))
    if kind == "pgo":
        return Pgo(params=PgoParams(p1=float(d["p1"]), sigma1=float(d["sigma1"]),
                                    sigma2=float(d["sigma2"]), k=float(d["k"]),
                                    c=float(d["c"]), x_rp=float(d["x_rp"])))
    raise ValueError(f"unknown model kind {kind!r}")


def bank_to_dict(bank) -> dict:
    if isinstance(bank, UniformModelBank):
        return {"binned": False, "model": model_to_dict(bank.model)}
    if isinstance(bank, BinnedModelBank):
        return {"binned": True,
                "bins": [{"elev_lo": float(bank.edges[i]), "elev_hi": float(bank.edges[i + 1]),
                          "model": model_to_dict(m)} for i, m in enumerate(bank.models)]}
    raise TypeError("unsupported bank type")


def bank_from_dict(d: dict):
    if not d.get("binned", False):
        return UniformModelBank(model_from_dict(d["model"]))
    bins = d["bins"]
    edges = [b["elev_lo"] for b in bins] + [bins[-1]["elev_hi"]]
    return BinnedModelBank(edges, [model_from_dict(b["model"]) for b in bins])


def save_bank(bank, path) -> None:
    with open(path, "w") as fh:
        json.dump(bank_to_dict(bank), fh, indent=2)


def load_bank(path):
    with open(path) as fh:
        return bank_from_dict(json.load(fh))


DEFAULT_TABLE_LEVELS = (1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5,
                        0.75, 0.9, 0.95, 0.99, 0.999, 0.9999, 0.99999)


def comparison_table(sample: EmpiricalSample, gaussian: GaussianOverbound | None,
                     pgo: Pgo | None, levels=DEFAULT_TABLE_LEVELS):
    """CDF/CCDF comparison rows at sample quantile levels.

    Returns (header, rows) ready for CSV emission; used to reproduce the
    overbound sharpness plots.
    """
    xs = np.quantile(sample.values, levels)
    emp = np.searchsorted(sample.values, xs, side="right") / sample.n
    header = ["x", "empirical_cdf", "gaussian_cdf", "pgo_cdf",
              "empirical_ccdf", "gaussian_ccdf", "pgo_ccdf"]
    g_cdf = ndtr(xs / gaussian.sigma) if gaussian is not None else np.full_like(xs, np.nan)
    p_cdf = pgo_cdf(xs, pgo.params) if pgo is not None else np.full_like(xs, np.nan)
    rows = [[float(x), float(e), float(g), float(p),
             float(1.0 - e), float(1.0 - g), float(1.0 - p)]
            for x, e, g, p in zip(xs, emp, g_cdf, p_cdf)]
    return header, rows
