"""Fault-detection hypothesis tests.

The jackknife detector tests each leave-one-out residual t_k against a
two-sided threshold from its nominal error distribution; the solution
separation detector does the same for every state component of d_k.
Both split the family-wise false-alarm budget tau evenly over the n
simultaneous subsets (Bonferroni), so each test runs at level tau / n
with its threshold at the 1 - tau / (2n) quantile. Rejection requires a
strict inequality; equality with the threshold is acceptance.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .dist import GriddedPdf, linear_combination_pdf, quantile
from .errors import SubsetDegenerateError
from .estimator import subset_solution, wls_solve
from .geometry import (DEFAULT_ELEVATION_MASK_DEG, EpochRecord, LinearSystem,
                       linearize_spp, solve_linearization_point)
from .overbound import GaussianOverbound, to_gridded_pdf
from .residual import jackknife_residual, separation_vector

FAULT = "fault"
NO_FAULT = "no_fault"
INSUFFICIENT = "insufficient_geometry"

JACKKNIFE = "jackknife"
SOLUTION_SEPARATION = "solution-separation"


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings shared by the per-epoch pipeline and the harness."""

    tau: float = 0.05
    detector: str = JACKKNIFE
    force_grid: bool = False
    elevation_mask_deg: float = DEFAULT_ELEVATION_MASK_DEG
    min_visible: int = 5
    grid_cache: bool = True
    # grid size for threshold convolutions; coarser than the module default
    # because per-epoch cost scales with n log n while the threshold error
    # stays orders of magnitude inside the 1e-3 agreement tolerance
    grid_points: int = 2**12

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.detector not in (JACKKNIFE, SOLUTION_SEPARATION):
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.grid_points < 2**8:
            raise ValueError("grid_points too small for reliable thresholds")


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of one epoch: decision, per-subset statistics and thresholds.

    ``statistics``/``thresholds`` have shape (n,) for the jackknife
    detector and (n, m) for solution separation; skipped subsets hold NaN.
    ``flagged`` lists the measurement indices whose test rejected.
    """

    decision: str
    epoch_s: float | None = None
    statistics: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    flagged: tuple = ()
    skipped: tuple = ()
    sat_ids: tuple | None = None
    threshold_walltime_s: float = 0.0

    @property
    def fault_claimed(self) -> bool:
        return self.decision == FAULT


def origin_test(t_k: float, nominal, alpha: float):
    """Single two-sided test of one residual at level alpha.

    ``nominal`` is either a GriddedPdf or a Gaussian variance. Returns
    (reject, threshold) with threshold at the 1 - alpha/2 quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if isinstance(nominal, GriddedPdf):
        threshold = quantile(nominal, 1.0 - alpha / 2.0)
    else:
        variance = float(nominal)
        if variance <= 0.0:
            raise ValueError("nominal variance must be positive")
        threshold = float(np.sqrt(variance) * ndtri(1.0 - alpha / 2.0))
    return abs(t_k) > threshold, threshold


def _insufficient(epoch_s, sat_ids) -> DetectionResult:
    return DetectionResult(decision=INSUFFICIENT, epoch_s=epoch_s, sat_ids=sat_ids)


def _closed_form_ok(models, cfg: DetectorConfig) -> bool:
    return (not cfg.force_grid
            and all(isinstance(m, GaussianOverbound) for m in models))


def _with_model_weights(sys: LinearSystem, variances: np.ndarray) -> LinearSystem:
    return sys.with_weights(1.0 / variances)


def jackknife_detect(sys: LinearSystem, models, cfg: DetectorConfig,
                     sat_ids=None, epoch_s=None) -> DetectionResult:
    """Bonferroni-corrected jackknife test over all n subsets.

    The weighting matrix is rebuilt from the model variances (inverse
    variance on the diagonal). For all-Gaussian models the nominal
    variance of t_k comes from the closed form; otherwise each subset's
    nominal density is the convolution of the per-measurement densities
    scaled by the residual's error coefficients.
    """
    n, m = sys.n, sys.m
    if n < max(cfg.min_visible, m + 1):
        return _insufficient(epoch_s, sat_ids)
    variances = np.array([mod.variance for mod in models], dtype=float)
    wsys = _with_model_weights(sys, variances)
    closed_form = _closed_form_ok(models, cfg)
    level = 1.0 - cfg.tau / (2.0 * n)

    stats = np.full(n, np.nan)
    thresholds = np.full(n, np.nan)
    flagged = []
    skipped = []
    walltime = 0.0
    grids = None if closed_form else [to_gridded_pdf(mod, n=cfg.grid_points,
                                                     cache=cfg.grid_cache)
                                      for mod in models]
    for k in range(n):
        try:
            sub = subset_solution(wsys, k)
        except SubsetDegenerateError:
            skipped.append(k)
            continue
        jk = jackknife_residual(wsys, sub, k)
        stats[k] = jk.t_k
        start = time.perf_counter()
        if closed_form:
            var_t = float(jk.coefficients**2 @ variances)
            thr = float(np.sqrt(var_t) * ndtri(level))
        else:
            nominal = linear_combination_pdf(jk.coefficients, grids,
                                             n=cfg.grid_points)
            thr = quantile(nominal, level)
        thresholds[k] = thr
        if abs(jk.t_k) > thr:
            flagged.append(k)
        walltime += time.perf_counter() - start

    decision = FAULT if flagged else NO_FAULT
    return DetectionResult(decision=decision, epoch_s=epoch_s, statistics=stats,
                           thresholds=thresholds, flagged=tuple(flagged),
                           skipped=tuple(skipped), sat_ids=sat_ids,
                           threshold_walltime_s=walltime)


def ss_detect(sys: LinearSystem, models, cfg: DetectorConfig,
              sat_ids=None, epoch_s=None) -> DetectionResult:
    """Solution-separation test over all n subsets and m state components.

    Every component of d_k is tested at the same per-subset level
    tau / n, which preserves the decision equivalence with the jackknife
    test because each component is proportional to t_k. Each component's
    nominal density needs its own convolution, which is where the m-fold
    cost over the jackknife detector comes from.
    """
    n, m = sys.n, sys.m
    if n < max(cfg.min_visible, m + 1):
        return _insufficient(epoch_s, sat_ids)
    variances = np.array([mod.variance for mod in models], dtype=float)
    wsys = _with_model_weights(sys, variances)
    closed_form = _closed_form_ok(models, cfg)
    level = 1.0 - cfg.tau / (2.0 * n)

    full = wls_solve(wsys)
    stats = np.full((n, m), np.nan)
    thresholds = np.full((n, m), np.nan)
    flagged = []
    skipped = []
    walltime = 0.0
    grids = None if closed_form else [to_gridded_pdf(mod, n=cfg.grid_points,
                                                     cache=cfg.grid_cache)
                                      for mod in models]
    for k in range(n):
        try:
            sub = subset_solution(wsys, k)
        except SubsetDegenerateError:
            skipped.append(k)
            continue
        sep = separation_vector(full, sub)
        stats[k] = sep.d_k
        reject_k = False
        start = time.perf_counter()
        for q in range(m):
            coeffs = sep.coefficients[q]
            if not np.any(coeffs):
                thresholds[k, q] = np.inf
                continue
            if closed_form:
                var_q = float(coeffs**2 @ variances)
                thr = float(np.sqrt(var_q) * ndtri(level))
            else:
                nominal = linear_combination_pdf(coeffs, grids,
                                                 n=cfg.grid_points)
                thr = quantile(nominal, level)
            thresholds[k, q] = thr
            if abs(sep.d_k[q]) > thr:
                reject_k = True
        walltime += time.perf_counter() - start
        if reject_k:
            flagged.append(k)

    decision = FAULT if flagged else NO_FAULT
    return DetectionResult(decision=decision, epoch_s=epoch_s, statistics=stats,
                           thresholds=thresholds, flagged=tuple(flagged),
                           skipped=tuple(skipped), sat_ids=sat_ids,
                           threshold_walltime_s=walltime)


def build_epoch_system(record: EpochRecord, cfg: DetectorConfig):
    """Mask, bootstrap the linearization point, and linearize one epoch.

    Returns (system, used_sat_ids, used_elevations) or None when too few
    satellites clear the mask.
    """
    keep = record.elevations_deg >= cfg.elevation_mask_deg
    if int(keep.sum()) < cfg.min_visible:
        return None
    pos = record.sat_positions[keep]
    rho = record.measurements[keep]
    x0 = solve_linearization_point(pos, rho)
    sys = linearize_spp(pos, rho, x0)
    ids = tuple(np.asarray(record.sat_ids)[keep].tolist())
    return sys, ids, record.elevations_deg[keep]


def detect_epoch(record: EpochRecord, bank, cfg: DetectorConfig) -> DetectionResult:
    """Run the configured detector on one epoch record."""
    built = build_epoch_system(record, cfg)
    if built is None:
        return _insufficient(record.epoch_s, tuple(record.sat_ids))
    sys, ids, elev = built
    models = bank.models_for(elev)
    detect = jackknife_detect if cfg.detector == JACKKNIFE else ss_detect
    return detect(sys, models, cfg, sat_ids=ids, epoch_s=record.epoch_s)


def result_to_dict(result: DetectionResult) -> dict:
    """JSON-safe rendering of a detection result."""
    def listify(a):
        return None if a is None else np.asarray(a).tolist()

    return {
        "epoch_s": result.epoch_s,
        "decision": result.decision,
        "statistics": listify(result.statistics),
        "thresholds": listify(result.thresholds),
        "flagged": list(result.flagged),
        "skipped": list(result.skipped),
        "sat_ids": None if result.sat_ids is None else list(result.sat_ids),
        "threshold_walltime_s": result.threshold_walltime_s,
    }


def write_results_jsonl(results, path) -> None:
    """Emit detection results as JSON lines."""
    with open(path, "w") as fh:
        for res in results:
            fh.write(json.dumps(result_to_dict(res)) + "\n")
