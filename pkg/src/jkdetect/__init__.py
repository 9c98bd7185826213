"""Fault detection for linearized pseudorange positioning.

Jackknife and solution-separation detectors with Gaussian and Principal
Gaussian overbounds for non-Gaussian nominal errors, plus simulation,
replay, and benchmark harnesses.
"""

from .detector import (FAULT, INSUFFICIENT, JACKKNIFE, NO_FAULT,
                       SOLUTION_SEPARATION, DetectionResult, DetectorConfig,
                       detect_epoch, jackknife_detect, origin_test, ss_detect)
from .dist import (GriddedPdf, NigParams, bessel_k1, convolve, from_gaussian,
                   gaussian_jk_variance, linear_combination_pdf, nig_pdf,
                   nig_sample, quantile, scale_pdf)
from .errors import (DegenerateGeometryError, FitDegenerateError, JkDetectError,
                     PartitionFailureError, ScenarioParseError,
                     SubsetDegenerateError)
from .estimator import SubsetSolution, WlsSolution, subset_solution, wls_solve
from .geometry import (ConstellationConfig, EcefPosition, EpochRecord,
                       LinearSystem, iono_free_combine, linearize_spp,
                       propagate_walker, user_grid, visible_satellites)
from .harness import (BenchConfig, DetectionRateGrid, GaussianError, NigError,
                      ReplayScenario, ScenarioGenConfig, WorldSimConfig,
                      bench_detectors, gen_scenario, inject_fault, run_replay,
                      run_world_sim)
from .overbound import (BinnedModelBank, Bgmm, EmpiricalSample, GaussianOverbound,
                        Pgo, PgoParams, UniformModelBank, build_pgo, fit_bgmm_em,
                        fit_binned_bank, fit_gaussian_overbound, fit_pgo,
                        gaussian_overbound, pgo_variance, to_gridded_pdf)
from .residual import (JackknifeResidual, SeparationVector, jackknife_residual,
                       separation_vector, solution_derivative, ss_from_jackknife)

__version__ = "0.1.0"
