"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines print
regardless of capture settings).
"""

import time

import numpy as np
import pytest
from scipy.special import ndtr

from jkdetect.detector import (FAULT, INSUFFICIENT, DetectorConfig,
                               detect_epoch, jackknife_detect, ss_detect,
                               build_epoch_system)
from jkdetect.dist import (GRID_N, NigParams, bessel_k1, convolve,
                           from_gaussian, gaussian_jk_variance,
                           linear_combination_pdf, nig_sample, quantile)
from jkdetect.estimator import subset_solution, wls_solve
from jkdetect.geometry import (ConstellationConfig, EpochRecord,
                               geodetic_to_ecef, propagate_walker,
                               visible_satellites)
from jkdetect.harness import (BenchConfig, NigError, ScenarioGenConfig,
                              WorldSimConfig, bench_detectors, gen_scenario,
                              run_replay, run_world_sim, scenario_from_meta)
from jkdetect.overbound import (GaussianOverbound, UniformModelBank,
                                fit_binned_bank, pgo_cdf)
from jkdetect.residual import jackknife_residual, separation_vector, ss_from_jackknife
from conftest import make_spp_system
from oracles import bessel_k1_oracle, nig_cdf_oracle


def announce(capsys, num, name, passed, detail):
    with capsys.disabled():
        status = "PASS" if passed else "FAIL"
        print(f"\n[ACCEPTANCE {num}] {name}: {status} ({detail})")


def simulate_records(count, seed, bias_every=None, bias_m=10.0, step_s=450.0,
                     lat=37.0, lon=-25.0, mask=5.0):
    """Epoch records over time at one location with NIG errors."""
    cfg = ConstellationConfig()
    user = geodetic_to_ecef(lat, lon)
    err = NigError(0.65)
    rng = np.random.default_rng(seed)
    records = []
    step = 0
    while len(records) < count:
        t = step * step_s
        step += 1
        sats = propagate_walker(cfg, t)
        vis, el = visible_satellites(user, sats, mask)
        if vis.size < 5:
            continue
        pos = sats[vis]
        rho = np.linalg.norm(pos - user, axis=1) + err.sample(rng, vis.size)
        if bias_every and len(records) % bias_every == 0:
            rho[int(rng.integers(vis.size))] += bias_m
        records.append(EpochRecord(
            epoch_s=t, sat_ids=tuple(int(v) for v in vis), sat_positions=pos,
            measurements=rho, elevations_deg=el, truth_position=user))
    return records


def test_acceptance_1_algebraic_identity(capsys):
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(5, 13))
        sys = make_spp_system(rng, n=n)
        full = wls_solve(sys)
        for k in range(n):
            sub = subset_solution(sys, k)
            t_k = jackknife_residual(sys, sub, k).t_k
            direct = separation_vector(full, sub).d_k
            mapped = ss_from_jackknife(sys, k, t_k)
            scale = float(np.linalg.norm(direct))
            if scale > 1e-12:
                worst = max(worst, float(np.linalg.norm(mapped - direct)) / scale)
    elapsed = time.perf_counter() - started
    passed = worst < 1e-9 and elapsed < 10.0
    announce(capsys, 1, "separation equals mapped jackknife residual", passed,
             f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-9
    assert elapsed < 10.0


def test_acceptance_2_gaussian_residual_distribution(capsys):
    started = time.perf_counter()
    rng = np.random.default_rng(202)
    level = 1.0 - 0.05 / 2.0
    worst_var = 0.0
    worst_thr = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 13))
        sigmas = rng.uniform(0.5, 2.0, n)
        sys = make_spp_system(rng, n=n, weights=1.0 / sigmas**2)
        comps = [from_gaussian(s) for s in sigmas]
        for k in range(n):
            sub = subset_solution(sys, k)
            coeffs = jackknife_residual(sys, sub, k).coefficients
            grid = linear_combination_pdf(coeffs, comps)
            closed_var = gaussian_jk_variance(sys, sub, k, sigmas[k])
            worst_var = max(worst_var,
                            abs(grid.variance() - closed_var) / closed_var)
            thr_grid = quantile(grid, level)
            thr_closed = float(np.sqrt(closed_var)) * 1.959963984540054
            worst_thr = max(worst_thr, abs(thr_grid - thr_closed) / thr_closed)
    elapsed = time.perf_counter() - started
    passed = worst_var < 1e-3 and worst_thr < 1e-3 and elapsed < 60.0
    announce(capsys, 2, "convolved t_k matches Gaussian closed form", passed,
             f"var err {worst_var:.2e}, thr err {worst_thr:.2e}, {elapsed:.1f}s")
    assert worst_var < 1e-3
    assert worst_thr < 1e-3
    assert elapsed < 60.0


def test_acceptance_3_bonferroni_bound(capsys):
    started = time.perf_counter()
    tau = 0.05
    epochs = 10_000
    cfg = ConstellationConfig()
    user = geodetic_to_ecef(48.0, 11.0)
    rng = np.random.default_rng(303)
    bank = UniformModelBank(GaussianOverbound(sigma=1.0))
    det_cfg = DetectorConfig(tau=tau)
    rejections = 0
    valid = 0
    n_max = 0
    step = 0
    while valid < epochs:
        t = step * 450.0
        step += 1
        sats = propagate_walker(cfg, t)
        vis, el = visible_satellites(user, sats, 5.0)
        if vis.size < 5:
            continue
        pos = sats[vis]
        rho = np.linalg.norm(pos - user, axis=1) + rng.standard_normal(vis.size)
        record = EpochRecord(epoch_s=t, sat_ids=tuple(int(v) for v in vis),
                             sat_positions=pos, measurements=rho,
                             elevations_deg=el)
        res = detect_epoch(record, bank, det_cfg)
        if res.decision == INSUFFICIENT:
            continue
        valid += 1
        n_max = max(n_max, len(res.sat_ids))
        rejections += res.decision == FAULT
    rate = rejections / valid
    lo_center = tau / n_max
    lo = lo_center - 3.0 * np.sqrt(lo_center * (1 - lo_center) / valid)
    hi = tau + 3.0 * np.sqrt(tau * (1 - tau) / valid)
    elapsed = time.perf_counter() - started
    passed = lo <= rate <= hi and elapsed < 120.0
    announce(capsys, 3, "fault-free rejection rate inside Bonferroni bounds",
             passed, f"rate {rate:.4f} in [{lo:.4f}, {hi:.4f}], {elapsed:.1f}s")
    assert lo <= rate <= hi
    assert elapsed < 120.0


def test_acceptance_4_detector_equivalence(capsys, pgo_nig, gaussian_ob_nig):
    started = time.perf_counter()
    epochs = 10_000
    # a 15 degree mask keeps 5-8 satellites per epoch, which bounds the
    # per-epoch convolution count while still exercising every subset
    records = simulate_records(epochs, seed=404, bias_every=2, mask=15.0)
    jk_grid_cfg = DetectorConfig(detector="jackknife",
                                 elevation_mask_deg=15.0)
    ss_grid_cfg = DetectorConfig(detector="solution-separation",
                                 elevation_mask_deg=15.0)
    pgo_models = None
    agree_grid = 0
    agree_closed = 0
    for record in records:
        built = build_epoch_system(record, jk_grid_cfg)
        assert built is not None
        sys, ids, elev = built
        pgo_models = [pgo_nig] * len(ids)
        jk = jackknife_detect(sys, pgo_models, jk_grid_cfg)
        ss = ss_detect(sys, pgo_models, ss_grid_cfg)
        agree_grid += jk.decision == ss.decision
        gauss_models = [gaussian_ob_nig] * len(ids)
        jk_c = jackknife_detect(sys, gauss_models, jk_grid_cfg)
        ss_c = ss_detect(sys, gauss_models, ss_grid_cfg)
        agree_closed += jk_c.decision == ss_c.decision
    frac_grid = agree_grid / epochs
    frac_closed = agree_closed / epochs
    elapsed = time.perf_counter() - started
    passed = frac_grid >= 0.999 and frac_closed == 1.0 and elapsed < 600.0
    announce(capsys, 4, "jackknife and solution separation agree", passed,
             f"PGO grid {frac_grid:.4f}, Gaussian closed {frac_closed:.4f}, "
             f"{elapsed:.0f}s")
    assert frac_grid >= 0.999
    assert frac_closed == 1.0
    assert elapsed < 600.0


def test_acceptance_5_worldwide_detection_rates(capsys):
    started = time.perf_counter()
    cfg = WorldSimConfig(grid_spacing_deg=30.0, epoch_step_s=1800.0,
                         epoch_count=48, error=NigError(0.65), bias_m=10.0,
                         tau=0.05, detectors=("jackknife",),
                         overbounds=("gaussian", "pgo"), seed=505,
                         calibration_samples=400_000)
    result = run_world_sim(cfg)
    pgo_median = result.rates[("jackknife", "pgo")].median_rate()
    go_median = result.rates[("jackknife", "gaussian")].median_rate()
    elapsed = time.perf_counter() - started
    passed = (pgo_median >= 0.95 and go_median <= 0.90
              and pgo_median - go_median >= 0.05 and elapsed < 900.0)
    announce(capsys, 5, "worldwide detection rates (desk scale)", passed,
             f"PGO median {pgo_median:.3f}, Gaussian median {go_median:.3f}, "
             f"{elapsed:.0f}s")
    assert pgo_median >= 0.95
    assert go_median <= 0.90
    assert pgo_median - go_median >= 0.05
    assert elapsed < 900.0


def test_acceptance_6_overbound_sharpness(capsys, nig_values, gaussian_ob_nig,
                                          pgo_nig):
    started = time.perf_counter()
    var_ok = pgo_nig.variance < gaussian_ob_nig.variance
    x = float(np.quantile(nig_values, 1e-3))
    pgo_val = float(pgo_cdf(x, pgo_nig.params))
    gauss_val = float(ndtr(x / gaussian_ob_nig.sigma))
    sandwich = 1e-3 <= pgo_val <= gauss_val
    elapsed = time.perf_counter() - started
    passed = var_ok and sandwich and elapsed < 120.0
    announce(capsys, 6, "PGO sharper than Gaussian overbound yet conservative",
             passed, f"var {pgo_nig.variance:.3f} < {gaussian_ob_nig.variance:.3f}, "
             f"cdf@1e-3 {pgo_val:.2e} in [1e-3, {gauss_val:.2e}], {elapsed:.0f}s")
    assert var_ok
    assert sandwich
    assert elapsed < 120.0


def test_acceptance_7_timing_ratio(capsys):
    started = time.perf_counter()
    cfg = BenchConfig(epoch_count=200, seed=707, calibration_samples=200_000)
    result = bench_detectors(cfg)
    ratio = result.median_ratio
    jk_max = float(np.max(result.jk_seconds))
    elapsed = time.perf_counter() - started
    passed = ratio >= 2.0 and jk_max < 0.5 and elapsed < 300.0
    announce(capsys, 7, "solution-separation cost over jackknife", passed,
             f"median ratio {ratio:.2f}, jk max {jk_max * 1e3:.1f}ms, "
             f"{elapsed:.0f}s")
    assert ratio >= 2.0
    assert jk_max < 0.5
    assert elapsed < 300.0


def test_acceptance_8_replay_latency_ordering(capsys):
    started = time.perf_counter()
    rng = np.random.default_rng(808)
    n_fit = 240_000
    elevations = rng.uniform(15.0, 75.0, n_fit)
    residuals = nig_sample(NigParams(0.65), n_fit, 809)
    pgo_bank = fit_binned_bank(residuals, elevations, method="pgo")
    go_bank = fit_binned_bank(residuals, elevations, method="gaussian")

    scen_cfg = ScenarioGenConfig(epoch_count=60, epoch_step_s=30.0,
                                 fault_start_index=25, fault_end_index=55,
                                 seed=810, error=NigError(0.65))
    records, meta = gen_scenario(scen_cfg)

    # probe the PGO thresholds on the last clean epoch to size the bias
    probe = detect_epoch(records[scen_cfg.fault_start_index], pgo_bank,
                         DetectorConfig())
    pgo_threshold = float(np.nanmax(probe.thresholds))
    meta_big = {**meta, "fault": {**meta["fault"],
                                  "bias_m": 3.5 * pgo_threshold}}
    delays = {}
    for name, bank in (("pgo", pgo_bank), ("gaussian", go_bank)):
        scenario = scenario_from_meta(records, bank, meta_big)
        delays[name] = run_replay(scenario, DetectorConfig()).first_detection_delay_s
    one_epoch = delays["pgo"] == scen_cfg.epoch_step_s
    ordered = delays["pgo"] <= delays["gaussian"]

    meta_mid = {**meta, "fault": {**meta["fault"], "bias_m": 10.0}}
    delays_mid = {}
    for name, bank in (("pgo", pgo_bank), ("gaussian", go_bank)):
        scenario = scenario_from_meta(records, bank, meta_mid)
        result = run_replay(scenario, DetectorConfig())
        delays_mid[name] = (result.first_detection_delay_s
                            if result.first_detection_delay_s is not None
                            else np.inf)
    ordered_mid = delays_mid["pgo"] <= delays_mid["gaussian"]
    elapsed = time.perf_counter() - started
    passed = one_epoch and ordered and ordered_mid and elapsed < 60.0
    announce(capsys, 8, "replay first-detection latency ordering", passed,
             f"PGO delay {delays['pgo']}s at 3.5x threshold, moderate-bias "
             f"delays pgo {delays_mid['pgo']}s <= gaussian "
             f"{delays_mid['gaussian']}s, {elapsed:.0f}s")
    assert one_epoch
    assert ordered
    assert ordered_mid
    assert elapsed < 60.0


def test_acceptance_9_numerical_kernels(capsys, nig_values):
    started = time.perf_counter()
    xs = np.geomspace(1e-3, 50.0, 400)
    bessel_err = max(abs(bessel_k1(float(x)) - bessel_k1_oracle(float(x)))
                     / bessel_k1_oracle(float(x)) for x in xs)

    s = np.sort(nig_values)
    cdf = nig_cdf_oracle(0.65)(s)
    n = s.size
    ranks = np.arange(1, n + 1)
    ks = float(max(np.max(ranks / n - cdf), np.max(cdf - (ranks - 1) / n)))

    f = from_gaussian(1.0, n=GRID_N)
    g = convolve(f, f)
    probe = np.linspace(-8.0, 8.0, 4001)
    conv_err = float(np.max(np.abs(g.cdf_at(probe) - ndtr(probe / np.sqrt(2.0)))))
    elapsed = time.perf_counter() - started
    passed = (bessel_err < 1e-10 and ks < 0.002 and conv_err < 1e-6
              and elapsed < 120.0)
    announce(capsys, 9, "numerical kernels", passed,
             f"bessel {bessel_err:.2e}, KS {ks:.2e}, conv {conv_err:.2e}, "
             f"{elapsed:.0f}s")
    assert bessel_err < 1e-10
    assert ks < 0.002
    assert conv_err < 1e-6
    assert elapsed < 120.0
