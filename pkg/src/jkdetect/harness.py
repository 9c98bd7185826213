"""Experiment drivers: worldwide fault-injection simulation, synthetic
clock-anomaly replay, and the detector timing benchmark.

Everything here is deterministic given the configured seed: per-location
random streams are spawned from one master seed, and the same sampled
measurement vector is fed to every (detector, overbound) pair within an
epoch so their decisions are directly comparable.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .detector import (FAULT, INSUFFICIENT, JACKKNIFE, SOLUTION_SEPARATION,
                       DetectorConfig, detect_epoch)
from .dist import NigParams, nig_sample
from .errors import ScenarioParseError
from .geometry import (ConstellationConfig, EpochRecord, geodetic_to_ecef,
                       grid_latlon, propagate_walker, user_grid,
                       visible_satellites)
from .overbound import (EmpiricalSample, UniformModelBank, fit_gaussian_overbound,
                        fit_pgo, model_from_dict, model_to_dict)

SCENARIO_HEADER = ["epoch_s", "sat_id", "sat_x_m", "sat_y_m", "sat_z_m",
                   "pseudorange_m", "elevation_deg"]


@dataclass(frozen=True)
class NigError:
    """Heavy-tailed nominal error model."""

    delta0: float = 0.65

    def sample(self, rng, size: int) -> np.ndarray:
        return nig_sample(NigParams(self.delta0), size, rng)

    def to_dict(self) -> dict:
        return {"kind": "nig", "delta0": self.delta0}


@dataclass(frozen=True)
class GaussianError:
    """Gaussian nominal error model."""

    sigma: float = 1.0

    def sample(self, rng, size: int) -> np.ndarray:
        return rng.normal(0.0, self.sigma, size)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "sigma": self.sigma}


def error_model_from_dict(d: dict):
    kind = d.get("kind", "nig")
    if kind == "nig":
        return NigError(delta0=float(d.get("delta0", 0.65)))
    if kind == "gaussian":
        return GaussianError(sigma=float(d.get("sigma", 1.0)))
    raise ValueError(f"unknown error model {kind!r}")


def inject_fault(y, k: int, bias: float) -> np.ndarray:
    """Copy of y with ``bias`` added to element k."""
    out = np.array(y, dtype=float, copy=True)
    out[k] += bias
    return out


@dataclass(frozen=True)
class WorldSimConfig:
    """Worldwide simulation settings; desk-scale defaults.

    The full-scale run is 10 degree spacing with 288 epochs every 300 s;
    the default subsample (30 degrees, 48 epochs every 1800 s) keeps the
    same one-day span at roughly a hundredth of the cost.
    """

    grid_spacing_deg: float = 30.0
    epoch_step_s: float = 1800.0
    epoch_count: int = 48
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    error: NigError | GaussianError = field(default_factory=NigError)
    bias_m: float = 10.0
    tau: float = 0.05
    detectors: tuple = (JACKKNIFE,)
    overbounds: tuple = ("gaussian", "pgo")
    seed: int = 0
    elevation_mask_deg: float = 5.0
    calibration_samples: int = 400_000

    def __post_init__(self):
        if self.epoch_count < 1:
            raise ValueError("need at least one epoch")
        if self.bias_m < 0.0:
            raise ValueError("bias must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSimConfig":
        kwargs = dict(d)
        if "constellation" in kwargs:
            kwargs["constellation"] = ConstellationConfig(**kwargs["constellation"])
        if "error" in kwargs:
            kwargs["error"] = error_model_from_dict(kwargs["error"])
        for key in ("detectors", "overbounds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class DetectionRateGrid:
    """Per-location detection bookkeeping for one (detector, overbound) pair."""

    lat_deg: np.ndarray
    lon_deg: np.ndarray
    valid: np.ndarray
    detected: np.ndarray

    @property
    def rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.valid > 0, self.detected / self.valid, np.nan)

    def median_rate(self) -> float:
        rates = self.rate
        return float(np.nanmedian(rates))

    def to_rows(self):
        rows = []
        for lat, lon, v, d, r in zip(self.lat_deg, self.lon_deg, self.valid,
                                     self.detected, self.rate):
            rows.append([float(lat), float(lon), int(v), int(d),
                         float(r) if np.isfinite(r) else ""])
        return rows


def fit_overbound_models(cfg: WorldSimConfig, seed_seq=None) -> dict:
    """Calibrate the configured overbounds against the error model."""
    seed_seq = seed_seq or np.random.SeedSequence(cfg.seed).spawn(2)[0]
    rng = np.random.default_rng(seed_seq)
    sample = EmpiricalSample(cfg.error.sample(rng, cfg.calibration_samples))
    models = {}
    for entry in cfg.overbounds:
        if isinstance(entry, dict):
            label = entry.get("label", entry["kind"])
            models[label] = model_from_dict(entry)
        elif entry == "gaussian":
            models["gaussian"] = fit_gaussian_overbound(sample)
        elif entry == "pgo":
            models["pgo"] = fit_pgo(sample)
        else:
            raise ValueError(f"unknown overbound entry {entry!r}")
    return models


@dataclass
class WorldSimResult:
    config: WorldSimConfig
    models: dict
    rates: dict  # (detector, overbound label) -> DetectionRateGrid
    runtime_s: float

    def summary(self) -> dict:
        pairs = {}
        for (det, ob), grid in self.rates.items():
            rates = grid.rate
            finite = rates[np.isfinite(rates)]
            pairs[f"{det}/{ob}"] = {
                "median_rate": float(np.median(finite)) if finite.size else None,
                "mean_rate": float(np.mean(finite)) if finite.size else None,
                "min_rate": float(np.min(finite)) if finite.size else None,
                "max_rate": float(np.max(finite)) if finite.size else None,
                "locations": int(rates.size),
            }
        return {
            "overbounds": {name: model_to_dict(m) for name, m in self.models.items()},
            "pairs": pairs,
            "runtime_s": self.runtime_s,
        }

    def write_outputs(self, outdir) -> None:
        from pathlib import Path

        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        for (det, ob), grid in self.rates.items():
            path = out / f"rates_{det.replace('-', '_')}_{ob}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["lat_deg", "lon_deg", "valid_epochs",
                                 "detected_epochs", "rate"])
                writer.writerows(grid.to_rows())
        with open(out / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def run_world_sim(cfg: WorldSimConfig) -> WorldSimResult:
    """Worldwide single-fault detection simulation.

    For every grid location and epoch: propagate the constellation, apply
    the elevation mask, require five satellites, add sampled errors to the
    true ranges, add the configured bias to one uniformly chosen
    measurement, and run every configured (detector, overbound) pair on
    the identical measurement vector.
    """
    started = time.perf_counter()
    calib_seed, sim_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    models = fit_overbound_models(cfg, calib_seed)

    locations = user_grid(cfg.grid_spacing_deg)
    latlon = grid_latlon(cfg.grid_spacing_deg)
    n_loc = locations.shape[0]
    pairs = [(det, ob) for det in cfg.detectors for ob in models]
    counters = {pair: np.zeros(n_loc, dtype=int) for pair in pairs}
    valid = np.zeros(n_loc, dtype=int)
    det_cfgs = {det: DetectorConfig(tau=cfg.tau, detector=det,
                                    elevation_mask_deg=cfg.elevation_mask_deg)
                for det in cfg.detectors}

    loc_seeds = sim_seed.spawn(n_loc)
    for loc_idx in range(n_loc):
        user = locations[loc_idx]
        rng = np.random.default_rng(loc_seeds[loc_idx])
        for step in range(cfg.epoch_count):
            t = step * cfg.epoch_step_s
            sats = propagate_walker(cfg.constellation, t)
            vis_idx, elev = visible_satellites(user, sats, cfg.elevation_mask_deg)
            if vis_idx.size < 5:
                continue
            valid[loc_idx] += 1
            sat_pos = sats[vis_idx]
            ranges = np.linalg.norm(sat_pos - user, axis=1)
            errors = cfg.error.sample(rng, vis_idx.size)
            fault_at = int(rng.integers(vis_idx.size))
            rho = ranges + errors
            if cfg.bias_m > 0.0:
                rho = inject_fault(rho, fault_at, cfg.bias_m)
            record = EpochRecord(epoch_s=t, sat_ids=tuple(int(i) for i in vis_idx),
                                 sat_positions=sat_pos, measurements=rho,
                                 elevations_deg=elev, truth_position=user)
            for det, ob in pairs:
                res = detect_epoch(record, UniformModelBank(models[ob]), det_cfgs[det])
                if res.decision == FAULT:
                    counters[(det, ob)][loc_idx] += 1

    rates = {pair: DetectionRateGrid(lat_deg=latlon[:, 0], lon_deg=latlon[:, 1],
                                     valid=valid.copy(), detected=counters[pair])
             for pair in pairs}
    return WorldSimResult(config=cfg, models=models, rates=rates,
                          runtime_s=time.perf_counter() - started)


@dataclass(frozen=True)
class ReplayScenario:
    """Epoch records plus the model bank and fault profile to replay."""

    records: tuple
    bank: object
    fault_sat_id: int | None = None
    fault_start_s: float | None = None
    fault_end_s: float | None = None
    fault_bias_m: float = 0.0

    def __post_init__(self):
        records = tuple(sorted(self.records, key=lambda r: r.epoch_s))
        object.__setattr__(self, "records", records)
        if self.fault_start_s is not None and records:
            lo, hi = records[0].epoch_s, records[-1].epoch_s
            if not (lo <= self.fault_start_s <= hi):
                raise ValueError("fault window starts outside the epoch range")


@dataclass
class ReplayResult:
    epochs: np.ndarray
    states: np.ndarray  # 1 = fault claimed, 0 = not claimed
    decisions: list
    first_detection_delay_s: float | None

    def timeline_rows(self):
        return [[float(t), int(s), d] for t, s, d in
                zip(self.epochs, self.states, self.decisions)]


def _apply_fault(record: EpochRecord, scenario: ReplayScenario) -> EpochRecord:
    # the window start marks the anomaly onset, taken to fall just after
    # that epoch's observation: the first faulted epoch is the next one, so
    # an immediate detection reads as a one-epoch delay
    if scenario.fault_sat_id is None or scenario.fault_start_s is None:
        return record
    end = scenario.fault_end_s if scenario.fault_end_s is not None else np.inf
    if not scenario.fault_start_s < record.epoch_s <= end:
        return record
    if scenario.fault_sat_id not in record.sat_ids:
        return record
    idx = record.sat_ids.index(scenario.fault_sat_id)
    return replace(record,
                   measurements=inject_fault(record.measurements, idx,
                                             scenario.fault_bias_m))


def run_replay(scenario: ReplayScenario, cfg: DetectorConfig) -> ReplayResult:
    """Detect across a scenario and report the first-detection delay.

    The step bias is added to the configured satellite inside the fault
    window before detection. The delay is the first epoch at or after the
    window start where a fault is claimed, minus the window start.
    """
    epochs, states, decisions = [], [], []
    for record in scenario.records:
        res = detect_epoch(_apply_fault(record, scenario), scenario.bank, cfg)
        epochs.append(record.epoch_s)
        states.append(1 if res.decision == FAULT else 0)
        decisions.append(res.decision)
    epochs = np.asarray(epochs)
    states = np.asarray(states, dtype=int)
    delay = None
    if scenario.fault_start_s is not None:
        after = (epochs >= scenario.fault_start_s) & (states == 1)
        if np.any(after):
            delay = float(epochs[after][0] - scenario.fault_start_s)
    return ReplayResult(epochs=epochs, states=states, decisions=decisions,
                        first_detection_delay_s=delay)


def write_scenario_rows(records, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(SCENARIO_HEADER)
    for rec in records:
        for i, sid in enumerate(rec.sat_ids):
            writer.writerow([rec.epoch_s, sid,
                             rec.sat_positions[i, 0], rec.sat_positions[i, 1],
                             rec.sat_positions[i, 2], rec.measurements[i],
                             rec.elevations_deg[i]])


def save_scenario_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        write_scenario_rows(records, fh)


def load_scenario_csv(path) -> list:
    """Parse scenario records, reporting the 1-based line of any bad row."""
    grouped: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SCENARIO_HEADER:
            raise ScenarioParseError(1, f"expected header {','.join(SCENARIO_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SCENARIO_HEADER):
                raise ScenarioParseError(lineno, f"expected {len(SCENARIO_HEADER)} fields")
            try:
                epoch = float(row[0])
                sid = int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ScenarioParseError(lineno, str(exc)) from None
            grouped.setdefault(epoch, []).append((sid, vals))
    records = []
    for epoch in sorted(grouped):
        sats = grouped[epoch]
        records.append(EpochRecord(
            epoch_s=epoch,
            sat_ids=tuple(s for s, _ in sats),
            sat_positions=np.array([v[:3] for _, v in sats]),
            measurements=np.array([v[3] for _, v in sats]),
            elevations_deg=np.array([v[4] for _, v in sats]),
        ))
    return records


@dataclass(frozen=True)
class ScenarioGenConfig:
    """Synthetic replay scenario settings."""

    user_lat_deg: float = 45.0
    user_lon_deg: float = 10.0
    epoch_step_s: float = 30.0
    epoch_count: int = 120
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    error: NigError | GaussianError = field(default_factory=NigError)
    elevation_mask_deg: float = 5.0
    seed: int = 0
    fault_sat_id: int | None = None  # None picks the steadiest visible satellite
    fault_start_index: int = 40
    fault_end_index: int = 90
    fault_bias_m: float = 10.0


def gen_scenario(cfg: ScenarioGenConfig):
    """Synthesize clean replay records plus fault metadata.

    Measurements carry nominal errors only; the fault profile travels in
    the metadata and is injected at replay time, so one scenario can be
    replayed under different overbounds with identical noise.
    """
    user = geodetic_to_ecef(cfg.user_lat_deg, cfg.user_lon_deg)
    rng = np.random.default_rng(cfg.seed)
    records = []
    window_ids = []
    for step in range(cfg.epoch_count):
        t = step * cfg.epoch_step_s
        sats = propagate_walker(cfg.constellation, t)
        vis_idx, elev = visible_satellites(user, sats, cfg.elevation_mask_deg)
        sat_pos = sats[vis_idx]
        ranges = np.linalg.norm(sat_pos - user, axis=1)
        rho = ranges + cfg.error.sample(rng, vis_idx.size)
        records.append(EpochRecord(epoch_s=t, sat_ids=tuple(int(i) for i in vis_idx),
                                   sat_positions=sat_pos, measurements=rho,
                                   elevations_deg=elev, truth_position=user))
        if cfg.fault_start_index <= step <= cfg.fault_end_index:
            window_ids.append(set(records[-1].sat_ids))

    fault_sat = cfg.fault_sat_id
    if fault_sat is None:
        always_visible = set.intersection(*window_ids) if window_ids else set()
        if not always_visible:
            raise ValueError("no satellite stays visible through the fault window")
        fault_sat = sorted(always_visible)[0]
    meta = {
        "fault": {
            "sat_id": int(fault_sat),
            "start_s": cfg.fault_start_index * cfg.epoch_step_s,
            "end_s": cfg.fault_end_index * cfg.epoch_step_s,
            "bias_m": cfg.fault_bias_m,
        },
        "user": {"lat_deg": cfg.user_lat_deg, "lon_deg": cfg.user_lon_deg},
        "seed": cfg.seed,
        "error": cfg.error.to_dict(),
        "elevation_mask_deg": cfg.elevation_mask_deg,
    }
    return records, meta


def scenario_from_meta(records, bank, meta: dict | None) -> ReplayScenario:
    fault = (meta or {}).get("fault") or {}
    return ReplayScenario(records=tuple(records), bank=bank,
                          fault_sat_id=fault.get("sat_id"),
                          fault_start_s=fault.get("start_s"),
                          fault_end_s=fault.get("end_s"),
                          fault_bias_m=fault.get("bias_m", 0.0))


@dataclass(frozen=True)
class BenchConfig:
    """Timing benchmark settings; single-threaded, caching disabled."""

    epoch_count: int = 200
    user_lat_deg: float = 45.0
    user_lon_deg: float = 10.0
    epoch_step_s: float = 300.0
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    error: NigError = field(default_factory=NigError)
    tau: float = 0.05
    elevation_mask_deg: float = 5.0
    seed: int = 0
    calibration_samples: int = 200_000

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        kwargs = dict(d)
        if "constellation" in kwargs:
            kwargs["constellation"] = ConstellationConfig(**kwargs["constellation"])
        if "error" in kwargs:
            kwargs["error"] = error_model_from_dict(kwargs["error"])
        return cls(**kwargs)


@dataclass
class BenchResult:
    epochs: np.ndarray
    jk_seconds: np.ndarray
    ss_seconds: np.ndarray

    @property
    def median_ratio(self) -> float:
        valid = self.jk_seconds > 0
        return float(np.median(self.ss_seconds[valid] / self.jk_seconds[valid]))

    def summary(self) -> dict:
        return {
            "epochs": int(self.epochs.size),
            "median_ratio_ss_over_jk": self.median_ratio,
            "jk_median_s": float(np.median(self.jk_seconds)),
            "jk_max_s": float(np.max(self.jk_seconds)),
            "ss_median_s": float(np.median(self.ss_seconds)),
            "ss_max_s": float(np.max(self.ss_seconds)),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch_s", "jackknife_s", "solution_separation_s"])
            for t, a, b in zip(self.epochs, self.jk_seconds, self.ss_seconds):
                writer.writerow([float(t), float(a), float(b)])


def bench_detectors(cfg: BenchConfig) -> BenchResult:
    """Measure per-epoch threshold-computation time for both detectors.

    Uses gridded PGO models so thresholds require convolutions, disables
    the base-density cache, and reuses the identical measurement vector
    for both detectors within each epoch.
    """
    calib_seed, sim_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    sample = EmpiricalSample(cfg.error.sample(np.random.default_rng(calib_seed),
                                              cfg.calibration_samples))
    bank = UniformModelBank(fit_pgo(sample))
    user = geodetic_to_ecef(cfg.user_lat_deg, cfg.user_lon_deg)
    rng = np.random.default_rng(sim_seed)

    jk_cfg = DetectorConfig(tau=cfg.tau, detector=JACKKNIFE,
                            elevation_mask_deg=cfg.elevation_mask_deg,
                            grid_cache=False)
    ss_cfg = DetectorConfig(tau=cfg.tau, detector=SOLUTION_SEPARATION,
                            elevation_mask_deg=cfg.elevation_mask_deg,
                            grid_cache=False)

    epochs, jk_times, ss_times = [], [], []
    step = 0
    while len(epochs) < cfg.epoch_count:
        t = step * cfg.epoch_step_s
        step += 1
        sats = propagate_walker(cfg.constellation, t)
        vis_idx, elev = visible_satellites(user, sats, cfg.elevation_mask_deg)
        if vis_idx.size < 5:
            continue
        sat_pos = sats[vis_idx]
        ranges = np.linalg.norm(sat_pos - user, axis=1)
        rho = ranges + cfg.error.sample(rng, vis_idx.size)
        record = EpochRecord(epoch_s=t, sat_ids=tuple(int(i) for i in vis_idx),
                             sat_positions=sat_pos, measurements=rho,
                             elevations_deg=elev, truth_position=user)
        jk_res = detect_epoch(record, bank, jk_cfg)
        ss_res = detect_epoch(record, bank, ss_cfg)
        if jk_res.decision == INSUFFICIENT or ss_res.decision == INSUFFICIENT:
            continue
        epochs.append(t)
        jk_times.append(jk_res.threshold_walltime_s)
        ss_times.append(ss_res.threshold_walltime_s)

    return BenchResult(epochs=np.asarray(epochs),
                       jk_seconds=np.asarray(jk_times),
                       ss_seconds=np.asarray(ss_times))
