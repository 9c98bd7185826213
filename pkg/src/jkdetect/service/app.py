"""FastAPI service exposing detection, overbound fitting, replay, and
scenario generation over HTTP.

The long-running batch drivers (worldwide simulation, timing benchmark)
stay on the CLI; this service covers the per-epoch and per-dataset
operations a monitoring client would call.
"""

from __future__ import annotations

import io

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..detector import DetectorConfig, detect_epoch, result_to_dict
from ..errors import JkDetectError
from ..geometry import EpochRecord
from ..harness import (NigError, ReplayScenario, ScenarioGenConfig, gen_scenario,
                       run_replay, write_scenario_rows)
from ..overbound import (EmpiricalSample, UniformModelBank, bank_from_dict,
                         bank_to_dict, fit_binned_bank, fit_gaussian_overbound,
                         fit_pgo)
from .schemas import (BankPayload, DetectRequest, DetectResponse, FitRequest,
                      FitResponse, HealthResponse, ReplayRequest, ReplayResponse,
                      ScenarioRequest, ScenarioResponse, TimelineEntry)


def _record_from_payload(epoch) -> EpochRecord:
    sats = epoch.satellites
    return EpochRecord(
        epoch_s=epoch.epoch_s,
        sat_ids=tuple(s.sat_id for s in sats),
        sat_positions=np.array([[s.x_m, s.y_m, s.z_m] for s in sats]),
        measurements=np.array([s.pseudorange_m for s in sats]),
        elevations_deg=np.array([s.elevation_deg for s in sats]),
    )


def _bank_from_payload(payload: BankPayload):
    return bank_from_dict(payload.model_dump())


def _bank_to_payload(bank) -> BankPayload:
    return BankPayload.model_validate(bank_to_dict(bank))


def create_app() -> FastAPI:
    app = FastAPI(title="jkdetect", version=__version__)

    @app.exception_handler(JkDetectError)
    async def _domain_error(request, exc: JkDetectError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/detect", response_model=DetectResponse)
    def detect(req: DetectRequest):
        record = _record_from_payload(req.epoch)
        cfg = DetectorConfig(tau=req.tau, detector=req.detector,
                             elevation_mask_deg=req.elevation_mask_deg,
                             force_grid=req.force_grid)
        try:
            result = detect_epoch(record, _bank_from_payload(req.bank), cfg)
        except JkDetectError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return DetectResponse(**result_to_dict(result))

    @app.post("/overbound/fit", response_model=FitResponse)
    def fit(req: FitRequest):
        values = np.asarray(req.values, dtype=float)
        try:
            if req.binned:
                bank = fit_binned_bank(values, np.asarray(req.elevations_deg),
                                       method=req.method, seed=req.seed)
            else:
                sample = EmpiricalSample(values)
                if req.method == "gaussian":
                    bank = UniformModelBank(fit_gaussian_overbound(sample))
                else:
                    bank = UniformModelBank(fit_pgo(sample, seed=req.seed))
        except (JkDetectError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sample_std = float(values.std())
        return FitResponse(bank=_bank_to_payload(bank),
                           sample_count=int(values.size), sample_std=sample_std)

    @app.post("/replay", response_model=ReplayResponse)
    def replay(req: ReplayRequest):
        records = [_record_from_payload(e) for e in req.epochs]
        cfg = DetectorConfig(tau=req.tau, detector=req.detector,
                             elevation_mask_deg=req.elevation_mask_deg)
        fault = req.fault
        scenario = ReplayScenario(
            records=tuple(records), bank=_bank_from_payload(req.bank),
            fault_sat_id=fault.sat_id if fault else None,
            fault_start_s=fault.start_s if fault else None,
            fault_end_s=fault.end_s if fault else None,
            fault_bias_m=fault.bias_m if fault else 0.0)
        try:
            result = run_replay(scenario, cfg)
        except JkDetectError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        timeline = [TimelineEntry(epoch_s=t, state=s, decision=d)
                    for t, s, d in result.timeline_rows()]
        return ReplayResponse(timeline=timeline,
                              first_detection_delay_s=result.first_detection_delay_s)

    @app.post("/scenario/generate", response_model=ScenarioResponse)
    def scenario(req: ScenarioRequest):
        cfg = ScenarioGenConfig(
            user_lat_deg=req.user_lat_deg, user_lon_deg=req.user_lon_deg,
            epoch_step_s=req.epoch_step_s, epoch_count=req.epoch_count,
            error=NigError(delta0=req.nig_delta0), seed=req.seed,
            elevation_mask_deg=req.elevation_mask_deg,
            fault_start_index=req.fault_start_index,
            fault_end_index=req.fault_end_index,
            fault_bias_m=req.fault_bias_m)
        try:
            records, meta = gen_scenario(cfg)
        except (JkDetectError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        buf = io.StringIO()
        write_scenario_rows(records, buf)
        return ScenarioResponse(csv_text=buf.getvalue(), meta=meta)

    return app


app = create_app()
