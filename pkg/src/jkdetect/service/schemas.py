"""Pydantic request/response models for the detection service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class SatelliteObs(BaseModel):
    sat_id: int
    x_m: float
    y_m: float
    z_m: float
    pseudorange_m: float
    elevation_deg: float = Field(ge=-90.0, le=90.0)


class EpochPayload(BaseModel):
    epoch_s: float
    satellites: list[SatelliteObs] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [s.sat_id for s in self.satellites]
        if len(ids) != len(set(ids)):
            raise ValueError("satellite ids must be unique within an epoch")
        return self


class GaussianModelPayload(BaseModel):
    kind: Literal["gaussian"] = "gaussian"
    sigma: float = Field(gt=0.0)


class PgoModelPayload(BaseModel):
    kind: Literal["pgo"] = "pgo"
    p1: float = Field(gt=0.0, lt=1.0)
    sigma1: float = Field(gt=0.0)
    sigma2: float = Field(gt=0.0)
    k: float = Field(ge=0.0)
    c: float
    x_rp: float = Field(gt=0.0)


ModelPayload = GaussianModelPayload | PgoModelPayload


class BinPayload(BaseModel):
    elev_lo: float
    elev_hi: float
    model: ModelPayload


class BankPayload(BaseModel):
    binned: bool = False
    model: ModelPayload | None = None
    bins: list[BinPayload] | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if self.binned and not self.bins:
            raise ValueError("binned bank needs bins")
        if not self.binned and self.model is None:
            raise ValueError("uniform bank needs a model")
        return self


class DetectRequest(BaseModel):
    epoch: EpochPayload
    bank: BankPayload
    tau: float = Field(default=0.05, gt=0.0, lt=1.0)
    detector: Literal["jackknife", "solution-separation"] = "jackknife"
    elevation_mask_deg: float = 5.0
    force_grid: bool = False


class DetectResponse(BaseModel):
    epoch_s: float | None
    decision: str
    statistics: list | None
    thresholds: list | None
    flagged: list[int]
    skipped: list[int]
    sat_ids: list[int] | None
    threshold_walltime_s: float


class FitRequest(BaseModel):
    values: list[float] = Field(min_length=100)
    method: Literal["gaussian", "pgo"] = "pgo"
    binned: bool = False
    elevations_deg: list[float] | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _elevations_present(self):
        if self.binned and (self.elevations_deg is None
                            or len(self.elevations_deg) != len(self.values)):
            raise ValueError("binned fits need one elevation per value")
        return self


class FitResponse(BaseModel):
    bank: BankPayload
    sample_count: int
    sample_std: float


class FaultPayload(BaseModel):
    sat_id: int
    start_s: float
    end_s: float
    bias_m: float


class ReplayRequest(BaseModel):
    epochs: list[EpochPayload] = Field(min_length=1)
    bank: BankPayload
    tau: float = Field(default=0.05, gt=0.0, lt=1.0)
    detector: Literal["jackknife", "solution-separation"] = "jackknife"
    elevation_mask_deg: float = 5.0
    fault: FaultPayload | None = None


class TimelineEntry(BaseModel):
    epoch_s: float
    state: int
    decision: str


class ReplayResponse(BaseModel):
    timeline: list[TimelineEntry]
    first_detection_delay_s: float | None


class ScenarioRequest(BaseModel):
    user_lat_deg: float = 45.0
    user_lon_deg: float = 10.0
    epoch_step_s: float = Field(default=30.0, gt=0.0)
    epoch_count: int = Field(default=120, ge=1)
    seed: int = 0
    fault_start_index: int = 40
    fault_end_index: int = 90
    fault_bias_m: float = 10.0
    nig_delta0: float = Field(default=0.65, gt=0.0)
    elevation_mask_deg: float = 5.0


class ScenarioResponse(BaseModel):
    csv_text: str
    meta: dict


class HealthResponse(BaseModel):
    status: str
    version: str
