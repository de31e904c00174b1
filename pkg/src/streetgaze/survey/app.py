"""HTTP face of the survey service.

POST /sessions            demographics -> session
GET  /sessions/{id}/pair  next exposure-balanced assignment with image URLs
POST /sessions/{id}/choice  record a "looks safer" choice (exactly once)
POST /sessions/{id}/gaze  batched raw gaze samples
GET  /export              admin-token gated zip of all logs

Configuration comes from one YAML file with environment overrides
(STREETGAZE_PORT, STREETGAZE_MANIFEST, STREETGAZE_SEED,
STREETGAZE_PAIRS_PER_SESSION, STREETGAZE_ADMIN_TOKEN, STREETGAZE_DATA_DIR,
STREETGAZE_IMAGE_DIR).
"""

from __future__ import annotations

import csv
import io
import os
import zipfile
from pathlib import Path
from typing import Optional

import yaml
from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field

from ..errors import ValidationError
from .core import (
    BatchTooLargeError,
    ConflictError,
    NoMorePairsError,
    NotFoundError,
    StudyConfig,
    SurveyService,
)


class ServiceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    port: int = 8000
    manifest_path: str
    data_dir: str = "study_data"
    image_dir: Optional[str] = None
    ui_dir: Optional[str] = None
    seed: int = 0
    pairs_per_session: int = 10
    scheduler: str = "balanced"
    pair_strata: str = "any"
    admin_token: str = ""
    export_dir: str = "exports"


_ENV_OVERRIDES = {
    "STREETGAZE_PORT": ("port", int),
    "STREETGAZE_MANIFEST": ("manifest_path", str),
    "STREETGAZE_SEED": ("seed", int),
    "STREETGAZE_PAIRS_PER_SESSION": ("pairs_per_session", int),
    "STREETGAZE_ADMIN_TOKEN": ("admin_token", str),
    "STREETGAZE_DATA_DIR": ("data_dir", str),
    "STREETGAZE_IMAGE_DIR": ("image_dir", str),
}


def load_service_config(path) -> ServiceConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    for env, (key, cast) in _ENV_OVERRIDES.items():
        if env in os.environ:
            raw[key] = cast(os.environ[env])
    return ServiceConfig(**raw)


def load_manifest(path) -> tuple[list[str], dict[str, str]]:
    """Image manifest CSV: image_id[,stratum]."""
    images: list[str] = []
    strata: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id":
            raise ValidationError(f"{path}: manifest must start with image_id column")
        for row in reader:
            if not row or not row[0].strip():
                continue
            images.append(row[0].strip())
            if len(row) > 1 and row[1].strip():
                strata[row[0].strip()] = row[1].strip()
    return images, strata


class DemographicsIn(BaseModel):
    model_config = ConfigDict(extra="forbid")  # anything identifying is rejected

    age_band: str
    gender: Optional[str] = Field(default=None, max_length=40)


class ChoiceIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pair_id: str
    chosen: str


class GazeSampleIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_ms: int
    x_px: float
    y_px: float
    valid: bool


class GazeBatchIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_id: str
    samples: list[GazeSampleIn]


def create_app(service: SurveyService, *, image_dir=None, ui_dir=None,
               admin_token: str = "", export_dir="exports") -> FastAPI:
    app = FastAPI(title="streetgaze survey")
    app.state.service = service

    def fail(exc) -> HTTPException:
        if isinstance(exc, NotFoundError):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, ConflictError):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, NoMorePairsError):
            return HTTPException(status_code=409, detail=f"no-more-pairs: {exc}")
        if isinstance(exc, BatchTooLargeError):
            return HTTPException(status_code=413, detail=str(exc))
        if isinstance(exc, ValidationError):
            return HTTPException(status_code=422, detail=str(exc))
        return HTTPException(status_code=500, detail=str(exc))

    @app.post("/sessions")
    def create_session(demographics: DemographicsIn):
        try:
            session = service.create_session(demographics.model_dump())
        except Exception as exc:
            raise fail(exc)
        return {
            "session_id": session.session_id,
            "pairs_per_session": service.config.pairs_per_session,
        }

    @app.get("/sessions/{session_id}/pair")
    def next_pair(session_id: str):
        try:
            pa = service.next_pair(session_id)
        except Exception as exc:
            raise fail(exc)
        session = service.sessions[session_id]
        return {
            "pair_id": pa.pair_id,
            "left_image": pa.left_image,
            "right_image": pa.right_image,
            "left_url": f"/images/{pa.left_image}",
            "right_url": f"/images/{pa.right_image}",
            "index": session.pairs_served,
            "total": service.config.pairs_per_session,
        }

    @app.post("/sessions/{session_id}/choice")
    def record_choice(session_id: str, choice: ChoiceIn):
        try:
            rec = service.record_choice(session_id, choice.pair_id, choice.chosen)
        except Exception as exc:
            raise fail(exc)
        return {
            "pair_id": rec.pair_id,
            "left": rec.left_image,
            "right": rec.right_image,
            "chosen": rec.chosen,
            "session_id": rec.session_id,
            "t_ms": rec.t_ms,
        }

    @app.post("/sessions/{session_id}/gaze")
    def record_gaze(session_id: str, batch: GazeBatchIn):
        try:
            accepted = service.record_gaze_batch(
                session_id, batch.image_id,
                [s.model_dump() for s in batch.samples],
            )
        except Exception as exc:
            raise fail(exc)
        return {"accepted": accepted}

    @app.get("/export")
    def export(x_admin_token: str = Header(default="")):
        if not admin_token or x_admin_token != admin_token:
            raise HTTPException(status_code=403, detail="admin token required")
        service.sweep_abandoned()
        dest = Path(export_dir)
        try:
            files = service.export_logs(dest)
        except IOError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            for rel in files:
                zf.write(dest / rel, arcname=rel)
        return Response(
            content=buf.getvalue(),
            media_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=study_export.zip"},
        )

    if image_dir:
        app.mount("/images", StaticFiles(directory=str(image_dir)), name="images")
    if ui_dir:
        app.mount("/app", StaticFiles(directory=str(ui_dir), html=True), name="app")

    return app


def build_from_config(config: ServiceConfig, clock=None) -> FastAPI:
    images, strata = load_manifest(config.manifest_path)
    study = StudyConfig(
        images=images,
        strata=strata,
        pairs_per_session=config.pairs_per_session,
        seed=config.seed,
        scheduler=config.scheduler,
        pair_strata=config.pair_strata,
    )
    service = SurveyService(study, config.data_dir, clock=clock)
    return create_app(
        service,
        image_dir=config.image_dir,
        ui_dir=config.ui_dir,
        admin_token=config.admin_token,
        export_dir=config.export_dir,
    )
