from .core import (
    AGE_BANDS,
    BatchTooLargeError,
    ConflictError,
    NoMorePairsError,
    NotFoundError,
    PairAssignment,
    Session,
    StudyConfig,
    SurveyService,
)
from .app import ServiceConfig, build_from_config, create_app, load_manifest, load_service_config
from .store import EventLog

__all__ = [
    "AGE_BANDS",
    "BatchTooLargeError",
    "ConflictError",
    "EventLog",
    "NoMorePairsError",
    "NotFoundError",
    "PairAssignment",
    "ServiceConfig",
    "Session",
    "StudyConfig",
    "SurveyService",
    "build_from_config",
    "create_app",
    "load_manifest",
    "load_service_config",
]
