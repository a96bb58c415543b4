"""Radar point-cloud fall detection: clustering, tracking, IMM features, threshold decision."""

from .clustering import ClusterConfig, GridDBSCAN
from .config import ConfigError, PipelineConfig
from .detector import DetectorConfig, FallDetector, FallEvent
from .frames import PointFrame, RadarPoint, SensorPose, parse_frame_stream, sensor_to_world
from .imm import ImmConfig, ImmFilter, ImmState
from .pipeline import FADE, run_pipeline
from .tracking import Tracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "ClusterConfig", "GridDBSCAN", "ConfigError", "PipelineConfig", "DetectorConfig",
    "FallDetector", "FallEvent", "PointFrame", "RadarPoint", "SensorPose", "parse_frame_stream",
    "sensor_to_world", "ImmConfig", "ImmFilter", "ImmState", "FADE", "run_pipeline", "Tracker",
    "TrackerConfig",
]
