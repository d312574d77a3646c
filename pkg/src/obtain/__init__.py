"""Causal real-time beat tracking (onset strength, tempo, cumulative beat
strength, dual-system peak picking) plus beat-tracking evaluation metrics."""

from ._accel import BACKEND
from .audio import AudioStream, FrameConfig, decode_wav, frame_stream, read_wav, write_wav
from .beat_detect import BeatDetector, BeatEvent, DetectorConfig, detect_peaks_lms
from .cbss import CbssBuffer, CbssConfig
from .metrics import EvalConfig, EvalReport, evaluate
from .oss import CompressionConfig, OssExtractor, SmootherConfig
from .pipeline import Pipeline, PipelineConfig, run_file, run_stream, track
from .tempo import TempoConfig, TempoEstimator

__version__ = "0.1.0"
