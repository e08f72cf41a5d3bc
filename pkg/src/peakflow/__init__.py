"""Traffic-camera vehicle counting and peak-hour difference analysis.

The pipeline: poll camera endpoints concurrently (ingest), discard slow
downloads, batch the survivors through a detection backend (detect), persist
per-frame counts (store), and reduce the stored series to before/after
peak-hour differences (analysis). A simulated fleet (camsim) exercises the
whole path with pixel-encoded ground truth and no ML dependency.
"""

from .analysis import (
    AnalysisConfig,
    DEFAULT_WINDOW_SIZE,
    DEFAULT_WINDOWS,
    PartitionedMeanTable,
    PeakValue,
    PhdReport,
    PhdRow,
    SmoothedPoint,
    SmoothedSeries,
    partitioned_means,
    peak,
    phd,
    process_traffic_data,
    report_csv_text,
    rolling_mean,
    write_means_csv,
    write_report_csv,
)
from .core import (
    ConfigurationError,
    DEFAULT_TIMEZONE,
    DayType,
    Observation,
    ObservationSeries,
    Period,
    SourceId,
    SplitConfig,
    TimeWindow,
    VEHICLE_CLASSES,
    VehicleClass,
    day_type_of,
    default_split,
    from_epoch_ms,
    hour_of,
    period_of,
    to_epoch_ms,
    utc_now,
)
from .detect import (
    BackendError,
    BackendInfo,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DetectionResult,
    LetterboxMeta,
    StubBackend,
    SubprocessBackend,
    detect_batch,
    letterbox,
    stub_detect,
)
from .ingest import (
    CameraEndpoint,
    CollectorConfig,
    CollectorStats,
    Discarded,
    Frame,
    FrameBatch,
    FrameCollector,
    StatsSnapshot,
    fetch_frame,
    form_batches,
    load_camera_file,
    run_collector,
)
from .store import AppendOutcome, DetectionStore, StorageError

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "AppendOutcome",
    "BackendError",
    "BackendInfo",
    "CameraEndpoint",
    "CollectorConfig",
    "CollectorStats",
    "ConfigurationError",
    "DEFAULT_CONFIDENCE_THRESHOLD",
    "DEFAULT_TIMEZONE",
    "DEFAULT_WINDOWS",
    "DEFAULT_WINDOW_SIZE",
    "DayType",
    "DetectionResult",
    "DetectionStore",
    "Discarded",
    "Frame",
    "FrameBatch",
    "FrameCollector",
    "LetterboxMeta",
    "Observation",
    "ObservationSeries",
    "PartitionedMeanTable",
    "PeakValue",
    "Period",
    "PhdReport",
    "PhdRow",
    "SmoothedPoint",
    "SmoothedSeries",
    "SourceId",
    "SplitConfig",
    "StatsSnapshot",
    "StorageError",
    "StubBackend",
    "SubprocessBackend",
    "TimeWindow",
    "VEHICLE_CLASSES",
    "VehicleClass",
    "day_type_of",
    "default_split",
    "detect_batch",
    "fetch_frame",
    "form_batches",
    "from_epoch_ms",
    "hour_of",
    "letterbox",
    "load_camera_file",
    "partitioned_means",
    "peak",
    "period_of",
    "phd",
    "process_traffic_data",
    "report_csv_text",
    "rolling_mean",
    "run_collector",
    "stub_detect",
    "to_epoch_ms",
    "utc_now",
    "write_means_csv",
    "write_report_csv",
]
