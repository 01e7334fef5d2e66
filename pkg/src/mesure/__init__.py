"""Benchmark harness for devices reachable only through a noisy request/response channel."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    ConfidenceFilter,
    EmptyLoopIsolator,
    FilterPolicy,
    IsolatedTime,
    OpDependencyGraph,
    filter_confidence,
    isolate_all,
    isolate_one,
    relative_deviation,
)
from .apdu import ApduCommand, ApduResponse, decode_command, encode_command  # noqa: E402
from .device import DeviceProfile, NoiseModel, SimulatedCard, load_profile, sample_noise  # noqa: E402
from .harness import BenchPlan, CalibrationPolicy, LoopSize, calibrate, run_bench, run_suite  # noqa: E402
from .profiler import (  # noqa: E402
    ReferenceMarker,
    UsageWeighter,
    aggregate_usage,
    build_reference,
    compute_mark,
    compute_weights,
    parse_trace,
    score,
)
from .stats import MeasurementSet, detect_peaks, estimate_step, mean, shapiro_wilk, std_dev  # noqa: E402
from .suite import Suite, TestCaseSpec, load_suite  # noqa: E402
from .transport import ApduServer, TcpChannel, VirtualChannel, exchange  # noqa: E402

__all__ = [
    "ApduCommand", "ApduResponse", "ApduServer", "BenchPlan", "CalibrationPolicy", "ConfidenceFilter",
    "DeviceProfile", "EmptyLoopIsolator", "FilterPolicy", "IsolatedTime", "LoopSize", "MeasurementSet",
    "NoiseModel", "OpDependencyGraph", "ReferenceMarker", "SimulatedCard", "Suite", "TcpChannel", "TestCaseSpec",
    "UsageWeighter", "VirtualChannel", "aggregate_usage", "build_reference", "calibrate", "compute_mark",
    "compute_weights", "decode_command", "detect_peaks", "encode_command", "estimate_step", "exchange",
    "filter_confidence", "isolate_all", "isolate_one", "load_profile", "load_suite", "mean", "parse_trace",
    "relative_deviation", "run_bench", "run_suite", "sample_noise", "score", "shapiro_wilk", "std_dev",
]
