"""A full measurement campaign: calibrate, bench, filter, isolate, characterise."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analysis import FilterPolicy, OpDependencyGraph, filter_confidence, isolate_all
from .device import SimulatedCard, load_profile
from .documents import CaseRecord, ResultsDocument
from .errors import MesureError, SampleSizeOutOfRange, ZeroVariance
from .harness import CalibrationPolicy, LoopSize, run_suite
from .stats import detect_peaks, shapiro_wilk
from .suite import load_suite
from .transport import TcpChannel, VirtualChannel, parse_address

logger = logging.getLogger(__name__)


class ConfigError(MesureError, ValueError):
    pass


@dataclass
class CampaignConfig:
    device: str
    suite: str
    output_dir: str = "results"
    seed: int | None = None
    ratio: float = 0.02
    min_duration_ns: int = 1_000_000_000
    probe_reps: int = 10
    confirm_reps: int = 30
    repetitions: int = 30
    n_sigma: float = 2.0
    min_retained: int = 2
    loop_p2: int | None = None
    cases: list[str] | None = None

    def __post_init__(self):
        try:
            self.policy
            self.filter_policy
            if self.loop_p2 is not None:
                LoopSize(self.loop_p2)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def policy(self) -> CalibrationPolicy:
        return CalibrationPolicy(self.ratio, self.min_duration_ns, self.probe_reps, self.confirm_reps)

    @property
    def filter_policy(self) -> FilterPolicy:
        return FilterPolicy(self.n_sigma, self.min_retained)

    @property
    def is_remote(self) -> bool:
        return not Path(self.device).exists() and _looks_like_address(self.device)

    def snapshot(self) -> dict:
        snap = dataclasses.asdict(self)
        del snap["output_dir"]  # where the document is written, not how it was measured
        return snap


def _looks_like_address(text):
    try:
        parse_address(text)
    except ValueError:
        return False
    return True


CONFIG_FIELDS = {f.name for f in dataclasses.fields(CampaignConfig)}


def load_config(path=None, overrides=None) -> CampaignConfig:
    """Read a JSON config; ``overrides`` (already parsed flag values) win over the file.

    Relative paths in the file are resolved against the file's directory.
    """
    values = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            values = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(values) - CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        base = path.parent
        for key in ("suite", "output_dir"):
            if key in values and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
        dev = values.get("device")
        if isinstance(dev, str) and not Path(dev).is_absolute() and (base / dev).exists():
            values["device"] = str(base / dev)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    missing = {"device", "suite"} - set(values)
    if missing:
        raise ConfigError(f"missing required settings: {sorted(missing)}")
    try:
        config = CampaignConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if not Path(config.suite).is_file():
        raise ConfigError(f"suite file {config.suite} does not exist")
    if not config.is_remote and not Path(config.device).is_file():
        raise ConfigError(f"device {config.device!r} is neither a profile file nor host:port")
    return config


def open_channel(config: CampaignConfig, suite=None):
    """Virtual channel on an in-process card, or TCP channel to a running server."""
    if config.is_remote:
        return TcpChannel(config.device), config.device
    profile = load_profile(Path(config.device))
    if config.seed is not None:
        profile = profile.with_seed(config.seed)
    suite = suite if suite is not None else load_suite(config.suite)
    return VirtualChannel(SimulatedCard(profile, suite)), profile.name


def _normality(mset):
    try:
        return shapiro_wilk(mset.durations)
    except (ZeroVariance, SampleSizeOutOfRange):
        return None


def _peaks(mset):
    return detect_peaks(mset.durations) if len(mset) >= 10 else None


def run_campaign(config: CampaignConfig) -> ResultsDocument:
    suite = load_suite(config.suite)
    channel, device_name = open_channel(config, suite)
    with channel:
        started = channel.now()
        loop = LoopSize(config.loop_p2) if config.loop_p2 is not None else None
        results = run_suite(channel, suite, config.cases, config.policy, config.repetitions, loop)
        finished = channel.now()
    graph = OpDependencyGraph({cid: list(suite[cid].auxiliaries) for cid in results})
    isolated = isolate_all(results, graph, config.filter_policy)
    cases = {}
    for cid, cm in results.items():
        cases[cid] = CaseRecord(
            cm.loop_size, cm.case, cm.reference,
            filter_confidence(cm.case, config.filter_policy).stats,
            filter_confidence(cm.reference, config.filter_policy).stats,
            {"case": _normality(cm.case), "reference": _normality(cm.reference)},
            {"case": _peaks(cm.case), "reference": _peaks(cm.reference)},
        )
    metadata = {
        "tool_version": __version__,
        "config": config.snapshot(),
        "device": device_name,
        "clock": channel.kind,
        "started_ns": started,
        "finished_ns": finished,
    }
    return ResultsDocument(metadata, cases, isolated)
