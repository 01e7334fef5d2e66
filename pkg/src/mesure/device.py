"""Simulated Java Card style device with a ground-truth latency table.

A run-phase APDU executes the case's run body ``L = P2**2`` times; the
device reports how long the exchange took, including the fixed exchange
overhead and one draw of channel noise.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .apdu import (
    PHASE_CLEANUP,
    PHASE_RUN,
    PHASE_SETUP,
    SW_INCORRECT_P1P2,
    SW_INS_NOT_SUPPORTED,
    SW_UNKNOWN,
    ApduCommand,
    ApduResponse,
)
from .errors import ProfileInvariantError, ProfileParseError
from .suite import Suite

logger = logging.getLogger(__name__)

NOISE_VARIANTS = ("none", "gaussian", "stepped")
_PROFILE_KEYS = {"name", "exchange_overhead_ns", "per_iteration_overhead_ns", "rng_seed", "op_latencies_ns", "noise"}
_NOISE_KEYS = {
    "none": {"variant"},
    "gaussian": {"variant", "sigma"},
    "stepped": {"variant", "step", "weights", "jitter_sigma"},
}


@dataclass(frozen=True)
class NoiseModel:
    variant: str = "none"
    sigma: float = 0.0
    step: float = 0.0
    weights: tuple[float, ...] = (1.0,)
    jitter_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.variant not in NOISE_VARIANTS:
            raise ProfileInvariantError(f"noise variant must be one of {NOISE_VARIANTS}, got {self.variant!r}")
        if not self.sigma >= 0 or not self.jitter_sigma >= 0:
            raise ProfileInvariantError("noise sigmas must be >= 0")
        if self.variant == "stepped":
            if not self.step > 0:
                raise ProfileInvariantError(f"stepped noise needs step > 0, got {self.step}")
            if not self.weights or any(w < 0 for w in self.weights):
                raise ProfileInvariantError("stepped weights must be a non-empty vector of non-negative numbers")
            if abs(math.fsum(self.weights) - 1.0) > 1e-12:
                raise ProfileInvariantError(f"stepped weights sum to {math.fsum(self.weights)!r}, not 1")

    @classmethod
    def gaussian(cls, sigma):
        return cls("gaussian", sigma=sigma)

    @classmethod
    def stepped(cls, step, weights, jitter_sigma=0.0):
        return cls("stepped", step=step, weights=tuple(weights), jitter_sigma=jitter_sigma)

    def to_dict(self) -> dict:
        if self.variant == "gaussian":
            return {"variant": "gaussian", "sigma": self.sigma}
        if self.variant == "stepped":
            return {"variant": "stepped", "step": self.step, "weights": list(self.weights),
                    "jitter_sigma": self.jitter_sigma}
        return {"variant": "none"}


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    op_latencies: dict[str, int]
    exchange_overhead: int
    per_iteration_overhead: int
    noise: NoiseModel = field(default_factory=NoiseModel)
    rng_seed: int = 0

    def __post_init__(self):
        for op, ns in self.op_latencies.items():
            if ns < 0:
                raise ProfileInvariantError(f"latency of {op!r} is negative ({ns} ns)")
        if self.exchange_overhead < 0 or self.per_iteration_overhead < 0:
            raise ProfileInvariantError("overheads must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ProfileInvariantError(f"rng_seed must be a 64-bit unsigned integer, got {self.rng_seed}")

    def with_noise(self, noise: NoiseModel) -> "DeviceProfile":
        return DeviceProfile(self.name, dict(self.op_latencies), self.exchange_overhead,
                             self.per_iteration_overhead, noise, self.rng_seed)

    def with_seed(self, seed: int) -> "DeviceProfile":
        return DeviceProfile(self.name, dict(self.op_latencies), self.exchange_overhead,
                             self.per_iteration_overhead, self.noise, seed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "exchange_overhead_ns": self.exchange_overhead,
            "per_iteration_overhead_ns": self.per_iteration_overhead,
            "rng_seed": self.rng_seed,
            "op_latencies_ns": dict(self.op_latencies),
            "noise": self.noise.to_dict(),
        }


def _require(doc, key, kind, where):
    if key not in doc:
        raise ProfileParseError(f"missing key {key!r}", where)
    value = doc[key]
    ok = isinstance(value, kind) and not (isinstance(value, bool) and kind is not bool)
    if not ok:
        raise ProfileParseError(f"{key!r} has type {type(value).__name__}", where)
    return value


def profile_from_dict(doc) -> DeviceProfile:
    if not isinstance(doc, dict):
        raise ProfileParseError("profile must be a JSON object", "$")
    unknown = set(doc) - _PROFILE_KEYS
    if unknown:
        raise ProfileParseError(f"unknown keys {sorted(unknown)}", "$")
    name = _require(doc, "name", str, "$")
    overhead = _require(doc, "exchange_overhead_ns", int, "$")
    per_iter = _require(doc, "per_iteration_overhead_ns", int, "$")
    seed = _require(doc, "rng_seed", int, "$")
    latencies = _require(doc, "op_latencies_ns", dict, "$")
    for op, ns in latencies.items():
        if isinstance(ns, bool) or not isinstance(ns, int):
            raise ProfileParseError(f"latency must be an integer, got {type(ns).__name__}", f"$.op_latencies_ns.{op}")
    noise_doc = _require(doc, "noise", dict, "$")
    variant = _require(noise_doc, "variant", str, "$.noise")
    if variant not in _NOISE_KEYS:
        raise ProfileParseError(f"unknown noise variant {variant!r}", "$.noise.variant")
    unknown = set(noise_doc) - _NOISE_KEYS[variant]
    if unknown:
        raise ProfileParseError(f"unknown keys {sorted(unknown)} for {variant} noise", "$.noise")
    params = {}
    for key in _NOISE_KEYS[variant] - {"variant"}:
        if key == "weights":
            weights = _require(noise_doc, key, list, "$.noise")
            if not all(isinstance(w, (int, float)) and not isinstance(w, bool) for w in weights):
                raise ProfileParseError("weights must be numbers", "$.noise.weights")
            params[key] = tuple(weights)
        else:
            params[key] = float(_require(noise_doc, key, (int, float), "$.noise"))
    noise = NoiseModel(variant, **params)
    return DeviceProfile(name, dict(latencies), overhead, per_iter, noise, seed)


def load_profile(source) -> DeviceProfile:
    """Load a profile from a path, a JSON string or an already parsed dict."""
    if isinstance(source, dict):
        return profile_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return profile_from_dict(doc)


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> float:
    """One draw of channel noise in nanoseconds (signed; the device clamps the total)."""
    if model.variant == "gaussian":
        return float(rng.normal(0.0, model.sigma)) if model.sigma > 0 else 0.0
    if model.variant == "stepped":
        multiple = int(rng.choice(len(model.weights), p=model.weights))
        jitter = float(rng.normal(0.0, model.jitter_sigma)) if model.jitter_sigma > 0 else 0.0
        return model.step * multiple + jitter
    return 0.0


def run_cost(profile: DeviceProfile, body) -> int:
    """Noise-free cost of one loop iteration executing ``body``."""
    return profile.per_iteration_overhead + sum(profile.op_latencies[op] for op in body)


class SimulatedCard:
    """A single-session device: exchanges are handled strictly one at a time."""

    def __init__(self, profile: DeviceProfile, suite: Suite):
        missing = sorted({op for case in suite for op in case.run_body} - set(profile.op_latencies))
        if missing:
            raise ProfileInvariantError(f"profile {profile.name!r} has no latency for {missing}")
        self.profile = profile
        self.suite = suite
        self.rng = np.random.default_rng(profile.rng_seed)
        self._costs = {case.ins: run_cost(profile, case.run_body) for case in suite}

    def handle_apdu(self, command: ApduCommand) -> tuple[ApduResponse, int]:
        overhead = self.profile.exchange_overhead
        try:
            if command.ins not in self._costs:
                return ApduResponse(sw=SW_INS_NOT_SUPPORTED), overhead
            if command.p1 in (PHASE_SETUP, PHASE_CLEANUP):
                return ApduResponse(), overhead
            if command.p1 != PHASE_RUN or command.p2 == 0:
                return ApduResponse(sw=SW_INCORRECT_P1P2), overhead
            loops = command.p2 * command.p2
            base = overhead + loops * self._costs[command.ins]
            noisy = base + sample_noise(self.profile.noise, self.rng)
            return ApduResponse(), max(0, round(noisy))
        except Exception:  # pragma: no cover - defensive, reported in-band
            logger.exception("internal fault handling %s", command)
            return ApduResponse(sw=SW_UNKNOWN), overhead


def handle_apdu(card: SimulatedCard, command: ApduCommand) -> tuple[ApduResponse, int]:
    return card.handle_apdu(command)
