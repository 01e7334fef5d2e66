"""Exception hierarchy shared by every stage of the pipeline."""


class MesureError(Exception):
    """Base class for all errors raised by this package."""


# statistics
class EmptySet(MesureError, ValueError):
    pass


class InsufficientSamples(MesureError, ValueError):
    pass


class ZeroVariance(MesureError, ValueError):
    pass


class SampleSizeOutOfRange(MesureError, ValueError):
    pass


# device simulator
class ProfileParseError(MesureError, ValueError):
    def __init__(self, reason, position=None):
        self.reason = reason
        self.position = position
        where = f" at {position}" if position is not None else ""
        super().__init__(f"profile parse error{where}: {reason}")


class ProfileInvariantError(MesureError, ValueError):
    pass


# transport
class DataTooLong(MesureError, ValueError):
    pass


class MalformedApdu(MesureError, ValueError):
    pass


class ChannelClosed(MesureError, ConnectionError):
    pass


class ProtocolViolation(MesureError, ConnectionError):
    pass


class BindError(MesureError, OSError):
    pass


# harness
class SuiteError(MesureError, ValueError):
    pass


class CalibrationFailed(MesureError, RuntimeError):
    def __init__(self, reason, case_id=None):
        self.reason = reason
        self.case_id = case_id
        prefix = f"[{case_id}] " if case_id else ""
        super().__init__(f"{prefix}calibration failed: {reason}")


class DeviceError(MesureError, RuntimeError):
    def __init__(self, sw, case_id=None):
        self.sw = sw
        self.case_id = case_id
        prefix = f"[{case_id}] " if case_id else ""
        super().__init__(f"{prefix}device returned status word 0x{sw:04X}")


# analysis
class OverFiltered(MesureError, ValueError):
    pass


class LoopSizeMismatch(MesureError, ValueError):
    pass


class CycleDetected(MesureError, ValueError):
    pass


class MissingMeasurement(MesureError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ZeroReference(MesureError, ZeroDivisionError):
    pass


class NegativeIsolation(UserWarning):
    """Isolated mean came out negative: noise dominates or the auxiliary chain is wrong."""


# profiler
class TraceParseError(MesureError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnbalancedTrace(MesureError, ValueError):
    pass


class NoTraces(MesureError, ValueError):
    pass


class ZeroUsage(MesureError, ValueError):
    pass


class MissingFeature(MesureError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NonPositiveMean(MesureError, ValueError):
    pass


class NonPositiveInput(MesureError, ValueError):
    pass


class FeatureWithoutMark(MesureError, KeyError):
    def __init__(self, feature, domain):
        self.feature = feature
        self.domain = domain
        super().__init__(f"feature {feature!r} has weight in domain {domain!r} but no mark")

    def __str__(self):
        return self.args[0]
