"""Exception hierarchy.

The CLI maps ``InputError`` to exit code 2 and ``CalibrationError`` to 3;
anything else escaping a command is an internal failure (exit 1).
"""


class EngineError(Exception):
    """Base class for all engine errors."""


class InputError(EngineError):
    pass


class CalibrationError(EngineError):
    pass


# -- ingest -----------------------------------------------------------------

class MalformedRecord(InputError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonMonotonicFrameIndex(InputError):
    def __init__(self, line: int, frame: int, previous: int):
        super().__init__(f"line {line}: frame {frame} after frame {previous}")
        self.line = line


class WrongKeypointCount(InputError):
    def __init__(self, line: int, count: int):
        super().__init__(f"line {line}: expected 26 keypoints, got {count}")
        self.line = line
        self.count = count


class ConfigError(InputError):
    pass


class MissingCalibration(ConfigError):
    pass


class DegenerateRoomPolygon(ConfigError):
    pass


# -- hierarchy ---------------------------------------------------------------

class HierarchyError(ConfigError):
    pass


class UnknownHierarchyNodeReference(HierarchyError):
    pass


class UnknownMetricBinding(UnknownHierarchyNodeReference):
    pass


class CycleDetected(HierarchyError):
    def __init__(self, cycle):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = list(cycle)


class OrphanNode(HierarchyError):
    pass


class NonPositiveWeight(HierarchyError):
    pass


# -- geometry / mapping ------------------------------------------------------

class DegenerateConfiguration(CalibrationError):
    pass


class RankDeficient(CalibrationError):
    pass


class CalibrationToleranceExceeded(CalibrationError):
    pass


class PointAtInfinity(EngineError):
    pass


class NoHistory(EngineError):
    pass


class CoincidentPoints(EngineError):
    pass


class NoEars(EngineError):
    pass


class OriginOutsideRoom(EngineError):
    pass


# -- metrics / synthetic -----------------------------------------------------

class MissingAssignment(ConfigError):
    pass


class WaypointOutsideRoom(InputError):
    pass
