"""Exception hierarchy. Every domain error derives from KyleBackError."""


class KyleBackError(Exception):
    pass


class InvalidRule(KyleBackError, ValueError):
    pass


class InvalidStrategy(KyleBackError, ValueError):
    pass


class InvalidModel(KyleBackError, ValueError):
    pass


class InvalidGrid(KyleBackError, ValueError):
    pass


class SingularDrift(KyleBackError, FloatingPointError):
    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class GridMismatch(KyleBackError, ValueError):
    pass


class OutOfRange(KyleBackError, ValueError):
    pass


class FilterDegenerate(KyleBackError, FloatingPointError):
    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class IncompleteBundle(KyleBackError, ValueError):
    pass


class EstimateUnreliable(KyleBackError, RuntimeError):
    pass


class PerturbationInadmissible(KyleBackError, ValueError):
    pass


class NoSolution(KyleBackError, ValueError):
    pass


class NoRoot(KyleBackError, ValueError):
    pass


class DivergentWealth(KyleBackError, ValueError):
    pass


class ConfigError(KyleBackError, ValueError):
    pass


class IoError(KyleBackError, OSError):
    pass


class DegenerateCalibration(UserWarning):
    pass


class NegativeVarianceWarning(UserWarning):
    pass


__all__ = ["KyleBackError", "InvalidRule", "InvalidStrategy", "InvalidModel", "InvalidGrid", "SingularDrift", "GridMismatch", "OutOfRange", "FilterDegenerate", "IncompleteBundle", "EstimateUnreliable", "PerturbationInadmissible", "NoSolution", "NoRoot", "DivergentWealth", "ConfigError", "IoError", "DegenerateCalibration", "NegativeVarianceWarning"]
