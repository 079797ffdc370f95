"""Harness errors"""

from ..simcluster import InvalidScenario


class HarnessError(Exception):
    """Base class for harness errors"""


class MismatchedScenarios(HarnessError):
    pass


class RunNotFound(HarnessError):
    pass


__all__ = ["HarnessError", "InvalidScenario", "MismatchedScenarios", "RunNotFound"]
