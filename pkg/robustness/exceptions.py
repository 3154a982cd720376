class RobustnessError(Exception):
    """Base class for every error raised by the robustness app"""


class MalformedRankingError(RobustnessError, ValueError):
    """Rankings that cannot be compared (length mismatch, duplicates, misaligned lists)"""


class DomainError(RobustnessError, ValueError):
    """Numeric argument outside the domain of a closed form"""


class DatasetError(RobustnessError, ValueError):
    """Unreadable or unusable interaction data"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PerturbationError(RobustnessError, ValueError):
    """A removal that would empty a training sequence"""


class ModelError(RobustnessError, ValueError):
    """Training or scoring failure of a recommender"""


class DegenerateTestError(RobustnessError, ValueError):
    """Statistical test without variance to work with"""


class ConfigurationError(RobustnessError, ValueError):
    """Invalid experiment configuration"""


class OutputError(RobustnessError, OSError):
    """Results that cannot be written"""
