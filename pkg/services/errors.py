"""
Errors - exception hierarchy shared by the model, the runtime lock and the CLI
"""

from typing import Optional


class RwCheckError(Exception):
    """Base class for every error raised by rwcheck"""


class ModelError(RwCheckError):
    """The model reached a state that well-formed programs never reach (explorer bug)"""


class ConstructionError(RwCheckError):
    """A program, system configuration or search request is invalid"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ReplayError(RwCheckError):
    """A trace does not reproduce its recorded digests"""

    def __init__(self, index: int, expected: str, actual: Optional[str]):
        self.index = index
        self.expected = expected
        self.actual = actual
        super().__init__(f"step {index}: expected digest {expected}, got {actual}")


class ScenarioError(RwCheckError):
    """A scenario file failed validation"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class LockUsageError(RwCheckError):
    """The runtime lock was used outside its contract"""


class ExclusionViolation(RwCheckError):
    """The exclusion gauge saw a writer together with another holder"""

    def __init__(self, readers: int, writers: int):
        self.readers = readers
        self.writers = writers
        super().__init__(f"exclusion violated: readers={readers} writers={writers}")
