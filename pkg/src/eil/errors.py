"""Exception hierarchy and process exit codes."""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3
EXIT_CORRUPTION = 4


class EilError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_STAGE


class ValidationError(EilError):
    """A config, argument, or precondition check failed before any work ran."""

    exit_code = EXIT_VALIDATION


class StageError(EilError):
    """A pipeline stage started but could not finish."""

    exit_code = EXIT_STAGE


class ArtifactCorruptionError(EilError):
    """A stored artifact does not match its recorded content hash."""

    exit_code = EXIT_CORRUPTION

    def __init__(self, path, expected, actual):
        super().__init__(
            f"artifact corrupted: {path} (expected sha256 {expected}, got {actual})"
        )
        self.path = str(path)
        self.expected = expected
        self.actual = actual


class AttackDivergedError(StageError):
    """A loss became non-finite during generator training."""

    def __init__(self, step, components):
        parts = ", ".join(f"{k}={v}" for k, v in components.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")
        self.step = step
        self.components = dict(components)
