"""Exception hierarchy.

Each top-level family carries the process exit code the CLI maps it to.
"""


class SinksimError(Exception):
    exit_code = 1


class ConfigError(SinksimError, ValueError):
    """Invalid configuration; ``field`` names the offending entry when known."""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InvalidMaterialError(ConfigError):
    pass


class SettleTimeoutError(SinksimError):
    exit_code = 3


class StabilityError(SinksimError):
    """Numerical failure during time stepping."""

    exit_code = 4

    def __init__(self, message, step=None, time=None, phase=None):
        self.step = step
        self.time = time
        self.phase = phase
        parts = [message]
        if phase is not None:
            parts.append(f"phase={phase}")
        if step is not None:
            parts.append(f"step={step}")
        if time is not None:
            parts.append(f"t={time:.6g}s")
        super().__init__(" ".join(parts))


class IntegrationFault(StabilityError):
    pass


class DomainEscapeError(StabilityError):
    pass


class TunnelingError(StabilityError):
    pass


class ModelFault(StabilityError):
    pass


class AnalysisError(SinksimError):
    exit_code = 5


class FitError(AnalysisError):
    pass


class ComparisonError(AnalysisError):
    pass
