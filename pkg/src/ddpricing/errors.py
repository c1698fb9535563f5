"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can surface
failures without parsing messages.
"""


class DDPError(Exception):
    code = "ddp_error"


class ConfigError(DDPError):
    """Raised when a configuration cannot be parsed or fails validation.

    ``violations`` holds every problem found, not only the first.
    """

    code = "config_error"

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class IngestionError(DDPError):
    code = "ingestion_error"


class InfeasibleStateError(DDPError):
    code = "infeasible_state"


class UnsupportedOperationError(DDPError):
    code = "unsupported_operation"


class ShapeError(DDPError, ValueError):
    code = "shape_error"


class DomainError(DDPError, ValueError):
    code = "domain_error"


class ConsistencyError(DDPError):
    code = "consistency_error"


class ParameterError(DDPError, ValueError):
    code = "parameter_error"
