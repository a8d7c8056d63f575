"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class PufLabError(Exception):
    code = "error"
    exit_code = 1


class ConfigurationError(PufLabError, ValueError):
    code = "config_error"
    exit_code = 3


class LayoutError(PufLabError, ValueError):
    code = "layout_error"
    exit_code = 3


class CapacityError(LayoutError):
    code = "capacity_error"


class ConsistencyError(PufLabError, ValueError):
    code = "consistency_error"
    exit_code = 3


class InputError(PufLabError, ValueError):
    code = "input_error"
    exit_code = 3


class NotFoundError(PufLabError, LookupError):
    code = "not_found"
    exit_code = 4


class ProtocolError(PufLabError):
    code = "protocol_error"
    exit_code = 5


class DepletionError(PufLabError):
    code = "depleted"
    exit_code = 6


class EnrollmentError(PufLabError):
    code = "enrollment_failed"
    exit_code = 7
