"""Exception hierarchy shared by the pipeline stages.

Each class carries the process exit code the CLI should return.
"""


class DrivevolError(Exception):
    exit_code = 1


class ConfigError(DrivevolError):
    exit_code = 2


class DataError(DrivevolError):
    exit_code = 3


class GeometryError(DataError):
    pass


class ConvergenceError(DrivevolError):
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
