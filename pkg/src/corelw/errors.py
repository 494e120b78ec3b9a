"""Exception hierarchy shared by all modules.

Each class carries a short machine-readable ``code`` and a process exit
status used by the command line front end.
"""


class CorelError(Exception):
    code = "internal_error"
    exit_status = 1


class ConfigError(CorelError):
    code = "config_error"
    exit_status = 2


class LoadError(CorelError):
    code = "load_error"
    exit_status = 3


class ValidationError(CorelError):
    code = "validation_error"
    exit_status = 4


class TrainingError(CorelError):
    code = "training_error"
    exit_status = 5


class UndefinedKappaError(CorelError):
    """Kappa is 0/0: every true and predicted label is the same level."""

    code = "undefined_kappa"
    exit_status = 6
