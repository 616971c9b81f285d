"""Exception hierarchy. CLI exit codes: config/spec errors map to 2,
training errors to 3, I/O errors to 4."""


class DriftGuardError(Exception):
    pass


class FormatError(DriftGuardError):
    """Malformed file container (bad magic, header, payload length)."""


class DataError(DriftGuardError):
    """Dataset invariant violation (non-finite values, duplicate ids, ...)."""


class CapacityError(DataError):
    """Not enough rows to satisfy a sampling request."""


class SpecError(DriftGuardError):
    """Invalid synthetic-shift spec or training config."""


class ConfigError(SpecError):
    pass


class TrainingError(DriftGuardError):
    """Runtime failure inside a training run."""


class EmptyNegativePool(DriftGuardError):
    """Contrastive alignment was asked to run with zero negatives."""


class ClusteringError(DriftGuardError):
    pass


class UndefinedMetricError(DriftGuardError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""
