"""Exception types shared across the package."""


class SuiteError(Exception):
    """Base class for all domain errors raised by this package."""


class CycleDetected(SuiteError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(self.cycle))


class UnknownJob(SuiteError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown job: {name!r}")


class UnknownJobInEdge(SuiteError):
    def __init__(self, name, edge):
        self.name = name
        self.edge = edge
        super().__init__(f"edge {edge} references unknown job {name!r}")


class RoleEnergyMismatch(SuiteError):
    pass


class ModelInvalid(SuiteError):
    """Raised by ensure_valid() when a validation report contains errors."""

    def __init__(self, report):
        self.report = report
        lines = "; ".join(i.message for i in report.errors)
        super().__init__(f"invalid suite model: {lines}")


class DegenerateTotal(SuiteError):
    pass


class DegeneratePath(SuiteError):
    pass


class InvalidScenario(SuiteError):
    pass


class InfeasibleInstance(SuiteError):
    def __init__(self, instance_id, demand, available):
        self.instance_id = instance_id
        super().__init__(
            f"instance {instance_id} demands {demand} nodes, cluster has {available}"
        )


class FormatError(SuiteError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path or '<input>'}:{line}" if line is not None else str(path or "<input>")
        super().__init__(f"{where}: {message}")


class MissingKey(SuiteError):
    def __init__(self, key, path=None):
        self.key = key
        where = f"{path}: " if path else ""
        super().__init__(f"{where}missing mandatory key {key!r}")


class ModeMismatch(SuiteError):
    pass


class JobNameMismatch(SuiteError):
    pass


class DuplicateSource(SuiteError):
    pass


class SchemaError(SuiteError):
    pass


class NegativeValue(SuiteError):
    pass


class MissingProfile(SuiteError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"no unified profile for job {name!r}")


class InvalidScale(SuiteError):
    pass


class JobFailed(SuiteError):
    def __init__(self, failed_ids):
        self.failed_ids = list(failed_ids)
        super().__init__(f"synthetic jobs failed: {self.failed_ids}")


class WorkdirUnwritable(SuiteError):
    def __init__(self, path, reason):
        self.path = path
        super().__init__(f"working directory {path} is not writable: {reason}")
