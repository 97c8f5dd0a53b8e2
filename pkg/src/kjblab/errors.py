"""Exception types shared across the lab."""


class LabError(Exception):
    """Base class; ``code`` is the machine-readable name used in reports."""

    code = "LabError"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class GridMismatch(LabError, ValueError):
    code = "GridMismatch"


class NotKahler(LabError):
    code = "NotKahler"

    def __init__(self, index, eigenvalue):
        self.index = tuple(int(i) for i in index)
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"metric not positive at grid point {self.index}: eigenvalue {self.eigenvalue:.6g}")

    def to_dict(self):
        d = super().to_dict()
        d.update(index=list(self.index), eigenvalue=self.eigenvalue)
        return d


class NotApplicable(LabError):
    code = "NotApplicable"


class NotCritical(LabError):
    code = "NotCritical"


class DegenerateConstant(LabError):
    code = "DegenerateConstant"


class NotElliptic(LabError):
    code = "NotElliptic"

    def __init__(self, margin, index=None):
        self.margin = float(margin)
        self.index = None if index is None else tuple(int(i) for i in index)
        super().__init__(f"flow operator not elliptic: margin {self.margin:.6g} at {self.index}")

    def to_dict(self):
        d = super().to_dict()
        d.update(margin=self.margin, index=None if self.index is None else list(self.index))
        return d


class StepRejected(LabError):
    code = "StepRejected"


class Diverged(LabError):
    code = "Diverged"

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NotGeodesic(LabError):
    code = "NotGeodesic"


class PositivityLoss(LabError):
    code = "PositivityLoss"

    def __init__(self, node, cause=None):
        self.node = int(node)
        msg = f"interior node {self.node} left the Kähler cone"
        if cause is not None:
            msg += f" ({cause})"
        super().__init__(msg)

    def to_dict(self):
        d = super().to_dict()
        d["node"] = self.node
        return d


class NoConvergence(LabError):
    code = "NoConvergence"


class ConfigError(LabError):
    code = "ConfigError"
