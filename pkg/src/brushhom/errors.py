"""Exception hierarchy shared by all modules."""


class BrushError(Exception):
    """Base class for every error raised by brushhom."""


class ConfigError(BrushError):
    pass


class GeometryError(BrushError):
    """Malformed geometry (e.g. a self-intersecting polygon)."""


class PlacementError(BrushError):
    """Teeth placements violating the brush assumptions."""


class MeshError(BrushError):
    pass


class AssemblyError(BrushError):
    pass


class NotSPDError(BrushError):
    """Matrix rejected by the SPD precondition checks or CG breakdown."""


class ConvergenceError(BrushError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class NotNicelyDecomposedError(BrushError):
    pass


class ContinuityError(BrushError):
    """Edge functions disagree at a joint of the tooth graph."""
