"""Exception types shared across the toolkit."""


class GazekitError(Exception):
    """Base class for all toolkit errors."""


class DegenerateEyePosition(GazekitError):
    """Eye position lies on the vertical axis through the camera origin."""


class CoincidentTargetAndEye(GazekitError):
    """Target and eye positions coincide; gaze direction undefined."""


class RayAboveHorizon(GazekitError):
    """A body ray expected to hit the ground never meets the ground plane."""


class NoBodyRay(GazekitError):
    """Detection carries neither a feet ray nor a hip ray."""


class ConfigError(GazekitError):
    """Invalid or inconsistent configuration."""


class TooFewSubjects(GazekitError):
    """Not enough distinct subjects to build disjoint splits."""


class ShapeMismatch(GazekitError):
    """Array shape does not match the model contract."""


class DropoutDisabled(GazekitError):
    """MC-dropout requested on a model with dropout_rate == 0."""


class EmptyDataset(GazekitError):
    """Training or evaluation requested on an empty dataset."""


class EmptyBatch(GazekitError):
    """A loss was evaluated on an empty batch."""


class LengthMismatch(GazekitError):
    """Paired prediction/ground-truth lists differ in length."""


class TooFewSamples(GazekitError):
    """Statistic needs more samples than were provided."""


class MissingSigma(GazekitError):
    """Coverage requested on predictions without an uncertainty estimate."""


class DegeneratePlane(GazekitError):
    """Attention plane normal is (near) zero."""


class NoConvergence(GazekitError):
    """Iterative solver failed to reach tolerance."""
