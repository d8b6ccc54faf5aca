"""Desk-scale 3D gaze toolkit: geometric gaze labeling, capture
simulation, quantile-regression gaze models with uncertainty, domain
adaptation and evaluation utilities."""

from . import (  # noqa: F401
    acquisition,
    adapt,
    autodiff,
    checkpoint,
    errors,
    evaluation,
    geometry,
    losses,
    models,
    simulator,
    training,
)

__version__ = "0.1.0"
