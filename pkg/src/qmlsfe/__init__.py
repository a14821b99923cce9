"""Quantum kernel SVMs and estimator QNNs on an exact statevector simulator.

Built around predicting stacking-fault energies of magnesium solutes from
three elemental descriptors (bulk modulus, atomic volume, electronegativity).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    IngestionError,
    MetricError,
    NumericError,
    QmlError,
    ShapeError,
    TrainingError,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "IngestionError",
    "MetricError",
    "NumericError",
    "QmlError",
    "ShapeError",
    "TrainingError",
]
