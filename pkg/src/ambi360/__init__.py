"""Sound source localization and first-order Ambisonics encoding for 360 video."""

__version__ = "0.1.0"

from .geometry import Projection, SphericalDirection  # noqa: E402
from .prediction import Model  # noqa: E402

__all__ = ["Model", "Projection", "SphericalDirection", "__version__"]
