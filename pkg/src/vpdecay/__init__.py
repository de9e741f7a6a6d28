"""Numerical study of dispersive decay for Vlasov-Poisson type systems."""
__version__ = "0.1.0"

from .config import RunConfig, parse_config  # noqa: E402
from .grid import PhaseField, PhaseGrid, SpatialField, build_grid  # noqa: E402
from .transport import TransportModel, velocity_map  # noqa: E402

__all__ = ["__version__", "PhaseField", "PhaseGrid", "SpatialField", "build_grid", "TransportModel",
           "velocity_map", "RunConfig", "parse_config"]
