"""Optical-IRS assisted MIMO visible light communication toolkit.

Subpackages cover the pipeline end to end: scene geometry, Lambertian
channel synthesis, capacity bounds under peak/average intensity
constraints, binary element-alignment solvers, transmit intensity
allocation, and a sweep harness with a command line front end.
"""

__version__ = "0.1.0"

from . import align_opt, capacity, channel, geometry, harness, power_opt

__all__ = [
    "align_opt",
    "capacity",
    "channel",
    "geometry",
    "harness",
    "power_opt",
]
