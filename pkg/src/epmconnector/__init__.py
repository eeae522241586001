"""Models of a multifunctional EPM connector: magnetics, holding force, docking, fluidics, coupling and compliance."""

from . import compliance, coupling, docking, fluidics, force, magnetics

__all__ = ["compliance", "coupling", "docking", "fluidics", "force", "magnetics"]
