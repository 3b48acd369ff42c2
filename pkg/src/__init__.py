"""
Bang-bang control of the stationary Navier-Stokes equations with
Taylor-Hood finite elements
"""

__version__ = "1.0.0"
