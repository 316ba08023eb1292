"""Seismic earth pressure on embedded cantilever walls.

Pseudo-static coefficient models alongside a plane-strain elasto-plastic
finite-element pipeline (staged construction, modal estimate, nonlinear
time integration and pressure back-calculation).
"""

__version__ = "0.1.0"
