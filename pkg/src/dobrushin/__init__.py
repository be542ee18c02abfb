"""Low-temperature 3D Ising interfaces under Dobrushin boundary conditions."""
__version__ = "0.1.0"
