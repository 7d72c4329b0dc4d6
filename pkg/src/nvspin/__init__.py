"""nvspin: hyperfine analysis and spin dynamics of NV-13C systems."""

__version__ = "0.1.0"
