"""Simulation laboratory for randomly reconfigured FPGA arbiter PUFs."""

__version__ = "0.1.0"
