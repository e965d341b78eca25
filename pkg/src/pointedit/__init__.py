"""Instruction-guided colored point cloud editing toolkit."""

__version__ = "0.1.0"
