"""
Label Super Resolution Lab.

Trains high-resolution segmentation networks from low-resolution block labels
using count-statistics losses, on synthetic data with known ground truth.
"""
__version__ = "0.3.0"
TOOL_NAME = "lsrlab"
