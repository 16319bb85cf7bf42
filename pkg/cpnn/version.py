"""
Version of cpnn, also read by hatch when building.
"""

__version__ = "1.0.0"
VERSION = __version__.split(".")
