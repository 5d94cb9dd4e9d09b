"""
OLAT Relight: reflectance-field relighting from one-light-at-a-time captures
"""

__version__ = "0.1.0"
