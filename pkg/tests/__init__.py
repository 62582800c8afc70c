"""
Tests package for medboot
"""

__version__ = "1.0.0"
