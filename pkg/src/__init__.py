"""
medboot: adaptive bootstrap tests for mediation effects
"""

__version__ = "1.0.0"
