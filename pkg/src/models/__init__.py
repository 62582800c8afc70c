"""
Regression fits and mediation tests
"""
