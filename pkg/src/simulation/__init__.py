"""
Simulation data generators and Monte-Carlo studies
"""
