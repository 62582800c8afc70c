"""
Dataset containers and CSV loading
"""
