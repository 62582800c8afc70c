"""
Analysis pipeline and command-line interface
"""
