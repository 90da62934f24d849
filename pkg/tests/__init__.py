"""
Test package for memnet.
"""
