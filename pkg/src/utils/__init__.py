"""
Utilities module for memnet.
Configuration, errors, seeding and result export.
"""
