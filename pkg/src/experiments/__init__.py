"""
Experiment runners and their result tables.
"""
