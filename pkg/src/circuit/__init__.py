"""
Network construction, persistence and the nodal solver.
"""
