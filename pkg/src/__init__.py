"""
memnet: learning by mistakes on three-layer memristor networks.
Device models, nodal circuit solver, trainer, toy model and experiment runners.
"""

__version__ = "0.1.0"
