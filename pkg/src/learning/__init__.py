"""
Learning by mistakes: memristor trainer and weight-based toy model.
"""
