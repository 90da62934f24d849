"""
Memristor device models (BMS and BCM).
"""
