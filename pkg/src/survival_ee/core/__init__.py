"""
Survival EE Core Package

Indicator matrices, time designs, estimating functions, root-finding,
sandwich inference and g-computation
"""
