"""
Survival EE

Discrete-time survival analysis by pooled logistic regression written as
stacked estimating equations, with g-computation risk curves and sandwich
variance, plus a long-data and bootstrap implementation for validation
"""

__version__ = '0.1.0'
