"""
Simulation Package

Data generating mechanism with known potential outcomes and the Monte Carlo
study that scores time-model specifications on bias, precision and coverage
"""
