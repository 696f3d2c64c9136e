"""
Standard Implementation Package

Person-period (long) data, IRLS logistic regression and the person-block
bootstrap, used as a correctness oracle and benchmark baseline
"""
