"""
Survival EE Data Package

CSV ingestion, time discretization and record validation
"""
