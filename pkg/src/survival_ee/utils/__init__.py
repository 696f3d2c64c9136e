"""Constants, exceptions and small shared helpers"""
