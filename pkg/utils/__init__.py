"""Validation, configuration and logging helpers"""
