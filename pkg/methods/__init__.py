"""Splitting method definitions, registry and order conditions"""
