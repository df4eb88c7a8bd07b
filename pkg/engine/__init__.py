"""Integration loop, compensated updates and efficiency sweeps"""
