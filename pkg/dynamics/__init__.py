"""Kepler flows, elementary flows and split Hamiltonian models"""
