"""
Test suite for the Navier-Stokes bang-bang control benchmarks
"""
