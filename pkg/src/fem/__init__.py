"""
Finite element layer: meshes, quadrature, P2-P1 spaces, assembly and sparse solves
"""
