"""
Manufactured problems, convergence studies, invariant checks and result export
"""
