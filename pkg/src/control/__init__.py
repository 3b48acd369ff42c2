"""
Nonlinear solvers, the conditional-gradient optimal control loop and a posteriori estimators
"""
