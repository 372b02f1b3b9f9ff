"""Numerical Weyl laws for non-selfadjoint operators on surfaces of revolution."""
