"""Coupled finite element / boundary element solver for nonlinear transmission problems with friction."""
