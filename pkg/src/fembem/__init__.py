"""Adaptive FEM-BEM coupling workbench in 2D."""
