"""Composable sparse solvers for saddle-point systems."""
