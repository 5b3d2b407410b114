"""Optimal perturbation iteration for Bratu-type second-order ODEs."""
