"""Numerical services (measures, transforms, subordination, densities, expansions, entropy)."""
