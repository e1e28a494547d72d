"""Numerical free probability: n-fold free convolutions, their densities and entropies."""
