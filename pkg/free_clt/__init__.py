"""Free central limit theorem project package marker."""
