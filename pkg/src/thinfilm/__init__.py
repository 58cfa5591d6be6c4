"""Pseudo-spectral laboratory for the p-Laplacian thin-film equation on the torus."""
