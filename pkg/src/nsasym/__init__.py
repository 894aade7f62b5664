"""Asymptotic expansions of steady Navier-Stokes Galerkin solutions."""
