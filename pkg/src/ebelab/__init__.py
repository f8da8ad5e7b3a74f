"""Numerical and exact-algebraic laboratory for singular solutions of the
extended Bogomolny equation and Hecke modifications of Higgs bundles on
the slab [0,1] x T^2."""

__version__ = "0.1.0"
