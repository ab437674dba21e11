"""Numerical toolkit for sum-of-squares (Hormander) operators.

Submodules: ``field_algebra`` (brackets and the generalized Metivier index),
``exponents`` (admissible-exponent arithmetic), ``discrete_operator``
(finite differences), ``spectral`` (eigenpairs, Weyl fits, negative-eigenvalue
counts), ``variational`` (energies and critical points) and ``cli``.
"""

__version__ = "0.1.0"
