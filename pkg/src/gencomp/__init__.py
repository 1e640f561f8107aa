"""Finite-horizon experiments with generically and coarsely computable
equivalence structures: staged enumerations, exact densities, generic and
coarse copies, and isomorphism constructions for (1,2)-structures."""

__version__ = "0.1.0"
