"""Desk-scale numerical laboratory for sparse bounds on pseudodifferential operators.

Subpackages cover exact shifted dyadic geometry, sampled grid functions,
symbol families, frequency/space operator pieces, maximal operators, sparse
collection constructions, and the verification probes that tie them together.
"""

__version__ = "0.1.0"
