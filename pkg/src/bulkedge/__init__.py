"""Bulk and interface invariants of periodic Hamiltonians on the plane.

Submodules: ``models`` (operators), ``bands`` (Bloch spectra), ``topology``
(Chern numbers), ``effective`` (two-level symbols), ``edge`` (strip spectral
flow) and ``conductivity`` (windowed interface conductivity).
"""

__version__ = "0.1.0"
