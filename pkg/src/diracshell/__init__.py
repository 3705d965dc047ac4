"""Boundary-integral toolkit for Dirac operators with delta-shell interactions.

Submodules: ``algebra``, ``kernel``, ``surface``, ``operators``, ``layer``,
``bs``, ``critical``, ``singular``, ``radial``, ``suites``, ``cli``.  The
package root stays import-light on purpose (the CLI pins BLAS threads before
numpy is loaded in deterministic mode).
"""

__version__ = "0.1.0"
