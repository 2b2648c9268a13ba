"""Measurement-induced entanglement of compact free bosons: closed-form theory and lattice checks.

Modules: :mod:`special` (elliptic, eta, winding sums), :mod:`geometry` (ring
layouts, cross-ratio, cylinder data), :mod:`theory` (MIE formulas),
:mod:`gaussian` (free-fermion XX chain simulator), :mod:`ed` (exact
diagonalization oracle), :mod:`cli` (experiment runner).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"
