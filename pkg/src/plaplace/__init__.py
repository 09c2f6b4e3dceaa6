"""Radially symmetric fast p-Laplacian evolution with measure data.

Modules: ``exponents`` (critical exponents), ``radial`` (grids and fields),
``measures`` (radial Radon measures), ``barenblatt`` (closed-form source
solution), ``solver`` (finite-volume evolution), ``functionals`` (moment,
gradient and action estimates), ``wasserstein`` (radial W_q) and ``cli``.
"""
__version__ = "0.1.0"
