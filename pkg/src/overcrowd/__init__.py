from overcrowd.main import main

# module level doc-string
__doc__ = """
**overcrowd** package estimates and certifies overcrowding of zeros and nodal lines of
stationary Gaussian processes and fields: moments of the spectral measure, bound formulas,
samplers, deterministic certificates and Monte Carlo campaigns with calibrated constants.
"""

# Use __all__ to let type checkers know what is part of the public API.
__all__ = ["main"]
