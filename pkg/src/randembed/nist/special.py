"""Special functions used by the p-value formulas.

Thin wrappers over scipy so callers read like the reference formulas.
"""

from __future__ import annotations

from scipy import special as _sp


def erfc(x):
    return _sp.erfc(x)


def igamc(a, x):
    """Regularized upper incomplete gamma Q(a, x)."""
    return _sp.gammaincc(a, x)


def normal_cdf(x):
    return _sp.ndtr(x)
