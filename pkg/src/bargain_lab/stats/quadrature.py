import numpy as np


def gauss_hermite(n):
    """Nodes and weights for integrals against the standard normal density.

    ``sum(w * f(nodes))`` approximates ``E[f(eta)]`` for ``eta ~ N(0, 1)`` and is
    exact for polynomials of degree up to ``2n - 1``.
    """
    n = int(n)
    if not 1 <= n <= 64:
        raise ValueError("node count must be in [1, 64]")
    nodes, weights = np.polynomial.hermite_e.hermegauss(n)
    return nodes, weights / np.sqrt(2.0 * np.pi)
