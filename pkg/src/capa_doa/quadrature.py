"""Gauss-Legendre rules and their tensor product over a rectangular aperture."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .geometry import Aperture

MAX_ORDER = 256
_NEWTON_TOL = 1e-15
_NEWTON_MAXITER = 100


@dataclass(frozen=True)
class QuadratureRule1D:
    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor Gauss-Legendre grid on an aperture.

    Points are flattened row-major with the x index outer: point
    ``p = kx * K + ky`` sits at ``(nodes[kx] * lx/2, nodes[ky] * ly/2)``.
    ``omega`` is the diagonal of ``(lx*ly/4) * kron(w, w)`` in the same order.
    """

    rule: QuadratureRule1D
    aperture: Aperture
    points: np.ndarray
    omega: np.ndarray
    offset: tuple = field(default=(0.0, 0.0))

    @property
    def order(self):
        return self.rule.order

    @property
    def size(self):
        return self.omega.size

    @property
    def rx(self):
        return self.points[:, 0]

    @property
    def ry(self):
        return self.points[:, 1]

    @property
    def x_axis(self):
        """Distinct x coordinates (length K), matching the outer index."""
        return self.rule.nodes * self.aperture.lx / 2 + self.offset[0]

    @property
    def y_axis(self):
        return self.rule.nodes * self.aperture.ly / 2 + self.offset[1]

    @property
    def axis_weights(self):
        """Per-axis weights whose outer product equals ``omega``."""
        w = self.rule.weights
        return w * self.aperture.lx / 2, w * self.aperture.ly / 2


def legendre_and_derivative(order, x):
    """Evaluate P_n(x) and P_n'(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if order == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for n in range(2, order + 1):
        p_prev, p = p, ((2 * n - 1) * x * p - (n - 1) * p_prev) / n
    # P_n' = n (x P_n - P_{n-1}) / (x^2 - 1); nodes never reach |x| = 1
    dp = order * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(order):
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on [-1, 1].

    Nodes are found by Newton iteration on P_K from the Chebyshev-type guess
    ``cos(pi (i - 1/4) / (K + 1/2))``; weights are
    ``2 / ((1 - x^2) P_K'(x)^2)``. Only the non-negative half is iterated and
    the other half is mirrored so the rule is exactly symmetric.
    """
    if isinstance(order, bool) or int(order) != order or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    order = int(order)
    half = (order + 1) // 2
    i = np.arange(1, half + 1)
    x = np.cos(np.pi * (i - 0.25) / (order + 0.5))
    for _ in range(_NEWTON_MAXITER):
        p, dp = legendre_and_derivative(order, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= _NEWTON_TOL:
            break
    else:
        raise NumericError(f"Newton iteration for Legendre roots did not converge (order {order})")
    if order % 2:
        x[-1] = 0.0
    _, dp = legendre_and_derivative(order, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    # x is descending and >= 0; mirror to the full increasing rule
    if order % 2:
        nodes = np.concatenate([-x[:-1], x[::-1]])
        weights = np.concatenate([w[:-1], w[::-1]])
    else:
        nodes = np.concatenate([-x, x[::-1]])
        weights = np.concatenate([w, w[::-1]])
    return QuadratureRule1D(order, nodes, weights)


def tensorize(rule, aperture, offset=(0.0, 0.0)):
    """Map a 1D rule onto the aperture as a 2D tensor grid.

    ``offset`` shifts the integration region off-centre. It exists for tests
    that need an asymmetric region; leave it at zero otherwise.
    """
    xs = rule.nodes * aperture.lx / 2 + offset[0]
    ys = rule.nodes * aperture.ly / 2 + offset[1]
    k = rule.order
    points = np.zeros((k * k, 3))
    points[:, 0] = np.repeat(xs, k)
    points[:, 1] = np.tile(ys, k)
    omega = (aperture.lx * aperture.ly / 4.0) * np.outer(rule.weights, rule.weights).ravel()
    return QuadratureGrid(rule, aperture, points, omega, (float(offset[0]), float(offset[1])))


def make_grid(order, aperture, offset=(0.0, 0.0)):
    return tensorize(gauss_legendre(order), aperture, offset)


def integrate_2d(f, grid):
    """Approximate the surface integral of ``f(r_x, r_y)`` over the grid.

    ``f`` is called once with arrays of all x and y coordinates and must
    return an array of the same length (scalars are broadcast).
    """
    values = np.broadcast_to(np.asarray(f(grid.rx, grid.ry)), grid.omega.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        p = int(np.flatnonzero(bad)[0])
        raise NumericError("integrand is not finite", where=(float(grid.rx[p]), float(grid.ry[p])))
    return np.sum(grid.omega * values)
