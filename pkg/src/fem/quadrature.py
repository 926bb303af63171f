import itertools
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import Legendre, Polynomial


def gauss_lobatto(n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto points and weights on [-1, 1].

    Interior points are the roots of P'_{n-1}; weights are
    2 / (n (n-1) P_{n-1}(x)^2).
    """
    if n_points < 2:
        raise ValueError("Gauss-Lobatto rules need at least 2 points")
    n = n_points
    legendre = Legendre.basis(n - 1)
    points = np.empty(n)
    points[0], points[-1] = -1.0, 1.0
    if n > 2:
        points[1:-1] = np.sort(np.real(legendre.deriv().roots()))
    weights = 2.0 / (n * (n - 1) * legendre(points) ** 2)
    return points, weights


def lagrange_basis(nodes: np.ndarray) -> List[Polynomial]:
    """Lagrange polynomials with L_i(nodes[j]) = delta_ij"""
    basis = []
    for i, x_i in enumerate(nodes):
        others = np.delete(nodes, i)
        basis.append(Polynomial.fromroots(others) / np.prod(x_i - others))
    return basis


def tensor_rows(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise Kronecker product of [n_points, k_i] arrays (first factor slowest)"""
    result = factors[0]
    for f in factors[1:]:
        result = (result[:, :, None] * f[:, None, :]).reshape(result.shape[0], -1)
    return result


class ReferenceElement:
    """Gauss-Lobatto Lagrange element of degree p on [-1, 1]^d"""

    def __init__(self, order: int):
        if order < 1:
            raise ValueError("Polynomial order must be >= 1")
        self.order = order
        self.n_points = order + 1
        self.points, self.weights = gauss_lobatto(self.n_points)
        self._basis = lagrange_basis(self.points)
        self._derivs = [b.deriv() for b in self._basis]
        # D[i, j] = L_j'(x_i)
        self.derivative_matrix = self.basis_derivatives(self.points)

    def basis_values(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return np.stack([b(xi) for b in self._basis], axis=-1)

    def basis_derivatives(self, xi: np.ndarray) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return np.stack([d(xi) for d in self._derivs], axis=-1)

    def multi_index(self, dimension: int) -> np.ndarray:
        return np.array(list(itertools.product(range(self.n_points), repeat=dimension)), dtype=int).reshape(-1, dimension)

    def tensor_points(self, dimension: int) -> np.ndarray:
        """Reference coordinates of the (p+1)^d nodes, axis 0 slowest"""
        if dimension == 0:
            return np.zeros((1, 0))
        return self.points[self.multi_index(dimension)]

    def tensor_weights(self, dimension: int) -> np.ndarray:
        if dimension == 0:
            return np.ones(1)
        return np.prod(self.weights[self.multi_index(dimension)], axis=1)

    def evaluate(self, xi: np.ndarray, derivative_axis: int = -1) -> np.ndarray:
        """Tensor basis (or one partial derivative) at reference points [n, d]"""
        xi = np.atleast_2d(xi)
        factors = []
        for axis in range(xi.shape[1]):
            if axis == derivative_axis:
                factors.append(self.basis_derivatives(xi[:, axis]))
            else:
                factors.append(self.basis_values(xi[:, axis]))
        return tensor_rows(factors)

    def face_derivative_matrix(self, dimension: int, axis: int, side: int) -> np.ndarray:
        """Maps cell nodal values to d/dxi_axis at the nodes of face (axis, side)"""
        face = self.tensor_points(dimension - 1)
        xi = np.insert(face, axis, 1.0 if side else -1.0, axis=1)
        return self.evaluate(xi, derivative_axis=axis)


@lru_cache(maxsize=16)
def reference_element(order: int) -> ReferenceElement:
    return ReferenceElement(order)
