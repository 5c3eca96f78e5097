"""Nodal spectral-element assembly for one-dimensional Sturm-Liouville blocks.

Every model in the package reduces to blocks of the form

    -(p v')' + Q v = z m v     on [a, b],

discretized with continuous piecewise polynomials of degree ``degree`` on
Gauss-Lobatto (or right-Radau, next to a free left end) nodes.  The mass
matrix is lumped with the nodal quadrature so that the operator is
symmetric with respect to a diagonal weight; with ``degree=1`` on a uniform
mesh the stiffness divided by the lumped mass is exactly the classical
three-point second difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as leg


@lru_cache(maxsize=None)
def gll_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto-Legendre nodes and weights on [-1, 1]."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if degree == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    cp = np.zeros(degree + 1)
    cp[-1] = 1.0
    interior = np.sort(leg.legroots(leg.legder(cp)))
    x = np.concatenate([[-1.0], interior, [1.0]])
    w = 2.0 / (degree * (degree + 1) * leg.legval(x, cp) ** 2)
    return x, w


@lru_cache(maxsize=None)
def right_radau_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Radau rule with ``degree + 1`` points that includes x = +1 only."""
    n = degree + 1
    cn = np.zeros(n + 1)
    cn[n] = 1.0
    cn[n - 1] = 1.0  # P_{n-1} + P_n vanishes at -1
    roots = np.sort(leg.legroots(cn))
    roots[0] = -1.0
    pm = np.zeros(n)
    pm[-1] = 1.0
    w = (1.0 - roots) / (n**2 * leg.legval(roots, pm) ** 2)
    w[0] = 2.0 / n**2
    # reflect so the included endpoint is +1
    return -roots[::-1].copy(), w[::-1].copy()


def lagrange_matrices(nodes: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and first derivatives of the Lagrange basis on ``nodes`` at ``points``.

    Returns arrays of shape ``(len(points), len(nodes))``.
    """
    n = len(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    val = np.empty((len(points), n))
    der = np.empty((len(points), n))
    for q, x in enumerate(points):
        d = x - nodes
        hit = np.isclose(d, 0.0, atol=1e-14)
        if hit.any():
            j = int(np.argmax(hit))
            val[q] = 0.0
            val[q, j] = 1.0
            der[q] = _diff_row(nodes, bary, j)
            continue
        terms = bary / d
        s = terms.sum()
        val[q] = terms / s
        dterms = -bary / d**2
        ds = dterms.sum()
        der[q] = (dterms * s - terms * ds) / s**2
    return val, der


def _diff_row(nodes: np.ndarray, bary: np.ndarray, j: int) -> np.ndarray:
    """Row j of the barycentric differentiation matrix, i.e. l_i'(x_j) for all i."""
    n = len(nodes)
    row = np.empty(n)
    for i in range(n):
        if i != j:
            row[i] = (bary[i] / bary[j]) / (nodes[j] - nodes[i])
    row[j] = 0.0
    row[j] = -row.sum()
    return row


@dataclass(frozen=True)
class Block:
    """Assembled one-dimensional block.

    Attributes
    ----------
    x : node coordinates (ascending), all retained nodes
    stiffness : dense symmetric matrix of the form sum p v'u' + Q v u
    mass : lumped mass (diagonal), positive at every retained node
    """

    x: np.ndarray
    stiffness: np.ndarray
    mass: np.ndarray


def assemble_block(
    breaks: np.ndarray,
    degree: int,
    p,
    Q,
    m,
    *,
    left: str = "node",
    drop_left: bool = False,
    n_quad: int | None = None,
    V=None,
) -> Block:
    """Assemble ``-(p v')' + (Q + V) v`` with lumped weight ``m`` on the mesh ``breaks``.

    Parameters
    ----------
    breaks : element endpoints, strictly increasing
    p, Q, m : vectorized callables of x
    left : ``"node"`` for Gauss-Lobatto nodes in the first element, ``"radau"``
        for right-Radau nodes (no node at the left end; natural condition)
    drop_left : remove the left-end node (homogeneous Dirichlet there)
    V : optional potential part integrated with the nodal rule, like ``m``;
        ``V = c m`` then shifts every eigenvalue by exactly ``c``
    """
    breaks = np.asarray(breaks, dtype=float)
    n_el = len(breaks) - 1
    nq = n_quad or degree + 4
    gq, gw = leg.leggauss(nq)
    gx, gwts = gll_rule(degree)
    rx, rw = right_radau_rule(degree)

    n_nodes = n_el * degree + 1
    x = np.empty(n_nodes)
    K = np.zeros((n_nodes, n_nodes))
    M = np.zeros(n_nodes)
    for e in range(n_el):
        a, b = breaks[e], breaks[e + 1]
        jac = 0.5 * (b - a)
        ref_nodes, ref_w = (rx, rw) if (e == 0 and left == "radau") else (gx, gwts)
        xn = a + jac * (ref_nodes + 1.0)
        xq = a + jac * (gq + 1.0)
        val, der = lagrange_matrices(ref_nodes, gq)
        der = der / jac
        pq, Qq = p(xq), Q(xq)
        ke = (der.T * (gw * jac * pq)) @ der + (val.T * (gw * jac * Qq)) @ val
        sl = slice(e * degree, e * degree + degree + 1)
        K[sl, sl] += ke
        M[sl] += ref_w * jac * m(xn)
        if V is not None:
            K[sl, sl] += np.diag(ref_w * jac * V(xn))
        x[sl] = xn
    keep = np.ones(n_nodes, dtype=bool)
    if drop_left:
        keep[0] = False
    idx = np.flatnonzero(keep)
    K = K[np.ix_(idx, idx)]
    K = 0.5 * (K + K.T)
    return Block(x=x[idx], stiffness=K, mass=M[idx])
