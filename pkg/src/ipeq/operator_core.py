"""Discretized self-adjoint operators on an interval and a disc.

The operator ``a(x, D) = -g^{-1/2} d_j (g^{1/2} g^{jk} d_k) + q`` is modelled
with a scalar metric field ``c`` standing for ``g^{jk} = c delta^{jk}``:

* interval ``[0, 1]``: ``a v = -c^{1/2} (c^{1/2} v')' + q v``, ``dV_g = c^{-1/2} dx``,
  ``B v = c^{1/2} d_nu v`` at the two endpoints;
* disc of radius ``R``: ``a v = -c (Delta v) + q v`` with radial ``c(r)``,
  ``dV_g = dx / c``, ``B v = d_nu v``, decoupled into Fourier modes
  ``k = -K..K``.

Each piece reduces to a 1-D block ``-(p v')' + Q v = z m v`` assembled by
:mod:`ipeq._sem`.  Boundary data live in an orthonormal basis of
``L^2(boundary, dS)``: the two endpoint values on the interval and the
coefficients against ``e^{ik theta} / sqrt(2 pi R)`` on the disc.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _sem
from .errors import InvalidModelError, NumericError, ShapeError
from .fields import Field, as_field

MIN_NODES = 8
MIN_NODES_LOW_ORDER = 3  # degree 1 is the classical three-point scheme
CLUSTER_EPS = 1e-8


@dataclass(frozen=True)
class GeometryModel:
    """Domain description.

    Parameters
    ----------
    kind : ``"interval"`` or ``"disc"``
    n : interior nodes (interval) or radial nodes (disc); the element mesh
        is sized so the node count is as close to ``n`` as the degree allows
    radius : disc radius
    mode_cutoff : largest angular index ``K`` kept on the disc
    degree : polynomial degree of the spectral elements (1 gives the classical
        three-point finite-difference operator)
    """

    kind: str = "interval"
    n: int = 400
    radius: float = 1.0
    mode_cutoff: int = 0
    degree: int = 6

    def __post_init__(self):
        if self.kind not in ("interval", "disc"):
            raise InvalidModelError(f"unknown geometry kind {self.kind!r}")
        floor = MIN_NODES_LOW_ORDER if self.degree == 1 else MIN_NODES
        if int(self.n) < floor:
            raise InvalidModelError(f"n={self.n} below the minimum of {floor}")
        if not self.radius > 0:
            raise InvalidModelError("radius must be positive")
        if self.mode_cutoff < 0:
            raise InvalidModelError("mode_cutoff must be >= 0")
        if self.degree < 1:
            raise InvalidModelError("degree must be >= 1")

    @property
    def length(self) -> float:
        return 1.0 if self.kind == "interval" else float(self.radius)

    @property
    def modes(self) -> tuple[int, ...]:
        if self.kind == "interval":
            return (0,)
        return tuple(range(-self.mode_cutoff, self.mode_cutoff + 1))

    @property
    def boundary_size(self) -> int:
        return 2 if self.kind == "interval" else 2 * self.mode_cutoff + 1

    def boundary_descriptor(self) -> dict:
        if self.kind == "interval":
            return {"kind": "interval", "points": [0.0, 1.0]}
        return {"kind": "disc", "radius": float(self.radius), "modes": list(self.modes)}

    def breaks(self) -> np.ndarray:
        p = self.degree
        if self.kind == "interval":
            n_el = max(1, int(round((self.n + 1) / p)))
            return np.linspace(0.0, 1.0, n_el + 1)
        n_el = max(1, int(round(self.n / p)))
        return np.linspace(0.0, self.radius, n_el + 1)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n": int(self.n),
            "radius": float(self.radius),
            "mode_cutoff": int(self.mode_cutoff),
            "degree": int(self.degree),
        }


@dataclass(frozen=True, eq=False)
class ModeBlock:
    """One decoupled 1-D block of a discretized operator."""

    mode: int
    x: np.ndarray
    stiffness: np.ndarray
    mass: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray  # indices of boundary nodes inside the block
    columns: np.ndarray  # boundary-basis index for each boundary node
    scale: np.ndarray  # boundary value = scale * coefficient
    normal: np.ndarray  # +1 if the interior lies at larger x, else -1

    @property
    def size(self) -> int:
        return len(self.x)

    def sub(self, rows: str, cols: str) -> np.ndarray:
        idx = {"I": self.interior, "B": self.boundary}
        return self.stiffness[np.ix_(idx[rows], idx[cols])]


@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Finite-dimensional self-adjoint model of ``a(x, D)`` with Dirichlet data.

    Node vectors are the concatenation of all block node vectors (see
    :attr:`block_slices`); boundary vectors have length
    ``geometry.boundary_size``.
    """

    geometry: GeometryModel
    metric: Field
    potential: Field
    blocks: tuple[ModeBlock, ...]
    form: str = "schrodinger"
    conductivity: Field | None = None
    block_slices: tuple[slice, ...] = field(default=())
    coefficients: object = None  # mode -> (p, Q, m[, V]) callables of the block coordinate

    # ----------------------------------------------------------------- sizes
    @property
    def n_nodes(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def n_boundary(self) -> int:
        return self.geometry.boundary_size

    @property
    def weights(self) -> np.ndarray:
        """Lumped volume weights ``dV_g`` per node."""
        return np.concatenate([b.mass for b in self.blocks])

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([b.x for b in self.blocks])

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        for b, sl in zip(self.blocks, self.block_slices):
            mask[sl.start + b.interior] = True
        return mask

    # -------------------------------------------------------------- matrices
    def interior_matrix(self) -> np.ndarray:
        """``A_h`` on interior nodes (block diagonal, dense)."""
        mats = []
        for b in self.blocks:
            kii = b.sub("I", "I")
            mats.append(kii / b.mass[b.interior][:, None])
        return _block_diag(mats)

    def boundary_matrix(self) -> np.ndarray:
        """Flux operator ``B_h`` (boundary x nodes) for fields with zero trace.

        It is the Green-consistent flux ``-P^T K`` restricted to boundary rows;
        applied to a Dirichlet eigenvector it gives the boundary trace.
        """
        out = np.zeros((self.n_boundary, self.n_nodes))
        for b, sl in zip(self.blocks, self.block_slices):
            rows = -b.stiffness[b.boundary, :]
            for r, col, s in zip(rows, b.columns, b.scale):
                out[col, sl] += s * r
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        for b in self.blocks:
            h.update(np.round(b.stiffness, 10).tobytes())
            h.update(np.round(b.mass, 12).tobytes())
        h.update(self.form.encode())
        return h.hexdigest()[:16]

    def from_modes(self, values: dict) -> np.ndarray:
        """Assemble a node vector from ``{mode: block vector or callable}``."""
        out = np.zeros(self.n_nodes, dtype=complex)
        for b, sl in zip(self.blocks, self.block_slices):
            if b.mode in values:
                v = values[b.mode]
                out[sl] = v(b.x) if callable(v) else np.asarray(v)
        return out.real if np.all(out.imag == 0) else out

    def shifted(self, shift: float) -> "DiscretizedOperator":
        """Operator with potential ``q + shift``."""
        base = self.potential
        pot = as_field(lambda x: base(x) + shift, self.geometry.length)
        if self.form == "conductivity":
            from .gauge_transform import build_conductivity_operator

            return build_conductivity_operator(self.geometry, self.conductivity, pot)
        return build_operator(self.geometry, self.metric, pot)

    def summary(self) -> dict:
        gw = geometry_weights(self)
        return {
            "geometry": self.geometry.to_json(),
            "form": self.form,
            "n_nodes": self.n_nodes,
            "n_boundary": self.n_boundary,
            "boundary": self.geometry.boundary_descriptor(),
            "rho": gw.rho.tolist(),
            "mean_curvature": gw.mean_curvature.tolist(),
            "checksum": self.checksum(),
        }


def block_coefficients(op: DiscretizedOperator, mode: int):
    """``(p, Q, m)`` of one block with the nodal potential part folded into ``Q``."""
    p, Q, m, *V = op.coefficients(abs(mode))
    if not V:
        return p, Q, m
    return p, (lambda x: Q(x) + V[0](x)), m


def _block_diag(mats):
    n = sum(m.shape[0] for m in mats)
    out = np.zeros((n, n))
    i = 0
    for m in mats:
        k = m.shape[0]
        out[i : i + k, i : i + k] = m
        i += k
    return out


def _validate_positive(f: Field, x: np.ndarray, name: str):
    vals = f(x)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidModelError(f"{name} must be strictly positive on the grid")


def assemble(geometry: GeometryModel, coefficients, form: str, metric: Field, potential: Field,
             conductivity: Field | None = None) -> DiscretizedOperator:
    """Assemble blocks from ``coefficients(mode) -> (p, Q, m)`` or ``(p, Q, m, V)``.

    ``V`` is the potential part, integrated with the same nodal rule as the
    lumped mass so a constant potential shift is exact.
    """
    br = geometry.breaks()
    blocks = []
    cache: dict[int, _sem.Block] = {}
    for k in geometry.modes:
        key = abs(k)
        if key not in cache:
            p, Q, m, *V = coefficients(key)
            V = V[0] if V else None
            if geometry.kind == "interval":
                cache[key] = _sem.assemble_block(br, geometry.degree, p, Q, m, V=V)
            elif key == 0:
                cache[key] = _sem.assemble_block(br, geometry.degree, p, Q, m, left="radau", V=V)
            else:
                cache[key] = _sem.assemble_block(br, geometry.degree, p, Q, m, drop_left=True, V=V)
        blk = cache[key]
        n = len(blk.x)
        if geometry.kind == "interval":
            boundary = np.array([0, n - 1])
            columns = np.array([0, 1])
            scale = np.array([1.0, 1.0])
            normal = np.array([1.0, -1.0])
        else:
            boundary = np.array([n - 1])
            columns = np.array([k + geometry.mode_cutoff])
            scale = np.array([1.0 / np.sqrt(geometry.radius)])
            normal = np.array([-1.0])
        interior = np.setdiff1d(np.arange(n), boundary)
        blocks.append(ModeBlock(k, blk.x, blk.stiffness, blk.mass, interior, boundary, columns, scale, normal))
    slices = []
    start = 0
    for b in blocks:
        slices.append(slice(start, start + b.size))
        start += b.size
    return DiscretizedOperator(geometry, metric, potential, tuple(blocks), form, conductivity, tuple(slices),
                              coefficients)


def build_operator(geometry: GeometryModel, metric=1.0, potential=0.0) -> DiscretizedOperator:
    """Assemble the Schrödinger-form operator for a scalar metric and potential.

    Raises
    ------
    InvalidModelError
        non-positive metric sample or too few nodes (checked by the geometry).
    """
    L = geometry.length
    c = as_field(metric, L)
    q = as_field(potential, L)
    _validate_positive(c, np.linspace(0, L, 8 * geometry.n + 1), "metric")

    if geometry.kind == "interval":
        def coefficients(k):
            return (lambda x: np.sqrt(c(x)),
                    lambda x: np.zeros_like(x),
                    lambda x: 1.0 / np.sqrt(c(x)),
                    lambda x: q(x) / np.sqrt(c(x)))
    else:
        def coefficients(k):
            return (lambda r: r,
                    lambda r: k * k / np.where(r > 0, r, np.inf),
                    lambda r: r / c(r),
                    lambda r: q(r) * r / c(r))
    return assemble(geometry, coefficients, "schrodinger", c, q)


# ------------------------------------------------------------------ fluxes
def _check_node_vector(op: DiscretizedOperator, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != op.n_nodes:
        raise ShapeError(f"expected {op.n_nodes} node values, got {v.shape[0]}")
    return v


def boundary_flux(op: DiscretizedOperator, v, z=None, order: int = 2) -> np.ndarray:
    """Boundary flux ``B v`` in the boundary basis.

    With ``z`` given, returns the Green-consistent flux ``P^T (z M - K) v``,
    exact at the discrete level for solutions of ``(A_h - z) v = 0``.
    Otherwise differentiates the degree-``order`` interpolant through the
    ``order + 1`` nodes nearest each boundary point.
    """
    v = _check_node_vector(op, v)
    out = np.zeros((op.n_boundary,) + v.shape[1:], dtype=np.result_type(v, float, z if z is not None else 0.0))
    for b, sl in zip(op.blocks, op.block_slices):
        vb = v[sl]
        for j, (node, col, s, nu) in enumerate(zip(b.boundary, b.columns, b.scale, b.normal)):
            if z is not None:
                flux = z * b.mass[node] * vb[node] - b.stiffness[node] @ vb
            else:
                flux = _stencil_flux(op, b, vb, node, nu, order)
            out[col] += s * flux
    return out


def _stencil_flux(op, b: ModeBlock, vb, node, nu, order):
    n = b.size
    if order < 1 or order + 1 > n:
        raise ShapeError("stencil order out of range")
    idx = np.arange(order + 1) if nu > 0 else np.arange(n - order - 1, n)
    xs = b.x[idx]
    x0 = b.x[node]
    # derivative weights of the interpolant at x0
    _, der = _sem.lagrange_matrices(xs - x0, np.array([0.0]))
    dv = np.tensordot(der[0], vb[idx], axes=(0, 0))
    return nu * _flux_coefficient(op, x0) * dv


def _flux_coefficient(op, x0):
    """``p`` at a boundary point: the conormal factor of the 1-D block."""
    if op.form == "conductivity":
        a = op.conductivity(np.array([x0]))[0]
        return a if op.geometry.kind == "interval" else a * x0
    if op.geometry.kind == "interval":
        return float(np.sqrt(op.metric(np.array([x0]))[0]))
    return x0


@dataclass(frozen=True)
class GeometryWeights:
    rho: np.ndarray
    mean_curvature: np.ndarray


def geometry_weights(op: DiscretizedOperator) -> GeometryWeights:
    """Boundary weight ``rho`` (``B = rho d_n``) and mean curvature ``H``.

    ``H = 1/2 d_n log g_tangential`` in boundary normal coordinates with the
    interior-directed normal, so the Euclidean unit disc gives ``H = -1``.
    Conductivity-form operators report the analogous leading factors of
    their DtN asymptotics.
    """
    geo = op.geometry
    nb = geo.boundary_size
    if op.form == "conductivity":
        from .symbol_calculus import riccati_coefficients

        rho = np.empty(nb)
        H = np.empty(nb)
        for b in op.blocks:
            for col, nu in zip(b.columns, b.normal):
                w = riccati_coefficients(op, b.mode, int(col), order=1)
                rho[col] = -w[0]
                H[col] = -2.0 * w[1] / rho[col]
        return GeometryWeights(rho, H)
    if geo.kind == "interval":
        return GeometryWeights(np.ones(nb), np.zeros(nb))
    R = geo.radius
    c0, c1 = op.metric.taylor(R, 1, direction=-1.0)
    # tangential metric g_tt(n) = r^2 / c(r) with dn = -dr / sqrt(c): one-sided jet
    rho = 1.0 / np.sqrt(c0)
    dlog_dr = 2.0 / R - c1 / c0
    H = 0.5 * (-np.sqrt(c0)) * dlog_dr
    return GeometryWeights(np.full(nb, rho), np.full(nb, H))


# --------------------------------------------------------------- spectrum
@dataclass(frozen=True)
class Eigenpairs:
    """Dirichlet eigenpairs sorted ascending, ``vectors[:, l]`` normalized in ``dV_g``."""

    values: np.ndarray
    vectors: np.ndarray
    modes: np.ndarray

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        for l in range(len(self.values)):
            yield float(self.values[l]), self.vectors[:, l]

    def __len__(self):
        return len(self.values)


def block_eigh(b: ModeBlock) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of one block (interior vectors, mass-normalized)."""
    w = b.mass[b.interior]
    sw = np.sqrt(w)
    S = b.sub("I", "I") / sw[:, None] / sw[None, :]
    try:
        lam, Y = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigensolver failed on mode {b.mode}: {exc}") from exc
    return lam, Y / sw[:, None]


_EIG_CACHE: dict = {}


def _block_spectra(op: DiscretizedOperator):
    cached = _EIG_CACHE.get(id(op))
    if cached is None or cached[0] is not op:
        per_block = []
        solved: dict = {}
        for b in op.blocks:
            k = (id(b.stiffness), id(b.mass))
            if k not in solved:
                solved[k] = block_eigh(b)
            per_block.append(solved[k])
        vals = np.concatenate([lam for lam, _ in per_block])
        owners = np.concatenate([np.column_stack([np.full(len(lam), i), np.arange(len(lam))])
                                 for i, (lam, _) in enumerate(per_block)])
        order = np.lexsort((owners[:, 0], vals))
        if len(_EIG_CACHE) > 16:
            _EIG_CACHE.clear()
        _EIG_CACHE[id(op)] = cached = (op, per_block, vals[order], owners[order])
    return cached[1:]


def eigenvalues(op: DiscretizedOperator) -> np.ndarray:
    """All Dirichlet eigenvalues of ``A_h``, ascending (cached per operator)."""
    return _block_spectra(op)[1]


def eigendecompose(op: DiscretizedOperator, count: int | None = None) -> Eigenpairs:
    """Lowest ``count`` Dirichlet eigenpairs of ``A_h``."""
    per_block, vals, owners = _block_spectra(op)
    n_int = len(vals)
    count = n_int if count is None else int(count)
    if count < 1 or count > n_int:
        raise ShapeError(f"count must be in [1, {n_int}]")
    vecs = np.zeros((op.n_nodes, count))
    modes = np.empty(count, dtype=int)
    for j in range(count):
        bi, li = owners[j]
        b, sl = op.blocks[bi], op.block_slices[bi]
        vecs[sl.start + b.interior, j] = per_block[bi][1][:, li]
        modes[j] = b.mode
    return Eigenpairs(vals[:count].copy(), vecs, modes)


def clusters(values: np.ndarray, eps: float = CLUSTER_EPS) -> list[np.ndarray]:
    """Group indices of sorted eigenvalues into degenerate clusters."""
    groups: list[list[int]] = []
    for i, lam in enumerate(values):
        if groups and abs(lam - values[groups[-1][0]]) < eps * (1.0 + abs(lam)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]
