"""Boundary spectral data: eigenvalues with boundary traces of normalized eigenfunctions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .operator_core import CLUSTER_EPS, DiscretizedOperator, clusters, eigendecompose


@dataclass(frozen=True)
class BoundarySpectralData:
    """Ordered pairs ``(lambda_l, B phi_l)``.

    ``traces[l]`` holds the flux of the l-th normalized eigenfunction in the
    orthonormal boundary basis of the model.  On the disc that basis is
    ``e^{ik theta} / sqrt(2 pi R)``; each eigenfunction lives in one Fourier
    mode, so its coefficient vector is real with a single nonzero slot.
    Within a degenerate cluster the traces belong to some orthonormal basis.
    """

    eigenvalues: np.ndarray
    traces: np.ndarray  # shape (L, n_boundary)
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        tr = np.atleast_2d(np.asarray(self.traces))
        if tr.shape[0] != lam.shape[0]:
            raise ShapeError("one trace per eigenvalue required")
        if not np.all(np.isfinite(tr)):
            raise ShapeError("traces must be finite")
        order = np.argsort(lam, kind="stable")
        object.__setattr__(self, "eigenvalues", lam[order])
        object.__setattr__(self, "traces", tr[order])

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def n_boundary(self) -> int:
        return self.traces.shape[1]

    def truncate(self, count: int) -> "BoundarySpectralData":
        return BoundarySpectralData(self.eigenvalues[:count], self.traces[:count], self.boundary)

    def clusters(self, eps: float = CLUSTER_EPS) -> list[np.ndarray]:
        return clusters(self.eigenvalues, eps)

    def cluster_kernels(self, eps: float = CLUSTER_EPS) -> list[tuple[float, np.ndarray]]:
        """``(mean eigenvalue, sum_k trace_k (x) conj(trace_k))`` per cluster."""
        out = []
        for idx in self.clusters(eps):
            t = self.traces[idx]
            out.append((float(self.eigenvalues[idx].mean()), t.T @ t.conj()))
        return out

    def kernel(self, l: int) -> np.ndarray:
        t = self.traces[l]
        return np.outer(t, t.conj())

    def pairing(self, F, H) -> np.ndarray:
        """``<K_l F, H>`` for every entry (per eigenfunction, not per cluster)."""
        F = np.asarray(F)
        H = np.asarray(H)
        return (self.traces.conj() @ F) * (self.traces @ np.conj(H))

    def to_json(self) -> dict:
        entries = []
        for lam, t in zip(self.eigenvalues, self.traces):
            e = {"lambda": float(lam), "trace": [float(v) for v in np.real(t)]}
            if np.iscomplexobj(t) and np.any(np.imag(t) != 0):
                e["trace_im"] = [float(v) for v in np.imag(t)]
            entries.append(e)
        return {"boundary": self.boundary, "entries": entries}

    @classmethod
    def from_json(cls, data: dict) -> "BoundarySpectralData":
        try:
            entries = data["entries"]
            lam = np.array([e["lambda"] for e in entries], dtype=float)
            tr = np.array([e["trace"] for e in entries], dtype=float)
            if any("trace_im" in e for e in entries):
                tr = tr + 1j * np.array([e.get("trace_im", [0.0] * tr.shape[1]) for e in entries])
        except (KeyError, TypeError, ValueError) as exc:
            raise ShapeError(f"malformed boundary spectral data: {exc}") from exc
        return cls(lam, tr.reshape(len(lam), -1), data.get("boundary", {}))


def compute_bsd(op: DiscretizedOperator, count: int) -> BoundarySpectralData:
    """Lowest ``count`` eigenvalues with the Green-consistent fluxes of their eigenfunctions."""
    pairs = eigendecompose(op, count)
    traces = (op.boundary_matrix() @ pairs.vectors).T
    return BoundarySpectralData(pairs.values, traces, op.geometry.boundary_descriptor())


@dataclass(frozen=True)
class EquivalenceReport:
    equivalent: bool
    eigenvalue_residual: float
    kernel_residuals: list
    failed_clusters: list

    def to_json(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "eigenvalue_residual": self.eigenvalue_residual,
            "kernel_residuals": self.kernel_residuals,
            "failed_clusters": self.failed_clusters,
        }


def bsd_equivalent(a: BoundarySpectralData, b: BoundarySpectralData, tol: float = 1e-6,
                   count: int | None = None, relative: bool = True) -> EquivalenceReport:
    """Compare two data sets modulo orthogonal mixing inside eigenvalue clusters.

    Eigenvalues are compared entrywise, kernels ``sum trace (x) trace`` per
    cluster (clusters taken from ``a``).  Residuals are relative to
    ``1 + |lambda|`` and ``1 + ||K||`` when ``relative`` is set.
    """
    if a.n_boundary != b.n_boundary or (a.boundary and b.boundary and a.boundary != b.boundary):
        raise ShapeError("boundary descriptors differ")
    n = min(len(a), len(b)) if count is None else count
    if n > len(a) or n > len(b):
        raise ShapeError("not enough entries to compare")
    la, lb = a.eigenvalues[:n], b.eigenvalues[:n]
    scale = 1.0 + np.abs(la) if relative else 1.0
    lam_res = np.abs(la - lb) / scale
    kernels = []
    failed = []
    for ci, idx in enumerate(clusters(la)):
        ta, tb = a.traces[idx], b.traces[idx]
        ka, kb = ta.T @ ta.conj(), tb.T @ tb.conj()
        denom = 1.0 + np.linalg.norm(ka) if relative else 1.0
        kres = float(np.linalg.norm(ka - kb) / denom)
        lres = float(lam_res[idx].max())
        kernels.append({"cluster": ci, "lambda": float(la[idx].mean()), "size": len(idx),
                        "lambda_residual": lres, "kernel_residual": kres})
        if kres > tol or lres > tol:
            failed.append(ci)
    return EquivalenceReport(not failed, float(lam_res.max(initial=0.0)), kernels, failed)
