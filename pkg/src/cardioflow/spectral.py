"""Laplace-Beltrami spectral machinery and surface correspondence.

Builds the cotangent stiffness / lumped mass pair, solves the generalized
eigenproblem, evaluates wave-kernel descriptors, and refines a small
functional map into a dense point-to-point correspondence by alternating
nearest-neighbor extraction in the spectral embedding with a rank-growing
map rebuild.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import (
    BasisTooSmall,
    ConvergenceFailure,
    DegenerateTriangle,
    InsufficientSpectrum,
    NonManifold,
    RankDeficientWarning,
)
from .meshgen import TriangleMesh

_DENSE_LIMIT = 1200  # below this vertex count the dense solver is cheaper


@dataclass(frozen=True)
class LaplaceOperator:
    """Cotangent stiffness matrix W plus lumped (diagonal) mass A."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray

    def validate(self) -> None:
        w = self.stiffness
        asym = abs(w - w.T).max() if w.nnz else 0.0
        if asym > 1e-10:
            raise ValueError(f"stiffness not symmetric (max asymmetry {asym:.2e})")
        rowsum = np.abs(np.asarray(w.sum(axis=1)).ravel()).max()
        if rowsum > 1e-8:
            raise ValueError(f"stiffness row sums not zero (max {rowsum:.2e})")
        if np.any(self.mass <= 0):
            raise ValueError("mass entries must be positive")


@dataclass(frozen=True)
class SpectralBasis:
    """Ascending eigenvalues with mass-orthonormal eigenfunctions."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mass: np.ndarray

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def truncated(self, k: int) -> "SpectralBasis":
        return SpectralBasis(self.eigenvalues[:k], self.eigenfunctions[:, :k], self.mass)


@dataclass(frozen=True)
class FunctionalMap:
    """Matrix mapping source spectral coefficients to target coefficients."""

    matrix: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.matrix, dtype=np.float64)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise ValueError("functional map must be a finite 2D matrix")
        object.__setattr__(self, "matrix", c)

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class PointMap:
    """For each target vertex, the index of its corresponding source vertex."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        object.__setattr__(self, "indices", idx)

    def check_against(self, n_source: int) -> None:
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n_source):
            raise ValueError("point map index outside the source mesh")


def build_lbo(mesh: TriangleMesh) -> LaplaceOperator:
    """Assemble cotangent weights and barycentric vertex masses.

    Off-diagonal entries are -(cot a + cot b)/2 over the angles opposite
    each edge; diagonals make rows sum to zero. A vertex's mass is one
    third of its incident triangle area.
    """
    verts, tris = mesh.vertices, mesh.triangles
    n = mesh.n_vertices

    counts = mesh.edge_triangle_counts()
    if np.any(counts > 2):
        raise NonManifold("an edge bounds more than two triangles")

    p = verts[tris]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    if np.any(areas <= 1e-12):
        raise DegenerateTriangle("triangle area below 1e-12")

    rows, cols, vals = [], [], []
    mass = np.zeros(n)
    for corner in range(3):
        i = tris[:, (corner + 1) % 3]
        j = tris[:, (corner + 2) % 3]
        k = tris[:, corner]
        u = verts[i] - verts[k]
        v = verts[j] - verts[k]
        # cot of the angle at k, opposite edge (i, j)
        cot = np.einsum("ij,ij->i", u, v) / (2.0 * areas)
        half = -0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [half, half, -half, -half]
        np.add.at(mass, k, areas / 3.0)

    w = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    op = LaplaceOperator(w, mass)
    op.validate()
    return op


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    """Make each eigenfunction's largest-magnitude entry positive."""
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def eigendecompose(op: LaplaceOperator, k: int) -> SpectralBasis:
    """Smallest-k solutions of W phi = lambda A phi, A-orthonormal.

    Uses shift-invert ARPACK with a fixed start vector (runs are
    reproducible); small problems or near-complete requests fall back to
    a dense solver. Raises ConvergenceFailure if ARPACK stalls.
    """
    n = op.mass.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds vertex count {n}")

    if n <= _DENSE_LIMIT or k > n - 2:
        inv_sqrt = 1.0 / np.sqrt(op.mass)
        sym = (op.stiffness.toarray() * inv_sqrt[:, None]) * inv_sqrt[None, :]
        sym = 0.5 * (sym + sym.T)
        lams, vecs = np.linalg.eigh(sym)
        lams, vecs = lams[:k], vecs[:, :k]
        phi = vecs * inv_sqrt[:, None]
    else:
        mass_mat = sparse.diags(op.mass).tocsc()
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            lams, phi = eigsh(
                op.stiffness.tocsc(), k=k, M=mass_mat, sigma=-0.01, which="LM", v0=v0
            )
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(lams)
        lams, phi = lams[order], phi[:, order]

    lams = np.maximum(lams, 0.0)
    return SpectralBasis(lams, _fix_signs(phi), op.mass)


def eigen_residual(op: LaplaceOperator, basis: SpectralBasis) -> float:
    """Relative residual ||W P - A P diag(lam)|| / ||W P||."""
    wp = op.stiffness @ basis.eigenfunctions
    ap = basis.mass[:, None] * basis.eigenfunctions * basis.eigenvalues[None, :]
    denom = np.linalg.norm(wp)
    return float(np.linalg.norm(wp - ap) / max(denom, 1e-300))


def wks(basis: SpectralBasis, n: int = 50) -> np.ndarray:
    """Wave-kernel descriptors, one column per energy level.

    Energies are uniform in log-eigenvalue space between the first and
    last nonzero eigenvalues; the band width is 7/6 of the energy spacing.
    Zero eigenvalues are excluded. Returns (n_vertices, n).
    """
    if n < 2:
        raise ValueError("need at least 2 energy levels")
    lams = basis.eigenvalues
    nonzero = lams > max(lams.max(), 1.0) * 1e-10
    if nonzero.sum() < 2:
        raise InsufficientSpectrum("need at least 2 nonzero eigenvalues")
    log_l = np.log(lams[nonzero])
    phi2 = basis.eigenfunctions[:, nonzero] ** 2

    energies = np.linspace(log_l[0], log_l[-1], n)
    sigma = 7.0 * (energies[1] - energies[0]) / 6.0
    if sigma <= 0:
        raise InsufficientSpectrum("degenerate energy range")
    weights = np.exp(-((energies[None, :] - log_l[:, None]) ** 2) / (2.0 * sigma**2))
    desc = phi2 @ weights
    desc /= weights.sum(axis=0)[None, :]
    return desc


def _spectral_coeff(basis: SpectralBasis, k: int, functions: np.ndarray) -> np.ndarray:
    """Coefficients of vertex functions in the first-k eigenbasis (k, d)."""
    return basis.eigenfunctions[:, :k].T @ (basis.mass[:, None] * functions)


def init_fmap(
    basis_a: SpectralBasis,
    basis_b: SpectralBasis,
    desc_a: np.ndarray,
    desc_b: np.ndarray,
    k0: int = 3,
) -> FunctionalMap:
    """Least-squares k0 x k0 map aligning descriptor spectra: C Ahat = Bhat.

    A rank-deficient descriptor system (symmetric shapes) produces a
    warning and the minimum-norm solution.
    """
    if desc_a.shape[1] != desc_b.shape[1]:
        raise ValueError("descriptor column counts differ")
    if k0 > basis_a.size or k0 > basis_b.size:
        raise BasisTooSmall(f"k0={k0} exceeds a basis size")
    a_hat = _spectral_coeff(basis_a, k0, desc_a)
    b_hat = _spectral_coeff(basis_b, k0, desc_b)
    sol, _, rank, _ = np.linalg.lstsq(a_hat.T, b_hat.T, rcond=None)
    if rank < k0:
        warnings.warn(
            f"descriptor system rank {rank} < {k0}; returning minimum-norm map",
            RankDeficientWarning,
        )
    return FunctionalMap(sol.T)


def nearest_rows(candidates: np.ndarray, queries: np.ndarray, block: int = 1024) -> np.ndarray:
    """Index of the nearest candidate row for every query row.

    Exact blocked search; ties resolve to the lowest index.
    """
    cand_sq = np.einsum("ij,ij->i", candidates, candidates)
    out = np.empty(queries.shape[0], dtype=np.intp)
    for start in range(0, queries.shape[0], block):
        q = queries[start : start + block]
        d = cand_sq[None, :] - 2.0 * (q @ candidates.T)
        out[start : start + block] = np.argmin(d, axis=1)
    return out


def zoomout(
    fm: FunctionalMap,
    basis_a: SpectralBasis,
    basis_b: SpectralBasis,
    iterations: int = 130,
    step: int = 1,
) -> tuple[FunctionalMap, PointMap]:
    """Grow the functional map while extracting a point-to-point map.

    Each round matches every target vertex to its nearest source vertex
    between rows of Phi_B and rows of Phi_A C^T in the current k-dim
    embedding, then rebuilds C at size k+step from that correspondence
    (C = Phi_B^T A_B Pi Phi_A). Returns the final map and the point map
    the final C was built from.
    """
    c = fm.matrix
    k = c.shape[0]
    final = k + iterations * step
    if final > basis_a.size or final > basis_b.size:
        raise BasisTooSmall(
            f"zoomout needs basis size >= {final}, have {basis_a.size} and {basis_b.size}"
        )
    phi_a, phi_b = basis_a.eigenfunctions, basis_b.eigenfunctions
    mass_b = basis_b.mass[:, None]
    pmap = None
    for _ in range(iterations):
        emb_a = phi_a[:, :k] @ c.T
        pmap = nearest_rows(emb_a, phi_b[:, :k])
        k += step
        c = (phi_b[:, :k] * mass_b).T @ phi_a[pmap, :k]
    if pmap is None:
        emb_a = phi_a[:, :k] @ c.T
        pmap = nearest_rows(emb_a, phi_b[:, :k])
    return FunctionalMap(c), PointMap(pmap)


def correspond(
    mesh_a: TriangleMesh,
    mesh_b: TriangleMesh,
    k0: int = 3,
    iterations: int = 130,
    n_descriptors: int = 50,
    basis_size: int | None = None,
) -> tuple[FunctionalMap, PointMap]:
    """Full correspondence pipeline between two meshes (source, target)."""
    need = k0 + iterations
    size = need if basis_size is None else basis_size
    if size < need:
        raise BasisTooSmall(f"basis_size must be >= {need}")
    basis_a = eigendecompose(build_lbo(mesh_a), size)
    basis_b = eigendecompose(build_lbo(mesh_b), size)
    desc_a = wks(basis_a, n_descriptors)
    desc_b = wks(basis_b, n_descriptors)
    fm = init_fmap(basis_a, basis_b, desc_a, desc_b, k0)
    return zoomout(fm, basis_a, basis_b, iterations)
