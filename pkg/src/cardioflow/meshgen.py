"""Segmentation-to-surface pipeline: morphology, marching cubes, smoothing.

Vertices stay in voxel coordinates end to end so downstream constraint
rasterization needs no transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    BadKernel,
    EmptyMask,
    KTooLarge,
    MeshNotManifold,
    NoSurface,
)
from .volgrid import CAVITY, MYOCARDIUM, SegmentationMask

_AREA_EPS = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface in voxel coordinates."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.intp)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (n, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (m, 3)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(
            np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1
        )

    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (e, 2), sorted pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_triangle_counts(self) -> np.ndarray:
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return counts

    def is_edge_manifold(self) -> bool:
        counts = self.edge_triangle_counts()
        return bool(np.all((counts == 1) | (counts == 2)))

    def is_closed(self) -> bool:
        return bool(np.all(self.edge_triangle_counts() == 2))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + len(self.triangles)

    def validate(self) -> None:
        """Raise when indices, manifoldness, or triangle areas are broken."""
        if self.triangles.size and self.triangles.max() >= self.n_vertices:
            raise ValueError("triangle index exceeds vertex count")
        if self.triangles.size and self.triangles.min() < 0:
            raise ValueError("negative triangle index")
        if np.any(self.triangle_areas() <= _AREA_EPS):
            raise ValueError("mesh contains degenerate triangles")
        if not self.is_edge_manifold():
            raise MeshNotManifold("an edge bounds more than two triangles")

    def signed_volume(self) -> float:
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0)

    def with_outward_orientation(self) -> "TriangleMesh":
        if self.signed_volume() < 0:
            return TriangleMesh(self.vertices, self.triangles[:, ::-1])
        return self


def lv_region(mask: SegmentationMask) -> np.ndarray:
    """Binary union of the myocardium and cavity labels."""
    if not np.any(mask.labels == MYOCARDIUM):
        raise EmptyMask("mask contains no myocardium voxels")
    return (mask.labels == MYOCARDIUM) | (mask.labels == CAVITY)


def morpho_close_open(region: np.ndarray, close_k: int = 5, open_k: int = 7) -> np.ndarray:
    """Morphological closing then opening with cubic structuring elements."""
    for k in (close_k, open_k):
        if k < 1 or k % 2 == 0:
            raise BadKernel(f"kernel size must be odd and positive, got {k}")
    region = np.asarray(region, dtype=bool)
    closed = ndimage.binary_closing(region, structure=np.ones((close_k,) * 3, bool))
    return ndimage.binary_opening(closed, structure=np.ones((open_k,) * 3, bool))


def marching_cubes(region: np.ndarray, iso: float = 0.5) -> TriangleMesh:
    """Closed, outward-oriented iso-surface of a binary volume.

    The volume is zero-padded by one voxel so surfaces that touch the
    array border still close. Edge crossings of the 0/1 field at level
    0.5 land on voxel-edge midpoints.
    """
    from skimage import measure

    region = np.asarray(region, dtype=bool)
    if region.all() or not region.any():
        raise NoSurface("binary volume has no iso-surface")
    padded = np.pad(region, 1).astype(np.float64)
    verts, faces, _, _ = measure.marching_cubes(padded, level=iso, allow_degenerate=False)
    mesh = TriangleMesh(verts - 1.0, faces).with_outward_orientation()
    return mesh


def spectral_smooth(mesh: TriangleMesh, k: int = 120) -> TriangleMesh:
    """Low-pass the vertex coordinates in the surface's eigenbasis.

    Each coordinate function is projected onto the span of the first k
    Laplace-Beltrami eigenfunctions (mass-orthonormal) and reconstructed;
    connectivity is unchanged. Idempotent for a fixed k.
    """
    from .spectral import build_lbo, eigendecompose

    if not mesh.is_edge_manifold() or not mesh.is_closed():
        raise MeshNotManifold("spectral smoothing needs a closed manifold mesh")
    if k > mesh.n_vertices:
        raise KTooLarge(f"k={k} exceeds vertex count {mesh.n_vertices}")
    op = build_lbo(mesh)
    basis = eigendecompose(op, k)
    phi = basis.eigenfunctions
    coeff = phi.T @ (op.mass[:, None] * mesh.vertices)
    return TriangleMesh(phi @ coeff, mesh.triangles)


def write_off(mesh: TriangleMesh, path) -> None:
    """ASCII OFF writer (full double precision)."""
    lines = ["OFF", f"{mesh.n_vertices} {len(mesh.triangles)} 0"]
    lines += [f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in mesh.vertices]
    lines += [f"3 {t[0]} {t[1]} {t[2]}" for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_off(path) -> TriangleMesh:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    at = 4
    verts = np.array(tokens[at : at + 3 * nv], dtype=np.float64).reshape(nv, 3)
    at += 3 * nv
    tris = np.empty((nf, 3), dtype=np.intp)
    for i in range(nf):
        cnt = int(tokens[at])
        if cnt != 3:
            raise ValueError(f"{path}: face {i} is not a triangle")
        tris[i] = [int(tokens[at + 1]), int(tokens[at + 2]), int(tokens[at + 3])]
        at += 4
    return TriangleMesh(verts, tris)


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere by repeated subdivision of an icosahedron.

    Vertex count is 10*4**subdivisions + 2 (e.g. 642 at 3, 2562 at 4).
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.intp,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}
        vlist = list(verts)

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                p = vlist[i] + vlist[j]
                vlist.append(p / np.linalg.norm(p))
                midpoint[key] = len(vlist) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.intp)

    return TriangleMesh(verts * radius + np.asarray(center, dtype=np.float64), faces)
