"""Surface correspondence to dense displacement constraints on the hull."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import NoConstraints, OutOfGrid
from .meshgen import TriangleMesh, lv_region
from .spectral import PointMap
from .volgrid import Dims, SegmentationMask


@dataclass(frozen=True)
class ConstraintField:
    """Per-voxel displacement constraints with a validity mask."""

    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if vec.ndim != 4 or vec.shape[-1] != 3 or valid.shape != vec.shape[:3]:
            raise ValueError("vectors must be (nx,ny,nz,3) with matching valid mask")
        if not np.all(np.isfinite(vec[valid])) if valid.any() else False:
            raise ValueError("valid constraints must be finite")
        if np.any(vec[~valid] != 0.0):
            raise ValueError("invalid voxels must carry zero vectors")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "valid", valid)

    @property
    def dims(self) -> Dims:
        return tuple(int(n) for n in self.valid.shape)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


def vertex_displacements(
    pmap: PointMap, mesh_a: TriangleMesh, mesh_b: TriangleMesh
) -> tuple[np.ndarray, np.ndarray]:
    """Displacement of each matched source vertex toward its target vertex.

    Returns (positions, displacements): for target vertex j mapped to
    source vertex i, the displacement B_j - A_i is attached at A_i.
    """
    pmap.check_against(mesh_a.n_vertices)
    positions = mesh_a.vertices[pmap.indices]
    return positions, mesh_b.vertices - positions


def rasterize(positions: np.ndarray, displacements: np.ndarray, dims: Dims) -> ConstraintField:
    """Drop displacements into the voxel grid at rounded positions.

    Several samples landing in one voxel are averaged. Raises OutOfGrid
    when a rounded position leaves the volume.
    """
    idx = np.rint(np.asarray(positions, dtype=np.float64)).astype(np.intp)
    if idx.size and (np.any(idx < 0) or np.any(idx >= np.asarray(dims))):
        raise OutOfGrid("a rounded vertex position is outside the grid")
    sums = np.zeros((*dims, 3))
    counts = np.zeros(dims)
    np.add.at(sums, (idx[:, 0], idx[:, 1], idx[:, 2]), displacements)
    np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1.0)
    valid = counts > 0
    sums[valid] /= counts[valid][:, None]
    return ConstraintField(sums, valid)


def extract_hull(mask: SegmentationMask) -> np.ndarray:
    """One-voxel-thick outer shell of the LV region (6-connectivity)."""
    region = lv_region(mask)
    six = ndimage.generate_binary_structure(3, 1)
    interior = ndimage.binary_erosion(region, structure=six, border_value=0)
    return region & ~interior


def interpolate_to_hull(
    sparse_cf: ConstraintField, hull: np.ndarray, k: int = 8, power: float = 2.0
) -> ConstraintField:
    """Fill every hull voxel by inverse-distance weighting of nearby samples.

    Uses the k nearest valid constraint voxels (weight 1/d^power); a hull
    voxel coinciding with a sample keeps the sample's value exactly.
    """
    if sparse_cf.n_valid == 0:
        raise NoConstraints("no valid constraint voxels to interpolate from")
    hull = np.asarray(hull, dtype=bool)
    src_idx = np.argwhere(sparse_cf.valid)
    src_val = sparse_cf.vectors[sparse_cf.valid]
    query_idx = np.argwhere(hull)

    kk = min(k, len(src_idx))
    tree = cKDTree(src_idx.astype(np.float64))
    dist, nbr = tree.query(query_idx.astype(np.float64), k=kk)
    if kk == 1:
        dist, nbr = dist[:, None], nbr[:, None]

    exact = dist[:, 0] == 0.0
    with np.errstate(divide="ignore"):
        w = 1.0 / dist**power
    w[exact] = 0.0
    w[exact, 0] = 1.0
    values = np.einsum("qk,qkc->qc", w, src_val[nbr]) / w.sum(axis=1)[:, None]

    out = np.zeros((*sparse_cf.dims, 3))
    out[hull] = values
    return ConstraintField(out, hull)
