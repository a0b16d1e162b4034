"""Volumetric grid types, trilinear sampling, gradients, and file I/O.

Arrays are indexed ``[x, y, z]``. The on-disk layout is x-fastest
(linear index ``x + nx*(y + ny*z)``), little-endian, with any channels
interleaved per voxel. All types are treated as immutable after
construction; operations return new objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimsTooSmall, HeaderMismatch, VolumeParseError

Dims = tuple[int, int, int]

BACKGROUND = 0
MYOCARDIUM = 1
CAVITY = 2


def _check_dims(shape) -> Dims:
    if len(shape) < 3 or any(int(n) < 1 for n in shape[:3]):
        raise ValueError(f"expected positive 3D dims, got {shape}")
    return tuple(int(n) for n in shape[:3])


@dataclass(frozen=True)
class ScalarVolume:
    """3D intensity grid with isotropic voxel spacing."""

    data: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("ScalarVolume data must be a 3D array")
        if not np.all(np.isfinite(data)):
            raise ValueError("ScalarVolume intensities must be finite")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> Dims:
        return _check_dims(self.data.shape)


@dataclass(frozen=True)
class SegmentationMask:
    """Per-voxel labels: 0=background, 1=myocardium, 2=cavity."""

    labels: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValueError("SegmentationMask labels must be a 3D array")
        labels = labels.astype(np.uint8, copy=False)
        if labels.max(initial=0) > CAVITY:
            raise ValueError("labels must be in {0, 1, 2}")
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> Dims:
        return _check_dims(self.labels.shape)

    def myocardium(self) -> np.ndarray:
        return self.labels == MYOCARDIUM

    def cavity(self) -> np.ndarray:
        return self.labels == CAVITY


@dataclass(frozen=True)
class FlowField:
    """Per-voxel displacement vectors (u, v, w) in voxel units."""

    vectors: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 4 or vec.shape[-1] != 3:
            raise ValueError("FlowField vectors must have shape (nx, ny, nz, 3)")
        if not np.all(np.isfinite(vec)):
            raise ValueError("FlowField components must be finite")
        object.__setattr__(self, "vectors", vec)

    @property
    def dims(self) -> Dims:
        return _check_dims(self.vectors.shape)

    @classmethod
    def zeros(cls, dims: Dims, spacing: float = 1.0) -> "FlowField":
        return cls(np.zeros((*dims, 3)), spacing)


def base_grid(dims: Dims) -> np.ndarray:
    """Voxel-center coordinates of a grid, shape (nx, ny, nz, 3)."""
    axes = [np.arange(n, dtype=np.float64) for n in dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sample_trilinear(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of ``data`` at fractional voxel coordinates.

    Coordinates outside ``[0, n-1]`` on any axis are clamped to the
    boundary. ``coords`` has shape (..., 3); the result has shape (...).
    """
    vals, _ = _gather_trilinear(data, coords, want_grad=False)
    return vals


def sample_trilinear_grad(data: np.ndarray, coords: np.ndarray):
    """Trilinear values plus spatial partials w.r.t. the sample position.

    Returns ``(values, grad)`` with ``grad`` of shape (..., 3). Partials
    are zero along any axis whose coordinate was clamped.
    """
    return _gather_trilinear(data, coords, want_grad=True)


def _gather_trilinear(data: np.ndarray, coords: np.ndarray, want_grad: bool):
    data = np.asarray(data, dtype=np.float64)
    nx, ny, nz = data.shape
    coords = np.asarray(coords, dtype=np.float64)
    x = coords[..., 0]
    y = coords[..., 1]
    z = coords[..., 2]

    cx = np.clip(x, 0.0, nx - 1.0)
    cy = np.clip(y, 0.0, ny - 1.0)
    cz = np.clip(z, 0.0, nz - 1.0)

    x0 = np.minimum(np.floor(cx), nx - 2 if nx > 1 else 0).astype(np.intp)
    y0 = np.minimum(np.floor(cy), ny - 2 if ny > 1 else 0).astype(np.intp)
    z0 = np.minimum(np.floor(cz), nz - 2 if nz > 1 else 0).astype(np.intp)
    x0 = np.maximum(x0, 0)
    y0 = np.maximum(y0, 0)
    z0 = np.maximum(z0, 0)
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)

    fx = cx - x0
    fy = cy - y0
    fz = cz - z0

    flat = data.reshape(-1)

    def at(ix, iy, iz):
        return flat[(ix * ny + iy) * nz + iz]

    c000 = at(x0, y0, z0)
    c100 = at(x1, y0, z0)
    c010 = at(x0, y1, z0)
    c110 = at(x1, y1, z0)
    c001 = at(x0, y0, z1)
    c101 = at(x1, y0, z1)
    c011 = at(x0, y1, z1)
    c111 = at(x1, y1, z1)

    # interpolate along z, then y, then x
    c00 = c000 + (c001 - c000) * fz
    c10 = c100 + (c101 - c100) * fz
    c01 = c010 + (c011 - c010) * fz
    c11 = c110 + (c111 - c110) * fz
    c0 = c00 + (c01 - c00) * fy
    c1 = c10 + (c11 - c10) * fy
    vals = c0 + (c1 - c0) * fx

    if not want_grad:
        return vals, None

    gx = c1 - c0
    gy0 = c01 - c00
    gy1 = c11 - c10
    gy = gy0 + (gy1 - gy0) * fx
    gz0 = (c001 - c000) + ((c011 - c010) - (c001 - c000)) * fy
    gz1 = (c101 - c100) + ((c111 - c110) - (c101 - c100)) * fy
    gz = gz0 + (gz1 - gz0) * fx

    # clamped coordinates do not respond to perturbations
    gx = np.where((x < 0.0) | (x > nx - 1.0), 0.0, gx)
    gy = np.where((y < 0.0) | (y > ny - 1.0), 0.0, gy)
    gz = np.where((z < 0.0) | (z > nz - 1.0), 0.0, gz)
    return vals, np.stack([gx, gy, gz], axis=-1)


def trilinear_sample(vol: ScalarVolume, p) -> float:
    """Sample ``vol`` at a single point; out-of-bounds coordinates clamp."""
    return float(sample_trilinear(vol.data, np.asarray(p, dtype=np.float64)))


def central_gradient(vol: ScalarVolume):
    """Spatial derivatives (central differences inside, one-sided on faces).

    Returns three ScalarVolumes (d/dx, d/dy, d/dz).
    """
    if min(vol.dims) < 3:
        raise DimsTooSmall(f"central_gradient needs dims >= 3, got {vol.dims}")
    gx, gy, gz = np.gradient(vol.data)
    return (
        ScalarVolume(gx, vol.spacing),
        ScalarVolume(gy, vol.spacing),
        ScalarVolume(gz, vol.spacing),
    )


# ---------------------------------------------------------------------------
# File format: JSON header `name.volhdr` + raw payload `name.raw`.
# Payload is little-endian, x-fastest, channels interleaved per voxel.
# ---------------------------------------------------------------------------

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    base = p.with_suffix("") if p.suffix in (".volhdr", ".raw") else p
    return base.with_name(base.name + ".volhdr"), base.with_name(base.name + ".raw")


def _to_disk_order(arr: np.ndarray) -> np.ndarray:
    # (nx, ny, nz, c) -> flat with c fastest, then x, then y, then z
    return np.ascontiguousarray(arr.transpose(2, 1, 0, 3)).reshape(-1)


def _from_disk_order(flat: np.ndarray, dims: Dims, channels: int) -> np.ndarray:
    nx, ny, nz = dims
    return flat.reshape(nz, ny, nx, channels).transpose(2, 1, 0, 3).copy()


def write_raw(path, arr: np.ndarray, dtype: str, spacing: float) -> None:
    """Write a (nx, ny, nz[, c]) array as a volhdr/raw pair."""
    hdr_path, raw_path = _paths(path)
    if arr.ndim == 3:
        arr = arr[..., None]
    dims = _check_dims(arr.shape)
    channels = int(arr.shape[3])
    header = {
        "dims": list(dims),
        "dtype": dtype,
        "spacing": float(spacing),
        "channels": channels,
    }
    hdr_path.write_text(json.dumps(header) + "\n")
    payload = _to_disk_order(arr.astype(_DTYPES[dtype]))
    raw_path.write_bytes(payload.tobytes())


def read_raw(path):
    """Read a volhdr/raw pair; returns (array (nx,ny,nz,c), header dict)."""
    hdr_path, raw_path = _paths(path)
    try:
        header = json.loads(hdr_path.read_text())
        dims = _check_dims(header["dims"])
        dtype = _DTYPES[header["dtype"]]
        channels = int(header.get("channels", 1))
        spacing = float(header.get("spacing", 1.0))
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise VolumeParseError(f"malformed header {hdr_path}: {exc}") from exc
    raw = raw_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * channels * dtype.itemsize
    if len(raw) != expected:
        raise HeaderMismatch(
            f"{raw_path}: payload is {len(raw)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(raw, dtype=dtype)
    arr = _from_disk_order(flat, dims, channels)
    header["spacing"] = spacing
    return arr, header


def write_volume(vol: ScalarVolume, path) -> None:
    write_raw(path, vol.data, "f32", vol.spacing)


def read_volume(path) -> ScalarVolume:
    arr, header = read_raw(path)
    if arr.shape[3] != 1:
        raise HeaderMismatch(f"{path}: expected 1 channel, got {arr.shape[3]}")
    return ScalarVolume(arr[..., 0].astype(np.float64), header["spacing"])


def write_flow(flow: FlowField, path) -> None:
    write_raw(path, flow.vectors, "f32", flow.spacing)


def read_flow(path) -> FlowField:
    arr, header = read_raw(path)
    if arr.shape[3] != 3:
        raise HeaderMismatch(f"{path}: expected 3 channels, got {arr.shape[3]}")
    return FlowField(arr.astype(np.float64), header["spacing"])


def write_mask(mask: SegmentationMask, path) -> None:
    write_raw(path, mask.labels, "u8", mask.spacing)


def read_mask(path) -> SegmentationMask:
    arr, header = read_raw(path)
    if arr.shape[3] != 1:
        raise HeaderMismatch(f"{path}: expected 1 channel, got {arr.shape[3]}")
    return SegmentationMask(arr[..., 0], header["spacing"])
