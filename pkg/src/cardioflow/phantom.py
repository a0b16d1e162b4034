"""Synthetic LV-like phantoms with analytic torsion ground truth.

The phantom is a tapered thick-walled tube whose cross-section radius is
modulated azimuthally by two incommensurate harmonics, so the segmented
shape has no rotational or mirror symmetry. The ``angular_constant``
intensity texture depends only on (radius, height) and is therefore
invariant under any rotation about the long axis: the image pair carries
no tangential photometric evidence even though the surface genuinely
twists. The ``noise`` texture adds smooth random structure on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import SpecOutOfBounds
from .volgrid import (
    BACKGROUND,
    CAVITY,
    MYOCARDIUM,
    Dims,
    FlowField,
    ScalarVolume,
    SegmentationMask,
    base_grid,
    sample_trilinear,
)

_EDGE_WIDTH = 3.5  # voxels over which intensity transitions are spread


@dataclass(frozen=True)
class TorsionSpec:
    """Twist about an axis, linear in axial distance and clamped at ±half_height."""

    total_angle_deg: float
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    half_height: float = 1.0

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("torsion axis must have unit norm")
        if self.total_angle_deg < 0:
            raise ValueError("total angle must be non-negative")
        if self.half_height <= 0:
            raise ValueError("half_height must be positive")

    def angle_rad(self) -> float:
        return math.radians(self.total_angle_deg)


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and texture of a synthetic LV-like volume."""

    dims: Dims = (64, 64, 64)
    inner_radius: float = 9.0
    outer_radius: float = 16.0
    cavity_radius: float | None = None
    half_length: float = 21.0
    center: tuple[float, float, float] | None = None
    taper: float = 0.30
    asym_amp1: float = 0.10
    asym_amp2: float = 0.06
    asym_phase1: float = 0.0
    asym_phase2: float = 0.0
    texture: str = "angular_constant"
    noise_seed: int = 0
    noise_amplitude: float = 0.35
    noise_corr_length: float = 2.5

    def __post_init__(self):
        if self.inner_radius >= self.outer_radius:
            raise ValueError("inner radius must be smaller than outer radius")
        if self.texture not in ("angular_constant", "noise"):
            raise ValueError(f"unknown texture {self.texture!r}")

    @property
    def cavity(self) -> float:
        return self.inner_radius if self.cavity_radius is None else self.cavity_radius

    @property
    def centre(self) -> np.ndarray:
        if self.center is not None:
            return np.asarray(self.center, dtype=np.float64)
        return (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0

    @classmethod
    def default_for(cls, dims: Dims, seed: int | None = None, **overrides) -> "PhantomSpec":
        """Desk-scale geometry proportional to the grid, optionally jittered.

        A seed randomizes the azimuthal modulation phases and nudges the
        radii, so that repeated draws produce distinct but comparable shapes.
        """
        n = min(dims)
        spec = cls(
            dims=dims,
            inner_radius=0.14 * n,
            outer_radius=0.25 * n,
            half_length=0.33 * n,
            **overrides,
        )
        if seed is not None:
            rng = np.random.default_rng(seed)
            jitter = float(rng.uniform(-0.3, 0.3))
            spec = replace(
                spec,
                asym_phase1=float(rng.uniform(0.0, 2.0 * math.pi)),
                asym_phase2=float(rng.uniform(0.0, 2.0 * math.pi)),
                inner_radius=spec.inner_radius + jitter,
                outer_radius=spec.outer_radius + jitter,
                noise_seed=int(rng.integers(0, 2**31 - 1)),
            )
        return spec


def _cos_step(t: np.ndarray) -> np.ndarray:
    """C1 ramp from 0 to 1 over t in [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * t)


def _shape_fields(spec: PhantomSpec):
    cx, cy, cz = spec.centre
    nx, ny, nz = spec.dims
    x = np.arange(nx, dtype=np.float64)[:, None, None] - cx
    y = np.arange(ny, dtype=np.float64)[None, :, None] - cy
    z = np.arange(nz, dtype=np.float64)[None, None, :] - cz
    rho = np.sqrt(x * x + y * y + np.zeros_like(z))
    phi = np.arctan2(y, x) + np.zeros_like(z)
    za = z / spec.half_length + np.zeros_like(rho)
    s = np.sqrt(np.maximum(1.0 - spec.taper * za * za, 0.0))
    m = (
        1.0
        + spec.asym_amp1 * np.cos(phi - spec.asym_phase1)
        + spec.asym_amp2 * np.sin(2.0 * phi - spec.asym_phase2)
    )
    return rho, za, s, m


def generate_phantom(spec: PhantomSpec) -> tuple[ScalarVolume, SegmentationMask]:
    """Build the intensity volume and its segmentation.

    Raises SpecOutOfBounds when the shape (plus its smooth intensity
    margin) does not fit inside the grid.
    """
    centre = spec.centre
    m_max = 1.0 + abs(spec.asym_amp1) + abs(spec.asym_amp2)
    lateral = spec.outer_radius * m_max + _EDGE_WIDTH
    nx, ny, nz = spec.dims
    if (
        lateral > min(centre[0], nx - 1 - centre[0])
        or lateral > min(centre[1], ny - 1 - centre[1])
        or spec.half_length > min(centre[2], nz - 1 - centre[2])
    ):
        raise SpecOutOfBounds("phantom geometry exceeds the grid")

    rho, za, s, m = _shape_fields(spec)
    axial = np.abs(za) <= 1.0
    r_in = spec.inner_radius * s * m
    r_out = spec.outer_radius * s * m
    r_cav = spec.cavity * s * m

    labels = np.full(spec.dims, BACKGROUND, dtype=np.uint8)
    labels[axial & (rho >= r_in) & (rho <= r_out)] = MYOCARDIUM
    labels[axial & (rho < r_cav)] = CAVITY

    # axisymmetric intensity: a bright wall band as a function of (rho, z)
    w = _EDGE_WIDTH
    bg, cav_level, wall_level = 0.15, 0.40, 1.00
    rin_ax = spec.inner_radius * s
    rout_ax = spec.outer_radius * s
    up = _cos_step((rho - (rin_ax - w)) / w)
    down = _cos_step((rho - rout_ax) / w)
    radial = cav_level * (1.0 - up) + wall_level * up * (1.0 - down) + bg * up * down
    env = _cos_step((1.0 - np.abs(za)) * spec.half_length / w)
    intensity = bg + (radial - bg) * env

    if spec.texture == "noise":
        rng = np.random.default_rng(spec.noise_seed)
        noise = gaussian_filter(rng.standard_normal(spec.dims), spec.noise_corr_length)
        noise /= max(noise.std(), 1e-12)
        intensity = intensity + spec.noise_amplitude * noise

    return ScalarVolume(intensity), SegmentationMask(labels)


def _twist_angles(spec: TorsionSpec, points: np.ndarray):
    """Per-point rotation angle and the axial/radial split of (p - center)."""
    axis = np.asarray(spec.axis, dtype=np.float64)
    rel = points - np.asarray(spec.center, dtype=np.float64)
    a = rel @ axis
    radial = rel - a[..., None] * axis
    theta = spec.angle_rad() * np.clip(a / spec.half_height, -1.0, 1.0)
    return theta, a, radial, axis


def torsion_flow(spec: TorsionSpec, dims: Dims) -> FlowField:
    """Analytic displacement of the torsion map on a voxel grid.

    Every voxel rotates in-plane about the axis by an angle proportional
    to its (clamped) axial coordinate; the axial component is exactly zero.
    """
    pts = base_grid(dims)
    theta, _, radial, axis = _twist_angles(spec, pts)
    cross = np.cross(np.broadcast_to(axis, radial.shape), radial)
    disp = radial * (np.cos(theta) - 1.0)[..., None] + cross * np.sin(theta)[..., None]
    return FlowField(disp)


def torsion_displace(spec: TorsionSpec, points: np.ndarray) -> np.ndarray:
    """Forward-map arbitrary points through the torsion deformation."""
    theta, a, radial, axis = _twist_angles(spec, points)
    cross = np.cross(np.broadcast_to(axis, radial.shape), radial)
    rotated = radial * np.cos(theta)[..., None] + cross * np.sin(theta)[..., None]
    return np.asarray(spec.center) + a[..., None] * axis + rotated


def apply_deformation(
    vol: ScalarVolume, mask: SegmentationMask, spec: TorsionSpec
) -> tuple[ScalarVolume, SegmentationMask]:
    """Produce the deformed image/mask pair by backward resampling.

    The inverse map rotates by the negated angle (the twist angle depends
    only on the axial coordinate, which rotations preserve), so the
    analytic flow from :func:`torsion_flow` is the exact ground truth.
    Intensity is trilinearly resampled; labels use nearest neighbor.
    """
    if vol.dims != mask.dims:
        raise ValueError("volume and mask dims differ")
    pts = base_grid(vol.dims)
    theta, a, radial, axis = _twist_angles(spec, pts)
    cross = np.cross(np.broadcast_to(axis, radial.shape), radial)
    rotated = radial * np.cos(-theta)[..., None] + cross * np.sin(-theta)[..., None]
    src = np.asarray(spec.center) + a[..., None] * axis + rotated

    warped = sample_trilinear(vol.data, src)

    nx, ny, nz = vol.dims
    ix = np.clip(np.rint(src[..., 0]).astype(np.intp), 0, nx - 1)
    iy = np.clip(np.rint(src[..., 1]).astype(np.intp), 0, ny - 1)
    iz = np.clip(np.rint(src[..., 2]).astype(np.intp), 0, nz - 1)
    labels = mask.labels[ix, iy, iz]

    return ScalarVolume(warped, vol.spacing), SegmentationMask(labels, mask.spacing)


def make_pair(
    phantom: PhantomSpec,
    angle_deg: float,
    axial_offset: float = 0.0,
    half_height: float | None = None,
):
    """Generate one benchmark pair: systole, diastole, masks, and truth.

    The torsion axis is the phantom's long axis; ``axial_offset`` moves the
    zero-twist plane along it. Returns a dict with keys ``systole``,
    ``diastole``, ``mask_systole``, ``mask_diastole``, ``flow``, ``torsion``.
    """
    vol, mask = generate_phantom(phantom)
    centre = phantom.centre + np.array([0.0, 0.0, axial_offset])
    torsion = TorsionSpec(
        total_angle_deg=angle_deg,
        axis=(0.0, 0.0, 1.0),
        center=tuple(centre),
        half_height=phantom.half_length if half_height is None else half_height,
    )
    vol2, mask2 = apply_deformation(vol, mask, torsion)
    flow = torsion_flow(torsion, phantom.dims)
    return {
        "systole": vol,
        "diastole": vol2,
        "mask_systole": mask,
        "mask_diastole": mask2,
        "flow": flow,
        "torsion": torsion,
    }
