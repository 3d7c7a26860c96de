"""Parametric deformations of point clouds.

Every deformation kind maps a parameter vector to a per-point displacement
field; adding the field to the cloud realizes the deformation. Certificates
are computed in this parameter space, so the flow is the single place where
geometry enters the pipeline.

All flows are evaluated in float64. For every kind except Gaussian noise the
deformation of an individual point can also be expressed as a 4x4 homogeneous
matrix (point-dependent for twist and taper); the two routes must agree, and
the matrix route is built from composed rotation/affine blocks rather than
the expanded flow expressions so the pair acts as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from .cloud import PointCloud


class ParameterArityError(ValueError):
    """Parameter vector length does not match the deformation kind."""


class NoMatrixFormError(ValueError):
    """The deformation kind has no homogeneous-matrix form."""


class DeformationKind(Enum):
    TRANSLATION = "translation"
    ROT_X = "rotx"
    ROT_Y = "roty"
    ROT_Z = "rotz"
    ROT_XZ = "rotxz"
    ROT_XYZ = "rotxyz"
    SHEAR_Z = "shearz"
    TWIST_Z = "twistz"
    TAPER_Z = "taperz"
    AFFINE = "affine"
    AFFINE_NT = "affine_nt"
    GAUSSIAN_NOISE = "gaussian_noise"


# Parameter-vector length per kind; Gaussian noise needs the cloud size.
_FIXED_DIM = {
    DeformationKind.TRANSLATION: 3,
    DeformationKind.ROT_X: 1,
    DeformationKind.ROT_Y: 1,
    DeformationKind.ROT_Z: 1,
    DeformationKind.ROT_XZ: 2,
    DeformationKind.ROT_XYZ: 3,
    DeformationKind.SHEAR_Z: 2,
    DeformationKind.TWIST_Z: 1,
    DeformationKind.TAPER_Z: 2,
    DeformationKind.AFFINE: 12,
    DeformationKind.AFFINE_NT: 9,
}


def param_dim(kind: DeformationKind, n_points: int | None = None) -> int:
    """Length of the parameter vector for `kind`.

    Gaussian noise is the one kind whose dimension depends on the cloud
    (three coordinates per point), so `n_points` is required there.
    """
    if kind is DeformationKind.GAUSSIAN_NOISE:
        if n_points is None:
            raise ParameterArityError("gaussian_noise parameter dimension needs the point count")
        if n_points < 1:
            raise ParameterArityError(f"point count must be >= 1, got {n_points}")
        return 3 * n_points
    return _FIXED_DIM[kind]


@dataclass(frozen=True)
class DeformationParams:
    """A deformation kind plus its parameter vector (float64, finite).

    For fixed-arity kinds the length is checked here; gaussian_noise only
    needs a positive multiple of 3 and is rechecked against the cloud at
    flow time.
    """

    kind: DeformationKind
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.isfinite(vals).all():
            raise ValueError("deformation parameters must be finite")
        if self.kind is DeformationKind.GAUSSIAN_NOISE:
            if vals.size < 3 or vals.size % 3 != 0:
                raise ParameterArityError(
                    f"gaussian_noise needs 3 parameters per point, got {vals.size}"
                )
        elif vals.size != _FIXED_DIM[self.kind]:
            raise ParameterArityError(
                f"{self.kind.value} takes {_FIXED_DIM[self.kind]} parameters, got {vals.size}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Uniform:
    """I.i.d. U[-scale, scale] per parameter coordinate; certifies an l1 radius."""

    scale: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.scale) or self.scale < 0:
            raise ValueError(f"scale must be finite and >= 0, got {self.scale}")

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        if self.scale == 0.0:
            return np.zeros(shape, dtype=np.float64)
        return rng.uniform(-self.scale, self.scale, shape)


@dataclass(frozen=True)
class Gaussian:
    """I.i.d. N(0, scale^2) per parameter coordinate; certifies an l2 radius."""

    scale: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.scale) or self.scale < 0:
            raise ValueError(f"scale must be finite and >= 0, got {self.scale}")

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, self.scale, shape) if self.scale else np.zeros(shape, np.float64)


Distribution = Union[Uniform, Gaussian]

_FAMILIES = {"uniform": Uniform, "gaussian": Gaussian}


def make_distribution(family: str, scale: float) -> Distribution:
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown distribution family {family!r} (expected uniform or gaussian)") from None
    return cls(scale)


def sample_params(
    kind: DeformationKind,
    distribution: Distribution,
    n_points: int,
    rng: np.random.Generator,
) -> DeformationParams:
    """Draw one parameter vector for `kind` from `distribution`."""
    dim = param_dim(kind, n_points)
    return DeformationParams(kind, distribution.sample(dim, rng))


def flow_many(kind: DeformationKind, params: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Displacement fields for a batch of parameter vectors.

    `params` is (B, d) and `points` is (N, 3); the result is (B, N, 3) with
    result[b] the flow of params[b] over the whole cloud. The expressions
    below are the expanded per-point forms; c_t/s_t abbreviate cos/sin of
    the angle named t.
    """
    params = np.asarray(params, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if params.ndim != 2:
        raise ValueError(f"expected (B, d) parameters, got shape {params.shape}")
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {points.shape}")
    n = points.shape[0]
    dim = param_dim(kind, n)
    if params.shape[1] != dim:
        raise ParameterArityError(
            f"{kind.value} on {n} points takes {dim} parameters, got {params.shape[1]}"
        )
    b = params.shape[0]
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    out = np.empty((b, n, 3), dtype=np.float64)

    if kind is DeformationKind.TRANSLATION:
        out[:] = params[:, None, :]

    elif kind is DeformationKind.ROT_X:
        ca, sa = np.cos(params[:, :1]), np.sin(params[:, :1])
        out[..., 0] = 0.0
        out[..., 1] = (ca - 1.0) * y - sa * z
        out[..., 2] = sa * y + (ca - 1.0) * z

    elif kind is DeformationKind.ROT_Y:
        cb, sb = np.cos(params[:, :1]), np.sin(params[:, :1])
        out[..., 0] = (cb - 1.0) * x + sb * z
        out[..., 1] = 0.0
        out[..., 2] = -sb * x + (cb - 1.0) * z

    elif kind is DeformationKind.ROT_Z:
        cg, sg = np.cos(params[:, :1]), np.sin(params[:, :1])
        out[..., 0] = (cg - 1.0) * x - sg * y
        out[..., 1] = sg * x + (cg - 1.0) * y
        out[..., 2] = 0.0

    elif kind is DeformationKind.ROT_XZ:
        ca, sa = np.cos(params[:, :1]), np.sin(params[:, :1])
        cg, sg = np.cos(params[:, 1:2]), np.sin(params[:, 1:2])
        out[..., 0] = (cg - 1.0) * x - sg * ca * y + sg * sa * z
        out[..., 1] = sg * x + (cg * ca - 1.0) * y - cg * sa * z
        out[..., 2] = sa * y + (ca - 1.0) * z

    elif kind is DeformationKind.ROT_XYZ:
        ca, sa = np.cos(params[:, :1]), np.sin(params[:, :1])
        cb, sb = np.cos(params[:, 1:2]), np.sin(params[:, 1:2])
        cg, sg = np.cos(params[:, 2:3]), np.sin(params[:, 2:3])
        out[..., 0] = (cg * cb - 1.0) * x + (cg * sb * sa - sg * ca) * y + (cg * sb * ca + sg * sa) * z
        out[..., 1] = sg * cb * x + (sg * sb * sa + cg * ca - 1.0) * y + (sg * sb * ca - cg * sa) * z
        out[..., 2] = -sb * x + cb * sa * y + (cb * ca - 1.0) * z

    elif kind is DeformationKind.SHEAR_Z:
        out[..., 0] = params[:, :1] * z
        out[..., 1] = params[:, 1:2] * z
        out[..., 2] = 0.0

    elif kind is DeformationKind.TWIST_Z:
        angle = params[:, :1] * z
        c, s = np.cos(angle), np.sin(angle)
        out[..., 0] = (c - 1.0) * x - s * y
        out[..., 1] = s * x + (c - 1.0) * y
        out[..., 2] = 0.0

    elif kind is DeformationKind.TAPER_Z:
        coef = 0.5 * params[:, :1] ** 2 + params[:, 1:2]
        out[..., 0] = coef * z * x
        out[..., 1] = coef * z * y
        out[..., 2] = 0.0

    elif kind is DeformationKind.AFFINE:
        mats = params.reshape(b, 3, 4)
        out[:] = np.einsum("bij,nj->bni", mats[:, :, :3], points)
        out += mats[:, None, :, 3]

    elif kind is DeformationKind.AFFINE_NT:
        mats = params.reshape(b, 3, 3)
        out[:] = np.einsum("bij,nj->bni", mats, points)

    elif kind is DeformationKind.GAUSSIAN_NOISE:
        out[:] = params.reshape(b, n, 3)

    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unhandled kind {kind}")
    return out


def flow(params: DeformationParams, cloud: PointCloud) -> np.ndarray:
    """Displacement field (N, 3) of one parameter vector over `cloud`."""
    return flow_many(params.kind, params.values[None, :], cloud.points)[0]


def apply_flow(cloud: PointCloud, field: np.ndarray) -> PointCloud:
    """Displace `cloud` by a precomputed (N, 3) field.

    The result is a plain cloud: deformations do not preserve normalization.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.shape != cloud.points.shape:
        raise ValueError(f"field shape {field.shape} != cloud shape {cloud.points.shape}")
    return PointCloud(cloud.points + field)


def deform(params: DeformationParams, cloud: PointCloud) -> PointCloud:
    return apply_flow(cloud, flow(params, cloud))


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(b: float) -> np.ndarray:
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(g: float) -> np.ndarray:
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def homogeneous_point_map(params: DeformationParams, point) -> np.ndarray:
    """The 4x4 homogeneous matrix moving `point` under the deformation.

    Twist and taper produce point-dependent matrices (the z coordinate
    enters the entries); every linear kind ignores `point`. Gaussian noise
    has no matrix form and is rejected.
    """
    point = np.asarray(point, dtype=np.float64).reshape(3)
    kind, v = params.kind, params.values
    mat = np.eye(4)
    if kind is DeformationKind.TRANSLATION:
        mat[:3, 3] = v
    elif kind is DeformationKind.ROT_X:
        mat[:3, :3] = _rot_x(v[0])
    elif kind is DeformationKind.ROT_Y:
        mat[:3, :3] = _rot_y(v[0])
    elif kind is DeformationKind.ROT_Z:
        mat[:3, :3] = _rot_z(v[0])
    elif kind is DeformationKind.ROT_XZ:
        mat[:3, :3] = _rot_z(v[1]) @ _rot_x(v[0])
    elif kind is DeformationKind.ROT_XYZ:
        mat[:3, :3] = _rot_z(v[2]) @ _rot_y(v[1]) @ _rot_x(v[0])
    elif kind is DeformationKind.SHEAR_Z:
        mat[0, 2] = v[0]
        mat[1, 2] = v[1]
    elif kind is DeformationKind.TWIST_Z:
        mat[:3, :3] = _rot_z(v[0] * point[2])
    elif kind is DeformationKind.TAPER_Z:
        scale = (0.5 * v[0] ** 2 + v[1]) * point[2] + 1.0
        mat[0, 0] = scale
        mat[1, 1] = scale
    elif kind is DeformationKind.AFFINE:
        mat[:3, :4] = v.reshape(3, 4)
        mat[:3, :3] += np.eye(3)
    elif kind is DeformationKind.AFFINE_NT:
        mat[:3, :3] = v.reshape(3, 3) + np.eye(3)
    else:
        raise NoMatrixFormError(f"{kind.value} has no homogeneous-matrix form")
    return mat


def apply_homogeneous(mat: np.ndarray, point) -> np.ndarray:
    """Move one point with a 4x4 homogeneous matrix (w kept at 1)."""
    point = np.asarray(point, dtype=np.float64).reshape(3)
    moved = mat @ np.append(point, 1.0)
    return moved[:3] / moved[3]
