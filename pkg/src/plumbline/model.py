"""Anisotropic Harris distortion-correction model.

The correction maps a distorted pixel ``x`` to

    D(x) = r_hat * f(rho) * (1 + g(r_hat)) + c

with ``r = x - c``, ``rho = |r|``, ``f(rho) = rho / sqrt(1 + gamma rho^2)`` and
``g`` a cubic trigonometric polynomial written directly in ``r_hat``.

Every function here accepts either a single 2-vector or an ``(N, 2)`` array of
points and is vectorised over the leading axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# quarter-turn rotations used to move between normals and tangents
R90 = np.array([[0.0, 1.0], [-1.0, 0.0]])
R_90 = np.array([[0.0, -1.0], [1.0, 0.0]])


class DomainError(ValueError):
    """Raised when a point lies outside the region where the model is defined."""


@dataclass(frozen=True)
class DistortionParams:
    """Center ``c`` (px), Harris coefficient ``gamma`` (px^-2), anisotropy ``b``."""

    c: tuple[float, float]
    gamma: float = 0.0
    b: tuple[float, ...] = field(default=(0.0,) * 6)

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.c) != 2:
            raise ValueError("center must have two components")
        if len(self.b) != 6:
            raise ValueError("anisotropy needs exactly six coefficients")
        if not all(np.isfinite(v) for v in (*self.c, self.gamma, *self.b)):
            raise ValueError("parameters must be finite")

    @classmethod
    def identity(cls, center=(0.0, 0.0)) -> "DistortionParams":
        return cls(c=tuple(center))

    @property
    def is_identity(self) -> bool:
        return self.gamma == 0.0 and not any(self.b)

    def check_domain(self, rho_max: float) -> None:
        """Reject parameters for which ``f`` is undefined somewhere in ``(0, rho_max]``."""
        if 1.0 + self.gamma * rho_max**2 <= 0.0:
            raise DomainError(
                f"1 + gamma*rho^2 <= 0 within radius {rho_max:g} (gamma={self.gamma:g})"
            )

    def to_dict(self) -> dict:
        return {"c": list(self.c), "gamma": self.gamma, "b": list(self.b)}

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionParams":
        try:
            return cls(c=d["c"], gamma=d["gamma"], b=d.get("b", (0.0,) * 6))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed parameter object: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DistortionParams":
        return cls.from_dict(json.loads(text))


class Edgel(NamedTuple):
    """A single edge sample: position, unit normal and saliency weight."""

    position: np.ndarray
    normal: np.ndarray
    weight: float = 1.0


def harris_f(gamma, rho):
    """Radial correction ``rho / sqrt(1 + gamma rho^2)``."""
    rho = np.asarray(rho, dtype=float)
    q = 1.0 + gamma * rho * rho
    if np.any(q <= 0.0):
        raise DomainError("1 + gamma*rho^2 must be positive")
    out = rho / np.sqrt(q)
    return float(out) if out.ndim == 0 else out


def anisotropy_g(b, r_hat):
    """Angular modulation g evaluated on unit direction(s) ``r_hat``."""
    b = np.asarray(b, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    cos_t, sin_t = r_hat[..., 0], r_hat[..., 1]
    u = b[2] * sin_t + b[3] * cos_t
    w = b[4] * sin_t + b[5] * cos_t
    out = b[0] * sin_t + b[1] * cos_t + u * u + w * w * w
    return float(out) if np.ndim(out) == 0 else out


def anisotropy_grad(b, r_hat):
    """Partial derivatives of g with respect to (r_hat_1, r_hat_2), shape ``(..., 2)``."""
    b = np.asarray(b, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    cos_t, sin_t = r_hat[..., 0], r_hat[..., 1]
    u = b[2] * sin_t + b[3] * cos_t
    w = b[4] * sin_t + b[5] * cos_t
    d1 = b[1] + 2.0 * b[3] * u + 3.0 * b[5] * w * w
    d2 = b[0] + 2.0 * b[2] * u + 3.0 * b[4] * w * w
    return np.stack([d1, d2], axis=-1)


def _polar(p: DistortionParams, x):
    x = np.asarray(x, dtype=float)
    r = x - np.asarray(p.c)
    rho = np.hypot(r[..., 0], r[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        r_hat = r / rho[..., None]
    return x, r, rho, r_hat


def _radial_scale(p: DistortionParams, rho, r_hat):
    """Ratio |D(x) - c| / |x - c| and a mask of points where it is defined."""
    q = 1.0 + p.gamma * rho * rho
    valid = q > 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = (1.0 + anisotropy_g(p.b, r_hat)) / np.sqrt(q)
    scale = np.where(rho > 0.0, scale, 1.0)
    return scale, valid


def correct_point(p: DistortionParams, x, strict: bool = True):
    """Apply the correction D to one point or an ``(N, 2)`` array of points.

    The center maps to itself. With ``strict=False`` the result is paired with
    a boolean mask instead of raising on points outside the model's domain.
    """
    x, r, rho, r_hat = _polar(p, x)
    scale, valid = _radial_scale(p, rho, r_hat)
    if strict and not np.all(valid):
        raise DomainError("1 + gamma*rho^2 must be positive")
    # x + r*(s - 1) equals c + r*s but is exact when s == 1
    out = x + r * (scale - 1.0)[..., None]
    return out if strict else (out, valid)


def invert_point(p: DistortionParams, x_out, strict: bool = True):
    """Exact inverse of :func:`correct_point`.

    The map keeps every ray from the center fixed, so inversion reduces to a
    scalar problem per ray: undo the angular factor, then the closed-form
    Harris inverse ``rho = rho' / sqrt(1 - gamma rho'^2)``.
    """
    x_out, r, rho_out, r_hat = _polar(p, x_out)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = 1.0 + anisotropy_g(p.b, r_hat)
        rho_f = rho_out / k
        q = 1.0 - p.gamma * rho_f * rho_f
        valid = (rho_out == 0.0) | ((k > 0.0) & (q > 0.0))
        scale = 1.0 / (k * np.sqrt(q))
        scale = np.where(rho_out > 0.0, scale, 1.0)
        out = x_out + r * (scale - 1.0)[..., None]
    if strict and not np.all(valid):
        raise DomainError("point lies outside the invertible range of the model")
    return out if strict else (out, valid)


def jacobian(p: DistortionParams, x):
    """Analytic derivative dD/dx, shape ``(2, 2)`` or ``(N, 2, 2)``.

    Assembled from three terms: the change of direction, the change of the
    radial factor along the ray, and the change of the angular factor.
    """
    x, r, rho, r_hat = _polar(p, x)
    if np.any(rho == 0.0):
        raise DomainError("jacobian is singular at the distortion center")
    if p.is_identity:
        return np.broadcast_to(np.eye(2), rho.shape + (2, 2)).copy()
    q = 1.0 + p.gamma * rho * rho
    if np.any(q <= 0.0):
        raise DomainError("1 + gamma*rho^2 must be positive")
    r1, r2 = r_hat[..., 0], r_hat[..., 1]
    f = rho / np.sqrt(q)
    df = q**-1.5
    one_g = 1.0 + anisotropy_g(p.b, r_hat)

    # d r_hat / dx
    drh = np.empty(rho.shape + (2, 2))
    drh[..., 0, 0] = r2 * r2
    drh[..., 0, 1] = -r1 * r2
    drh[..., 1, 0] = -r1 * r2
    drh[..., 1, 1] = r1 * r1
    drh /= rho[..., None, None]

    dg = np.einsum("...i,...ij->...j", anisotropy_grad(p.b, r_hat), drh)
    outer_rr = r_hat[..., :, None] * r_hat[..., None, :]
    outer_rg = r_hat[..., :, None] * dg[..., None, :]
    return (
        drh * (f * one_g)[..., None, None]
        + outer_rr * (one_g * df)[..., None, None]
        + outer_rg * f[..., None, None]
    )


def transform_normals(p: DistortionParams, x, n):
    """Carry normals ``n`` at points ``x`` through the correction."""
    J = jacobian(p, x)
    A = R90 @ J @ R_90
    h = np.einsum("...ij,...j->...i", A, np.asarray(n, dtype=float))
    return h / np.linalg.norm(h, axis=-1, keepdims=True)


def transform_edgels(p: DistortionParams, positions, normals):
    """Vectorised edgel transform that drops rather than raises.

    Returns ``(positions, normals, valid)``; rows where the model is undefined
    (outside the Harris domain, exactly at the center, or where the angular
    factor ``1 + g`` is not positive) are flagged invalid and hold NaN.
    """
    positions = np.asarray(positions, dtype=float)
    normals = np.asarray(normals, dtype=float)
    pos, valid = correct_point(p, positions, strict=False)
    r = positions - np.asarray(p.c)
    rho = np.hypot(r[:, 0], r[:, 1])
    valid &= rho > 0.0
    # a non-positive angular factor folds the ray through the center
    with np.errstate(invalid="ignore", divide="ignore"):
        valid &= 1.0 + anisotropy_g(p.b, r / rho[:, None]) > 0.0
    nrm = np.full_like(normals, np.nan)
    if valid.any():
        nrm[valid] = transform_normals(p, positions[valid], normals[valid])
    pos[~valid] = np.nan
    return pos, nrm, valid


def transform_edgel(p: DistortionParams, e: Edgel) -> Edgel:
    """Correct an edgel's position and transport its normal through the Jacobian."""
    if p.is_identity:
        return e
    pos = correct_point(p, e.position)
    nrm = transform_normals(p, e.position, e.normal)
    return Edgel(pos, nrm, e.weight)
