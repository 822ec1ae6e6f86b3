"""Salient edgel extraction by stick tensor voting.

Images are 2-D float arrays indexed ``[row, col]`` with values in [0, 1].
Edgel positions use ``(x, y) = (col, row)`` pixel coordinates.

Pipeline: finite-difference gradient, stick votes cast in proportion to the
gradient magnitude, edge saliency ``phi = lambda_max - e * lambda_min``,
threshold at ``phi > 0``, then an equal quota of edgels per grid cell.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np


# curvature penalty kappa = CURVATURE_WEIGHT * sigma^2, i.e. exp(-16 k^2):
# near-field votes along circles of radius ~1 px would otherwise swamp the
# two-pixel-wide gradient band of a real edge
CURVATURE_WEIGHT = 16.0


@dataclass
class ExtractionConfig:
    sigma_vote: float = 6.0
    e_saliency: float = 2.0
    target_edgels: int = 100_000
    grid_cells: int = 16
    rng_seed: int = 0
    # pixels weaker than this never become edgels (they still vote)
    min_gradient: float = 0.02
    # border pixels see one-sided gradients and truncated votes; they vote but
    # are never kept
    border_margin: int = 10

    def __post_init__(self):
        if self.sigma_vote <= 0 or self.e_saliency <= 0:
            raise ValueError("sigma_vote and e_saliency must be positive")
        if self.grid_cells < 1 or self.target_edgels < self.grid_cells**2:
            raise ValueError("target_edgels must be at least the number of grid cells")
        if self.min_gradient < 0 or self.border_margin < 0:
            raise ValueError("min_gradient and border_margin must be non-negative")

    @property
    def quota(self) -> int:
        return -(-self.target_edgels // self.grid_cells**2)


@dataclass
class EdgelSet:
    """Parallel arrays of edgel positions ``(N, 2)``, unit normals ``(N, 2)`` and weights."""

    positions: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not len(self.positions) == len(self.normals) == len(self.weights):
            raise ValueError("positions, normals and weights must have equal length")

    def __len__(self):
        return len(self.positions)

    @classmethod
    def empty(cls) -> "EdgelSet":
        return cls(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))

    @classmethod
    def concatenate(cls, sets) -> "EdgelSet":
        sets = list(sets)
        if not sets:
            return cls.empty()
        return cls(np.concatenate([s.positions for s in sets]),
                   np.concatenate([s.normals for s in sets]),
                   np.concatenate([s.weights for s in sets]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "nx", "ny", "weight"])
            for (x, y), (nx, ny), wt in zip(self.positions, self.normals, self.weights):
                w.writerow([repr(float(v)) for v in (x, y, nx, ny, wt)])

    @classmethod
    def from_csv(cls, path) -> "EdgelSet":
        with open(path) as fh:
            rows = fh.read().splitlines()[1:]
        if not any(r.strip() for r in rows):
            return cls.empty()
        data = np.loadtxt(rows, delimiter=",", ndmin=2)
        return cls(data[:, 0:2], data[:, 2:4], data[:, 4])


def gradient(img):
    """Central differences inside, one-sided at the borders.

    Returns ``(gx, gy)``, the derivatives along columns and rows.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ValueError("gradient needs a 2-D image of at least 3x3 pixels")
    gy, gx = np.gradient(img)
    return gx, gy


def vote_offsets(sigma: float) -> np.ndarray:
    """Integer ``(dx, dy)`` offsets within the 3-sigma voting disc, row-major."""
    r = 3.0 * sigma
    k = int(math.floor(r))
    dy, dx = np.mgrid[-k:k + 1, -k:k + 1]
    inside = dx * dx + dy * dy <= r * r
    return np.column_stack([dx[inside], dy[inside]]).astype(np.int64)


@numba.njit(cache=True, nogil=True)
def stick_vote(dx, dy, nx, ny, sigma, kappa):
    """Tensor ``(t11, t12, t22)`` cast by a unit stick with normal ``(nx, ny)``
    to a receiver at offset ``(dx, dy)``.

    The vote follows the circle tangent to the voter that passes through the
    receiver: its strength decays with arc length and curvature, its normal is
    the circle's normal at the receiver. Receivers more than 45 degrees off the
    voter's tangent get nothing.
    """
    a = -ny * dx + nx * dy  # along tangent
    b = nx * dx + ny * dy  # along normal
    l2 = a * a + b * b
    if l2 == 0.0:
        return nx * nx, nx * ny, ny * ny
    if abs(b) > abs(a):
        return 0.0, 0.0, 0.0
    tx = -ny
    ty = nx
    if a < 0.0:
        a = -a
        tx = -tx
        ty = -ty
    l = math.sqrt(l2)
    theta = math.atan2(b, a)
    if theta == 0.0:
        s = l
        k = 0.0
    else:
        st = math.sin(theta)
        s = theta * l / st
        k = 2.0 * st / l
    w = math.exp(-(s * s + kappa * k * k) / (sigma * sigma))
    s2 = math.sin(2.0 * theta)
    c2 = math.cos(2.0 * theta)
    vx = -s2 * tx + c2 * nx
    vy = -s2 * ty + c2 * ny
    return w * vx * vx, w * vx * vy, w * vy * vy


@numba.njit(cache=True, nogil=True)
def _vote_rows(mag, nxs, nys, offsets, sigma, kappa, receivers, row0, row1, out):
    h, w = mag.shape
    for y in range(row0, row1):
        for x in range(w):
            if not receivers[y, x]:
                continue
            t11 = 0.0
            t12 = 0.0
            t22 = 0.0
            for j in range(offsets.shape[0]):
                dx = offsets[j, 0]
                dy = offsets[j, 1]
                vx = x - dx
                vy = y - dy
                if vx < 0 or vy < 0 or vx >= w or vy >= h:
                    continue
                m = mag[vy, vx]
                if m == 0.0:
                    continue
                a, b, c = stick_vote(float(dx), float(dy), nxs[vy, vx], nys[vy, vx], sigma, kappa)
                t11 += m * a
                t12 += m * b
                t22 += m * c
            out[y, x, 0] = t11
            out[y, x, 1] = t12
            out[y, x, 2] = t22


def tensor_vote(gx, gy, sigma: float, receivers=None, threads: int = 1) -> np.ndarray:
    """Accumulate stick votes from every pixel with a nonzero gradient.

    Args:
        gx, gy: Gradient components.
        sigma: Kernel scale in pixels; votes reach ``3 * sigma``.
        receivers: Optional boolean mask; tensors are only computed there.
        threads: Worker threads. Each receiver sums its votes in a fixed
            order, so the result does not depend on this.

    Returns:
        ``(H, W, 3)`` array of ``(t11, t12, t22)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    gx = np.asarray(gx, dtype=float)
    gy = np.asarray(gy, dtype=float)
    mag = np.hypot(gx, gy)
    with np.errstate(invalid="ignore", divide="ignore"):
        nx = np.where(mag > 0, gx / mag, 0.0)
        ny = np.where(mag > 0, gy / mag, 0.0)
    if receivers is None:
        receivers = np.ones(mag.shape, bool)
    out = np.zeros(mag.shape + (3,))
    offsets = vote_offsets(sigma)
    kappa = CURVATURE_WEIGHT * sigma * sigma
    h = mag.shape[0]
    if threads <= 1:
        _vote_rows(mag, nx, ny, offsets, float(sigma), kappa, receivers, 0, h, out)
    else:
        edges = np.linspace(0, h, 4 * threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            jobs = [pool.submit(_vote_rows, mag, nx, ny, offsets, float(sigma), kappa,
                                receivers, int(r0), int(r1), out)
                    for r0, r1 in zip(edges[:-1], edges[1:]) if r1 > r0]
            for job in jobs:
                job.result()
    return out


def saliency_and_normals(tensors, e: float = 2.0):
    """Edge saliency and leading-eigenvector normal of each 2x2 tensor.

    Normals are signed so that ``nx > 0``, or ``ny >= 0`` when ``nx == 0``.
    A zero tensor gets saliency 0 and normal ``(1, 0)``.
    """
    if e <= 0:
        raise ValueError("e must be positive")
    t = np.asarray(tensors, dtype=float)
    t11, t12, t22 = t[..., 0], t[..., 1], t[..., 2]
    half_tr = 0.5 * (t11 + t22)
    rad = np.hypot(0.5 * (t11 - t22), t12)
    lam_max = half_tr + rad
    lam_min = half_tr - rad
    phi = lam_max - e * lam_min
    ang = 0.5 * np.arctan2(2.0 * t12, t11 - t22)
    nrm = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    flip = (nrm[..., 0] < 0) | ((nrm[..., 0] == 0) & (nrm[..., 1] < 0))
    nrm[flip] *= -1.0
    return phi, nrm


def extract_edgels(img, cfg: ExtractionConfig | None = None, threads: int = 1) -> EdgelSet:
    """Salient edgels of ``img``, at most ``cfg.quota`` per grid cell.

    Edgels sit at integer pixel centers and carry their saliency as weight.
    Returns an empty set when nothing passes the threshold.
    """
    cfg = cfg or ExtractionConfig()
    img = np.asarray(img, dtype=float)
    gx, gy = gradient(img)
    mag = np.hypot(gx, gy)
    candidates = (mag > 0) & (mag >= cfg.min_gradient)
    m = cfg.border_margin
    if m:
        candidates[:m] = candidates[-m:] = False
        candidates[:, :m] = candidates[:, -m:] = False
    tensors = tensor_vote(gx, gy, cfg.sigma_vote, receivers=candidates, threads=threads)
    phi, nrm = saliency_and_normals(tensors, cfg.e_saliency)
    keep = candidates & (phi > 0)
    rows, cols = np.nonzero(keep)
    if len(rows) == 0:
        return EdgelSet.empty()

    h, w = img.shape
    g = cfg.grid_cells
    cell = (rows * g // h) * g + (cols * g // w)
    # stable sort: within a cell pixels stay in row-major order
    order = np.argsort(cell, kind="stable")
    cell_sorted = cell[order]
    starts = np.searchsorted(cell_sorted, np.arange(g * g))
    ends = np.searchsorted(cell_sorted, np.arange(g * g), side="right")
    rng = np.random.default_rng(cfg.rng_seed)
    chosen = []
    for s, t in zip(starts, ends):
        idx = order[s:t]
        if len(idx) > cfg.quota:
            idx = idx[np.sort(rng.choice(len(idx), cfg.quota, replace=False))]
        chosen.append(idx)
    sel = np.concatenate(chosen)
    r, c = rows[sel], cols[sel]
    return EdgelSet(np.column_stack([c, r]).astype(float), nrm[r, c], phi[r, c])
