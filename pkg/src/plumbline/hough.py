"""1-D angular Hough histogram of edgel normals and its entropy.

Orientations live on [0, pi): a line's two normal signs describe the same
orientation. Each edgel casts one unit of mass, split linearly between the two
nearest bins so the entropy varies continuously with the edgel angles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

DEFAULT_BINS = 360


@dataclass
class OrientationHistogram:
    bins: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def total(self) -> float:
        return float(self.bins.sum())

    def normalized(self) -> np.ndarray:
        total = self.total
        if total <= 0.0:
            raise ValueError("histogram has no mass")
        return self.bins / total

    def bin_centers(self) -> np.ndarray:
        return np.arange(self.n_bins) * (np.pi / self.n_bins)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_index", "theta_center_radians", "mass"])
            for i, (t, m) in enumerate(zip(self.bin_centers(), self.bins)):
                w.writerow([i, repr(float(t)), repr(float(m))])


def orientation(normals) -> np.ndarray:
    """Angle of each normal reduced to [0, pi)."""
    normals = np.asarray(normals, dtype=float).reshape(-1, 2)
    theta = np.mod(np.arctan2(normals[:, 1], normals[:, 0]), np.pi)
    # mod can round up to exactly pi for tiny negative angles
    theta[theta >= np.pi] = 0.0
    return theta


def hough_1d(edgels, n_bins: int = DEFAULT_BINS) -> OrientationHistogram:
    """Accumulate unit votes for an :class:`EdgelSet` or an ``(N, 2)`` normal array."""
    normals = getattr(edgels, "normals", edgels)
    if n_bins < 2:
        raise ValueError("need at least two bins")
    u = orientation(normals) * (n_bins / np.pi)
    lo = np.floor(u)
    frac = u - lo
    lo = lo.astype(np.int64) % n_bins
    hi = (lo + 1) % n_bins
    bins = np.zeros(n_bins)
    # add.at keeps the given order, so sums are reproducible
    np.add.at(bins, lo, 1.0 - frac)
    np.add.at(bins, hi, frac)
    return OrientationHistogram(bins)


def entropy(h: OrientationHistogram) -> float:
    """Shannon entropy of the normalised histogram, in bits.

    Evaluated as ``log2(T) - sum(h log2 h) / T`` with ``T`` the total mass, the
    same form the optimiser's kernel uses. A single occupied bin gives exactly
    0 and unit mass in every bin exactly ``log2(B)``.
    """
    total = h.total
    if total <= 0.0:
        raise ValueError("histogram has no mass")
    m = h.bins[h.bins > 0.0]
    if len(m) == 1:
        return 0.0
    c = math.log2(total) - float(np.sum(m * np.log2(m))) / total
    # rounding can step just outside the mathematical range
    return min(max(c, 0.0), math.log2(h.n_bins))


@numba.njit(cache=True, nogil=True)
def accumulate_angle(hist, theta, lo_out, hi_out, k):
    """Add one interpolated vote at angle ``theta`` in [0, pi) and record its bins."""
    n_bins = hist.shape[0]
    u = theta * (n_bins / math.pi)
    lo = math.floor(u)
    frac = u - lo
    ilo = int(lo) % n_bins
    ihi = (ilo + 1) % n_bins
    hist[ilo] += 1.0 - frac
    hist[ihi] += frac
    lo_out[k] = ilo
    hi_out[k] = ihi


@numba.njit(cache=True, nogil=True)
def drain_entropy(hist, lo_idx, hi_idx, count):
    """Entropy of the first ``count`` recorded votes; zeroes the touched bins.

    Touching only the recorded bins keeps the cost proportional to the number
    of edgels instead of the number of bins, and leaves ``hist`` clean for the
    next evaluation.
    """
    total = 0.0
    acc = 0.0
    for k in range(count):
        for b in (lo_idx[k], hi_idx[k]):
            m = hist[b]
            if m > 0.0:
                total += m
                acc += m * math.log2(m)
                hist[b] = 0.0
            elif m != 0.0:
                hist[b] = 0.0
    if total <= 0.0:
        return math.inf
    return math.log2(total) - acc / total
