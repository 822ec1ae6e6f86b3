"""Entropy cost and Monte-Carlo downhill-simplex (MCDH) calibration.

The optimiser works on a scaled vector ``[c1, c2, beta, d1..d6]`` with
``beta = 100 * gamma * rho_max**2`` and ``d_i = 1e5 * b_i`` so that every
coordinate has a comparable magnitude. ``rho_max`` is the distance from the
image origin to the image center.
"""

from __future__ import annotations

import csv
import logging
import math
import types
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .hough import DEFAULT_BINS, accumulate_angle, drain_entropy, entropy, hough_1d
from .model import DistortionParams, transform_edgels

log = logging.getLogger(__name__)

N_PARAMS = 9
BETA_SCALE = 100.0
ANISO_SCALE = 1e5
RADIAL_SLOTS = np.array([0, 1, 2], dtype=np.int64)
ALL_SLOTS = np.arange(N_PARAMS, dtype=np.int64)
# fraction of edgels that may leave the model's domain before a vector is infeasible
MAX_DROP_FRACTION = 0.5


class TooFewEdgelsError(ValueError):
    pass


def image_center(dims) -> np.ndarray:
    """Center of a ``(width, height)`` image in pixel coordinates."""
    w, h = dims
    return np.array([w / 2.0, h / 2.0])


def rho_max(dims) -> float:
    return float(np.linalg.norm(image_center(dims)))


def scale_params(p: DistortionParams, dims) -> np.ndarray:
    rm2 = rho_max(dims) ** 2
    return np.array([*p.c, BETA_SCALE * p.gamma * rm2, *(ANISO_SCALE * np.asarray(p.b))])


def unscale_params(v, dims) -> DistortionParams:
    v = np.asarray(v, dtype=float)
    rm2 = rho_max(dims) ** 2
    return DistortionParams(
        c=(v[0], v[1]), gamma=v[2] / (BETA_SCALE * rm2), b=tuple(v[3:] / ANISO_SCALE)
    )


def identity_vector(dims) -> np.ndarray:
    v = np.zeros(N_PARAMS)
    v[:2] = image_center(dims)
    return v


@dataclass
class OptimConfig:
    restarts: int = 120
    max_iters: int = 1000
    residual_tol: float = 1e-15
    rng_seed: int = 0
    center_sigma_fraction: float = 1.0 / 20.0
    beta_sigma: float = 10.0
    radial_only: bool = False
    simplex_step: float = 1.0
    min_edgels: int = 100
    # search box: |gamma| rho_max^2 <= beta_limit / 100, |d_i| <= aniso_limit,
    # center inside the image
    beta_limit: float = 100.0
    aniso_limit: float = 1000.0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be at least 1")
        if self.residual_tol <= 0 or self.simplex_step <= 0:
            raise ValueError("tolerances and step must be positive")
        if self.center_sigma_fraction < 0 or self.beta_sigma < 0:
            raise ValueError("starting-point spreads must be non-negative")

    @property
    def free_slots(self) -> np.ndarray:
        return RADIAL_SLOTS if self.radial_only else ALL_SLOTS

    def bounds(self, dims) -> tuple[np.ndarray, np.ndarray]:
        """Box on the scaled vector outside which the search sees ``inf``."""
        w, h = dims
        lo = np.array([0.0, 0.0, -self.beta_limit] + [-self.aniso_limit] * 6)
        hi = np.array([float(w), float(h), self.beta_limit] + [self.aniso_limit] * 6)
        return lo, hi


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------


def cost_reference(positions, normals, dims, v, n_bins: int = DEFAULT_BINS) -> float:
    """Entropy cost computed through the vectorised model functions.

    Slow but straightforward; :func:`cost` must agree with it.
    """
    p = unscale_params(v, dims)
    _, nrm, valid = transform_edgels(p, positions, normals)
    n = len(valid)
    kept = int(valid.sum())
    if 2 * (n - kept) > n or kept == 0:
        return math.inf
    return entropy(hough_1d(nrm[valid], n_bins))


@numba.njit(cache=True, nogil=True)
def _cost_kernel(v, args):
    pos, nrm, gamma_scale, hist, lo, hi = args[0], args[1], args[2], args[3], args[4], args[5]
    c1 = v[0]
    c2 = v[1]
    gamma = v[2] * gamma_scale
    b1 = v[3] * 1e-5
    b2 = v[4] * 1e-5
    b3 = v[5] * 1e-5
    b4 = v[6] * 1e-5
    b5 = v[7] * 1e-5
    b6 = v[8] * 1e-5
    n = pos.shape[0]
    kept = 0
    for i in range(n):
        r1 = pos[i, 0] - c1
        r2 = pos[i, 1] - c2
        rho = math.sqrt(r1 * r1 + r2 * r2)
        if rho == 0.0:
            continue
        q = 1.0 + gamma * rho * rho
        if q <= 0.0:
            continue
        u1 = r1 / rho
        u2 = r2 / rho
        s = 1.0 / math.sqrt(q)
        f = rho * s
        df = s * s * s
        a = b3 * u2 + b4 * u1
        w = b5 * u2 + b6 * u1
        og = 1.0 + b1 * u2 + b2 * u1 + a * a + w * w * w
        if og <= 0.0:
            continue
        gd1 = b2 + 2.0 * b4 * a + 3.0 * b6 * w * w
        gd2 = b1 + 2.0 * b3 * a + 3.0 * b5 * w * w
        # d r_hat / dx (symmetric)
        d11 = u2 * u2 / rho
        d12 = -u1 * u2 / rho
        d22 = u1 * u1 / rho
        dgx1 = gd1 * d11 + gd2 * d12
        dgx2 = gd1 * d12 + gd2 * d22
        fo = f * og
        go = og * df
        j11 = d11 * fo + u1 * u1 * go + u1 * dgx1 * f
        j12 = d12 * fo + u1 * u2 * go + u1 * dgx2 * f
        j21 = d12 * fo + u2 * u1 * go + u2 * dgx1 * f
        j22 = d22 * fo + u2 * u2 * go + u2 * dgx2 * f
        # normal -> tangent, through J, back to normal
        t1 = -nrm[i, 1]
        t2 = nrm[i, 0]
        h1 = j21 * t1 + j22 * t2
        h2 = -(j11 * t1 + j12 * t2)
        if h1 == 0.0 and h2 == 0.0:
            continue
        theta = math.atan2(h2, h1)
        if theta < 0.0:
            theta += math.pi
        if theta >= math.pi:
            theta -= math.pi
        accumulate_angle(hist, theta, lo, hi, kept)
        kept += 1
    c = drain_entropy(hist, lo, hi, kept)
    if 2 * (n - kept) > n:
        return math.inf
    return c


@numba.njit(cache=True, nogil=True)
def _bounded_cost(v, args):
    lo, hi = args[6], args[7]
    for i in range(v.shape[0]):
        if v[i] < lo[i] or v[i] > hi[i]:
            return math.inf
    return _cost_kernel(v, args)


def _kernel_args(positions, normals, dims, n_bins):
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    nrm = np.ascontiguousarray(normals, dtype=np.float64)
    gamma_scale = 1.0 / (BETA_SCALE * rho_max(dims) ** 2)
    return pos, nrm, gamma_scale, n_bins


def cost(positions, normals, dims, v, n_bins: int = DEFAULT_BINS) -> float:
    """Hough entropy (bits) of the edgels after correction by scaled vector ``v``.

    Returns ``inf`` when more than half the edgels fall outside the model's domain.
    """
    pos, nrm, gs, nb = _kernel_args(positions, normals, dims, n_bins)
    if len(pos) == 0:
        raise ValueError("cost needs at least one edgel")
    n = len(pos)
    args = (pos, nrm, gs, np.zeros(nb), np.empty(n, np.int64), np.empty(n, np.int64))
    return float(_cost_kernel(np.asarray(v, dtype=np.float64), args))


# ---------------------------------------------------------------------------
# downhill simplex
# ---------------------------------------------------------------------------


def _simplex_core(args, x0, free, step, max_iters, tol):
    # Written in the numba-compatible subset. The objective is the module
    # global ``_objective``: compiled below against the entropy kernel, and
    # rebound to a plain-Python shim for arbitrary callables.
    f = _objective
    n = free.shape[0]
    m = n + 1
    dim = x0.shape[0]
    sim = np.empty((m, dim))
    fv = np.empty(m)
    for i in range(m):
        sim[i, :] = x0
    for j in range(n):
        sim[j + 1, free[j]] += step
    for i in range(m):
        fv[i] = f(sim[i], args)
    order = np.arange(m)
    cen = np.empty(dim)
    xr = np.empty(dim)
    xe = np.empty(dim)
    xc = np.empty(dim)
    it = 0
    while True:
        # stable insertion sort of vertex indices by value
        for i in range(1, m):
            k = order[i]
            j = i - 1
            while j >= 0 and fv[order[j]] > fv[k]:
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = k
        ib = order[0]
        iw = order[m - 1]
        isw = order[m - 2]
        dist = 0.0
        nb = 0.0
        for d in range(dim):
            diff = sim[ib, d] - sim[iw, d]
            dist += diff * diff
            nb += sim[ib, d] * sim[ib, d]
        if dist == 0.0:
            resid = 0.0
        elif nb == 0.0:
            resid = math.sqrt(dist)
        else:
            resid = math.sqrt(dist / nb)
        if resid < tol or it >= max_iters:
            break
        it += 1

        cen[:] = 0.0
        for i in range(m):
            if i != iw:
                cen += sim[i]
        cen /= n
        xr[:] = 2.0 * cen - sim[iw]
        fr = f(xr, args)
        if fr < fv[ib]:
            xe[:] = 3.0 * cen - 2.0 * sim[iw]
            fe = f(xe, args)
            if fe < fr:
                sim[iw, :] = xe
                fv[iw] = fe
            else:
                sim[iw, :] = xr
                fv[iw] = fr
            continue
        if fr < fv[isw]:
            sim[iw, :] = xr
            fv[iw] = fr
            continue
        if fr < fv[iw]:
            xc[:] = 0.5 * (cen + xr)
            fc = f(xc, args)
            accept = fc <= fr
        else:
            xc[:] = 0.5 * (cen + sim[iw])
            fc = f(xc, args)
            accept = fc < fv[iw]
        if accept:
            sim[iw, :] = xc
            fv[iw] = fc
            continue
        for i in range(m):
            if i != ib:
                sim[i, :] = sim[ib] + 0.5 * (sim[i] - sim[ib])
                fv[i] = f(sim[i], args)
    return sim[ib].copy(), fv[ib], it


_objective = _bounded_cost
_simplex_jit = numba.njit(cache=True, nogil=True)(_simplex_core)


def _call_plain(x, f):
    return f(x)


_simplex_py = types.FunctionType(
    _simplex_core.__code__, {**globals(), "_objective": _call_plain}, "_simplex_py"
)


def downhill_simplex(f, x0, max_iters: int = 1000, tol: float = 1e-15,
                     step: float = 1.0, free=None):
    """Nelder-Mead minimisation of ``f`` starting from ``x0``.

    The initial simplex is ``x0`` plus one vertex offset by ``step`` along each
    free coordinate. Iteration stops when the relative distance between the
    best and worst vertices, ``|s_best - s_worst| / |s_best|``, drops below
    ``tol`` or after ``max_iters`` iterations.

    Args:
        f: Scalar objective of a 1-D array; may return ``inf``.
        x0: Starting point.
        free: Indices of the coordinates to optimise; all by default.

    Returns:
        ``(x_best, f_best, iterations)``.
    """
    x0 = np.array(x0, dtype=float)
    free = np.arange(len(x0)) if free is None else np.asarray(free, dtype=np.int64)
    x, fx, it = _simplex_py(f, x0, free, float(step), int(max_iters), float(tol))
    return x, float(fx), int(it)


@numba.njit(cache=True, nogil=True)
def _restart(x0, free, pos, nrm, gamma_scale, n_bins, lo_b, hi_b, step, max_iters, tol):
    n = pos.shape[0]
    args = (pos, nrm, gamma_scale, np.zeros(n_bins), np.empty(n, np.int64),
            np.empty(n, np.int64), lo_b, hi_b)
    return _simplex_jit(args, x0, free, step, max_iters, tol)


# ---------------------------------------------------------------------------
# MCDH
# ---------------------------------------------------------------------------


@dataclass
class RestartRecord:
    index: int
    iterations: int
    cost: float
    vector: np.ndarray


@dataclass
class CalibrationResult:
    params: DistortionParams
    cost: float
    identity_cost: float
    n_edgels: int
    trace: list[RestartRecord] = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["restart", "iterations", "cost", "c1", "c2", "beta",
                        "d1", "d2", "d3", "d4", "d5", "d6"])
            for rec in self.trace:
                w.writerow([rec.index, rec.iterations, repr(rec.cost),
                            *(repr(float(x)) for x in rec.vector)])


def starting_points(dims, cfg: OptimConfig) -> np.ndarray:
    """Random starting vectors; restart ``k`` draws from its own stream ``(seed, k)``."""
    center = image_center(dims)
    sd_c = cfg.center_sigma_fraction * np.linalg.norm(center)
    starts = np.zeros((cfg.restarts, N_PARAMS))
    for k in range(cfg.restarts):
        rng = np.random.default_rng([cfg.rng_seed, k])
        starts[k, :2] = rng.normal(center, sd_c)
        starts[k, 2] = rng.normal(0.0, cfg.beta_sigma)
    return starts


def mcdh_calibrate(positions, normals, dims, cfg: OptimConfig | None = None,
                   n_bins: int = DEFAULT_BINS, threads: int = 1) -> CalibrationResult:
    """Minimise Hough entropy from ``cfg.restarts`` random starts and keep the best.

    Falls back to the identity correction if nothing beats it.
    """
    cfg = cfg or OptimConfig()
    pos, nrm, gs, nb = _kernel_args(positions, normals, dims, n_bins)
    if len(pos) < cfg.min_edgels:
        raise TooFewEdgelsError(
            f"{len(pos)} edgels supplied, calibration needs at least {cfg.min_edgels}"
        )
    starts = starting_points(dims, cfg)
    free = cfg.free_slots
    lo_b, hi_b = cfg.bounds(dims)

    def run(k):
        x, fx, it = _restart(starts[k], free, pos, nrm, gs, nb, lo_b, hi_b, float(cfg.simplex_step),
                             int(cfg.max_iters), float(cfg.residual_tol))
        return RestartRecord(k, int(it), float(fx), x)

    # restarts are independent; results are gathered in restart order
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trace = list(pool.map(run, range(cfg.restarts)))
    else:
        trace = [run(k) for k in range(cfg.restarts)]
    xs = np.array([rec.vector for rec in trace])
    fs = np.array([rec.cost for rec in trace])
    # argmin returns the first minimum: ties go to the lowest restart index
    k_best = int(np.argmin(fs))
    v_id = identity_vector(dims)
    c_id = cost(pos, nrm, dims, v_id, nb)
    best_cost = float(fs[k_best])
    if not best_cost <= c_id:
        log.info("no restart beat the identity (%.6g >= %.6g)", best_cost, c_id)
        v_best, best_cost = v_id, c_id
    else:
        v_best = xs[k_best]
    return CalibrationResult(unscale_params(v_best, dims), best_cost, c_id, len(pos), trace)
