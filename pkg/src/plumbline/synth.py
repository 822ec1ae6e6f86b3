"""Synthetic straight-line scenes and seeded parameter-recovery studies.

A scene is a set of edgels sampled on a few straight lines, pushed through a
barrel distortion, optionally contaminated by clutter edgels that belong to
no line. Studies calibrate many such scenes and summarise how well the
distortion coefficient is recovered.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import DistortionParams, correct_point, transform_normals
from .optim import CalibrationResult, OptimConfig, TooFewEdgelsError, mcdh_calibrate

log = logging.getLogger(__name__)

CLUTTER_KINDS = ("uncorrelated_points", "correlated_ellipses")
MAX_ATTEMPTS = 100_000
# coarser than the image default: 50-edgel scenes leave most of 360 bins empty
STUDY_BINS = 180


class SceneError(RuntimeError):
    pass


@dataclass
class SceneConfig:
    size: int = 250
    n_lines: int = 5
    pts_per_line: int = 10
    center_exclusion: float = 60.0
    gamma_true: float = 1e-5
    noise_fraction: float = 0.0
    clutter_kind: str = "uncorrelated_points"
    orientation_noise_sigma: float = 0.01
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ValueError("noise_fraction must lie in [0, 1)")
        if self.clutter_kind not in CLUTTER_KINDS:
            raise ValueError(f"clutter_kind must be one of {CLUTTER_KINDS}")
        if self.size <= 0 or self.n_lines < 1 or self.pts_per_line < 2:
            raise ValueError("scene needs a positive size, >=1 line and >=2 points per line")
        if self.center_exclusion < 0 or self.orientation_noise_sigma < 0:
            raise ValueError("exclusion radius and orientation noise must be non-negative")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.size / 2.0, self.size / 2.0])

    @property
    def dims(self) -> tuple[int, int]:
        return (self.size, self.size)


@dataclass
class Scene:
    positions: np.ndarray
    normals: np.ndarray
    is_line: np.ndarray
    # correction that undoes the applied distortion
    ground_truth: DistortionParams
    line_ids: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.positions)


def _clip_line(center, angle, offset, size):
    """Segment of the line ``(x - center) . n = offset`` inside ``[0, size]^2``."""
    n = np.array([np.cos(angle), np.sin(angle)])
    t = np.array([-n[1], n[0]])
    p0 = center + offset * n
    lo, hi = -np.inf, np.inf
    for k in range(2):
        if abs(t[k]) < 1e-12:
            if not 0.0 <= p0[k] <= size:
                return None
            continue
        a = (0.0 - p0[k]) / t[k]
        b = (size - p0[k]) / t[k]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if hi <= lo:
        return None
    return p0 + lo * t, p0 + hi * t, n


def _sample_lines(cfg: SceneConfig, rng, distortion):
    center = cfg.center
    reach = cfg.size / np.sqrt(2.0)
    pos, nrm, ids = [], [], []
    spacings = []
    attempts = 0
    while len(pos) < cfg.n_lines:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise SceneError("could not place lines outside the exclusion zone")
        seg = _clip_line(center, rng.uniform(0.0, np.pi), rng.uniform(-reach, reach), cfg.size)
        if seg is None:
            continue
        a, b, n = seg
        s = (np.arange(cfg.pts_per_line) + 0.5) / cfg.pts_per_line
        pts = a + s[:, None] * (b - a)
        moved = correct_point(distortion, pts)
        if np.min(np.linalg.norm(moved - center, axis=1)) < cfg.center_exclusion:
            continue
        pos.append(pts)
        nrm.append(np.tile(n, (cfg.pts_per_line, 1)))
        ids.append(np.full(cfg.pts_per_line, len(ids)))
        spacings.append(np.linalg.norm(b - a) / cfg.pts_per_line)
    return np.concatenate(pos), np.concatenate(nrm), np.concatenate(ids), float(np.mean(spacings))


def _uniform_clutter(cfg: SceneConfig, rng, count):
    pts = np.empty((0, 2))
    attempts = 0
    while len(pts) < count:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise SceneError("could not place clutter outside the exclusion zone")
        cand = rng.uniform(0.0, cfg.size, (count, 2))
        keep = np.linalg.norm(cand - cfg.center, axis=1) >= cfg.center_exclusion
        pts = np.concatenate([pts, cand[keep]])[:count]
    ang = rng.uniform(0.0, np.pi, count)
    return pts, np.column_stack([np.cos(ang), np.sin(ang)])


def _ellipse_clutter(cfg: SceneConfig, rng, count, spacing):
    pos, nrm = [], []
    have = 0
    attempts = 0
    while have < count:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise SceneError("could not place clutter ellipses inside the image")
        ctr = rng.uniform(0.0, cfg.size, 2)
        ax = rng.uniform(10.0, cfg.size / 3.0, 2)
        rot = rng.uniform(0.0, np.pi)
        t = np.linspace(0.0, 2.0 * np.pi, 2049)
        local = np.column_stack([ax[0] * np.cos(t), ax[1] * np.sin(t)])
        seg = np.linalg.norm(np.diff(local, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        marks = np.arange(rng.uniform(0.0, spacing), arc[-1], spacing)
        tt = np.interp(marks, arc, t)
        R = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
        p = np.column_stack([ax[0] * np.cos(tt), ax[1] * np.sin(tt)]) @ R.T + ctr
        # outward normal of the axis-aligned ellipse, then rotated
        n = np.column_stack([ax[1] * np.cos(tt), ax[0] * np.sin(tt)]) @ R.T
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        inside = np.all((p >= 0.0) & (p <= cfg.size), axis=1)
        p, n = p[inside][: count - have], n[inside][: count - have]
        pos.append(p)
        nrm.append(n)
        have += len(p)
    return np.concatenate(pos), np.concatenate(nrm)


def clutter_count(n_line: int, noise_fraction: float) -> int:
    """Clutter edgels needed so they make up ``noise_fraction`` of the total."""
    return int(round(noise_fraction * n_line / (1.0 - noise_fraction)))


def generate_scene(cfg: SceneConfig) -> Scene:
    """Sample a distorted straight-line scene; deterministic for a given ``cfg``."""
    rng = np.random.default_rng(cfg.rng_seed)
    distortion = DistortionParams(c=tuple(cfg.center), gamma=cfg.gamma_true)
    pts, nrm, ids, spacing = _sample_lines(cfg, rng, distortion)
    ang = np.arctan2(nrm[:, 1], nrm[:, 0]) + rng.normal(0.0, 1.0, len(nrm)) * cfg.orientation_noise_sigma
    nrm = np.column_stack([np.cos(ang), np.sin(ang)])
    line_pos = correct_point(distortion, pts)
    line_nrm = transform_normals(distortion, pts, nrm)

    n_clutter = clutter_count(len(pts), cfg.noise_fraction)
    if n_clutter == 0:
        cpos, cnrm = np.empty((0, 2)), np.empty((0, 2))
    elif cfg.clutter_kind == "uncorrelated_points":
        cpos, cnrm = _uniform_clutter(cfg, rng, n_clutter)
    else:
        cpos, cnrm = _ellipse_clutter(cfg, rng, n_clutter, spacing)

    truth = DistortionParams(c=tuple(cfg.center), gamma=-cfg.gamma_true)
    return Scene(
        positions=np.concatenate([line_pos, cpos]),
        normals=np.concatenate([line_nrm, cnrm]),
        is_line=np.concatenate([np.ones(len(line_pos), bool), np.zeros(len(cpos), bool)]),
        ground_truth=truth,
        line_ids=np.concatenate([ids, np.full(len(cpos), -1)]),
    )


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


@dataclass
class TrialResult:
    gamma_true: float
    noise: float
    kind: str
    trial: int
    gamma_recovered: float
    cost: float
    failed: bool = False


@dataclass
class CellSummary:
    gamma_true: float
    noise: float
    kind: str
    n: int
    median: float
    p10: float
    p90: float

    @property
    def band(self) -> float:
        return self.p90 - self.p10


@dataclass
class TrialReport:
    trials: list[TrialResult] = field(default_factory=list)

    def summary(self) -> list[CellSummary]:
        cells: dict[tuple, list[float]] = {}
        for t in self.trials:
            vals = cells.setdefault((t.gamma_true, t.noise, t.kind), [])
            if not t.failed:
                vals.append(t.gamma_recovered)
        out = []
        for (g, nz, kind), vals in cells.items():
            if vals:
                p10, med, p90 = np.percentile(vals, [10, 50, 90])
            else:
                p10 = med = p90 = float("nan")
            out.append(CellSummary(g, nz, kind, len(vals), float(med), float(p10), float(p90)))
        return out

    def cell(self, gamma_true: float, noise: float, kind: str | None = None) -> CellSummary:
        for c in self.summary():
            if c.gamma_true == gamma_true and c.noise == noise and (kind is None or c.kind == kind):
                return c
        raise KeyError((gamma_true, noise, kind))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma_true", "noise", "kind", "trial", "gamma_recovered", "cost"])
            for t in self.trials:
                rec = "nan" if t.failed else repr(t.gamma_recovered)
                w.writerow([repr(t.gamma_true), repr(t.noise), t.kind, t.trial, rec, repr(t.cost)])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma_true", "noise", "kind", "n", "median", "p10", "p90"])
            for c in self.summary():
                w.writerow([repr(c.gamma_true), repr(c.noise), c.kind, c.n,
                            repr(c.median), repr(c.p10), repr(c.p90)])


def trial_seed(master: int, cell: int, trial: int) -> int:
    """Per-trial seed that does not depend on execution order."""
    return int(np.random.SeedSequence([master, cell, trial]).generate_state(1)[0])


def calibrate_scene(scene: Scene, dims, optim_cfg: OptimConfig, n_bins: int = 360,
                    threads: int = 1) -> CalibrationResult:
    return mcdh_calibrate(scene.positions, scene.normals, dims, optim_cfg, n_bins, threads)


def run_study(gammas, noise_levels, trials: int, kind: str = "uncorrelated_points",
              base_cfg: SceneConfig | None = None, optim_cfg: OptimConfig | None = None,
              n_bins: int = STUDY_BINS, threads: int = 1, progress=None) -> TrialReport:
    """Calibrate ``trials`` seeded scenes for every (gamma, noise) cell.

    The recovered value reported for each trial is the distortion coefficient,
    i.e. the negated gamma of the fitted correction, so it is directly
    comparable with ``gamma_true``. Trials that cannot be calibrated are kept
    in the report and flagged as failed.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    base_cfg = base_cfg or SceneConfig()
    optim_cfg = optim_cfg or OptimConfig(min_edgels=base_cfg.n_lines * base_cfg.pts_per_line)
    report = TrialReport()
    cell = 0
    for g in gammas:
        for nz in noise_levels:
            for k in range(trials):
                seed = trial_seed(base_cfg.rng_seed, cell, k)
                scfg = replace(base_cfg, gamma_true=g, noise_fraction=nz,
                               clutter_kind=kind, rng_seed=seed)
                ocfg = replace(optim_cfg, rng_seed=seed)
                try:
                    scene = generate_scene(scfg)
                    res = calibrate_scene(scene, scfg.dims, ocfg, n_bins, threads)
                    report.trials.append(TrialResult(g, nz, kind, k, -res.params.gamma, res.cost))
                except (TooFewEdgelsError, SceneError) as exc:
                    log.warning("trial %d of cell (%g, %g) failed: %s", k, g, nz, exc)
                    report.trials.append(TrialResult(g, nz, kind, k, float("nan"),
                                                     float("nan"), failed=True))
                if progress is not None:
                    progress()
            cell += 1
    return report


# ---------------------------------------------------------------------------
# raster scenes
# ---------------------------------------------------------------------------


def random_lines(n_lines: int, size, rng, min_offset: float = 0.0):
    """``(angle, offset)`` pairs for lines measured from the image center.

    Offsets are drawn so that each line crosses the image, staying at least
    ``min_offset`` from the center.
    """
    w, h = (size, size) if np.isscalar(size) else size
    reach = 0.45 * min(w, h)
    lines = []
    while len(lines) < n_lines:
        off = rng.uniform(-reach, reach)
        if abs(off) < min_offset:
            continue
        lines.append((rng.uniform(0.0, np.pi), off))
    return lines


def render_lines(shape, lines, width: float = 3.0, correction: DistortionParams | None = None,
                 background: float = 0.1, foreground: float = 0.9, supersample: int = 3):
    """Anti-aliased image of bright straight lines, optionally seen through a lens.

    Args:
        shape: ``(height, width)`` of the image.
        lines: ``(angle, offset)`` pairs; the line is ``(p - center) . n = offset``
            with ``n = (cos angle, sin angle)`` and center ``(w/2, h/2)``.
        width: Stroke width in pixels.
        correction: If given, the image is rendered as seen through a lens that
            these parameters undo: pixel ``x`` shows the ideal scene at
            ``correct_point(correction, x)``.
        supersample: Samples per pixel side.
    """
    h, w = shape
    center = np.array([w / 2.0, h / 2.0])
    k = supersample
    sub = (np.arange(k) + 0.5) / k - 0.5
    ys, xs = np.mgrid[0:h, 0:w]
    acc = np.zeros((h, w))
    for sy in sub:
        for sx in sub:
            pts = np.column_stack([(xs + sx).ravel(), (ys + sy).ravel()])
            if correction is not None:
                pts = correct_point(correction, pts)
            ink = np.zeros(len(pts))
            for ang, off in lines:
                n = np.array([np.cos(ang), np.sin(ang)])
                d = np.abs((pts - center) @ n - off)
                ink = np.maximum(ink, d <= width / 2.0)
            acc += ink.reshape(h, w)
    acc /= k * k
    return background + (foreground - background) * acc
