"""Samples of the varieties V_j = {F_j = 1} in the bidisk and their limit set."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .construction import StageFunction, dedupe, holomorphic_gradient, polish_batch
from .geometry import (
    GeometryError,
    GridSpec,
    PointCloud,
    Tag,
    boundary_distances,
    sample_bidisk,
    select_cauchy_subsequence,
)

log = logging.getLogger(__name__)


class EmptyBoundaryError(GeometryError):
    """The limit sample has no points near the boundary of the bidisk."""


@dataclass(frozen=True)
class VarietySample:
    cloud: PointCloud
    residual: float
    boundary_reach: float
    flags: tuple[str, ...] = ()


def _summarise(F: Callable, z, w, stage, tol, flags=()) -> VarietySample:
    cloud = PointCloud(z, w, tag=Tag.V, stage=stage, tol=max(tol, 1e-12))
    resid = float(np.max(np.abs(F(cloud.z, cloud.w) - 1.0))) if len(cloud) else 0.0
    reach = float(cloud.reach.max()) if len(cloud) else 0.0
    flags = tuple(flags)
    if len(cloud) <= 1:
        flags += ("center-only",)
    return VarietySample(cloud, resid, reach, flags)


def _with_origin(z, w):
    hit = (z == 0) & (w == 0)
    if hit.any():
        first = int(np.flatnonzero(hit)[0])
        keep = ~hit
        keep[first] = True
        order = np.r_[first, np.flatnonzero(keep & (np.arange(len(z)) != first))]
        return z[order], w[order]
    return np.r_[0j, z], np.r_[0j, w]


def sample_variety(
    F: StageFunction,
    grid: GridSpec,
    tol: float = 1e-10,
    *,
    threshold: float = 2.0,
    radius: float | None = None,
    stage: int | None = None,
) -> VarietySample:
    """Polish grid points with ``|F - 1| <= threshold`` onto ``{F = 1}``.

    The origin is always the first point; results are thinned to a
    ``radius``-net (default: a quarter of the radial grid step).
    """
    seeds = sample_bidisk(grid)
    vals = F(seeds.z, seeds.w)
    with np.errstate(invalid="ignore"):
        near = np.isfinite(vals) & (np.abs(vals - 1.0) <= threshold)
    out = polish_batch(F, 1.0, seeds.z[near], seeds.w[near], tol)
    z, w = out.z[out.success], out.w[out.success]
    z, w = _with_origin(z, w)
    keep = dedupe(z, w, radius or _default_radius(grid))
    return _summarise(F, z[keep], w[keep], stage or F.depth, tol)


def _default_radius(grid: GridSpec) -> float:
    return 0.25 / max(grid.n_radii - 1, 1)


def refine_toward_boundary(
    F: StageFunction,
    sample: VarietySample,
    steps: int,
    tol: float = 1e-10,
    *,
    starts: int = 16,
    h0: float = 0.05,
    phases: int = 8,
) -> VarietySample:
    """Predictor-corrector continuation outward from the outermost sample points.

    Each step moves along the complex tangent line of ``{F = 1}`` (in
    ``phases`` real directions), re-polishes, and keeps the candidate of
    largest reach that stays in the bidisk; a step that gains nothing halves
    the step length. Every accepted point is added to the sample.
    """
    if steps <= 0 or len(sample.cloud) == 0:
        return sample
    cloud = sample.cloud
    order = np.argsort(-cloud.reach, kind="stable")[:starts]
    z = cloud.z[order].copy()
    w = cloud.w[order].copy()
    reach = np.maximum(np.abs(z), np.abs(w))
    h = np.full(len(z), h0)
    rot = np.exp(2j * np.pi * np.arange(phases) / phases)
    new_z, new_w = [], []
    for _ in range(steps):
        live = h > 1e-9
        if not live.any():
            break
        idx = np.flatnonzero(live)
        fz, fw = holomorphic_gradient(F, z[idx], w[idx])
        norm = np.sqrt(np.abs(fz) ** 2 + np.abs(fw) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            tz, tw = -fw / norm, fz / norm
        bad = ~(np.isfinite(tz) & np.isfinite(tw))
        h[idx[bad]] = 0.0
        idx, tz, tw = idx[~bad], tz[~bad], tw[~bad]
        if len(idx) == 0:
            break
        cz = (z[idx, None] + h[idx, None] * tz[:, None] * rot[None, :]).reshape(-1)
        cw = (w[idx, None] + h[idx, None] * tw[:, None] * rot[None, :]).reshape(-1)
        res = polish_batch(F, 1.0, cz, cw, tol)
        cand_reach = np.where(res.success, np.maximum(np.abs(res.z), np.abs(res.w)), -1.0)
        cand_reach = cand_reach.reshape(len(idx), phases)
        best = np.argmax(cand_reach, axis=1)
        best_reach = cand_reach[np.arange(len(idx)), best]
        gain = best_reach > reach[idx]
        flat = np.arange(len(idx)) * phases + best
        for k in np.flatnonzero(gain):
            i = idx[k]
            z[i], w[i], reach[i] = res.z[flat[k]], res.w[flat[k]], best_reach[k]
            new_z.append(z[i])
            new_w.append(w[i])
        h[idx[~gain]] *= 0.5
    if not new_z:
        return VarietySample(cloud, sample.residual, sample.boundary_reach, sample.flags + ("refinement-stalled",))
    z_all = np.r_[cloud.z, np.array(new_z)]
    w_all = np.r_[cloud.w, np.array(new_w)]
    return _summarise(F, z_all, w_all, cloud.stage, tol, sample.flags)


def trace_boundary(
    F: StageFunction,
    n_angles: int,
    seeds: GridSpec,
    tol: float = 1e-10,
    *,
    stage: int | None = None,
) -> PointCloud:
    """Solve ``F = 1`` on the two faces ``{|z| = 1}`` and ``{|w| = 1}``.

    For each boundary angle the free coordinate is polished from the polar
    disk seeds, so the result samples ``V ∩ ∂(bidisk)`` at uniform angles.
    """
    circle = np.exp(2j * np.pi * np.arange(n_angles) / n_angles)
    disk = seeds.disk()
    fixed = np.repeat(circle, len(disk))
    free = np.tile(disk, len(circle))
    zs, ws = [], []
    for pin_z in (True, False):
        z0, w0 = (fixed, free) if pin_z else (free, fixed)
        res = polish_batch(F, 1.0, z0, w0, tol, free=(not pin_z, pin_z))
        ok = res.success
        keep = dedupe(res.z[ok], res.w[ok], 1e-6)
        zs.append(res.z[ok][keep])
        ws.append(res.w[ok][keep])
    return PointCloud(np.concatenate(zs), np.concatenate(ws), tag=Tag.V, stage=stage, tol=max(tol, 1e-12))


def merge_boundary(
    F: StageFunction, sample: VarietySample, boundary: PointCloud, tol: float, radius: float
) -> VarietySample:
    """Add traced boundary points, thinned to a ``radius``-net among themselves."""
    if len(boundary) == 0:
        return sample
    keep = dedupe(boundary.z, boundary.w, radius)
    z = np.r_[sample.cloud.z, boundary.z[keep]]
    w = np.r_[sample.cloud.w, boundary.w[keep]]
    return _summarise(F, z, w, sample.cloud.stage, tol, sample.flags)


@dataclass(frozen=True)
class LimitSet:
    V: PointCloud
    chosen_indices: tuple[int, ...]
    gap_diagnostics: tuple[float, ...]
    Y: PointCloud
    achieved: bool


def limit_set(samples: Sequence[VarietySample], target_gap: float, delta_bd: float) -> LimitSet:
    """Greedy Cauchy subsequence of the variety clouds; V is the last chosen cloud."""
    if len(samples) < 2:
        raise GeometryError("limit extraction needs at least two variety samples")
    sel = select_cauchy_subsequence([s.cloud for s in samples], target_gap)
    V = samples[sel.indices[-1]].cloud
    mask = V.reach >= 1 - delta_bd
    if not mask.any():
        raise EmptyBoundaryError(
            f"no point of the limit sample within {delta_bd} of the bidisk boundary"
        )
    Y = V.subset(mask, tag=Tag.Y)
    return LimitSet(V, sel.indices, sel.gaps, Y, sel.achieved)


def restrict_to_shell(V: PointCloud, r: float, s: float, delta_bd: float) -> PointCloud:
    """Points of V within ``delta_bd`` of the boundary of ``B_{r,s}``."""
    if not (0 < r <= 1 and 0 < s <= 1):
        raise GeometryError("shell radii must lie in (0, 1]")
    if len(V) == 0:
        return V.subset(np.zeros(0, dtype=bool), tag=Tag.Y)
    d = boundary_distances(V, r, s)
    return V.subset(np.abs(d) <= delta_bd, tag=Tag.Y)
