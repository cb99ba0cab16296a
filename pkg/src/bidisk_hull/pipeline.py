"""End-to-end run: construction, variety samples, limit set and the check suite."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .construction import Construction, Stage, run_construction, with_variety
from .geometry import PointCloud, Tag
from .varieties import (
    EmptyBoundaryError,
    LimitSet,
    VarietySample,
    limit_set,
    merge_boundary,
    refine_toward_boundary,
    sample_variety,
    trace_boundary,
)
from .verify import (
    VerificationReport,
    _record,
    battery,
    check_certificate_c,
    check_exponent_minimality,
    check_max_modulus_battery,
    check_nesting,
    check_projection_thinness,
    check_v_in_m,
    default_eta_samples,
    eta_coverage,
    exhaustive_monomial_margin,
    fit_certificate_poly,
    search_hull_certificate,
    spectrum_gap,
    stage_bound_records,
)

log = logging.getLogger(__name__)

REACH_TARGET = 0.999


@dataclass
class Artifacts:
    """Everything the check suite consumes; identical whether built or loaded."""

    config: RunConfig
    stages: list[Stage]
    V: PointCloud
    Y: PointCloud
    chosen_indices: tuple[int, ...]
    gaps: tuple[float, ...]
    achieved: bool
    notes: list[str] = field(default_factory=list)
    variety_flags: list[tuple[str, ...]] = field(default_factory=list)


@dataclass
class BuildResult:
    artifacts: Artifacts
    report: VerificationReport
    timings: dict[str, float]


def sample_stage_variety(stage: Stage, config: RunConfig) -> VarietySample:
    tol = config.tol_residual
    v = sample_variety(stage.F, config.grid, tol, stage=stage.j)
    v = refine_toward_boundary(stage.F, v, config.refine_steps, tol)
    b = trace_boundary(stage.F, config.boundary_angles, config.grid, tol, stage=stage.j)
    return merge_boundary(stage.F, v, b, tol, math.pi / config.boundary_angles)


def build_artifacts(config: RunConfig, timings: dict | None = None) -> Artifacts:
    timings = {} if timings is None else timings
    t0 = time.perf_counter()
    con: Construction = run_construction(config.construction())
    timings["construction"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    samples, stages, flags = [], [], []
    for s in con:
        vs = sample_stage_variety(s, config)
        samples.append(vs)
        stages.append(with_variety(s, vs.cloud, vs.boundary_reach))
        flags.append(vs.flags)
    timings["varieties"] = time.perf_counter() - t0

    notes = list(con.notes)
    if len(samples) >= 2:
        lim: LimitSet = limit_set(samples, config.target_gap, config.delta_bd)
        V, Y, idx, gaps, ok = lim.V, lim.Y, lim.chosen_indices, lim.gap_diagnostics, lim.achieved
    else:
        V = samples[0].cloud
        mask = V.reach >= 1 - config.delta_bd
        if not mask.any():
            raise EmptyBoundaryError("single-stage sample never reaches the boundary")
        Y = V.subset(mask, tag=Tag.Y)
        idx, gaps, ok = (0,), (), True
        notes.append("single stage: the limit sample is V_1 itself")
    return Artifacts(config, stages, V.retag(Tag.V), Y, tuple(idx), tuple(gaps), ok, notes, flags)


def verify_artifacts(art: Artifacts) -> VerificationReport:
    """Run every check; a pure function of the artifacts."""
    cfg = art.config
    stages = art.stages
    parts = [stage_bound_records(stages), check_nesting(stages)]
    parts.append(check_v_in_m(stages, [s.V_cloud for s in stages]))
    for s in stages:
        parts.append(check_certificate_c(s, s.M_witness, s.K_cloud))
    parts.append(check_max_modulus_battery(battery(cfg.degree_cap, cfg.denom_cap, cfg.seed), art.V, art.Y))
    gaps = spectrum_gap(stages, art.V)
    parts.append(gaps)

    diag = []
    min_gap = {r.stage: r.margin for r in gaps}
    for s in stages:
        cert = fit_certificate_poly(s.F, cfg.fit_degree, cfg.grid, s.K_cloud, s.M_witness)
        consistent = not (cert.margin > 0) or min_gap[s.j] > 0
        diag.append(
            _record("fit-certificate", s.j, cert.margin, 0.0, hard=False,
                    details={**cert.details, "degree": cfg.fit_degree, "consistent_with_gap": consistent})
        )
        reach = float(s.V_cloud.reach.max()) if s.V_cloud is not None and len(s.V_cloud) else 0.0
        diag.append(
            _record("boundary-reach", s.j, reach - REACH_TARGET, 0.0, hard=False,
                    details={"reach": reach})
        )
    diag.append(
        _record("limit-gaps", None, 0.0, 0.0, hard=False,
                details={"indices": list(art.chosen_indices), "gaps": list(art.gaps), "achieved": art.achieved})
    )
    cert = search_hull_certificate((0j, 0j), art.Y, cfg.hull_degree, cfg.hull_budget, cfg.seed)
    mono = exhaustive_monomial_margin((0j, 0j), art.Y, cfg.hull_degree)
    diag.append(
        _record("hull.origin-vs-Y", None, 0.0 if cert is None else -cert.margin, 0.0, hard=False,
                details={"certificate": None if cert is None else cert.describe(), "best_monomial_margin": mono})
    )
    if cfg.n_safety == 1:
        parts.append(check_exponent_minimality(stages))
    else:
        diag.extend(_record(r.name, r.stage, r.margin, r.tolerance, hard=False, details=r.details)
                    for r in check_exponent_minimality(stages))
    parts.append(check_projection_thinness(art.V))
    s_values, a_samples = default_eta_samples()
    parts.append(eta_coverage(art.V, s_values, a_samples, 0.05))
    return VerificationReport(()).merged(*parts, VerificationReport(tuple(diag)))


def build(config: RunConfig) -> BuildResult:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    art = build_artifacts(config, timings)
    t1 = time.perf_counter()
    report = verify_artifacts(art)
    timings["verification"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    return BuildResult(art, report, timings)
