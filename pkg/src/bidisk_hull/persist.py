"""Point-cloud CSV files and the JSON run manifest."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, RunConfig
from .construction import Stage, StageFunction, StageMargins
from .geometry import PointCloud, Tag
from .pipeline import Artifacts, BuildResult
from .polynomials import BiPoly, ScaledPoly
from .verify import VerificationReport

CSV_HEADER = ["re_z", "im_z", "re_w", "im_w", "set", "stage"]
MANIFEST = "manifest.json"
CLOUD_DIR = "clouds"


class ArtifactError(OSError):
    """Missing or corrupt run artifacts."""


def _fmt(x: float) -> str:
    # 17 significant digits round-trip every double exactly
    return f"{x:.16e}"


def write_clouds(path: Path, clouds: list[PointCloud]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_HEADER)
        for c in clouds:
            stage = "" if c.stage is None else str(c.stage)
            for z, w in zip(c.z.tolist(), c.w.tolist()):
                out.writerow([_fmt(z.real), _fmt(z.imag), _fmt(w.real), _fmt(w.imag), c.tag.value, stage])


def read_clouds(path: Path, tol: float = 1e-10) -> dict[str, PointCloud]:
    """Clouds in a CSV file keyed by their set label."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing cloud file {path}")
    rows: dict[str, list] = {}
    stages: dict[str, int | None] = {}
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ArtifactError(f"{path}: unexpected header {header}")
            for row in reader:
                if not row:
                    continue
                rz, iz, rw, iw, label, stage = row
                rows.setdefault(label, []).append(
                    (complex(float(rz), float(iz)), complex(float(rw), float(iw)))
                )
                stages[label] = int(stage) if stage else None
    except (ValueError, StopIteration) as exc:
        raise ArtifactError(f"{path}: corrupt cloud file ({exc})") from exc
    out = {}
    for label, pts in rows.items():
        z = np.array([p[0] for p in pts], dtype=complex)
        w = np.array([p[1] for p in pts], dtype=complex)
        out[label] = PointCloud(z, w, tag=Tag(label), stage=stages[label], tol=tol)
    return out


def _empty(tag: Tag, stage: int) -> PointCloud:
    return PointCloud(np.zeros(0, complex), np.zeros(0, complex), tag=tag, stage=stage)


def stage_cloud_path(root: Path, j: int) -> Path:
    return root / CLOUD_DIR / f"stage_{j:02d}.csv"


def limit_cloud_path(root: Path) -> Path:
    return root / CLOUD_DIR / "limit.csv"


def _stage_record(s: Stage, flags: tuple[str, ...]) -> dict:
    m = asdict(s.margins)
    m["value_at_origin"] = [s.margins.value_at_origin.real, s.margins.value_at_origin.imag]
    return {
        "j": s.j,
        "zeta_index": s.pair[0],
        "injected": s.injected,
        "poly": s.p.to_record(),
        "poly_text": str(s.p),
        "a": [s.a.real, s.a.imag],
        "N": s.N,
        "G": s.G.to_record(),
        "margins": m,
        "counts": {
            "K": len(s.K_cloud),
            "L-witness": len(s.L_witness),
            "M-witness": len(s.M_witness),
            "V": 0 if s.V_cloud is None else len(s.V_cloud),
        },
        "variety_flags": list(flags),
        "cloud_file": str(Path(CLOUD_DIR) / f"stage_{s.j:02d}.csv"),
    }


def manifest_dict(result: BuildResult) -> dict:
    art = result.artifacts
    flags = art.variety_flags or [()] * len(art.stages)
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "bidisk-hull", "version": __version__},
        "config": art.config.to_dict(),
        "family_membership": "sufficient test: l1 coefficient norm <= 1",
        "stages": [_stage_record(s, f) for s, f in zip(art.stages, flags)],
        "stage_function": art.stages[-1].F.to_record(),
        "limit": {
            "chosen_indices": list(art.chosen_indices),
            "gaps": list(art.gaps),
            "achieved": art.achieved,
            "n_V": len(art.V),
            "n_Y": len(art.Y),
            "cloud_file": str(Path(CLOUD_DIR) / "limit.csv"),
        },
        "notes": list(art.notes),
        "passed": result.report.passed,
        "report": result.report.to_list(),
        "timings": result.timings,
    }


def write_build(result: BuildResult, root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    art = result.artifacts
    for s in art.stages:
        clouds = [s.K_cloud, s.L_witness, s.M_witness]
        if s.V_cloud is not None:
            clouds.append(s.V_cloud.retag(Tag.V, s.j))
        write_clouds(stage_cloud_path(root, s.j), clouds)
    final = art.stages[art.chosen_indices[-1]].j
    write_clouds(limit_cloud_path(root), [art.V.retag(Tag.V, final), art.Y.retag(Tag.Y, final)])
    path = root / MANIFEST
    path.write_text(json.dumps(manifest_dict(result), indent=2, sort_keys=True), encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ArtifactError(f"missing manifest {path}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"corrupt manifest {path}: {exc}") from exc
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactError(f"unsupported manifest schema {data.get('schema_version')!r}")
    return data


def load_artifacts(path: str | Path) -> tuple[Artifacts, dict]:
    """Rebuild the check-suite inputs from a manifest and its cloud files."""
    path = Path(path)
    root = path if path.is_dir() else path.parent
    data = read_manifest(path)
    config = RunConfig.from_dict(data["config"])
    stages: list[Stage] = []
    F: StageFunction | None = None
    for rec in data["stages"]:
        j = rec["j"]
        G = ScaledPoly.from_record(rec["G"])
        F = StageFunction.base(G) if F is None else F.compose(rec["N"], G)
        clouds = read_clouds(root / rec["cloud_file"], config.tol_residual)
        m = dict(rec["margins"])
        m["value_at_origin"] = complex(*m["value_at_origin"])
        stages.append(
            Stage(
                j=j,
                pair=(rec["zeta_index"], BiPoly.from_record(rec["poly"])),
                a=complex(*rec["a"]),
                G=G,
                N=rec["N"],
                F=F,
                K_cloud=clouds.get("K", _empty(Tag.K, j)),
                L_witness=clouds.get("L-witness", _empty(Tag.L_WITNESS, j)),
                M_witness=clouds.get("M-witness", _empty(Tag.M_WITNESS, j)),
                margins=StageMargins(**m),
                V_cloud=clouds.get("V", _empty(Tag.V, j)),
                injected=rec["injected"],
            )
        )
    lim = data["limit"]
    limit_clouds = read_clouds(root / lim["cloud_file"], config.tol_residual)
    if "V" not in limit_clouds or "Y" not in limit_clouds:
        raise ArtifactError("limit cloud file lacks V or Y rows")
    art = Artifacts(
        config=config,
        stages=stages,
        V=limit_clouds["V"],
        Y=limit_clouds["Y"],
        chosen_indices=tuple(lim["chosen_indices"]),
        gaps=tuple(lim["gaps"]),
        achieved=lim["achieved"],
        notes=list(data["notes"]),
        variety_flags=[tuple(s["variety_flags"]) for s in data["stages"]],
    )
    return art, data


def report_json(report: VerificationReport) -> str:
    return json.dumps(report.to_list(), indent=2, sort_keys=True)
