"""Run configuration: a JSON key-value file plus command-line overrides.

Recognised keys (all optional)::

    stages          int     number of construction stages (>= 1)        5
    grid            object  {"n_radii": 6, "n_angles": 8}
    tol_level       float   band for region labels                      1e-8
    tol_residual    float   Newton residual for K and V samples         1e-10
    n_safety        float   safety factor on the exponent               2.0
    max_N           int     exponent budget                             1000000
    degree_cap      int     family degree cap                           3
    denom_cap       int     family denominator cap                      4
    delta_bd        float   boundary tolerance for Y                    1e-3
    seed            int     seed for random battery / certificate search 0
    injected_pairs  list    [{"poly": "(z+w)/2", "zeta": [0.5, 0.0]}]
    output_dir      str     where build artifacts go                    "run"
    boundary_angles int     angles per boundary face when tracing V      256
    refine_steps    int     continuation steps toward the boundary      40
    target_gap      float   Hausdorff gap target for the limit          0.1
    hull_degree     int     degree of the (0,0)-vs-Y hull diagnostic     3
    hull_budget     int     random candidates for that diagnostic        2000
    fit_degree      int     degree of the fitted exp(-F_j) polynomial    4
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .construction import ConstructionConfig
from .geometry import GeometryError, GridSpec
from .polynomials import BiPoly

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration value or file."""


@dataclass(frozen=True)
class RunConfig:
    stages: int = 5
    grid: GridSpec = field(default_factory=lambda: GridSpec(6, 8))
    tol_level: float = 1e-8
    tol_residual: float = 1e-10
    n_safety: float = 2.0
    max_N: int = 10**6
    degree_cap: int = 3
    denom_cap: int = 4
    delta_bd: float = 1e-3
    seed: int = 0
    injected_pairs: tuple[tuple[str, complex], ...] = ()
    output_dir: str = "run"
    boundary_angles: int = 256
    refine_steps: int = 40
    target_gap: float = 0.1
    hull_degree: int = 3
    hull_budget: int = 2000
    fit_degree: int = 4

    def __post_init__(self):
        if not isinstance(self.stages, int) or self.stages < 1:
            raise ConfigError("stages must be an integer >= 1")
        for name in ("tol_level", "tol_residual", "delta_bd", "target_gap"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_safety < 1:
            raise ConfigError("n_safety must be at least 1")
        if self.max_N < 1 or self.degree_cap < 1 or self.denom_cap < 1:
            raise ConfigError("max_N, degree_cap and denom_cap must be positive")
        if self.boundary_angles < 1 or self.refine_steps < 0:
            raise ConfigError("boundary_angles must be positive and refine_steps non-negative")
        for poly, zeta in self.injected_pairs:
            if not abs(complex(zeta)) < 1:
                raise ConfigError(f"injected target {zeta} must lie in the open unit disk")

    def construction(self) -> ConstructionConfig:
        pairs = tuple((BiPoly.parse(p), complex(a)) for p, a in self.injected_pairs)
        return ConstructionConfig(
            stages=self.stages,
            grid=self.grid,
            tol_level=self.tol_level,
            tol_residual=self.tol_residual,
            n_safety=self.n_safety,
            max_n=self.max_N,
            degree_cap=self.degree_cap,
            denom_cap=self.denom_cap,
            injected_pairs=pairs,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {
            "n_radii": self.grid.n_radii,
            "n_angles": self.grid.n_angles,
            "includes_boundary": self.grid.includes_boundary,
        }
        d["injected_pairs"] = [
            {"poly": p, "zeta": [complex(a).real, complex(a).imag]} for p, a in self.injected_pairs
        ]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "grid" in kwargs:
                g = kwargs["grid"]
                kwargs["grid"] = GridSpec(
                    int(g["n_radii"]), int(g["n_angles"]), bool(g.get("includes_boundary", True))
                )
            if "injected_pairs" in kwargs:
                kwargs["injected_pairs"] = tuple(
                    (str(item["poly"]), complex(*item["zeta"])) for item in kwargs["injected_pairs"]
                )
            return cls(**kwargs)
        except (KeyError, TypeError, GeometryError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def with_overrides(self, **overrides) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean) if clean else self


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_dict(data)


def parse_inject(spec: str) -> tuple[str, complex]:
    """``"<poly>:<re>,<im>"`` -> (poly text, target)."""
    try:
        poly, target = spec.rsplit(":", 1)
        re, im = target.split(",")
        BiPoly.parse(poly)
        return poly, complex(float(re), float(im))
    except Exception as exc:  # noqa: BLE001 - any parse failure is a config error
        raise ConfigError(f"cannot parse --inject {spec!r}: {exc}") from exc
