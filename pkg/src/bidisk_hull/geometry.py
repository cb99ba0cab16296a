"""Points of C^2, polar sampling of the closed bidisk, and Hausdorff distances.

Point clouds store their coordinates as two read-only complex arrays. The
metric on C^2 is the polydisk sup-metric ``max(|dz|, |dw|)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

# pairs per block when forming distance matrices
_CHUNK = 1 << 20


class GeometryError(ValueError):
    """Invalid geometric input (empty cloud, bad parameters)."""


class C2Point(NamedTuple):
    z: complex
    w: complex


class Tag(str, enum.Enum):
    K = "K"
    V = "V"
    Y = "Y"
    L_WITNESS = "L-witness"
    M_WITNESS = "M-witness"
    BOUNDARY = "boundary"
    HULL_CANDIDATE = "hull-candidate"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite tagged sample of a compact subset of the closed bidisk.

    ``tol`` is the residual tolerance the points were certified to; every
    point satisfies ``max(|z|, |w|) <= 1 + tol``.
    """

    z: np.ndarray
    w: np.ndarray
    tag: Tag = Tag.HULL_CANDIDATE
    stage: int | None = None
    tol: float = 1e-12
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        z = _frozen(self.z)
        w = _frozen(self.w)
        if z.shape != w.shape:
            raise GeometryError("z and w must have the same length")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "tag", Tag(self.tag))
        if not self.tol > 0:
            raise GeometryError("cloud tolerance must be positive")
        if self.check and len(z):
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
                raise GeometryError("point cloud contains non-finite coordinates")
            reach = float(np.max(np.maximum(np.abs(z), np.abs(w))))
            if reach > 1 + self.tol:
                raise GeometryError(f"point outside the closed bidisk (reach {reach!r})")

    @classmethod
    def from_points(cls, points: Sequence, **kwargs) -> "PointCloud":
        pts = list(points)
        z = [complex(p[0]) for p in pts]
        w = [complex(p[1]) for p in pts]
        return cls(np.array(z, dtype=complex), np.array(w, dtype=complex), **kwargs)

    def __len__(self) -> int:
        return len(self.z)

    def __iter__(self) -> Iterator[C2Point]:
        for z, w in zip(self.z.tolist(), self.w.tolist()):
            yield C2Point(z, w)

    @property
    def points(self) -> list[C2Point]:
        return list(self)

    @property
    def reach(self) -> np.ndarray:
        """Per-point ``max(|z|, |w|)``."""
        return np.maximum(np.abs(self.z), np.abs(self.w))

    def subset(self, mask, tag: Tag | str | None = None) -> "PointCloud":
        return PointCloud(
            self.z[mask],
            self.w[mask],
            tag=self.tag if tag is None else tag,
            stage=self.stage,
            tol=self.tol,
        )

    def retag(self, tag: Tag | str, stage: int | None = None) -> "PointCloud":
        return PointCloud(self.z, self.w, tag=tag, stage=stage, tol=self.tol)

    def concat(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            np.concatenate([self.z, other.z]),
            np.concatenate([self.w, other.w]),
            tag=self.tag,
            stage=self.stage,
            tol=max(self.tol, other.tol),
        )


@dataclass(frozen=True)
class GridSpec:
    n_radii: int
    n_angles: int
    includes_boundary: bool = True
    budget: int = 10**7

    def __post_init__(self):
        if self.n_radii < 1 or self.n_angles < 1:
            raise GeometryError("grid needs at least one radius and one angle")
        if self.size > self.budget:
            raise GeometryError(f"grid of {self.size} points exceeds budget {self.budget}")

    @property
    def size(self) -> int:
        return (self.n_radii * self.n_angles) ** 2

    def radii(self) -> np.ndarray:
        if self.n_radii == 1:
            return np.array([1.0 if self.includes_boundary else 0.0])
        if self.includes_boundary:
            return np.linspace(0.0, 1.0, self.n_radii)
        return np.arange(self.n_radii) / self.n_radii

    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_angles) / self.n_angles

    def disk(self) -> np.ndarray:
        """Polar samples of the closed unit disk, radius-major order."""
        return _polar(self.radii(), self.angles())

    @property
    def cell(self) -> float:
        """Sup-metric diameter of one grid cell (radial step vs. outer arc)."""
        dr = 1.0 / max(self.n_radii - 1, 1)
        arc = 2 * math.sin(math.pi / self.n_angles) if self.n_angles > 1 else 2.0
        return math.hypot(dr, arc)


def _polar(radii: np.ndarray, angles: np.ndarray) -> np.ndarray:
    unit = np.exp(1j * angles)
    # exact axis points so that r * e^{i0} == r
    unit[angles == 0] = 1.0
    return (radii[:, None] * unit[None, :]).reshape(-1)


def poly_metric(p: C2Point, q: C2Point) -> float:
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def _modulus(d: np.ndarray) -> np.ndarray:
    # libm hypot, bit-identical to Python's abs(complex); np.abs is not
    return np.hypot(d.real, d.imag)


def _pairwise(az, aw, bz, bw) -> np.ndarray:
    return np.maximum(_modulus(az[:, None] - bz[None, :]), _modulus(aw[:, None] - bw[None, :]))


def directed_distances(A: PointCloud, B: PointCloud) -> np.ndarray:
    """For every point of ``A`` its sup-metric distance to the cloud ``B``."""
    if len(A) == 0 or len(B) == 0:
        raise GeometryError("Hausdorff distance needs non-empty clouds")
    out = np.empty(len(A))
    step = max(1, _CHUNK // len(B))
    for start in range(0, len(A), step):
        sl = slice(start, start + step)
        out[sl] = _pairwise(A.z[sl], A.w[sl], B.z, B.w).min(axis=1)
    return out


def hausdorff(A: PointCloud, B: PointCloud) -> float:
    return float(max(directed_distances(A, B).max(), directed_distances(B, A).max()))


def sample_bidisk(grid: GridSpec) -> PointCloud:
    """Product of two polar disk grids; z varies slowest."""
    d = grid.disk()
    z = np.repeat(d, len(d))
    w = np.tile(d, len(d))
    return PointCloud(z, w, tag=Tag.HULL_CANDIDATE)


def _check_radius(name: str, value: float) -> None:
    if not (0 < value <= 1):
        raise GeometryError(f"{name} must lie in (0, 1], got {value!r}")


def sample_boundary(grid: GridSpec, r: float, s: float) -> PointCloud:
    """Samples of the boundary of ``B_{r,s} = {|z| <= r, |w| <= s}``.

    Both faces are included: ``{|z| = r} x {|w| <= s}`` followed by
    ``{|z| <= r} x {|w| = s}``.
    """
    _check_radius("r", r)
    _check_radius("s", s)
    radii = grid.radii()
    angles = grid.angles()
    circle = _polar(np.array([1.0]), angles)
    disk = _polar(radii, angles)
    z1 = np.repeat(r * circle, len(disk))
    w1 = np.tile(s * disk, len(circle))
    z2 = np.repeat(r * disk, len(circle))
    w2 = np.tile(s * circle, len(disk))
    return PointCloud(
        np.concatenate([z1, z2]), np.concatenate([w1, w2]), tag=Tag.BOUNDARY
    )


def boundary_distance(p: C2Point, r: float, s: float) -> float:
    """Sup-metric closeness of ``p`` to the boundary of ``B_{r,s}``.

    Non-negative inside the polydisk, negative (minus the outward distance)
    outside it.
    """
    az, aw = abs(p[0]), abs(p[1])
    if az <= r and aw <= s:
        return min(r - az, s - aw)
    return -max(az - r, aw - s)


def boundary_distances(cloud: PointCloud, r: float, s: float) -> np.ndarray:
    az, aw = np.abs(cloud.z), np.abs(cloud.w)
    inside = (az <= r) & (aw <= s)
    return np.where(inside, np.minimum(r - az, s - aw), -np.maximum(az - r, aw - s))


@dataclass(frozen=True)
class SubsequenceSelection:
    indices: tuple[int, ...]
    gaps: tuple[float, ...]
    achieved: bool


def select_cauchy_subsequence(
    clouds: Sequence[PointCloud], target_gap: float
) -> SubsequenceSelection:
    """Greedy forward selection with non-increasing successive Hausdorff gaps.

    Starting at the first cloud, a later cloud is appended when its distance
    to the last selected cloud does not exceed the previous gap.
    ``achieved`` is False when the final gap is still above ``target_gap``.
    """
    if len(clouds) < 2:
        raise GeometryError("subsequence selection needs at least two clouds")
    indices = [0]
    gaps: list[float] = []
    last = math.inf
    for k in range(1, len(clouds)):
        d = hausdorff(clouds[indices[-1]], clouds[k])
        if d <= last:
            indices.append(k)
            gaps.append(d)
            last = d
    achieved = bool(gaps) and gaps[-1] <= target_gap
    return SubsequenceSelection(tuple(indices), tuple(gaps), achieved)
