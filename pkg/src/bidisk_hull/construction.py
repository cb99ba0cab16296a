"""Stage functions F_j, level sets K_j, the regions L_j / M_j and the stage driver.

The stage functions are entire functions built recursively::

    F_1 = G_1,    F_{j+1} = exp(N_{j+1} (F_j - 1)) * G_{j+1}

and are evaluated through their log-magnitude so that the exponential
factor underflows to zero instead of producing NaN. Values whose magnitude
or phase cannot be represented in double precision are reported as NaN
("unresolved") by the array evaluators and raise ``StageRangeError`` from
the scalar ones.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from .geometry import C2Point, GridSpec, PointCloud, Tag, sample_bidisk
from .polynomials import (
    BiPoly,
    ScaledPoly,
    g_poly,
    in_family,
    iter_family,
    zeta_sequence,
)

log = logging.getLogger(__name__)

LN4 = math.log(4.0)
# exp() overflows just above 709.78
MAX_LOG_MAG = 709.0
# phases beyond this lose more than ~1e-4 rad to rounding
MAX_PHASE = 1e12
# below this the modulus underflows to 0.0, so the phase is irrelevant
MIN_LOG_MAG = -746.0
FD_STEP = 1e-6


class StageRangeError(ArithmeticError):
    """A stage function value is not representable in double precision."""


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class BudgetError(RuntimeError):
    """A configured budget (exponent cap, pair attempts) was exhausted."""


# -- stage functions ---------------------------------------------------------


@dataclass(frozen=True)
class StageFunction:
    """``G`` alone at depth 1, else ``exp(n * (prev - 1)) * G``."""

    g: ScaledPoly
    prev: "StageFunction | None" = None
    n: int | None = None

    def __post_init__(self):
        if (self.prev is None) != (self.n is None):
            raise ContractError("prev and n must be given together")
        if self.n is not None and self.n < 0:
            raise ContractError("exponent must be non-negative")

    @classmethod
    def base(cls, g: ScaledPoly) -> "StageFunction":
        return cls(g)

    def compose(self, n: int, g: ScaledPoly) -> "StageFunction":
        return StageFunction(g, self, int(n))

    @property
    def depth(self) -> int:
        return 1 if self.prev is None else self.prev.depth + 1

    def layers(self) -> list["StageFunction"]:
        out = []
        node: StageFunction | None = self
        while node is not None:
            out.append(node)
            node = node.prev
        return out[::-1]

    def _eval(self, z, w) -> tuple[np.ndarray, np.ndarray]:
        """Return (F, ln|F|); F is NaN where unresolved."""
        g = np.asarray(self.g(z, w), dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.log(np.abs(g))
        if self.prev is None:
            return g, lg
        fp, _ = self.prev._eval(z, w)
        n = self.n
        with np.errstate(invalid="ignore", over="ignore"):
            lm = n * (fp.real - 1.0) + lg
            phase = n * fp.imag + np.angle(g)
            tiny = lm < MIN_LOG_MAG
            bad = ~np.isfinite(fp) | (lm > MAX_LOG_MAG) | ((np.abs(phase) > MAX_PHASE) & ~tiny)
            lm_safe = np.where(bad, 0.0, lm)
            # exact zeros of G stay exact zeros
            val = np.where((g == 0) | tiny, 0.0, np.exp(lm_safe) * np.exp(1j * np.where(bad | tiny, 0.0, phase)))
        val = np.where(bad, complex(np.nan, np.nan), val)
        lm = np.where(~np.isfinite(fp), np.nan, lm)
        return val, lm

    def __call__(self, z, w):
        val, _ = self._eval(z, w)
        return val[()] if np.ndim(val) == 0 else val

    def log_magnitude(self, z, w):
        _, lm = self._eval(z, w)
        return lm[()] if np.ndim(lm) == 0 else lm

    def to_record(self) -> list[dict]:
        out = []
        for layer in self.layers():
            rec = layer.g.to_record()
            if layer.n is not None:
                rec = {"N": layer.n, **rec}
            out.append(rec)
        return out

    @classmethod
    def from_record(cls, record: Sequence[dict]) -> "StageFunction":
        f = cls.base(ScaledPoly.from_record(record[0]))
        for rec in record[1:]:
            f = f.compose(rec["N"], ScaledPoly.from_record(rec))
        return f


def eval_stage(F: StageFunction, pt: C2Point) -> complex:
    val = complex(F(pt[0], pt[1]))
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise StageRangeError(f"F_{F.depth} is not representable at {tuple(pt)}")
    return val


def log_mag_stage(F: StageFunction, pt: C2Point) -> float:
    """``ln|F(pt)|`` accumulated layer by layer; ``-inf`` at exact zeros of G."""
    val = float(F.log_magnitude(pt[0], pt[1]))
    if math.isnan(val):
        raise StageRangeError(f"ln|F_{F.depth}| is not representable at {tuple(pt)}")
    return val


# -- Newton polishing ----------------------------------------------------------


@dataclass(frozen=True)
class PolishResult:
    z: np.ndarray
    w: np.ndarray
    residual: np.ndarray
    success: np.ndarray
    iterations: np.ndarray


def holomorphic_gradient(f: Callable, z, w, h: float = FD_STEP):
    """Central differences for (df/dz, df/dw)."""
    fz = (f(z + h, w) - f(z - h, w)) / (2 * h)
    fw = (f(z, w + h) - f(z, w - h)) / (2 * h)
    return fz, fw


def polish_batch(
    f: Callable,
    target: complex,
    z0,
    w0,
    tol: float = 1e-10,
    max_iter: int = 50,
    *,
    free: tuple[bool, bool] = (True, True),
    slack: float = 0.05,
) -> PolishResult:
    """Damped minimum-norm Newton for ``f(z, w) = target`` on many seeds.

    With both variables free the step solves ``fz dz + fw dw = r`` with the
    least-norm correction; ``free`` pins one coordinate for slice solves.
    Seeds already within ``tol`` are left untouched; the others iterate while
    the residual keeps dropping, so converged points end near machine
    precision. Iterates may wander ``slack`` outside the bidisk, but success
    needs the final point inside it.
    """
    z = np.array(z0, dtype=complex).reshape(-1)
    w = np.array(w0, dtype=complex).reshape(-1)
    target = complex(target)
    with np.errstate(all="ignore"):
        res = np.abs(f(z, w) - target)
    res = np.where(np.isfinite(res), res, np.inf)
    iters = np.zeros(len(z), dtype=int)
    active = np.isfinite(res) & (res > tol)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        zi, wi, cur = z[idx], w[idx], res[idx]
        with np.errstate(all="ignore"):
            r = target - f(zi, wi)
            fz, fw = holomorphic_gradient(f, zi, wi)
            if not free[0]:
                fz = np.zeros_like(fz)
            if not free[1]:
                fw = np.zeros_like(fw)
            denom = np.abs(fz) ** 2 + np.abs(fw) ** 2
            dz = np.conj(fz) * r / denom
            dw = np.conj(fw) * r / denom
        pending = np.isfinite(dz) & np.isfinite(dw) & (denom > 0)
        step = np.ones(len(idx))
        moved = np.zeros(len(idx), dtype=bool)
        for _ in range(12):
            k = np.flatnonzero(pending)
            if len(k) == 0:
                break
            cz = zi[k] + step[k] * dz[k]
            cw = wi[k] + step[k] * dw[k]
            with np.errstate(all="ignore"):
                cr = np.abs(f(cz, cw) - target)
            inside = np.maximum(np.abs(cz), np.abs(cw)) <= 1 + slack
            good = np.isfinite(cr) & (cr < cur[k]) & inside
            acc = k[good]
            zi[acc], wi[acc], cur[acc] = cz[good], cw[good], cr[good]
            moved[acc] = True
            pending[acc] = False
            step[k[~good]] *= 0.5
        z[idx], w[idx], res[idx] = zi, wi, cur
        iters[idx] += moved
        active[idx] = moved & (cur > 0)
    inside = np.maximum(np.abs(z), np.abs(w)) <= 1 + 1e-12
    success = (res <= tol) & inside
    return PolishResult(z, w, res, success, iters)


def newton_polish(
    f: Callable,
    target: complex,
    seed: C2Point,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> C2Point | None:
    """Polish one seed onto ``{f = target}``; ``None`` signals failure."""
    out = polish_batch(f, target, [seed[0]], [seed[1]], tol, max_iter)
    if not out.success[0]:
        return None
    return C2Point(complex(out.z[0]), complex(out.w[0]))


def dedupe(z: np.ndarray, w: np.ndarray, radius: float) -> np.ndarray:
    """Indices of a greedy sup-metric ``radius``-net, in input order."""
    if len(z) == 0:
        return np.zeros(0, dtype=int)
    # bucket on a lattice of side ``radius`` so only neighbours are compared
    key = np.stack(
        [np.floor(a / radius).astype(np.int64) for a in (z.real, z.imag, w.real, w.imag)], axis=1
    )
    buckets: dict[tuple, list[int]] = {}
    kept: list[int] = []
    offsets = [
        (a, b, c, d)
        for a in (-1, 0, 1)
        for b in (-1, 0, 1)
        for c in (-1, 0, 1)
        for d in (-1, 0, 1)
    ]
    for i in range(len(z)):
        k = tuple(key[i])
        clash = False
        for off in offsets:
            nb = buckets.get((k[0] + off[0], k[1] + off[1], k[2] + off[2], k[3] + off[3]))
            if not nb:
                continue
            for j in nb:
                if max(abs(z[i] - z[j]), abs(w[i] - w[j])) < radius:
                    clash = True
                    break
            if clash:
                break
        if not clash:
            buckets.setdefault(k, []).append(i)
            kept.append(i)
    return np.array(kept, dtype=int)


def extract_level_set(
    p: BiPoly,
    a: complex,
    grid: GridSpec,
    tol: float = 1e-10,
    *,
    threshold: float = 1.0,
    max_iter: int = 60,
) -> PointCloud:
    """Sample ``{p = a}`` in the bidisk by polishing nearby grid points.

    An empty cloud means the level set was not found (the pair is skipped).
    """
    if not abs(a) < 1:
        raise ContractError("target value must lie in the open unit disk")
    seeds = sample_bidisk(grid)
    vals = p(seeds.z, seeds.w)
    near = np.abs(vals - a) <= threshold
    out = polish_batch(p, a, seeds.z[near], seeds.w[near], tol, max_iter)
    z, w = out.z[out.success], out.w[out.success]
    keep = dedupe(z, w, grid.cell / 4)
    return PointCloud(z[keep], w[keep], tag=Tag.K, tol=max(tol, 1e-12))


# -- regions ---------------------------------------------------------------------


class RegionLabel(str, enum.Enum):
    L = "L"
    M = "M"
    BOTH = "both"
    NEITHER = "neither"


def classify_region(F: StageFunction, pt: C2Point, tol: float = 1e-8) -> RegionLabel:
    return classify_many(F, np.array([pt[0]]), np.array([pt[1]]), tol)[0]


def classify_many(F: StageFunction, z, w, tol: float = 1e-8) -> list[RegionLabel]:
    re = np.real(F(z, w))
    re = np.atleast_1d(re)
    out = []
    for x in re:
        if math.isnan(x):
            out.append(RegionLabel.NEITHER)
            continue
        in_l = x <= 0.5 + tol
        in_m = x >= 0.5 - tol
        out.append(
            RegionLabel.BOTH if in_l and in_m else RegionLabel.L if in_l else RegionLabel.M
        )
    return out


def select_exponent(
    F_prev: StageFunction,
    G_next: ScaledPoly,
    L_samples: PointCloud,
    K_next: PointCloud | None = None,
    safety: float = 2.0,
    max_n: int = 10**6,
) -> int:
    """Smallest-form N with ``N (Re F_prev - 1) + ln|G_next| < ln(1/4)`` on the samples.

    ``N = ceil(safety * max (ln|G| + ln 4) / (1 - Re F_prev))``, floored at 1 and
    bumped by one when a sample meets the inequality with equality. The
    K-samples enter only the precondition: ``G_next`` vanishes on them.
    """
    if safety < 1:
        raise ContractError("safety factor must be at least 1")
    if len(L_samples) == 0:
        return 1
    re = np.real(F_prev(L_samples.z, L_samples.w))
    if np.any(np.isnan(re)):
        raise ContractError("L-samples include points where F_prev is unresolved")
    if np.any(re >= 1):
        raise ContractError("an L-sample has Re F_prev >= 1; the exponent cannot decay there")
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(G_next(L_samples.z, L_samples.w)))
    ratio = (lg + LN4) / (1.0 - re)
    worst = float(np.max(ratio))
    if not math.isfinite(worst) or worst <= 0:
        n = 1
    else:
        scaled = safety * worst
        if scaled > max_n:
            raise BudgetError(f"required exponent {scaled:.3g} exceeds max_N={max_n}")
        n = max(1, math.ceil(scaled))
    while np.any(n * (re - 1.0) + lg >= -LN4):
        n += 1
        if n > max_n:
            raise BudgetError(f"required exponent exceeds max_N={max_n}")
    return n


def exponent_holds(F_prev: StageFunction, G_next: ScaledPoly, samples: PointCloud, n: int) -> np.ndarray:
    """Per-sample truth of ``n (Re F_prev - 1) + ln|G_next| < ln(1/4)``."""
    re = np.real(F_prev(samples.z, samples.w))
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(G_next(samples.z, samples.w)))
    return n * (re - 1.0) + lg < -LN4


# -- the stage driver --------------------------------------------------------------


@dataclass(frozen=True)
class ConstructionConfig:
    stages: int = 5
    grid: GridSpec = field(default_factory=lambda: GridSpec(6, 8))
    tol_level: float = 1e-8
    tol_residual: float = 1e-10
    n_safety: float = 2.0
    max_n: int = 10**6
    degree_cap: int = 3
    denom_cap: int = 4
    injected_pairs: tuple[tuple[BiPoly, complex], ...] = ()
    zeta_count: int = 1000
    max_pair_attempts: int = 10_000

    def __post_init__(self):
        if self.stages < 1:
            raise ContractError("stages must be at least 1")
        for name in ("tol_level", "tol_residual"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")


@dataclass(frozen=True)
class StageMargins:
    value_at_origin: complex
    max_abs_on_k: float
    max_abs_on_prev_l_and_k: float | None
    n_l_witnesses: int
    n_m_witnesses: int
    n_unresolved: int
    boundary_reach: float | None = None


@dataclass(frozen=True)
class Stage:
    j: int
    pair: tuple[int | None, BiPoly]
    a: complex
    G: ScaledPoly
    N: int | None
    F: StageFunction
    K_cloud: PointCloud
    L_witness: PointCloud
    M_witness: PointCloud
    margins: StageMargins
    V_cloud: PointCloud | None = None
    injected: bool = False

    @property
    def p(self) -> BiPoly:
        return self.pair[1]


@dataclass(frozen=True)
class Construction:
    stages: tuple[Stage, ...]
    notes: tuple[str, ...]
    grid_cloud: PointCloud

    def __iter__(self) -> Iterator[Stage]:
        return iter(self.stages)

    def __len__(self) -> int:
        return len(self.stages)

    def __getitem__(self, k):
        return self.stages[k]


def region_witnesses(F: StageFunction, grid_cloud: PointCloud, stage: int):
    """Split grid points into L-witnesses (Re F <= 1/2) and M-witnesses (Re F >= 1/2)."""
    re = np.real(F(grid_cloud.z, grid_cloud.w))
    resolved = ~np.isnan(re)
    l_mask = resolved & (re <= 0.5)
    m_mask = resolved & (re >= 0.5)
    L = PointCloud(grid_cloud.z[l_mask], grid_cloud.w[l_mask], tag=Tag.L_WITNESS, stage=stage)
    M = PointCloud(grid_cloud.z[m_mask], grid_cloud.w[m_mask], tag=Tag.M_WITNESS, stage=stage)
    return L, M, int((~resolved).sum())


def candidate_pairs(config: ConstructionConfig) -> Iterator[tuple[int | None, BiPoly, complex, bool]]:
    """Injected pairs first, then the diagonal enumeration of (zeta index, family index)."""
    for p, a in config.injected_pairs:
        yield None, p, complex(a), True
    zeta = zeta_sequence(config.zeta_count)
    family: list[BiPoly] = []
    source = iter_family(config.degree_cap, config.denom_cap)
    diag = 0
    while True:
        for i in range(diag + 1):
            k = diag - i
            if i >= len(zeta):
                continue
            while len(family) <= k:
                family.append(next(source))
            yield i, family[k], zeta[i], False
        diag += 1


def _max_abs(F: StageFunction, cloud: PointCloud) -> float:
    if len(cloud) == 0:
        return 0.0
    return float(np.max(np.abs(F(cloud.z, cloud.w))))


def run_construction(config: ConstructionConfig) -> Construction:
    """Build stages 1..J; pairs with an empty level set are skipped with a note."""
    grid_cloud = sample_bidisk(config.grid)
    stages: list[Stage] = []
    notes: list[str] = []
    attempts = 0
    pairs = candidate_pairs(config)
    while len(stages) < config.stages:
        attempts += 1
        if attempts > config.max_pair_attempts:
            raise BudgetError(f"no admissible pair within {config.max_pair_attempts} attempts")
        i, p, a, injected = next(pairs)
        label = "injected" if injected else f"(i={i}, p={p})"
        if not injected and not in_family(p):
            notes.append(f"skipped {label}: not in the family")
            continue
        K = extract_level_set(p, a, config.grid, config.tol_residual)
        if len(K) == 0:
            notes.append(f"skipped {label}: empty level set")
            continue
        j = len(stages) + 1
        G = g_poly(p, a)
        if not stages:
            F = StageFunction.base(G)
            n = None
            prev_margin = None
        else:
            prev = stages[-1]
            l_samples = prev.L_witness.concat(prev.K_cloud) if len(prev.K_cloud) else prev.L_witness
            n = select_exponent(prev.F, G, l_samples, K, config.n_safety, config.max_n)
            F = prev.F.compose(n, G)
            prev_margin = max(_max_abs(F, l_samples), _max_abs(F, K))
        K = K.retag(Tag.K, j)
        L, M, unresolved = region_witnesses(F, grid_cloud, j)
        margins = StageMargins(
            value_at_origin=complex(F(0.0, 0.0)),
            max_abs_on_k=_max_abs(F, K),
            max_abs_on_prev_l_and_k=prev_margin,
            n_l_witnesses=len(L),
            n_m_witnesses=len(M),
            n_unresolved=unresolved,
        )
        stages.append(
            Stage(j, (i, p), a, G, n, F, K, L, M, margins, injected=injected)
        )
        log.info("stage %d: %s a=%s N=%s |K|=%d", j, label, a, n, len(K))
    return Construction(tuple(stages), tuple(notes), grid_cloud)


def with_variety(stage: Stage, V: PointCloud, reach: float) -> Stage:
    return replace(stage, V_cloud=V, margins=replace(stage.margins, boundary_reach=reach))
