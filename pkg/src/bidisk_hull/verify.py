"""Certification checks over a finished construction.

Every check produces ``CheckRecord`` entries with a signed margin (positive
means satisfied). Hard checks gate the exit status of a build; diagnostics
(projection occupancy, eta-coverage, polynomial fits) are reported only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .construction import Stage, StageFunction, exponent_holds
from .geometry import GridSpec, PointCloud, sample_bidisk
from .polynomials import BiPoly, enumerate_family, monomials_up_to, random_poly
from .varieties import restrict_to_shell

EXP_MINUS_HALF = math.exp(-0.5)
CERT_TOL = 1e-9


@dataclass(frozen=True)
class CheckRecord:
    name: str
    stage: int | None
    margin: float
    tolerance: float
    passed: bool
    witnesses: tuple[tuple[float, float, float, float], ...] = ()
    hard: bool = True
    index: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["witnesses"] = [list(w) for w in self.witnesses]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CheckRecord":
        d = dict(d)
        d["witnesses"] = tuple(tuple(w) for w in d.get("witnesses", ()))
        return cls(**d)


def _witness(z, w) -> tuple[float, float, float, float]:
    z, w = complex(z), complex(w)
    return (z.real, z.imag, w.real, w.imag)


def _record(
    name: str,
    stage: int | None,
    margin: float,
    tolerance: float,
    witness=None,
    *,
    strict: bool = False,
    hard: bool = True,
    index: int = 0,
    details: dict | None = None,
) -> CheckRecord:
    margin = float(margin)
    passed = margin > -tolerance if strict else margin >= -tolerance
    if math.isnan(margin):
        passed = False
    witnesses = () if witness is None or (passed and hard) else (witness,)
    if not passed and not witnesses:
        witnesses = (_witness(0, 0),)
    return CheckRecord(
        name, stage, margin, float(tolerance), bool(passed), witnesses, hard, index, details or {}
    )


@dataclass(frozen=True)
class VerificationReport:
    records: tuple[CheckRecord, ...]

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records if r.hard)

    def select(self, name: str) -> list[CheckRecord]:
        return [r for r in self.records if r.name == name]

    def failures(self) -> list[CheckRecord]:
        return [r for r in self.records if r.hard and not r.passed]

    def merged(self, *others: "VerificationReport") -> "VerificationReport":
        recs = list(self.records)
        for o in others:
            recs.extend(o.records)
        recs.sort(key=lambda r: (r.name, -1 if r.stage is None else r.stage, r.index))
        return VerificationReport(tuple(recs))

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.records]

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> "VerificationReport":
        return cls(tuple(CheckRecord.from_dict(d) for d in items))

    def summary(self) -> str:
        lines = [f"{'check':<28} {'stage':>5} {'idx':>4} {'margin':>14} {'tol':>9}  status"]
        for r in self.records:
            status = ("PASS" if r.passed else "FAIL") if r.hard else "info"
            stage = "-" if r.stage is None else str(r.stage)
            lines.append(
                f"{r.name:<28} {stage:>5} {r.index:>4} {r.margin:>14.6g} {r.tolerance:>9.1e}  {status}"
            )
        return "\n".join(lines)


def _argmin(values: np.ndarray) -> int:
    v = np.where(np.isnan(values), -np.inf, values)
    return int(np.argmin(v))


# -- nesting, varieties in M, exp(-F) separation ----------------------------


def check_nesting(stages: Sequence[Stage], margin_min: float = 0.0) -> VerificationReport:
    """L-witnesses of stage j must satisfy Re F_{j+1} < 1/2; K_j must lie in L_j."""
    recs = []
    for s in stages:
        K = s.K_cloud
        if len(K):
            slack = 0.5 - np.real(s.F(K.z, K.w))
            k = _argmin(slack)
            recs.append(_record("nesting.K-in-L", s.j, slack[k], 0.0, _witness(K.z[k], K.w[k])))
    for s, nxt in zip(stages, stages[1:]):
        L = s.L_witness.concat(s.K_cloud) if len(s.K_cloud) else s.L_witness
        if len(L) == 0:
            recs.append(_record("nesting.L-in-next-L", nxt.j, math.inf, 0.0))
            continue
        slack = 0.5 - np.real(nxt.F(L.z, L.w)) - margin_min
        k = _argmin(slack)
        recs.append(
            _record("nesting.L-in-next-L", nxt.j, slack[k], 0.0, _witness(L.z[k], L.w[k]), strict=True)
        )
    return VerificationReport(tuple(recs))


def check_v_in_m(
    stages: Sequence[Stage], varieties: Sequence[PointCloud], tol: float = 1e-6
) -> VerificationReport:
    """For i <= j, every V_j sample point has Re F_i >= 1/2."""
    recs = []
    for j, V in enumerate(varieties):
        if len(V) == 0:
            continue
        best, wit, worst_i = math.inf, None, None
        for i in range(j + 1):
            vals = np.real(stages[i].F(V.z, V.w)) - 0.5
            k = _argmin(vals)
            if vals[k] < best or math.isnan(vals[k]):
                best, wit, worst_i = float(vals[k]), _witness(V.z[k], V.w[k]), stages[i].j
        recs.append(
            _record("variety-in-M", stages[j].j, best, tol, wit, details={"worst_i": worst_i})
        )
    return VerificationReport(tuple(recs))


def check_certificate_c(
    stage: Stage, M: PointCloud, K: PointCloud, tol_m: float = 1e-9, tol_k: float = 1e-6
) -> VerificationReport:
    """``|exp(-F_j)| <= e^{-1/2}`` on M-witnesses and ``>= 1`` on K samples."""
    recs = []
    if len(M):
        em = np.exp(-np.real(stage.F(M.z, M.w)))
        k = int(np.nanargmax(em))
        recs.append(
            _record(
                "exp-separation.on-M", stage.j, EXP_MINUS_HALF - em[k], tol_m,
                _witness(M.z[k], M.w[k]), details={"sup": float(em[k])},
            )
        )
    if len(K):
        ek = np.abs(np.exp(-stage.F(K.z, K.w)))
        k = _argmin(ek)
        recs.append(
            _record(
                "exp-separation.on-K", stage.j, ek[k] - 1.0, tol_k,
                _witness(K.z[k], K.w[k]), details={"min": float(ek[k])},
            )
        )
    return VerificationReport(tuple(recs))


# -- polynomial certificates ---------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    monomials: tuple[tuple[int, int], ...]
    coeffs: tuple[complex, ...]
    margin: float
    details: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return max((m + n for m, n in self.monomials), default=0)

    def __call__(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        return _design(z, w, self.monomials) @ np.asarray(self.coeffs, dtype=complex)

    def describe(self) -> str:
        terms = []
        for (m, n), c in zip(self.monomials, self.coeffs):
            if abs(c) < 1e-15:
                continue
            mono = "".join(
                s for s in ((f"z^{m}" if m > 1 else "z" if m else ""), (f"w^{n}" if n > 1 else "w" if n else ""))
            )
            terms.append(f"({c.real:.12g}{c.imag:+.12g}j){'*' + mono if mono else ''}")
        return " + ".join(terms) or "0"


def _design(z: np.ndarray, w: np.ndarray, monos) -> np.ndarray:
    z = np.atleast_1d(z)
    w = np.atleast_1d(w)
    dz = max((m for m, _ in monos), default=0)
    dw = max((n for _, n in monos), default=0)
    zp = z[:, None] ** np.arange(dz + 1)[None, :]
    wp = w[:, None] ** np.arange(dw + 1)[None, :]
    return np.stack([zp[:, m] * wp[:, n] for m, n in monos], axis=1)


def fit_certificate_poly(
    F: StageFunction,
    degree: int,
    grid: GridSpec,
    K: PointCloud | None = None,
    M: PointCloud | None = None,
    degree_cap: int = 12,
) -> Certificate:
    """Least-squares polynomial fit of ``exp(-F)`` on bidisk samples.

    The margin is ``min_K |h| - max_M |h|`` when both clouds are given
    (positive means ``h`` separates K from M), NaN otherwise.
    """
    if degree > degree_cap:
        raise ValueError(f"degree {degree} exceeds cap {degree_cap}")
    pts = sample_bidisk(grid)
    with np.errstate(over="ignore", invalid="ignore"):
        target = np.exp(-F(pts.z, pts.w))
    ok = np.isfinite(target)
    monos = tuple(monomials_up_to(degree))
    A = _design(pts.z[ok], pts.w[ok], monos)
    coef, _, rank, sv = np.linalg.lstsq(A, target[ok], rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    fit_err = float(np.max(np.abs(A @ coef - target[ok]))) if ok.any() else math.nan
    details = {
        "fit_max_error": fit_err,
        "condition": cond,
        "rank": int(rank),
        "rank_deficient": bool(rank < len(monos)),
        "n_samples": int(ok.sum()),
    }
    cert = Certificate(monos, tuple(complex(c) for c in coef), math.nan, details)
    margin = math.nan
    if K is not None and M is not None and len(K) and len(M):
        hk = np.abs(cert(K.z, K.w))
        hm = np.abs(cert(M.z, M.w))
        margin = float(hk.min() - hm.max())
        details.update(min_on_k=float(hk.min()), max_on_m=float(hm.max()))
    return Certificate(monos, cert.coeffs, margin, details)


def _margins(A_S: np.ndarray, a_q: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Margins for coefficient columns ``C`` (already l1-normalised)."""
    return np.abs(a_q @ C) - np.abs(A_S @ C).max(axis=0)


def search_hull_certificate(
    q,
    S: PointCloud,
    degree: int,
    budget: int = 10_000,
    seed: int = 0,
    *,
    tol: float = CERT_TOL,
    batch: int = 512,
) -> Certificate | None:
    """Look for a polynomial with ``|p(q)| > sup_S |p|``.

    Coefficient vectors are normalised to unit l1 norm, which makes margins
    comparable across degrees. Candidates: every monomial, then ``budget``
    seeded random vectors, then coordinate-wise refinement of the best one.
    ``None`` means the sample is consistent with ``q`` lying in its
    degree-limited polynomial hull.
    """
    if len(S) == 0:
        raise ValueError("hull test needs a non-empty cloud")
    monos = tuple(monomials_up_to(degree))
    A_S = _design(S.z, S.w, monos)
    a_q = _design(np.array([complex(q[0])]), np.array([complex(q[1])]), monos)[0]
    n = len(monos)
    rng = np.random.default_rng(seed)

    eye = np.eye(n, dtype=complex)
    mono_margin = _margins(A_S, a_q, eye)
    k = int(np.argmax(mono_margin))
    best_c, best_m = eye[:, k].copy(), float(mono_margin[k])
    evals = n

    remaining = budget
    while remaining > 0:
        b = min(batch, remaining)
        C = rng.normal(size=(n, b)) + 1j * rng.normal(size=(n, b))
        C /= np.abs(C).sum(axis=0, keepdims=True)
        m = _margins(A_S, a_q, C)
        k = int(np.argmax(m))
        if m[k] > best_m:
            best_c, best_m = C[:, k].copy(), float(m[k])
        remaining -= b
        evals += b

    step = 0.25
    rot = np.exp(2j * np.pi * np.arange(8) / 8)
    while step > 1e-6 and n > 1:
        improved = False
        for i in range(n):
            C = np.repeat(best_c[:, None], len(rot), axis=1)
            C[i, :] += step * rot
            C /= np.abs(C).sum(axis=0, keepdims=True)
            m = _margins(A_S, a_q, C)
            evals += len(rot)
            k = int(np.argmax(m))
            if m[k] > best_m + 1e-15:
                best_c, best_m, improved = C[:, k].copy(), float(m[k]), True
        if not improved:
            step *= 0.5

    if best_m <= tol:
        return None
    return Certificate(monos, tuple(complex(c) for c in best_c), best_m, {"evaluations": evals})


def exhaustive_monomial_margin(q, S: PointCloud, degree: int) -> float:
    """Best margin over single monomials, the independent cross-check."""
    monos = tuple(monomials_up_to(degree))
    A_S = _design(S.z, S.w, monos)
    a_q = _design(np.array([complex(q[0])]), np.array([complex(q[1])]), monos)[0]
    return float(_margins(A_S, a_q, np.eye(len(monos), dtype=complex)).max())


# -- maximum modulus and spectra -----------------------------------------------


def check_max_modulus(p: Callable, V: PointCloud, Y: PointCloud, tol: float = 1e-6, index: int = 0, label: str = "") -> CheckRecord:
    pv = np.abs(np.asarray(p(V.z, V.w)))
    py = np.abs(np.asarray(p(Y.z, Y.w)))
    k = int(np.argmax(pv))
    margin = float(py.max() + tol - pv[k])
    rec = _record(
        "max-modulus", None, margin, 0.0, _witness(V.z[k], V.w[k]), index=index,
        details={"sup_V": float(pv[k]), "sup_Y": float(py.max()), "poly": label},
    )
    return rec


def battery(degree_cap: int, denom_cap: int, seed: int, n_family: int = 32, n_random: int = 32) -> list[BiPoly]:
    fam = enumerate_family(degree_cap, denom_cap, n_family)
    rng = np.random.default_rng(seed)
    rand = [random_poly(rng, int(rng.integers(1, 5))) for _ in range(n_random)]
    return fam + rand


def check_max_modulus_battery(polys: Sequence[BiPoly], V: PointCloud, Y: PointCloud, tol: float = 1e-6) -> VerificationReport:
    return VerificationReport(
        tuple(check_max_modulus(p, V, Y, tol, index=i, label=str(p)) for i, p in enumerate(polys))
    )


def spectrum_gap(stages: Sequence[Stage], V: PointCloud) -> VerificationReport:
    """``min_V |p_j - a_j| > 0`` for every stage."""
    if len(V) == 0:
        raise ValueError("spectrum gap needs a non-empty limit sample")
    recs = []
    for s in stages:
        d = np.abs(s.p(V.z, V.w) - s.a)
        k = _argmin(d)
        recs.append(_record("spectrum-gap", s.j, d[k], 0.0, _witness(V.z[k], V.w[k]), strict=True))
    return VerificationReport(tuple(recs))


# -- diagnostics ----------------------------------------------------------------


def occupancy(values: np.ndarray, cell: float) -> float:
    """Area fraction of the unit disk covered by occupied ``cell``-squares."""
    if len(values) == 0:
        return 0.0
    keys = {(int(math.floor(v.real / cell)), int(math.floor(v.imag / cell))) for v in values.tolist()}
    return len(keys) * cell * cell / math.pi


def check_projection_thinness(X: PointCloud, cells: Sequence[float] = (0.1, 0.05, 0.025)) -> VerificationReport:
    recs = []
    for axis, vals in (("proj1", X.z), ("proj2", X.w)):
        fr = [occupancy(vals, c) for c in cells]
        monotone = all(a >= b for a, b in zip(fr, fr[1:]))
        recs.append(
            _record(
                f"projection.{axis}", None, 0.0, 0.0, hard=False,
                details={"cells": list(cells), "fractions": fr, "monotone": monotone},
            )
        )
    return VerificationReport(tuple(recs))


def eta_coverage(
    V: PointCloud,
    s_values: Sequence[float],
    a_samples: Sequence[complex],
    delta: float,
    threshold: float | None = None,
) -> VerificationReport:
    """Fraction of (s, a) with a shell point of V satisfying ``z ≈ a w`` and ``|w| ≈ s``."""
    covered = 0
    total = 0
    empty_shells = []
    for s in s_values:
        shell = restrict_to_shell(V, 1.0, s, delta)
        if len(shell) == 0:
            empty_shells.append(s)
        for a in a_samples:
            total += 1
            if len(shell) == 0:
                continue
            aw = np.abs(shell.w)
            hit = (np.abs(shell.z - a * shell.w) <= delta * aw) & (np.abs(aw - s) <= delta)
            covered += bool(hit.any())
    frac = covered / total if total else 0.0
    hard = threshold is not None
    return VerificationReport(
        (
            _record(
                "eta-coverage", None, frac - (threshold or 0.0), 0.0, hard=hard,
                details={"fraction": frac, "covered": covered, "total": total, "empty_shells": empty_shells},
            ),
        )
    )


def default_eta_samples() -> tuple[list[float], list[complex]]:
    s_values = [0.25, 0.5, 0.75, 1.0]
    a_samples = [0j] + [r * complex(math.cos(t), math.sin(t)) for r in (0.5, 1.0) for t in np.linspace(0, 2 * math.pi, 8, endpoint=False)]
    return s_values, a_samples


def stage_bound_records(stages: Sequence[Stage]) -> VerificationReport:
    """Per-stage invariants re-evaluated from the stage data."""
    recs = []
    for s in stages:
        f0 = complex(s.F(0.0, 0.0))
        recs.append(_record("stage.F-at-origin", s.j, 1e-9 - abs(f0 - 1), 0.0))
        K = s.K_cloud
        mk = float(np.max(np.abs(s.F(K.z, K.w)))) if len(K) else 0.0
        recs.append(_record("stage.F-on-K", s.j, 1e-6 - mk, 0.0, details={"max": mk}))
    for prev, s in zip(stages, stages[1:]):
        L = prev.L_witness.concat(prev.K_cloud) if len(prev.K_cloud) else prev.L_witness
        clouds = [c for c in (L, s.K_cloud) if len(c)]
        vals = np.concatenate([np.abs(s.F(c.z, c.w)) for c in clouds]) if clouds else np.zeros(1)
        zs = np.concatenate([c.z for c in clouds]) if clouds else np.zeros(1, complex)
        ws = np.concatenate([c.w for c in clouds]) if clouds else np.zeros(1, complex)
        k = int(np.nanargmax(vals))
        recs.append(
            _record("stage.F-on-prevL-and-K", s.j, 0.25 - vals[k], 0.0, _witness(zs[k], ws[k]), strict=True,
                    details={"max": float(vals[k])})
        )
    return VerificationReport(tuple(recs))


def check_exponent_minimality(stages: Sequence[Stage]) -> VerificationReport:
    """With N > 1, ``N - 1`` must fail the decay inequality on some L-sample.

    Meaningful for builds made with safety factor 1; ``N = 1`` is minimal
    because exponents are positive integers.
    """
    recs = []
    for prev, s in zip(stages, stages[1:]):
        L = prev.L_witness.concat(prev.K_cloud) if len(prev.K_cloud) else prev.L_witness
        holds = bool(exponent_holds(prev.F, s.G, L, s.N).all())
        violated = 1 if s.N == 1 else int((~exponent_holds(prev.F, s.G, L, s.N - 1)).sum())
        # 0 when N works and N - 1 does not, -1 otherwise
        margin = 0.0 if holds and violated else -1.0
        recs.append(
            _record("exponent-minimality", s.j, margin, 0.0,
                    details={"N": s.N, "violations_at_N_minus_1": violated, "holds_at_N": holds})
        )
    return VerificationReport(tuple(recs))
