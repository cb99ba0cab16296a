"""Exact bivariate polynomials over Q + iQ and the sequences built from them.

Coefficients are stored exactly (``fractions.Fraction`` pairs); evaluation
happens in double precision on numpy arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .geometry import GeometryError, PointCloud

Monomial = tuple[int, int]

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


class DegenerateScaleError(ZeroDivisionError):
    """The normalising denominator ``p(0,0) - a`` vanishes."""


@dataclass(frozen=True, order=True)
class GaussianRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @classmethod
    def coerce(cls, value) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        if isinstance(value, tuple):
            return cls(*value)
        if isinstance(value, complex):
            return cls(Fraction(value.real), Fraction(value.imag))
        return cls(Fraction(value))

    def __bool__(self) -> bool:
        return bool(self.re) or bool(self.im)

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __add__(self, other):
        other = GaussianRational.coerce(other)
        return GaussianRational(self.re + other.re, self.im + other.im)

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-GaussianRational.coerce(other))

    def __mul__(self, other):
        o = GaussianRational.coerce(other)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    @property
    def abs2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __abs__(self) -> float:
        return math.sqrt(self.abs2)

    @property
    def denominator(self) -> int:
        return math.lcm(self.re.denominator, self.im.denominator)

    def __str__(self) -> str:
        if not self.im:
            return str(self.re)
        if not self.re:
            return f"{self.im}*I"
        sign = "+" if self.im > 0 else "-"
        return f"({self.re}{sign}{abs(self.im)}*I)"


ZERO = GaussianRational()


@dataclass(frozen=True, eq=False)
class BiPoly:
    """Polynomial ``sum c[m, n] z^m w^n`` with exact Gaussian-rational coefficients."""

    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (m, n), c in self.coeffs.items():
            if m < 0 or n < 0:
                raise ValueError(f"negative exponent in monomial {(m, n)}")
            c = GaussianRational.coerce(c)
            if c:
                clean[(int(m), int(n))] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def __eq__(self, other) -> bool:
        return isinstance(other, BiPoly) and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(tuple(self.coeffs.items()))

    def __repr__(self) -> str:
        return f"BiPoly({self})"

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        terms = []
        for (m, n), c in self.coeffs.items():
            mono = "*".join(
                s for s in (_power("z", m), _power("w", n)) if s
            )
            terms.append(f"{c}*{mono}" if mono else str(c))
        return " + ".join(terms)

    @property
    def degree(self) -> int:
        return max((m + n for m, n in self.coeffs), default=0)

    @property
    def is_constant(self) -> bool:
        return all(m + n == 0 for m, n in self.coeffs)

    @property
    def l1_norm(self) -> float:
        return math.fsum(abs(c) for c in self.coeffs.values())

    @property
    def constant_term(self) -> GaussianRational:
        return self.coeffs.get((0, 0), ZERO)

    @cached_property
    def _dense(self) -> np.ndarray:
        dz = max((m for m, _ in self.coeffs), default=0)
        dw = max((n for _, n in self.coeffs), default=0)
        arr = np.zeros((dz + 1, dw + 1), dtype=complex)
        for (m, n), c in self.coeffs.items():
            arr[m, n] = complex(c)
        return arr

    def __call__(self, z, w):
        """Horner evaluation in both variables; accepts scalars or arrays."""
        c = self._dense
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        acc = np.zeros(np.broadcast(z, w).shape, dtype=complex)
        for m in range(c.shape[0] - 1, -1, -1):
            inner = np.zeros_like(acc)
            for n in range(c.shape[1] - 1, -1, -1):
                inner = inner * w + c[m, n]
            acc = acc * z + inner
        return acc[()] if acc.ndim == 0 else acc

    def to_record(self) -> list[list[int]]:
        return [
            [m, n, c.re.numerator, c.re.denominator, c.im.numerator, c.im.denominator]
            for (m, n), c in self.coeffs.items()
        ]

    @classmethod
    def from_record(cls, record: Sequence[Sequence[int]]) -> "BiPoly":
        coeffs = {}
        for m, n, rn, rd, inum, iden in record:
            coeffs[(m, n)] = GaussianRational(Fraction(rn, rd), Fraction(inum, iden))
        return cls(coeffs)

    @classmethod
    def parse(cls, text: str) -> "BiPoly":
        """Parse an expression in ``z``, ``w`` and ``I`` (or ``i``) with rational numbers.

        Accepts ``^`` for powers, implicit products such as ``2zw`` and
        decimal literals, which are read exactly.
        """
        import sympy
        from sympy.parsing import sympy_parser as sp

        z, w = sympy.symbols("z w")
        local = {"z": z, "w": w, "I": sympy.I, "i": sympy.I}
        rules = sp.standard_transformations + (
            sp.convert_xor, sp.implicit_multiplication_application, sp.rationalize,
        )
        try:
            expr = sp.parse_expr(text, local_dict=local, transformations=rules)
            poly = sympy.Poly(sympy.expand(expr), z, w)
        except (SyntaxError, TypeError, sympy.SympifyError, sympy.PolynomialError) as exc:
            raise ValueError(f"cannot parse polynomial {text!r}: {exc}") from exc
        coeffs = {}
        for (m, n), c in poly.terms():
            re, im = sympy.re(c), sympy.im(c)
            if not (re.is_Rational and im.is_Rational):
                raise ValueError(f"coefficient {c} is not in Q + iQ")
            coeffs[(m, n)] = GaussianRational(
                Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q))
            )
        return cls(coeffs)


def _power(var: str, k: int) -> str:
    if k == 0:
        return ""
    return var if k == 1 else f"{var}^{k}"


def eval_poly(p: BiPoly, pt) -> complex:
    return complex(p(pt[0], pt[1]))


def sup_norm_on_cloud(f: Callable, S: PointCloud) -> float:
    """Max of ``|f|`` over the sample; a lower bound for the true sup-norm."""
    if len(S) == 0:
        raise GeometryError("sup-norm of an empty cloud")
    vals = np.broadcast_to(np.asarray(f(S.z, S.w)), S.z.shape)
    return float(np.max(np.abs(vals)))


# -- the family of polynomials mapping the bidisk into the disk ------------


def monomials_up_to(degree: int) -> list[Monomial]:
    """Graded order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ..."""
    return [(d - k, k) for d in range(degree + 1) for k in range(d + 1)]


def _gaussian_numerators(bound: int) -> list[tuple[int, int]]:
    cands = [
        (a, b)
        for a in range(-bound, bound + 1)
        for b in range(-bound, bound + 1)
        if a * a + b * b <= bound * bound
    ]
    cands.sort(key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, -ab[0], -ab[1]))
    return cands


def _vectors(slots: int, q: int, cands) -> Iterator[tuple]:
    """Coefficient-numerator vectors in lex order with sum of moduli <= q."""
    mods = [math.sqrt(a * a + b * b) for a, b in cands]

    def rec(prefix, budget):
        if len(prefix) == slots:
            yield tuple(prefix)
            return
        for c, mod in zip(cands, mods):
            if mod <= budget + 1e-12:
                prefix.append(c)
                yield from rec(prefix, budget - mod)
                prefix.pop()

    yield from rec([], float(q))


def iter_family(degree_cap: int, denom_cap: int) -> Iterator[BiPoly]:
    """Non-constant polynomials with l1 coefficient norm at most 1.

    Ordered by total degree, then common denominator, then lexicographic
    coefficient order over the graded monomials. Each polynomial appears once,
    at the level of its exact degree and exact common denominator.
    """
    if degree_cap < 1 or denom_cap < 1:
        raise ValueError("degree and denominator caps must be positive")
    for d in range(1, degree_cap + 1):
        monos = monomials_up_to(d)
        top = [i for i, (m, n) in enumerate(monos) if m + n == d]
        for q in range(1, denom_cap + 1):
            cands = _gaussian_numerators(q)
            for vec in _vectors(len(monos), q, cands):
                if not any(vec[i] != (0, 0) for i in top):
                    continue
                coeffs = {
                    mono: GaussianRational(Fraction(a, q), Fraction(b, q))
                    for mono, (a, b) in zip(monos, vec)
                    if (a, b) != (0, 0)
                }
                lcm = 1
                for c in coeffs.values():
                    lcm = math.lcm(lcm, c.denominator)
                if lcm != q:
                    continue
                yield BiPoly(coeffs)


def enumerate_family(degree_cap: int, denom_cap: int, count: int) -> list[BiPoly]:
    return list(itertools.islice(iter_family(degree_cap, denom_cap), count))


def in_family(p: BiPoly) -> bool:
    """Sufficient membership test: non-constant and l1 norm at most one."""
    return not p.is_constant and p.l1_norm <= 1 + 1e-12


# -- target values avoiding Q + iQ ----------------------------------------


@dataclass(frozen=True)
class ZetaSequence:
    """Dense sequence in the open unit disk with irrational real and imaginary parts.

    Value ``k`` equals ``(a + sqrt2 * 10^-l) + i (b + sqrt3 * 10^-l)`` with
    ``a, b`` rational (``rational_parts[k]``) and ``l = levels[k]``.
    """

    values: tuple[complex, ...]
    rational_parts: tuple[tuple[Fraction, Fraction], ...]
    levels: tuple[int, ...]
    margin: float = 1e-6

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> complex:
        return self.values[i]

    def offsets(self, i: int) -> tuple[float, float]:
        scale = 10.0 ** -self.levels[i]
        return SQRT2 * scale, SQRT3 * scale

    def avoids(self, c: GaussianRational) -> bool:
        """Exact test that ``c`` differs from every value.

        ``Re(value) - a = sqrt2 * 10^-l`` is irrational while ``Re(c) - a``
        is rational, so equality is impossible whenever the offset is
        non-zero; the offset is non-zero for every finite level.
        """
        GaussianRational.coerce(c)  # rejects non-numeric input
        return all(level >= 1 for level in self.levels)


def _zeta_level(level: int):
    h = Fraction(1, 2**level)
    span = 2**level
    pts = []
    for m in range(-span, span + 1):
        for n in range(-span, span + 1):
            if level > 1 and m % 2 == 0 and n % 2 == 0:
                continue
            pts.append((m, n))
    pts.sort(key=lambda mn: (mn[0] ** 2 + mn[1] ** 2, math.atan2(mn[1], mn[0]) % (2 * math.pi)))
    for m, n in pts:
        yield m * h, n * h


def zeta_sequence(count: int, margin: float = 1e-6) -> ZetaSequence:
    if count < 1:
        raise ValueError("count must be positive")
    values, parts, levels = [], [], []
    level = 1
    while len(values) < count:
        off_re = SQRT2 * 10.0 ** -level
        off_im = SQRT3 * 10.0 ** -level
        for a, b in _zeta_level(level):
            zeta = complex(float(a) + off_re, float(b) + off_im)
            if abs(zeta) >= 1 - margin:
                continue
            values.append(zeta)
            parts.append((a, b))
            levels.append(level)
            if len(values) == count:
                break
        level += 1
    return ZetaSequence(tuple(values), tuple(parts), tuple(levels), margin)


# -- normalised polynomials G = (p - a) / (p(0,0) - a) -------------------------


@dataclass(frozen=True)
class ScaledPoly:
    base: BiPoly
    shift: complex
    scale: complex

    def __post_init__(self):
        if self.scale == 0:
            raise DegenerateScaleError("scale of a ScaledPoly must be non-zero")

    def __call__(self, z, w):
        return (self.base(z, w) - self.shift) / self.scale

    def to_record(self) -> dict:
        return {
            "poly": self.base.to_record(),
            "a": [self.shift.real, self.shift.imag],
        }

    @classmethod
    def from_record(cls, record: dict) -> "ScaledPoly":
        return g_poly(BiPoly.from_record(record["poly"]), complex(*record["a"]))


def g_poly(p: BiPoly, a: complex) -> ScaledPoly:
    a = complex(a)
    scale = complex(p.constant_term) - a
    if scale == 0:
        raise DegenerateScaleError(f"p(0,0) equals the target value {a!r}")
    return ScaledPoly(p, a, scale)


def random_poly(rng: np.random.Generator, degree: int, denom: int = 1000) -> BiPoly:
    """Random polynomial with rational coefficients, rescaled to l1 norm <= 1."""
    monos = monomials_up_to(degree)
    raw = rng.normal(size=(len(monos), 2))
    raw /= np.abs(raw[:, 0] + 1j * raw[:, 1]).sum()
    coeffs = {
        mono: GaussianRational(
            Fraction(int(re * denom), denom),
            Fraction(int(im * denom), denom),
        )
        for mono, (re, im) in zip(monos, raw)
    }
    return BiPoly(coeffs)
