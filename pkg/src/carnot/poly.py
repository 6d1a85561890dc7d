"""Sparse multivariate polynomials with float coefficients.

Used for exact group-law arithmetic: the BCH product, left-invariant field
coefficients and polynomial maps are all polynomials in Jacobian coordinates.
"""

from __future__ import annotations

from typing import Dict, Iterable, Tuple

import numpy as np

Monomial = Tuple[int, ...]

_DROP = 0.0


class Poly:
    """Polynomial in ``nvars`` real variables stored as ``{exponents: coeff}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Dict[Monomial, float] | None = None):
        self.nvars = nvars
        self.terms: Dict[Monomial, float] = {}
        if terms:
            for mono, c in terms.items():
                if len(mono) != nvars:
                    raise ValueError(f"monomial {mono} has wrong length for {nvars} variables")
                if c != _DROP:
                    self.terms[tuple(mono)] = float(c)

    # constructors

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def const(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars: int, i: int, coeff: float = 1.0) -> "Poly":
        mono = [0] * nvars
        mono[i] = 1
        return cls(nvars, {tuple(mono): coeff})

    @classmethod
    def monomial(cls, exps: Iterable[int], coeff: float = 1.0) -> "Poly":
        exps = tuple(int(e) for e in exps)
        return cls(len(exps), {exps: coeff})

    # arithmetic

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("polynomials live in different variable spaces")
            return other
        return Poly.const(self.nvars, float(other))

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for mono, c in other.terms.items():
            v = out.get(mono, 0.0) + c
            if v == 0.0:
                out.pop(mono, None)
            else:
                out[mono] = v
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            c = float(other)
            if c == 0.0:
                return Poly.zero(self.nvars)
            return Poly(self.nvars, {m: c * v for m, v in self.terms.items()})
        other = self._coerce(other)
        out: Dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0.0) + c1 * c2
        return Poly(self.nvars, {m: c for m, c in out.items() if c != 0.0})

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "Poly":
        return self * (1.0 / float(c))

    def __pow__(self, n: int) -> "Poly":
        out = Poly.const(self.nvars, 1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            other = Poly.const(self.nvars, float(other))
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "Poly(0)"
        parts = []
        for mono, c in sorted(self.terms.items()):
            factors = "*".join(
                f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(mono) if e
            )
            parts.append(f"{c:+g}" + (f"*{factors}" if factors else ""))
        return "Poly(" + " ".join(parts) + ")"

    # calculus

    def diff(self, i: int) -> "Poly":
        out: Dict[Monomial, float] = {}
        for mono, c in self.terms.items():
            e = mono[i]
            if e == 0:
                continue
            m = list(mono)
            m[i] = e - 1
            m = tuple(m)
            out[m] = out.get(m, 0.0) + c * e
        return Poly(self.nvars, out)

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at a point ``(nvars,)`` or a batch ``(m, nvars)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        out = np.zeros(pts.shape[0])
        for mono, c in self.terms.items():
            term = np.full(pts.shape[0], c)
            for i, e in enumerate(mono):
                if e:
                    term = term * pts[:, i] ** e
            out += term
        return float(out[0]) if single else out

    def substitute(self, values: Dict[int, float]) -> "Poly":
        """Fix some variables to numbers; the variable slots are kept (at degree 0)."""
        out: Dict[Monomial, float] = {}
        for mono, c in self.terms.items():
            m = list(mono)
            for i, v in values.items():
                if m[i]:
                    c = c * float(v) ** m[i]
                    m[i] = 0
            m = tuple(m)
            out[m] = out.get(m, 0.0) + c
        return Poly(self.nvars, {m: c for m, c in out.items() if c != 0.0})

    def restrict(self, keep: Iterable[int]) -> "Poly":
        """Project onto the variables in ``keep``; all others must be absent."""
        keep = list(keep)
        drop = set(range(self.nvars)) - set(keep)
        out = {}
        for mono, c in self.terms.items():
            if any(mono[i] for i in drop):
                raise ValueError("cannot restrict: polynomial depends on a dropped variable")
            out[tuple(mono[i] for i in keep)] = c
        return Poly(len(keep), out)

    def embed(self, nvars: int, positions: Iterable[int]) -> "Poly":
        positions = list(positions)
        out = {}
        for mono, c in self.terms.items():
            m = [0] * nvars
            for i, p in enumerate(positions):
                m[p] = mono[i]
            out[tuple(m)] = c
        return Poly(nvars, out)

    # bookkeeping

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def prune(self, tol: float = 1e-14) -> "Poly":
        return Poly(self.nvars, {m: c for m, c in self.terms.items() if abs(c) > tol})

    def weighted_degrees(self, weights) -> set:
        return {sum(w * e for w, e in zip(weights, mono)) for mono in self.terms}

    def is_homogeneous(self, weights, degree: int) -> bool:
        return all(sum(w * e for w, e in zip(weights, mono)) == degree for mono in self.terms)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)


def poly_det(mat) -> Poly:
    """Determinant of a small square matrix of polynomials (cofactor expansion)."""
    n = len(mat)
    if n == 1:
        return mat[0][0]
    if n == 2:
        return mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
    total = None
    for j in range(n):
        if mat[0][j].is_zero:
            continue
        minor = [row[:j] + row[j + 1:] for row in mat[1:]]
        term = mat[0][j] * poly_det(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total if total is not None else Poly.zero(mat[0][0].nvars)
