"""Formal operator words, their principal symbols, and symbol transport.

Words are finite products of letters: multipliers M_f, quasi-Riesz
transforms R^A_k and their adjoints, and a marker standing for an arbitrary
compact operator.  The symbol map sends a word to (product of its scalars)
tensor (ordered product of its Riesz letters) and kills any word containing a
compact marker.  Riesz words are kept free: no relations among them are used.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .fields import SmoothMap
from .geometry import (
    ChartAtlas,
    admissibility_matrix,
    check_G_diffeomorphism,
    extend_first_block,
)
from .group import StratifiedAlgebra

COEFF_TOL = 1e-13
MATRIX_TOL = 1e-10


class NotCertified(ValueError):
    pass


class SupportLeak(ValueError):
    pass


class PartitionGap(ValueError):
    pass


class IncompatibleSection(ValueError):
    pass


# scalar functions


class ScalarFunction:
    """Named real function of the group variable, optionally with a support box.

    ``chain`` records compositions with maps so that f∘h^-1∘h reduces to f.
    """

    def __init__(self, name: str, func: Callable, support=None, chain: Tuple = ()):
        self.base = name
        self.func = func
        self.support = None if support is None else np.asarray(support, float)
        self.chain = tuple(chain)

    @property
    def name(self) -> str:
        return self.base + "".join(f"∘{lab}" for lab, _ in self.chain)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        for _, m in reversed(self.chain):
            x = m(x)
        return np.asarray(self.func(x), float)

    def compose(self, m: SmoothMap, label: Optional[str] = None) -> "ScalarFunction":
        """f∘m, cancelling m against a trailing m^-1 in the chain."""
        label = label or m.label
        chain = list(self.chain)
        if chain:
            last_label, last = chain[-1]
            if last is getattr(m, "inverse", None) or m is getattr(last, "inverse", None):
                chain.pop()
                return ScalarFunction(self.base, self.func, self.support, tuple(chain))
        if getattr(m, "label", "") == "id":
            return self
        chain.append((label, m))
        return ScalarFunction(self.base, self.func, None, tuple(chain))

    def __repr__(self):
        return f"ScalarFunction({self.name})"


def gaussian(name: str, center, width: float = 1.0) -> ScalarFunction:
    c = np.asarray(center, float)
    return ScalarFunction(name, lambda x: np.exp(-np.sum((x - c) ** 2, axis=1) / width ** 2))


def bump_function(name: str, center, radius: float) -> ScalarFunction:
    from .spectral import smooth_bump

    c = np.asarray(center, float)
    box = np.stack([c - radius, c + radius], axis=1)
    return ScalarFunction(name, lambda x: smooth_bump(x, c, radius), support=box)


def constant_function(name: str, value: float) -> ScalarFunction:
    return ScalarFunction(name, lambda x: np.full(len(x), float(value)))


def coordinate_function(name: str, i: int) -> ScalarFunction:
    return ScalarFunction(name, lambda x: x[:, i])


# letters


def _matrix_key(A) -> bytes:
    return np.round(np.asarray(A, float), 10).tobytes()


class AutField:
    """Automorphism-valued field x -> a(x), constant outside a ball."""

    def __init__(self, name: str, func: Callable):
        self.name = name
        self.func = func

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, float)), float)


@dataclass(frozen=True)
class Letter:
    kind: str  # "mult" | "riesz" | "rieszadj" | "compact"
    k: int = -1
    matrix: Optional[bytes] = None  # key of a constant automorphism
    ref: object = field(default=None, compare=False, hash=False)
    label: str = ""

    def adjoint(self) -> "Letter":
        swap = {"riesz": "rieszadj", "rieszadj": "riesz"}
        return Letter(swap.get(self.kind, self.kind), self.k, self.matrix, self.ref, self.label)

    @property
    def is_riesz(self) -> bool:
        return self.kind in ("riesz", "rieszadj")

    def __repr__(self):
        if self.kind == "mult":
            return f"M[{self.label}]"
        if self.kind == "compact":
            return "K"
        star = "*" if self.kind == "rieszadj" else ""
        return f"R{star}[{self.k + 1},{self.label}]"


def Mult(f: ScalarFunction) -> Letter:
    return Letter("mult", ref=f, label=f.name, matrix=f.name.encode())


def _riesz(kind, k, A, label):
    if isinstance(A, AutField):
        return Letter(kind, k, ("field:" + A.name).encode(), A, label or A.name)
    A = np.asarray(getattr(A, "matrix", A), float)
    return Letter(kind, k, _matrix_key(A), A, label or "A")


def Riesz(k: int, A, label: str = "") -> Letter:
    return _riesz("riesz", k, A, label)


def RieszAdj(k: int, A, label: str = "") -> Letter:
    return _riesz("rieszadj", k, A, label)


def Compact() -> Letter:
    return Letter("compact")


Word = Tuple[Letter, ...]


def _clean(d: dict) -> dict:
    return {w: c for w, c in d.items() if abs(c) > COEFF_TOL}


class FormalElement:
    """Finite linear combination of words with complex coefficients."""

    def __init__(self, terms: Optional[Dict[Word, complex]] = None):
        self.terms: Dict[Word, complex] = _clean({tuple(w): complex(c) for w, c in (terms or {}).items()})

    @classmethod
    def word(cls, *letters: Letter, coeff: complex = 1.0) -> "FormalElement":
        return cls({tuple(letters): coeff})

    @classmethod
    def one(cls) -> "FormalElement":
        return cls({(): 1.0})

    def __add__(self, other):
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0) + c
        return FormalElement(out)

    def __neg__(self):
        return FormalElement({w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, FormalElement):
            out: Dict[Word, complex] = {}
            for (w1, c1), (w2, c2) in itertools.product(self.terms.items(), other.terms.items()):
                out[w1 + w2] = out.get(w1 + w2, 0) + c1 * c2
            return FormalElement(out)
        return FormalElement({w: c * complex(other) for w, c in self.terms.items()})

    def __rmul__(self, c):
        return self * c

    def adjoint(self) -> "FormalElement":
        return FormalElement({tuple(l.adjoint() for l in reversed(w)): np.conj(c) for w, c in self.terms.items()})

    def __eq__(self, other):
        return isinstance(other, FormalElement) and self.terms.keys() == other.terms.keys() and all(
            abs(self.terms[w] - other.terms[w]) <= 1e-12 for w in self.terms)

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"({c:g})" + "·".join(map(repr, w)) for w, c in self.terms.items())

    def letters(self) -> Iterable[Letter]:
        for w in self.terms:
            yield from w


# symbols


ScalarKey = Tuple[str, ...]


class SymbolExpr:
    """Formal sum of f ⊗ g with f a product of scalar functions and g a Riesz word."""

    def __init__(self, terms: Optional[Dict[Tuple[ScalarKey, Word], complex]] = None,
                 functions: Optional[Dict[str, ScalarFunction]] = None):
        self.terms = _clean(dict(terms or {}))
        self.functions = dict(functions or {})

    @classmethod
    def zero(cls):
        return cls()

    def __add__(self, other):
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return SymbolExpr(out, {**self.functions, **other.functions})

    def __neg__(self):
        return SymbolExpr({k: -c for k, c in self.terms.items()}, self.functions)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, SymbolExpr):
            return SymbolExpr({k: c * complex(other) for k, c in self.terms.items()}, self.functions)
        out = {}
        for ((s1, g1), c1), ((s2, g2), c2) in itertools.product(self.terms.items(), other.terms.items()):
            key = (tuple(sorted(s1 + s2)), g1 + g2)
            out[key] = out.get(key, 0) + c1 * c2
        return SymbolExpr(out, {**self.functions, **other.functions})

    def adjoint(self):
        out = {}
        for (s, g), c in self.terms.items():
            key = (s, tuple(l.adjoint() for l in reversed(g)))
            out[key] = out.get(key, 0) + np.conj(c)
        return SymbolExpr(out, self.functions)

    def __eq__(self, other):
        """Exact canonical-form equality."""
        if not isinstance(other, SymbolExpr):
            return NotImplemented
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0) - other.terms.get(k, 0)) <= 1e-12 for k in keys)

    def scalar_values(self, key: ScalarKey, probes) -> np.ndarray:
        out = np.ones(len(probes))
        for name in key:
            out = out * self.functions[name](probes)
        return out

    def equals(self, other: "SymbolExpr", probes, tol: float = 1e-10) -> bool:
        """Canonical form up to scalar identities detected on the probe set."""
        return (self - other).is_zero(probes, tol)

    def is_zero(self, probes=None, tol: float = 1e-10) -> bool:
        if not self.terms:
            return True
        if probes is None:
            return False
        by_word: Dict[Word, np.ndarray] = {}
        for (s, g), c in self.terms.items():
            by_word[g] = by_word.get(g, 0) + c * self.scalar_values(s, probes)
        return all(np.max(np.abs(v)) <= tol for v in by_word.values())

    def at(self, x, alg: Optional[StratifiedAlgebra] = None) -> "PointSymbol":
        """Pointwise symbol: scalars evaluated, field letters frozen at x."""
        x = np.asarray(x, float)
        ps = PointSymbol()
        for (s, g), c in self.terms.items():
            val = c * self.scalar_values(s, x[None])[0]
            ps.add(tuple(freeze_letter(l, x, alg) for l in g), val)
        return ps

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for (s, g), c in self.terms.items():
            f = "·".join(s) or "1"
            r = "·".join(map(repr, g)) or "1"
            parts.append(f"({c:g}) {f}⊗{r}")
        return " + ".join(parts)

    def to_json(self):
        return [dict(coeff=[float(np.real(c)), float(np.imag(c))], scalars=list(s),
                     riesz=[dict(kind=l.kind, k=l.k + 1, automorphism=l.label) for l in g])
                for (s, g), c in sorted(self.terms.items(), key=lambda kv: repr(kv[0]))]


def symbol(e: FormalElement) -> SymbolExpr:
    """Word -> (product of Mult scalars) ⊗ (ordered Riesz letters); compact words -> 0."""
    out: Dict[Tuple[ScalarKey, Word], complex] = {}
    funcs: Dict[str, ScalarFunction] = {}
    for w, c in e.terms.items():
        if any(l.kind == "compact" for l in w):
            continue
        scal = []
        riesz = []
        for l in w:
            if l.kind == "mult":
                scal.append(l.label)
                funcs[l.label] = l.ref
            else:
                riesz.append(l)
        key = (tuple(sorted(scal)), tuple(riesz))
        out[key] = out.get(key, 0) + c
    return SymbolExpr(out, funcs)


def lift(s: SymbolExpr) -> FormalElement:
    """A formal element whose symbol is ``s`` (scalars and Riesz letters interleaved)."""
    terms: Dict[Word, complex] = {}
    for (sc, g), c in s.terms.items():
        mults = [Mult(s.functions[n]) for n in sc]
        word = []
        for a, b in itertools.zip_longest(mults, g):
            if a is not None:
                word.append(a)
            if b is not None:
                word.append(b)
        terms[tuple(word)] = terms.get(tuple(word), 0) + c
    return FormalElement(terms)


def kernel_test(e: FormalElement, probes=None) -> bool:
    """True iff the symbol vanishes in the free model (conservative for the closure)."""
    return symbol(e).is_zero(probes)


# pointwise symbols


@dataclass(frozen=True)
class PointLetter:
    kind: str
    k: int
    matrix: np.ndarray = field(compare=False)

    def close(self, other: "PointLetter", tol: float = MATRIX_TOL) -> bool:
        return self.kind == other.kind and self.k == other.k and np.allclose(self.matrix, other.matrix,
                                                                             atol=tol, rtol=0)

    def act(self, H) -> "PointLetter":
        return PointLetter(self.kind, self.k, np.asarray(H) @ self.matrix)


def _full_matrix(A, alg: Optional[StratifiedAlgebra]):
    A = np.asarray(A, float)
    if alg is not None and A.shape == (alg.n1, alg.n1) and alg.dim != alg.n1:
        return extend_first_block(alg, A)
    return A


def freeze_letter(l: Letter, x, alg=None) -> PointLetter:
    if isinstance(l.ref, AutField):
        return PointLetter(l.kind, l.k, _full_matrix(l.ref(x), alg))
    return PointLetter(l.kind, l.k, _full_matrix(l.ref, alg))


class PointSymbol:
    """Symbol at a point: linear combination of Riesz words with constant automorphisms."""

    def __init__(self):
        self.terms: List[Tuple[Tuple[PointLetter, ...], complex]] = []

    def add(self, word, coeff):
        for i, (w, c) in enumerate(self.terms):
            if len(w) == len(word) and all(a.close(b) for a, b in zip(w, word)):
                self.terms[i] = (w, c + coeff)
                return
        self.terms.append((tuple(word), complex(coeff)))

    def act(self, H) -> "PointSymbol":
        out = PointSymbol()
        for w, c in self.terms:
            out.add(tuple(l.act(H) for l in w), c)
        return out

    def scaled(self, s) -> "PointSymbol":
        out = PointSymbol()
        for w, c in self.terms:
            out.add(w, c * s)
        return out

    def __add__(self, other):
        out = PointSymbol()
        for w, c in self.terms + other.terms:
            out.add(w, c)
        return out

    def distance(self, other: "PointSymbol") -> float:
        """Max coefficient mismatch after merging words with equal letters."""
        diff = self + other.scaled(-1.0)
        return max((abs(c) for _, c in diff.terms), default=0.0)

    def norm(self) -> float:
        return float(sum(abs(c) for _, c in self.terms))

    def is_zero(self, tol: float = 1e-12) -> bool:
        return all(abs(c) <= tol for _, c in self.terms)


class SymbolField:
    """Pointwise symbol evaluator x -> PointSymbol."""

    def __init__(self, func: Callable, label: str = "sym"):
        self.func = func
        self.label = label

    def __call__(self, x) -> PointSymbol:
        return self.func(np.asarray(x, float))


def as_symbol_field(e, alg: Optional[StratifiedAlgebra] = None) -> SymbolField:
    if isinstance(e, SymbolField):
        return e
    s = symbol(e) if isinstance(e, FormalElement) else e
    return SymbolField(lambda x: s.at(x, alg), "sym")


def symbol_of_sandwich(psi: ScalarFunction, a, k: int, alg: Optional[StratifiedAlgebra] = None) -> SymbolField:
    """x -> psi(x)^2 ⊗ R^{a(x)}_k."""
    letter = Riesz(k, a)

    def f(x):
        ps = PointSymbol()
        ps.add((freeze_letter(letter, x, alg),), float(psi(x[None])[0]) ** 2)
        return ps

    return SymbolField(f, f"sandwich({psi.name})")


def conjugate_by_diffeo(e, phi: SmoothMap, alg: StratifiedAlgebra, certify_on=None,
                        tol: float = 1e-7) -> SymbolField:
    """y -> pi_{H(Phi^-1 y)}(sym(e)(Phi^-1 y)), letters acted on by (k, A) -> (k, H A)."""
    if certify_on is not None:
        rep = check_G_diffeomorphism(alg, phi, certify_on, tol=tol)
        if not rep.passed:
            raise NotCertified(f"{phi.label} fails the horizontal criteria "
                               f"(residual {max(rep.residual5, rep.residual6):.3g})")
    inner = as_symbol_field(e, alg)

    def f(y):
        x = phi.invert(y[None])[0]
        H = admissibility_matrix(alg, phi, x)
        return inner(x).act(H)

    return SymbolField(f, f"{phi.label}.{inner.label}")


def conjugate_by_automorphism(s: SymbolExpr, A, alg: StratifiedAlgebra) -> SymbolExpr:
    """Exact transport by a constant automorphism: scalars compose with A^-1, letters (k, B) -> (k, A B)."""
    from .fields import affine_map

    A = _full_matrix(A, alg)
    Amap = affine_map(A, label="A")
    out = {}
    funcs = {}
    for (sc, g), c in s.terms.items():
        new_sc = []
        for n in sc:
            f = s.functions[n].compose(Amap.inverse, "A^-1")
            funcs[f.name] = f
            new_sc.append(f.name)
        new_g = []
        for l in g:
            if isinstance(l.ref, AutField):
                fld = l.ref
                AF = AutField(f"{fld.name}∘A^-1", lambda x, fld=fld: A @ fld(np.linalg.solve(A, x)))
                new_g.append(Letter(l.kind, l.k, ("field:" + AF.name).encode(), AF, AF.name))
            else:
                M = A @ _full_matrix(l.ref, alg)
                new_g.append(Letter(l.kind, l.k, _matrix_key(M), M, f"A·{l.label}"))
        key = (tuple(sorted(new_sc)), tuple(new_g))
        out[key] = out.get(key, 0) + c
    return SymbolExpr(out, funcs)


# charts and globalisation


def word_support(w: Word):
    boxes = [l.ref.support for l in w if l.kind == "mult" and l.ref.support is not None]
    if not boxes:
        return None
    lo = np.max([b[:, 0] for b in boxes], axis=0)
    hi = np.min([b[:, 1] for b in boxes], axis=0)
    return np.stack([lo, hi], axis=1)


def _inside(box, domain) -> bool:
    return box is not None and bool(np.all(box[:, 0] >= domain[:, 0] - 1e-12) and
                                    np.all(box[:, 1] <= domain[:, 1] + 1e-12))


def restrict(e: FormalElement, chart_map: SmoothMap, domain=None) -> FormalElement:
    """Rest: move an element supported in the chart domain to group coordinates."""
    if domain is not None:
        for w in e.terms:
            if not _inside(word_support(w), np.asarray(domain, float)):
                raise SupportLeak(f"word {w} is not supported inside the chart domain")
    return _transport_scalars(e, chart_map.inverse, getattr(chart_map.inverse, "label", "h^-1"))


def extend(e: FormalElement, chart_map: SmoothMap) -> FormalElement:
    """Ext: the inverse bookkeeping transfer back to manifold coordinates."""
    return _transport_scalars(e, chart_map, chart_map.label)


def _transport_scalars(e: FormalElement, m: SmoothMap, label: str) -> FormalElement:
    out = {}
    for w, c in e.terms.items():
        nw = tuple(Mult(l.ref.compose(m, label)) if l.kind == "mult" else l for l in w)
        out[nw] = out.get(nw, 0) + c
    return FormalElement(out)


class BundleSection:
    """Per-chart pointwise symbols F_i on the manifold coordinates."""

    def __init__(self, atlas: ChartAtlas, components: Dict[int, Callable]):
        self.atlas = atlas
        self.components = components

    def __call__(self, j: int, p) -> PointSymbol:
        return self.components[j](np.asarray(p, float))

    def transition_action(self, i: int, j: int, p) -> np.ndarray:
        """H^{Phi_ij}(h_i p): the letter action of pi_{i,j}(p)."""
        x = self.atlas.charts[i].map(np.asarray(p, float)[None])[0]
        return admissibility_matrix(self.atlas.alg, self.atlas.transition(i, j), x)

    def compatibility_residual(self, samples: int = 16, seed: int = 0) -> float:
        from .geometry import sample_box

        rng = np.random.default_rng(seed)
        worst = 0.0
        for ov in self.atlas.overlaps:
            idx = [self.atlas.index(n) for n in ov.charts]
            for p in sample_box(ov.box, samples, rng):
                for i, j in itertools.permutations(idx, 2):
                    lhs = self(j, p)
                    rhs = self(i, p).act(self.transition_action(i, j, p))
                    worst = max(worst, lhs.distance(rhs))
        return worst

    def sup_norm(self, pts) -> float:
        return max(self(j, p).norm() for j in self.components for p in pts)


def theta_embedding(atlas: ChartAtlas, i: int, local: SymbolField) -> BundleSection:
    """Theta_i: F_j(p) = pi_{i,j}(p)(local(h_i p)), F_i(p) = local(h_i p)."""
    comps = {}
    for j in range(len(atlas.charts)):
        def F(p, j=j):
            x = atlas.charts[i].map(p[None])[0]
            s = local(x)
            if j == i:
                return s
            H = admissibility_matrix(atlas.alg, atlas.transition(i, j), x)
            return s.act(H)

        comps[j] = F
    return BundleSection(atlas, comps)


def globalize(atlas: ChartAtlas, elements: Dict[int, object], partition: Dict[int, Callable],
              samples=None, tol: float = 1e-10) -> BundleSection:
    """F_j(p) = sum_i phi_i(p) pi_{i,j}(p)(sym(T_i)(h_i p)).

    ``elements`` maps chart index to a FormalElement/SymbolExpr/SymbolField in
    that chart's group coordinates; ``partition`` maps chart index to phi_i
    (manifold coordinates, vanishing outside the chart domain).
    """
    alg = atlas.alg
    if samples is not None:
        tot = sum(np.asarray(partition[i](np.atleast_2d(samples)), float) for i in partition)
        gap = float(np.max(np.abs(tot - 1.0)))
        if gap > tol:
            raise PartitionGap(f"partition sums deviate from 1 by {gap:.3g}")
    locals_ = {i: as_symbol_field(e, alg) for i, e in elements.items()}
    comps = {}
    for j in range(len(atlas.charts)):
        def F(p, j=j):
            total = PointSymbol()
            for i, sf in locals_.items():
                wgt = float(np.asarray(partition[i](p[None]))[0])
                if wgt == 0.0:
                    continue
                x = atlas.charts[i].map(p[None])[0]
                s = sf(x)
                if i != j:
                    s = s.act(admissibility_matrix(alg, atlas.transition(i, j), x))
                total = total + s.scaled(wgt)
            return total

        comps[j] = F
    return BundleSection(atlas, comps)


# lattice bridge


def localization_echo(lat, a, x0, widths=(0.8, 0.4, 0.2), k: int = 0) -> dict:
    """||M_chi (R^a_k - R^{a(x0)}_k) M_chi|| for windows chi of shrinking width around x0."""
    from .spectral import quasi_riesz, smooth_bump

    x0 = np.asarray(x0, float)
    Ra = quasi_riesz(lat, a, k)
    Rc = quasi_riesz(lat, a(x0), k)
    diff = Ra - Rc
    out = []
    for wdt in widths:
        ci = smooth_bump(lat.points, x0, wdt)
        co = smooth_bump(lat.out_centers, x0, wdt)
        out.append(float(np.linalg.norm(co[:, None] * diff * ci[None, :], 2)))
    return dict(widths=list(widths), norms=out,
                decreasing=all(b < a_ for a_, b in zip(out, out[1:])))
