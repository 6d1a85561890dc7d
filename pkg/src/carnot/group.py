"""Stratified Lie groups in Jacobian (exponential) coordinates.

A group is given by its strata dimensions and structure constants in a basis
adapted to the stratification.  The group law is the Baker-Campbell-Hausdorff
product, which is a finite polynomial because the algebra is nilpotent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import bernoulli

from .poly import Poly

Brackets = Dict[Tuple[int, int], Dict[int, float]]

ALGEBRA_TOL = 1e-12


class AlgebraError(ValueError):
    """Raised when structure data does not define a stratified Lie algebra."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


class AntisymmetryViolation(AlgebraError):
    pass


class GradingViolation(AlgebraError):
    pass


class JacobiViolation(AlgebraError):
    pass


class NotGenerated(AlgebraError):
    pass


class NonPositiveScale(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: Tuple[int, ...]
    detail: str

    def __str__(self):
        idx = ",".join(str(i) for i in self.indices)
        return f"{self.kind}[{idx}]: {self.detail}"


_ERROR_CLASSES = {
    "antisymmetry": AntisymmetryViolation,
    "grading": GradingViolation,
    "jacobi": JacobiViolation,
    "generation": NotGenerated,
    "index": AlgebraError,
    "strata": AlgebraError,
}


@dataclass
class GroupData:
    """Raw structure data.  Indices in ``brackets`` are 1-based, as in group files."""

    dimension: int
    strata: List[int]
    brackets: Brackets = field(default_factory=dict)
    name: str = ""


def _ord_table(strata: Sequence[int]) -> List[int]:
    weights = []
    for layer, n in enumerate(strata, start=1):
        weights.extend([layer] * n)
    return weights


def check_algebra(raw: GroupData) -> List[Violation]:
    """Return every violated invariant of ``raw`` (empty list when valid)."""
    out: List[Violation] = []
    d = raw.dimension
    if not raw.strata or any(int(n) <= 0 for n in raw.strata):
        return [Violation("strata", tuple(raw.strata), "strata dimensions must be positive")]
    if sum(raw.strata) != d:
        return [Violation("strata", tuple(raw.strata), f"strata sum to {sum(raw.strata)}, not {d}")]
    for (i, j), targets in raw.brackets.items():
        for k in [i, j, *targets]:
            if not 1 <= k <= d:
                out.append(Violation("index", (i, j, k), f"index {k} outside [1, {d}]"))
    if out:
        return out

    C = np.zeros((d, d, d))
    seen = {}
    for (i, j), targets in raw.brackets.items():
        for k, c in targets.items():
            if c == 0:
                continue
            key = (i, j, k)
            if i == j:
                out.append(Violation("antisymmetry", key, "[Z_i, Z_i] must vanish"))
                continue
            rev = (j, i, k)
            if rev in seen and abs(seen[rev] + c) > ALGEBRA_TOL:
                out.append(Violation("antisymmetry", key, f"c[i][j][k]={c} but c[j][i][k]={seen[rev]}"))
            seen[key] = c
            C[i - 1, j - 1, k - 1] = c
            C[j - 1, i - 1, k - 1] = -c
    weights = _ord_table(raw.strata)
    for i, j, k in zip(*np.nonzero(C)):
        if i < j and weights[k] != weights[i] + weights[j]:
            out.append(Violation(
                "grading", (i + 1, j + 1, k + 1),
                f"[Z_{i + 1}, Z_{j + 1}] has a Z_{k + 1} component; layer {weights[k]} "
                f"is not {weights[i]}+{weights[j]}",
            ))
    if out:
        return out

    # Jacobi: [a,[b,c]] + [b,[c,a]] + [c,[a,b]] = 0 on basis triples
    BC = np.einsum("bcm,amk->abck", C, C)  # [a,[b,c]]
    jac = BC + BC.transpose(1, 2, 0, 3) + BC.transpose(2, 0, 1, 3)
    bad = np.argwhere(np.abs(jac) > ALGEBRA_TOL)
    reported = set()
    for a, b, c, k in bad:
        key = tuple(sorted((a, b, c)))
        if key in reported:
            continue
        reported.add(key)
        out.append(Violation(
            "jacobi", tuple(int(v) + 1 for v in key),
            f"Jacobi sum has component {jac[a, b, c, k]:.3g} along Z_{k + 1}",
        ))
    if out:
        return out

    # the first stratum generates: layer s+1 = span [g_1, g_s]
    n1 = raw.strata[0]
    offsets = np.cumsum([0] + list(raw.strata))
    for s in range(1, len(raw.strata)):
        lo, hi = offsets[s], offsets[s + 1]
        plo, phi = offsets[s - 1], offsets[s]
        images = C[:n1, plo:phi, lo:hi].reshape(-1, hi - lo)
        rank = np.linalg.matrix_rank(images, tol=1e-10) if images.size else 0
        if rank < hi - lo:
            out.append(Violation(
                "generation", tuple(range(lo + 1, hi + 1)),
                f"brackets of layer 1 with layer {s} span only {rank} of {hi - lo} dimensions of layer {s + 1}",
            ))
    return out


def validate_algebra(raw: GroupData) -> "StratifiedAlgebra":
    """Validate structure data and build the algebra.

    Raises the error class matching the first violated invariant; the
    exception carries the full violation list in ``.violations``.
    """
    violations = check_algebra(raw)
    if violations:
        first = violations[0]
        cls = _ERROR_CLASSES.get(first.kind, AlgebraError)
        msg = "; ".join(str(v) for v in violations)
        raise cls(msg, violations)
    return StratifiedAlgebra(raw)


class PolyVec:
    """A vector of polynomials supporting the linear operations BCH needs."""

    __slots__ = ("items",)

    def __init__(self, items):
        self.items = list(items)

    def __add__(self, other):
        return PolyVec(a + b for a, b in zip(self.items, other.items))

    def __sub__(self, other):
        return PolyVec(a - b for a, b in zip(self.items, other.items))

    def __neg__(self):
        return PolyVec(-a for a in self.items)

    def __mul__(self, c):
        return PolyVec(a * c for a in self.items)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return PolyVec(a * (1.0 / c) for a in self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __len__(self):
        return len(self.items)


def _compositions(n: int, parts: int):
    """Ordered tuples of ``parts`` positive integers summing to ``n``."""
    for cuts in itertools.combinations(range(1, n), parts - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def bch_series(x, y, bracket, order: int):
    """Graded BCH components z_1..z_order via the Bernoulli-number recursion.

    (n+1) z_{n+1} = 1/2 [x - y, z_n]
                    + sum_{p>=1, 2p<=n} B_{2p}/(2p)! sum_{k_1+..+k_{2p}=n} [z_{k_1},[...,[z_{k_{2p}}, x+y]]]
    """
    B = bernoulli(2 * order + 2)
    s = x + y
    z = [None, s]
    for n in range(1, order):
        acc = bracket(x - y, z[n]) * 0.5
        p = 1
        while 2 * p <= n:
            K = float(B[2 * p]) / math.factorial(2 * p)
            for ks in _compositions(n, 2 * p):
                t = s
                for kk in reversed(ks):
                    t = bracket(z[kk], t)
                acc = acc + t * K
            p += 1
        z.append(acc / (n + 1))
    return z[1:]


class StratifiedAlgebra:
    """Validated stratified Lie algebra; also the group in Jacobian coordinates."""

    def __init__(self, raw: GroupData):
        self.name = raw.name
        self.dim = int(raw.dimension)
        self.strata = tuple(int(n) for n in raw.strata)
        self.step = len(self.strata)
        self.weights = np.array(_ord_table(self.strata), dtype=int)
        self.homogeneous_dimension = int(sum(k * n for k, n in enumerate(self.strata, start=1)))
        self.n1 = self.strata[0]
        offsets = np.cumsum([0] + list(self.strata))
        self.layer_slices = [slice(int(offsets[s]), int(offsets[s + 1])) for s in range(self.step)]
        C = np.zeros((self.dim,) * 3)
        sparse: Brackets = {}
        for (i, j), targets in raw.brackets.items():
            i0, j0, sign = (i - 1, j - 1, 1.0) if i < j else (j - 1, i - 1, -1.0)
            for k, c in targets.items():
                if c == 0:
                    continue
                C[i0, j0, k - 1] = sign * c
                C[j0, i0, k - 1] = -sign * c
                sparse.setdefault((i0, j0), {})[k - 1] = sign * c
        C.flags.writeable = False
        self.structure = C
        self._sparse = sparse
        self._gauge_power = 2 * math.factorial(self.step)

    @property
    def Q(self) -> int:
        return self.homogeneous_dimension

    def __repr__(self):
        tag = f"{self.name} " if self.name else ""
        return f"<StratifiedAlgebra {tag}d={self.dim} strata={list(self.strata)} Q={self.Q}>"

    def to_data(self) -> GroupData:
        brackets = {(i + 1, j + 1): {k + 1: c for k, c in t.items()} for (i, j), t in self._sparse.items()}
        return GroupData(self.dim, list(self.strata), brackets, self.name)

    def layer_of(self, j: int) -> int:
        """1-based layer (Ord) of the 0-based basis index ``j``."""
        return int(self.weights[j])

    # algebra

    def bracket(self, x, y):
        if isinstance(x, PolyVec) or isinstance(y, PolyVec):
            return self._bracket_poly(x, y)
        return np.einsum("...i,...j,ijk->...k", np.asarray(x, float), np.asarray(y, float), self.structure)

    def _bracket_poly(self, x: PolyVec, y: PolyVec) -> PolyVec:
        nv = x[0].nvars
        out = [Poly.zero(nv) for _ in range(self.dim)]
        for (i, j), targets in self._sparse.items():
            t = x[i] * y[j] - x[j] * y[i]
            if t.is_zero:
                continue
            for k, c in targets.items():
                out[k] = out[k] + t * c
        return PolyVec(out)

    # group

    def multiply(self, x, y):
        """BCH product x·y; accepts single points or batches ``(m, d)``."""
        if not isinstance(x, PolyVec):
            x = np.asarray(x, float)
            y = np.asarray(y, float)
        zs = bch_series(x, y, self.bracket, self.step)
        total = zs[0]
        for z in zs[1:]:
            total = total + z
        return total

    def inverse(self, x):
        return -np.asarray(x, float)

    def power(self, x, t: float):
        return t * np.asarray(x, float)

    def dilate(self, r: float, x):
        if not r > 0:
            raise NonPositiveScale(f"dilation factor must be positive, got {r}")
        return np.asarray(x, float) * (float(r) ** self.weights)

    def dilation_matrix(self, r: float) -> np.ndarray:
        if not r > 0:
            raise NonPositiveScale(f"dilation factor must be positive, got {r}")
        return np.diag(float(r) ** self.weights.astype(float))

    def norm(self, x):
        """Homogeneous gauge (sum |x_k|^(2 step!/Ord k))^(1/(2 step!))."""
        x = np.asarray(x, float)
        p = self._gauge_power
        expo = p / self.weights
        return np.sum(np.abs(x) ** expo, axis=-1) ** (1.0 / p)

    def distance(self, x, y):
        """Left-invariant quasi-distance rho(y^-1 x)."""
        return self.norm(self.multiply(self.inverse(y), x))

    @cached_property
    def bch_polynomials(self) -> List[Poly]:
        """Group law as polynomials in 2d variables (x_1..x_d, y_1..y_d)."""
        n = 2 * self.dim
        x = PolyVec(Poly.var(n, i) for i in range(self.dim))
        y = PolyVec(Poly.var(n, self.dim + i) for i in range(self.dim))
        zs = bch_series(x, y, self.bracket, self.step)
        total = zs[0]
        for z in zs[1:]:
            total = total + z
        return [p.prune(1e-15) for p in total.items]

    def translation_polynomials(self, a) -> List[Poly]:
        """Components of the left translation y -> a·y as polynomials in y."""
        a = np.asarray(a, float)
        subs = {i: a[i] for i in range(self.dim)}
        keep = range(self.dim, 2 * self.dim)
        return [p.substitute(subs).restrict(keep) for p in self.bch_polynomials]

    def right_translation_polynomials(self, b) -> List[Poly]:
        b = np.asarray(b, float)
        subs = {self.dim + i: b[i] for i in range(self.dim)}
        return [p.substitute(subs).restrict(range(self.dim)) for p in self.bch_polynomials]


# module-level API


def bracket(alg: StratifiedAlgebra, x, y):
    return alg.bracket(x, y)


def bch_multiply(alg: StratifiedAlgebra, x, y):
    return alg.multiply(x, y)


def dilate(alg: StratifiedAlgebra, r: float, x):
    return alg.dilate(r, x)


def homogeneous_norm(alg: StratifiedAlgebra, x):
    return alg.norm(x)


def estimate_A0(alg: StratifiedAlgebra, samples: int = 2000, seed: int = 0) -> float:
    """Empirical quasi-triangle constant: max of rho(xy) / (rho(x) + rho(y)).

    Pairs along a horizontal line (x = (v, 0), y = t x) are always included;
    their product is (1 + t) x and the ratio is exactly 1, so the estimate
    never drops below 1.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, alg.dim))
    y = rng.standard_normal((samples, alg.dim))
    scales = np.exp(rng.uniform(-2, 2, size=(samples, 2)))
    x = x * (scales[:, :1] ** alg.weights)
    y = y * (scales[:, 1:] ** alg.weights)
    t = rng.uniform(0.1, 3.0, size=(samples // 10 + 1, 1))
    xc = x[: t.shape[0]].copy()
    xc[:, alg.n1:] = 0.0
    x = np.vstack([x, xc])
    y = np.vstack([y, xc * t])
    num = alg.norm(alg.multiply(x, y))
    den = alg.norm(x) + alg.norm(y)
    return float(np.max(num / den))


# standard examples


def heisenberg(n: int = 1) -> StratifiedAlgebra:
    """Heisenberg group H^n: [Z_i, Z_{n+i}] = Z_{2n+1}."""
    br = {(i, n + i): {2 * n + 1: 1.0} for i in range(1, n + 1)}
    return validate_algebra(GroupData(2 * n + 1, [2 * n, 1], br, f"heisenberg{n}"))


def engel() -> StratifiedAlgebra:
    br = {(1, 2): {3: 1.0}, (1, 3): {4: 1.0}}
    return validate_algebra(GroupData(4, [2, 1, 1], br, "engel"))


def abelian(d: int) -> StratifiedAlgebra:
    return validate_algebra(GroupData(d, [d], {}, f"abelian{d}"))


def free_step_two(r: int = 3) -> StratifiedAlgebra:
    """Free 2-step nilpotent algebra on ``r`` generators."""
    pairs = list(itertools.combinations(range(1, r + 1), 2))
    br = {(i, j): {r + m + 1: 1.0} for m, (i, j) in enumerate(pairs)}
    return validate_algebra(GroupData(r + len(pairs), [r, len(pairs)], br, f"free2_{r}"))
