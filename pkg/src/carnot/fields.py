"""Left-invariant vector fields, smooth maps and pushforwards.

Fields are first-order operators sum_m c_m(x) d/dx_m with polynomial
coefficients.  Maps are either polynomial (differentiated exactly) or opaque
evaluators (central differences).
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np

from .group import StratifiedAlgebra
from .poly import Poly, poly_det


class NonDifferentiable(ValueError):
    pass


class InverseUnavailable(ValueError):
    pass


class SingularJacobian(ValueError):
    pass


def fd_step(x: np.ndarray) -> np.ndarray:
    """Central-difference step 1e-5 (1 + |x|) per point."""
    return 1e-5 * (1.0 + np.linalg.norm(x, axis=-1))


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


class PolyField:
    """First-order operator sum_m coeffs[m] d/dx_m with polynomial coefficients."""

    def __init__(self, coeffs: Sequence[Poly], label: str = ""):
        self.coeffs = list(coeffs)
        self.dim = len(self.coeffs)
        self.label = label

    def vector(self, x):
        """Euclidean components of the field at ``x`` (single point or batch)."""
        pts, single = _as_batch(x)
        out = np.stack([c(pts) for c in self.coeffs], axis=-1)
        return out[0] if single else out

    def apply_poly(self, f: Poly) -> Poly:
        out = Poly.zero(self.dim)
        for m, c in enumerate(self.coeffs):
            if not c.is_zero:
                df = f.diff(m)
                if not df.is_zero:
                    out = out + c * df
        return out

    def apply(self, f, x):
        """(X f)(x); exact for polynomial ``f``, central differences otherwise."""
        if isinstance(f, Poly):
            return self.apply_poly(f)(x)
        return directional_derivative(f, x, self.vector(x))

    def __repr__(self):
        name = self.label or "field"
        terms = [f"({c})*d{m + 1}" for m, c in enumerate(self.coeffs) if not c.is_zero]
        return f"<{name}: " + " + ".join(terms) + ">"


class LeftInvariantField(PolyField):
    """Z_j = d_j + sum_m alpha_{jm} d_m, read off from the group law."""

    def __init__(self, alg: StratifiedAlgebra, index: int, coeffs: Sequence[Poly]):
        super().__init__(coeffs, label=f"Z{index + 1}")
        self.alg = alg
        self.index = index

    def alpha(self, m: int) -> Poly:
        return self.coeffs[m]

    def homogeneity_violations(self) -> List[str]:
        """Coefficient slots breaking the weighted-degree rule (empty when fine)."""
        w = self.alg.weights
        j = self.index
        bad = []
        for m, c in enumerate(self.coeffs):
            if m == j:
                if c != Poly.const(self.dim, 1.0):
                    bad.append(f"diagonal coefficient of Z{j + 1} is {c}, expected 1")
                continue
            if c.is_zero:
                continue
            if w[m] <= w[j]:
                bad.append(f"alpha[{j + 1},{m + 1}] nonzero but Ord {w[m]} <= {w[j]}")
            elif not c.is_homogeneous(w, int(w[m] - w[j])):
                bad.append(f"alpha[{j + 1},{m + 1}] has weighted degrees "
                           f"{sorted(c.weighted_degrees(w))}, expected {w[m] - w[j]}")
        return bad


def derive_left_invariant_fields(alg: StratifiedAlgebra) -> List[LeftInvariantField]:
    """Differentiate y -> x·y at y = 0 along each basis direction."""
    cached = getattr(alg, "_fields_cache", None)
    if cached is not None:
        return cached
    d = alg.dim
    law = alg.bch_polynomials
    zero_y = {d + i: 0.0 for i in range(d)}
    fields = []
    for j in range(d):
        coeffs = [p.diff(d + j).substitute(zero_y).restrict(range(d)).prune(1e-15) for p in law]
        fields.append(LeftInvariantField(alg, j, coeffs))
    alg._fields_cache = fields
    return fields


def apply_field(field: PolyField, f, x):
    return field.apply(f, x)


def bracket_fields(V: PolyField, W: PolyField) -> PolyField:
    """Commutator [V, W] as a first-order operator: components V(W^m) - W(V^m)."""
    coeffs = [V.apply_poly(W.coeffs[m]) - W.apply_poly(V.coeffs[m]) for m in range(V.dim)]
    return PolyField([c.prune(1e-15) for c in coeffs], label=f"[{V.label},{W.label}]")


def linear_combination(fields: Sequence[PolyField], weights: Sequence[float]) -> PolyField:
    d = fields[0].dim
    coeffs = [Poly.zero(d) for _ in range(d)]
    for f, c in zip(fields, weights):
        if c == 0:
            continue
        coeffs = [a + b * float(c) for a, b in zip(coeffs, f.coeffs)]
    return PolyField(coeffs)


def directional_derivative(f: Callable, x, v) -> np.ndarray | float:
    """d/dt f(x + t v) at t = 0 by central differences."""
    pts, single = _as_batch(x)
    vv = np.atleast_2d(np.asarray(v, float))
    h = fd_step(pts)[:, None]
    fp = np.asarray(f(pts + h * vv), float)
    fm = np.asarray(f(pts - h * vv), float)
    out = (fp - fm) / (2 * h[:, 0])
    if not np.all(np.isfinite(out)):
        raise NonDifferentiable("non-finite central difference")
    return float(out[0]) if single else out


# smooth maps


class SmoothMap:
    """A map R^d -> R^d with Jacobian and optional inverse."""

    dim: int
    inverse: Optional["SmoothMap"] = None
    label: str = "map"

    def __call__(self, x):
        pts, single = _as_batch(x)
        out = self._eval(pts)
        return out[0] if single else out

    def _eval(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x):
        pts, single = _as_batch(x)
        J = self._jac(pts)
        return J[0] if single else J

    def _jac(self, pts: np.ndarray) -> np.ndarray:
        d = pts.shape[1]
        h = fd_step(pts)
        J = np.empty((pts.shape[0], d, d))
        for j in range(d):
            step = np.zeros_like(pts)
            step[:, j] = h
            J[:, :, j] = (self._eval(pts + step) - self._eval(pts - step)) / (2 * h[:, None])
        if not np.all(np.isfinite(J)):
            raise NonDifferentiable(f"{self.label}: non-finite Jacobian")
        return J

    def jacobian_det(self, x):
        return np.linalg.det(self.jacobian(x))

    def invert(self, y):
        if self.inverse is None:
            raise InverseUnavailable(f"{self.label} has no inverse evaluator")
        return self.inverse(y)

    def compose(self, other: "SmoothMap") -> "SmoothMap":
        """self ∘ other."""
        return ComposedMap(self, other)


class PolynomialMap(SmoothMap):
    def __init__(self, comps: Sequence[Poly], inverse: Optional[SmoothMap] = None, label: str = "poly"):
        self.comps = list(comps)
        self.dim = len(self.comps)
        self.inverse = inverse
        self.label = label
        self._partials = [[c.diff(j) for j in range(self.dim)] for c in self.comps]
        self._det = None

    def _eval(self, pts):
        return np.stack([c(pts) for c in self.comps], axis=-1)

    def _jac(self, pts):
        J = np.empty((pts.shape[0], self.dim, self.dim))
        for i, row in enumerate(self._partials):
            for j, p in enumerate(row):
                J[:, i, j] = p(pts) if not p.is_zero else 0.0
        return J

    @property
    def det_poly(self) -> Poly:
        if self._det is None:
            self._det = poly_det(self._partials).prune(1e-15)
        return self._det

    def compose(self, other, _with_inverse: bool = True):
        if isinstance(other, PolynomialMap):
            comps = [compose_poly(c, other.comps) for c in self.comps]
            out = PolynomialMap(comps, None, f"{self.label}∘{other.label}")
            if _with_inverse and self.inverse is not None and other.inverse is not None:
                inv = other.inverse
                if isinstance(inv, PolynomialMap) and isinstance(self.inverse, PolynomialMap):
                    out.inverse = inv.compose(self.inverse, _with_inverse=False)
                else:
                    out.inverse = ComposedMap(inv, self.inverse)
                out.inverse.inverse = out
            return out
        return ComposedMap(self, other)


def compose_poly(p: Poly, inner: Sequence[Poly]) -> Poly:
    """p(inner_1, ..., inner_n)."""
    nv = inner[0].nvars
    out = Poly.zero(nv)
    powers = [dict() for _ in inner]

    def pw(i, e):
        if e not in powers[i]:
            powers[i][e] = inner[i] ** e
        return powers[i][e]

    for mono, c in p.terms.items():
        term = Poly.const(nv, c)
        for i, e in enumerate(mono):
            if e:
                term = term * pw(i, e)
        out = out + term
    return out


class OpaqueMap(SmoothMap):
    def __init__(self, func: Callable, dim: int, inverse: Optional[SmoothMap] = None, label: str = "opaque",
                 jac: Optional[Callable] = None):
        self.func = func
        self.dim = dim
        self.inverse = inverse
        self.label = label
        self._jac_func = jac

    def _eval(self, pts):
        return np.asarray(self.func(pts), float)

    def _jac(self, pts):
        if self._jac_func is not None:
            return np.asarray(self._jac_func(pts), float)
        return super()._jac(pts)


class ComposedMap(SmoothMap):
    def __init__(self, outer: SmoothMap, inner: SmoothMap):
        self.outer, self.inner = outer, inner
        self.dim = inner.dim
        self.label = f"{outer.label}∘{inner.label}"
        if outer.inverse is not None and inner.inverse is not None:
            self.inverse = ComposedMap.__new__(ComposedMap)
            self.inverse.outer, self.inverse.inner = inner.inverse, outer.inverse
            self.inverse.dim = self.dim
            self.inverse.label = f"({self.label})^-1"
            self.inverse.inverse = self
        else:
            self.inverse = None

    def _eval(self, pts):
        return self.outer._eval(self.inner._eval(pts))

    def _jac(self, pts):
        return self.outer._jac(self.inner._eval(pts)) @ self.inner._jac(pts)


class NewtonInverse(SmoothMap):
    """Inverse of a map by Newton iteration started at the target point."""

    def __init__(self, forward: SmoothMap, tol: float = 1e-13, maxiter: int = 50):
        self.forward = forward
        self.dim = forward.dim
        self.tol = tol
        self.maxiter = maxiter
        self.inverse = forward
        self.label = f"newton({forward.label})"

    def _eval(self, pts):
        x = pts.copy()
        for _ in range(self.maxiter):
            r = self.forward._eval(x) - pts
            if np.max(np.abs(r)) < self.tol * (1 + np.max(np.abs(pts))):
                return x
            x = x - np.linalg.solve(self.forward._jac(x), r[..., None])[..., 0]
        r = self.forward._eval(x) - pts
        if np.max(np.abs(r)) > 1e-9 * (1 + np.max(np.abs(pts))):
            raise InverseUnavailable(f"Newton inversion of {self.forward.label} did not converge")
        return x


def identity_map(d: int) -> PolynomialMap:
    comps = [Poly.var(d, i) for i in range(d)]
    m = PolynomialMap(comps, label="id")
    m.inverse = m
    return m


def affine_map(A, b=None, label: str = "affine") -> PolynomialMap:
    """x -> A x + b, with its exact inverse."""
    A = np.asarray(A, float)
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, float)

    def build(M, c, lab):
        comps = []
        for i in range(d):
            p = Poly.const(d, c[i])
            for j in range(d):
                if M[i, j] != 0:
                    p = p + Poly.var(d, j, M[i, j])
            comps.append(p)
        return PolynomialMap(comps, label=lab)

    fwd = build(A, b, label)
    Ainv = np.linalg.inv(A)
    inv = build(Ainv, -Ainv @ b, f"{label}^-1")
    fwd.inverse, inv.inverse = inv, fwd
    fwd.matrix = A
    return fwd


def left_translation(alg: StratifiedAlgebra, a) -> PolynomialMap:
    a = np.asarray(a, float)
    fwd = PolynomialMap(alg.translation_polynomials(a), label="L_a")
    inv = PolynomialMap(alg.translation_polynomials(-a), label="L_-a")
    fwd.inverse, inv.inverse = inv, fwd
    return fwd


def dilation_map(alg: StratifiedAlgebra, r: float) -> PolynomialMap:
    return affine_map(alg.dilation_matrix(r), label=f"delta_{r:g}")


# pushforwards


class FieldEvaluator:
    """A vector field given by a function returning Euclidean components."""

    def __init__(self, func: Callable, dim: int, label: str = "field"):
        self.func = func
        self.dim = dim
        self.label = label

    def vector(self, y):
        pts, single = _as_batch(y)
        out = np.asarray(self.func(pts), float)
        return out[0] if single else out

    def apply(self, f, y):
        v = self.vector(y)
        if isinstance(f, Poly):
            pts, single = _as_batch(y)
            vv = np.atleast_2d(v)
            out = sum(f.diff(m)(pts) * vv[:, m] for m in range(self.dim))
            return float(out[0]) if single else out
        return directional_derivative(f, y, v)


def as_evaluator(X) -> FieldEvaluator:
    if isinstance(X, FieldEvaluator):
        return X
    return FieldEvaluator(X.vector, X.dim, getattr(X, "label", "field"))


def pushforward_vector(phi: SmoothMap, x, v):
    return phi.jacobian(x) @ np.asarray(v, float)


def pushforward_field(phi: SmoothMap, X) -> FieldEvaluator:
    """Phi_*(X)(y) = J_Phi(Phi^-1 y) X(Phi^-1 y)."""
    if phi.inverse is None:
        raise InverseUnavailable(f"{phi.label} has no inverse evaluator")
    Xe = as_evaluator(X)

    def func(pts):
        x = phi.inverse._eval(pts)
        return np.einsum("nij,nj->ni", phi._jac(x), Xe.vector(x))

    return FieldEvaluator(func, Xe.dim, f"{phi.label}_*{Xe.label}")


def bracket_evaluators(V, W) -> FieldEvaluator:
    """[V, W] = DW·V − DV·W with central-difference Jacobians of the components."""
    V, W = as_evaluator(V), as_evaluator(W)
    d = V.dim

    def jac(F, pts):
        h = fd_step(pts)
        J = np.empty((pts.shape[0], d, d))
        for j in range(d):
            step = np.zeros_like(pts)
            step[:, j] = h
            J[:, :, j] = (F.vector(pts + step) - F.vector(pts - step)) / (2 * h[:, None])
        return J

    def func(pts):
        return np.einsum("nij,nj->ni", jac(W, pts), V.vector(pts)) - \
            np.einsum("nij,nj->ni", jac(V, pts), W.vector(pts))

    return FieldEvaluator(func, d, f"[{V.label},{W.label}]")


def conjugation_correction(phi: SmoothMap, k: int, alg: StratifiedAlgebra) -> Callable:
    """Scalar function a_k(y) = (Jdet^{-1/2} X_k Jdet^{1/2})(Phi^-1 y).

    Equivalently (X_k Jdet) / (2 Jdet) pulled back through Phi^-1.  Exact for
    polynomial maps; the derivative of Jdet is a central difference otherwise.
    """
    if not 0 <= k < alg.n1:
        raise ValueError(f"k={k} is not a first-layer index")
    if phi.inverse is None:
        raise InverseUnavailable(f"{phi.label} has no inverse evaluator")
    Xk = derive_left_invariant_fields(alg)[k]
    if isinstance(phi, PolynomialMap):
        det = phi.det_poly
        dX = Xk.apply_poly(det)
        num_fn, det_fn = dX, det
    else:
        def det_fn(x):
            return np.linalg.det(phi._jac(np.atleast_2d(x)))

        def num_fn(x):
            x = np.atleast_2d(x)
            return directional_derivative(det_fn, x, Xk.vector(x))

    def a_k(y):
        pts, single = _as_batch(y)
        x = phi.inverse._eval(pts)
        D = np.atleast_1d(det_fn(x))
        if np.any(D <= 0):
            raise SingularJacobian(f"Jdet of {phi.label} is not positive at a sample")
        out = np.atleast_1d(num_fn(x)) / (2.0 * D)
        return float(out[0]) if single else out

    return a_k


# identities of the left-invariant frame


def bracket_closure_residual(alg: StratifiedAlgebra, probes) -> float:
    """max |[Z_i, Z_j] - sum_k c_ijk Z_k| on polynomial coefficients at the probes."""
    Z = derive_left_invariant_fields(alg)
    C = alg.structure
    probes = np.atleast_2d(probes)
    worst = 0.0
    for i in range(alg.dim):
        for j in range(i + 1, alg.dim):
            lhs = bracket_fields(Z[i], Z[j]).vector(probes)
            rhs = np.einsum("k,kpm->pm", C[i, j], np.stack([z.vector(probes) for z in Z]))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def left_invariance_residual(alg: StratifiedAlgebra, n: int = 200, seed: int = 0, scale: float = 1.0) -> float:
    """max |J_{L_a}(x) Z_j(x) - Z_j(a x)| over random a, x, j."""
    rng = np.random.default_rng(seed)
    Z = derive_left_invariant_fields(alg)
    worst = 0.0
    for _ in range(n):
        a, x = scale * rng.standard_normal((2, alg.dim))
        La = left_translation(alg, a)
        J = La.jacobian(x)
        ax = alg.multiply(a, x)
        for z in Z:
            worst = max(worst, float(np.max(np.abs(J @ z.vector(x) - z.vector(ax)))))
    return worst
