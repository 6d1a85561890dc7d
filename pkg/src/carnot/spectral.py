"""Lattice discretisation of L2(G): horizontal fields, sub-Laplacians and
quasi-Riesz transforms as finite matrices.

Grid functions live on the nodes -L + i h, i = 0..N-1, in every coordinate and
vanish outside (Dirichlet truncation).  The forward difference along axis m
maps node functions to an extended output grid with indices -1..N-1 per axis,
so D_m^T D_m is exactly the Dirichlet second difference.  Every horizontal
operator lands on that same output grid; multiplier coefficients attached to
D_m are evaluated at the midpoint node + h/2 e_m, and matrix fields twisting
the X_j are evaluated at the output cell centres node + h/2 (1, .., 1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .fields import PolyField, SmoothMap, derive_left_invariant_fields, directional_derivative
from .group import StratifiedAlgebra


class CapExceeded(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class BoundaryContamination(ValueError):
    pass


class NonRepresentableShift(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


DEFAULT_CAP = 5000


class Lattice:
    def __init__(self, alg: StratifiedAlgebra, N: int, L: float, cap: int = DEFAULT_CAP):
        if N < 3:
            raise ValueError("need at least 3 points per axis")
        self.alg = alg
        self.N = int(N)
        self.L = float(L)
        self.cap = int(cap)
        self.d = alg.dim
        self.h = 2 * self.L / (self.N - 1)
        self.nodes = np.linspace(-self.L, self.L, self.N)
        self.shape = (self.N,) * self.d
        self.n = self.N ** self.d
        self.out_shape = (self.N + 1,) * self.d
        self.n_out = (self.N + 1) ** self.d
        grids = np.meshgrid(*([self.nodes] * self.d), indexing="ij")
        self.points = np.stack([g.ravel() for g in grids], axis=-1)
        onodes = np.concatenate([[self.nodes[0] - self.h], self.nodes])
        ogrids = np.meshgrid(*([onodes] * self.d), indexing="ij")
        self._out_nodes = np.stack([g.ravel() for g in ogrids], axis=-1)
        self._diff = {}
        self._fields = {}

    def __repr__(self):
        return f"<Lattice {self.alg.name or 'group'} N={self.N} L={self.L:g} n={self.n}>"

    def require_dense(self, size: Optional[int] = None):
        size = self.n if size is None else size
        if size > self.cap:
            raise CapExceeded(f"{size} unknowns exceed the dense cap {self.cap}")

    @property
    def out_centers(self) -> np.ndarray:
        return self._out_nodes + 0.5 * self.h

    def out_midpoints(self, m: int) -> np.ndarray:
        pts = self._out_nodes.copy()
        pts[:, m] += 0.5 * self.h
        return pts

    def index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def nearest_nodes(self, x) -> np.ndarray:
        """Flat indices of the 2^k nodes closest to x (k axes where x is between nodes)."""
        x = np.asarray(x, float)
        per_axis = []
        for c in x:
            t = (c + self.L) / self.h
            lo = int(np.floor(t + 1e-12))
            if abs(t - round(t)) < 1e-9:
                per_axis.append([int(round(t))])
            else:
                per_axis.append([lo, lo + 1])
        return np.array([self.index(m) for m in itertools.product(*per_axis)])

    def delta(self, x=None) -> np.ndarray:
        """Discrete unit mass at x (default the identity), spread over nearest nodes."""
        x = np.zeros(self.d) if x is None else x
        idx = self.nearest_nodes(x)
        v = np.zeros(self.n)
        v[idx] = 1.0 / (len(idx) * self.h ** self.d)
        return v

    def diff(self, m: int) -> sp.csr_matrix:
        """Forward difference along axis m, nodes -> extended output grid."""
        if m not in self._diff:
            N, h = self.N, self.h
            D1 = sp.diags([np.ones(N), -np.ones(N)], [0, -1], shape=(N + 1, N)) / h
            E = sp.eye(N + 1, N, k=-1)
            mats = [D1 if a == m else E for a in range(self.d)]
            out = mats[0]
            for M in mats[1:]:
                out = sp.kron(out, M)
            self._diff[m] = out.tocsr()
        return self._diff[m]

    def embed(self) -> sp.csr_matrix:
        """Injection of node functions into the output grid (same positions)."""
        E = sp.eye(self.N + 1, self.N, k=-1)
        out = E
        for _ in range(self.d - 1):
            out = sp.kron(out, E)
        return out.tocsr()

    def field_operator(self, fld: PolyField) -> sp.csr_matrix:
        out = sp.csr_matrix((self.n_out, self.n))
        for m, c in enumerate(fld.coeffs):
            if c.is_zero:
                continue
            vals = c(self.out_midpoints(m))
            out = out + sp.diags(vals) @ self.diff(m)
        return out.tocsr()

    def X(self, k: int) -> sp.csr_matrix:
        if k not in self._fields:
            self._fields[k] = self.field_operator(derive_left_invariant_fields(self.alg)[k])
        return self._fields[k]

    def multiplier(self, f: Callable) -> sp.dia_matrix:
        return sp.diags(np.asarray(f(self.points), float))

    def out_multiplier(self, f: Callable) -> sp.dia_matrix:
        return sp.diags(np.asarray(f(self.out_centers), float))

    def interior_mask(self, margin: int = 4) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.d, -1)
        return np.all((idx >= margin) & (idx <= self.N - 1 - margin), axis=0)


@dataclass
class LatticeOperator:
    matrix: object
    tag: str = ""

    def toarray(self):
        M = self.matrix
        return M.toarray() if sp.issparse(M) else np.asarray(M)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        o = other.matrix if isinstance(other, LatticeOperator) else other
        return LatticeOperator(self.matrix @ o, f"{self.tag}@{getattr(other, 'tag', '')}")

    def adjoint(self):
        return LatticeOperator(self.matrix.T, f"{self.tag}*")


# matrix fields


class MatrixField:
    """Smooth map x -> GL(n) given by a vectorised evaluator (m, d) -> (m, n, n)."""

    def __init__(self, func: Callable, n: int, name: str = "w", radius: Optional[float] = None):
        self.func = func
        self.n = n
        self.name = name
        self.radius = radius

    def __call__(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        out = np.asarray(self.func(np.atleast_2d(x)), float)
        return out[0] if single else out

    def inverse_sup(self, pts) -> float:
        W = self(pts)
        return float(np.max(1.0 / np.linalg.svd(W, compute_uv=False)[..., -1]))

    def sup(self, pts) -> float:
        return float(np.max(np.linalg.norm(self(pts), ord=2, axis=(-2, -1))))

    def derivative(self, alg: StratifiedAlgebra, l: int, pts) -> np.ndarray:
        """(X_l w)(x) by central differences along the field direction."""
        Z = derive_left_invariant_fields(alg)[l]
        pts = np.atleast_2d(pts)
        v = Z.vector(pts)
        flat = lambda p: self(p).reshape(len(p), -1)
        out = np.stack([directional_derivative(lambda p, c=c: flat(p)[:, c], pts, v)
                        for c in range(self.n * self.n)], axis=-1)
        return out.reshape(len(pts), self.n, self.n)

    @classmethod
    def constant(cls, M, name: str = "const"):
        M = np.atleast_2d(np.asarray(M, float))
        return cls(lambda x: np.broadcast_to(M, (len(x),) + M.shape).copy(), M.shape[0], name, radius=0.0)

    @classmethod
    def scalar(cls, f: Callable, n: int, name: str = "scalar", radius=None):
        return cls(lambda x: f(x)[:, None, None] * np.eye(n)[None], n, name, radius)


def smooth_bump(x, center, radius):
    """C-infinity bump exp(1 - 1/(1 - r^2)) on the Euclidean ball, 0 outside."""
    r2 = np.sum((np.atleast_2d(x) - center) ** 2, axis=-1) / radius ** 2
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def field_corpus(n1: int, d: int, seed: int = 0) -> List[MatrixField]:
    """Matrix fields used by the norm-bound audits; the first one is c Id."""
    rng = np.random.default_rng(seed)
    fields = [MatrixField.constant(1.7 * np.eye(n1), "1.7*Id"), MatrixField.constant(np.eye(n1), "Id")]
    fields.append(MatrixField.constant(np.diag(rng.uniform(1, 2, n1)), "diag[1,2]"))
    Q, _ = np.linalg.qr(rng.standard_normal((n1, n1)))
    fields.append(MatrixField.constant(Q @ np.diag(rng.uniform(0.5, 2, n1)), "orth*diag"))
    fields.append(MatrixField.constant(np.eye(n1) + np.triu(rng.uniform(-1, 1, (n1, n1)), 1), "unipotent"))
    c = np.zeros(d)
    for s, amp in enumerate([0.5, -0.4, 0.8]):
        fields.append(MatrixField.scalar(lambda x, a=amp: 1.0 + a * smooth_bump(x, c, 2.0), n1,
                                         f"1{amp:+g}bump", radius=2.0))
    D = np.diag(rng.uniform(1, 2, n1))
    S = np.eye(n1, k=1) if n1 > 1 else np.zeros((1, 1))

    def shear(x):
        b = smooth_bump(x, c, 1.5)[:, None, None]
        return D[None] * (1 + 0.5 * b) + 0.3 * np.sin(x[:, :1, None]) * b * S[None]

    fields.append(MatrixField(shear, n1, "diag+shear bump", radius=1.5))

    def rot(x):
        th = 0.9 * smooth_bump(x, c, 2.5)
        if n1 == 1:
            return (1.2 + np.cos(th))[:, None, None]
        R = np.repeat(np.eye(n1)[None], len(x), axis=0)
        R[:, 0, 0] = np.cos(th)
        R[:, 0, 1] = -np.sin(th)
        R[:, 1, 0] = np.sin(th)
        R[:, 1, 1] = np.cos(th)
        return R * (1.0 + 0.3 * smooth_bump(x, c, 2.5))[:, None, None]

    fields.append(MatrixField(rot, n1, "rotating", radius=2.5))
    fields.append(MatrixField.scalar(lambda x: 0.6 + 0.3 * smooth_bump(x, c, 3.0),
                                     n1, "0.6+0.3bump", radius=3.0))
    return fields


# horizontal operators


def discretize_field(lat: Lattice, fld: PolyField) -> LatticeOperator:
    return LatticeOperator(lat.field_operator(fld), fld.label)


def sub_laplacian(lat: Lattice) -> sp.csr_matrix:
    out = sp.csr_matrix((lat.n, lat.n))
    for k in range(lat.alg.n1):
        Xk = lat.X(k)
        out = out + Xk.T @ Xk
    return out.tocsr()


def twisted_fields(lat: Lattice, w) -> List[sp.csr_matrix]:
    """X^w_k = sum_j M_{w_jk} X_j, w evaluated at the output cell centres.

    ``w`` is a MatrixField, a constant matrix (only its first block is used)
    or an array of values at the output centres.
    """
    n1 = lat.alg.n1
    if isinstance(w, MatrixField):
        W = w(lat.out_centers)
    elif np.ndim(w) == 3:
        W = np.asarray(w, float)  # values at the output centres
    else:
        A = np.asarray(w, float)
        W = np.broadcast_to(A[:n1, :n1], (lat.n_out, n1, n1))
    Xs = [lat.X(j) for j in range(n1)]
    out = []
    for k in range(n1):
        acc = sp.csr_matrix((lat.n_out, lat.n))
        for j in range(n1):
            col = W[:, j, k]
            if np.any(col):
                acc = acc + sp.diags(col) @ Xs[j]
        out.append(acc.tocsr())
    return out


def twisted_laplacian(lat: Lattice, w) -> sp.csr_matrix:
    out = sp.csr_matrix((lat.n, lat.n))
    for Xw in twisted_fields(lat, w):
        out = out + Xw.T @ Xw
    return out.tocsr()


def _dense(T):
    return T.toarray() if sp.issparse(T) else np.asarray(T, float)


def sym_eig(T):
    T = _dense(T)
    return np.linalg.eigh(0.5 * (T + T.T))


def matrix_power(T, p: float, floor: float = 0.0):
    lam, V = sym_eig(T)
    if p < 0 and lam.min() <= floor:
        raise NotPositiveDefinite(f"smallest eigenvalue {lam.min():.3g}")
    lam = np.clip(lam, floor, None) if p > 0 else lam
    return (V * lam ** p) @ V.T


# inverse square root


def sinc_nodes(lam_min: float, lam_max: float, step: float = 0.4, tail: float = 21.0):
    """Nodes and weights of the trapezoid rule in tau = log t for
    T^{-1/2} = (2/pi) int_R e^tau (T + e^{2 tau})^{-1} dtau."""
    a = 0.5 * math.log(lam_min) - tail
    b = 0.5 * math.log(lam_max) + tail
    n = int(math.ceil((b - a) / step))
    tau = a + step * np.arange(n + 1)
    t2 = np.exp(2 * tau)
    wts = (2.0 / math.pi) * step * np.exp(tau)
    return t2, wts


def _extreme_eigs(T):
    if sp.issparse(T) and T.shape[0] > 400:
        lmax = spla.eigsh(T, k=1, which="LA", return_eigenvectors=False, tol=1e-6)[0]
        lmin = spla.eigsh(T, k=1, sigma=0, which="LM", return_eigenvectors=False, tol=1e-6)[0]
        return float(lmin), float(lmax)
    lam = np.linalg.eigvalsh(_dense(T))
    return float(lam[0]), float(lam[-1])


def inv_sqrt(T, method: str = "quadrature", step: float = 0.4, tail: float = 21.0, check: bool = True):
    """T^{-1/2} for symmetric positive definite T (dense result).

    ``quadrature`` uses the trapezoid rule in log t, whose error decays like
    exp(-pi^2 / step); ``eigh`` is the eigendecomposition reference.
    """
    Td = _dense(T)
    n = Td.shape[0]
    if method == "eigh":
        return matrix_power(Td, -0.5)
    lmin, lmax = _extreme_eigs(Td)
    if lmin <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {lmin:.3g}")
    lmin_s, lmax_s = 0.9 * lmin, 1.1 * lmax
    t2, wts = sinc_nodes(lmin_s, lmax_s, step, tail)
    if check:
        for lam in (lmin, lmax):
            approx = float(np.sum(wts / (lam + t2)))
            if abs(approx * math.sqrt(lam) - 1.0) > 1e-8:
                raise ArithmeticError(f"scalar quadrature check failed at eigenvalue {lam:.3g}")
    out = np.zeros_like(Td)
    I = np.eye(n)
    for s, wt in zip(t2, wts):
        c, low = sla.cho_factor(Td + s * I, check_finite=False)
        out += wt * sla.cho_solve((c, low), I, check_finite=False)
    return 0.5 * (out + out.T)


def inv_sqrt_apply(T, b, step: float = 0.4, tail: float = 21.0, bounds=None):
    """T^{-1/2} b for sparse T, one sparse factorisation per quadrature node."""
    T = sp.csc_matrix(T)
    lmin, lmax = bounds if bounds is not None else _extreme_eigs(T)
    if lmin <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {lmin:.3g}")
    t2, wts = sinc_nodes(0.9 * lmin, 1.1 * lmax, step, tail)
    b = np.asarray(b, float)
    out = np.zeros_like(b)
    I = sp.identity(T.shape[0], format="csc")
    for s, wt in zip(t2, wts):
        out += wt * spla.splu(T + s * I).solve(b)
    return out


# quasi-Riesz transforms


def quasi_riesz_family(lat: Lattice, w, method: str = "eigh") -> List[np.ndarray]:
    """All R^w_k = X^w_k L_w^{-1/2}, k < n1, as dense (n_out x n) matrices."""
    lat.require_dense()
    Xw = twisted_fields(lat, w)
    Lw = sum(X.T @ X for X in Xw)
    S = inv_sqrt(Lw, method=method)
    return [np.asarray(X @ S) for X in Xw]


def quasi_riesz(lat: Lattice, w, k: int, method: str = "eigh") -> np.ndarray:
    return quasi_riesz_family(lat, w, method)[k]


def riesz_identity_residual(Rs: Sequence[np.ndarray]) -> float:
    S = sum(R.T @ R for R in Rs)
    return float(np.linalg.norm(S - np.eye(S.shape[0]), 2))


def verify_norm_bounds(lat: Lattice, w: MatrixField, tol: float = 1e-8) -> dict:
    """Audit ||D^{1/2} L_w^{-1/2}|| <= sup||w^-1|| and its quarter-power form."""
    lat.require_dense()
    D = _dense(sub_laplacian(lat))
    Lw = _dense(twisted_laplacian(lat, w))
    winv = w.inverse_sup(lat.out_centers)
    lamD, VD = sym_eig(D)
    lamL, VL = sym_eig(Lw)
    half = float(np.sqrt(max(sla.eigh(D, Lw, eigvals_only=True).max(), 0.0)))
    D14 = (VD * np.clip(lamD, 0, None) ** 0.25) @ VD.T
    L14 = (VL * lamL ** -0.25) @ VL.T
    quarter = float(np.linalg.norm(D14 @ L14, 2))
    # informational: commutator-style ratio ||L_w^{1/2} D^{-1/2}|| against sup||w||
    upper = float(np.sqrt(max(sla.eigh(Lw, D, eigvals_only=True).max(), 0.0)))
    return dict(
        field=w.name,
        half_norm=half,
        half_bound=winv,
        half_ok=bool(half <= winv * (1 + tol)),
        quarter_norm=quarter,
        quarter_bound=math.sqrt(winv),
        quarter_ok=bool(quarter <= math.sqrt(winv) * (1 + tol)),
        min_eig_delta=float(lamD.min()),
        min_eig_Lw=float(lamL.min()),
        reverse_ratio=upper / w.sup(lat.out_centers),
    )


# heat semigroup


def heat(T, v, t: float):
    """exp(-t T) v via the action of the matrix exponential."""
    return spla.expm_multiply(-t * sp.csr_matrix(T), v)


def _boundary_mass(lat: Lattice, u, layers: int = 2) -> float:
    inner = lat.interior_mask(layers)
    tot = np.sum(np.abs(u))
    return float(np.sum(np.abs(u[~inner])) / tot) if tot else 0.0


def cubic_interpolation_matrix(lat: Lattice, pts) -> sp.csr_matrix:
    """Tensor-product 4-point Lagrange interpolation from the nodes to ``pts``.

    Exact at nodes and for cubic polynomials; stencils are shifted inwards at
    the box edges.  Points outside the box raise OutOfDomain.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    if np.any(np.abs(pts) > lat.L * (1 + 1e-12)):
        raise OutOfDomain("interpolation point outside the lattice box")
    m, d, N = len(pts), lat.d, lat.N
    t = (pts + lat.L) / lat.h
    base = np.clip(np.floor(t).astype(int) - 1, 0, N - 4)
    s = t - base
    wts = np.ones((m, d, 4))
    for i in range(4):
        for j in range(4):
            if i != j:
                wts[:, :, i] *= (s - j) / (i - j)
    rows, cols, vals = [], [], []
    for combo in itertools.product(range(4), repeat=d):
        idx = base + np.array(combo)[None, :]
        w = np.prod(wts[:, np.arange(d), list(combo)], axis=1)
        rows.append(np.arange(m))
        cols.append(np.ravel_multi_index(tuple(idx.T), lat.shape))
        vals.append(w)
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, lat.n))
    M.eliminate_zeros()
    return M


def interpolate(lat: Lattice, u, pts):
    return cubic_interpolation_matrix(lat, pts) @ u


def heat_checks(lat: Lattice, A=None, ts=(0.1,), contamination: float = 1e-3) -> dict:
    """Heat-kernel diagnostics.

    For each automorphism A, compare exp(-t L_A) delta with
    |det A^-1| (exp(-t Delta) delta) o A^-1 by cubic interpolation.
    On an abelian group also compare with the Gaussian and check the
    t^{Q/2} scaling of the central value.
    """
    alg = lat.alg
    D = sub_laplacian(lat)
    src = lat.delta()
    mats = [] if A is None else ([A] if np.ndim(A) == 2 else list(A))
    out = dict(ts=list(ts), automorphisms=[], gaussian=None, scaling=None)
    abelian = alg.step == 1
    for t in ts:
        u = heat(D, src, t)
        if _boundary_mass(lat, u) > contamination:
            raise BoundaryContamination(f"heat mass reaches the boundary at t={t}")
    if abelian:
        errs = []
        for t in ts:
            u = heat(D, src, t)
            r2 = np.sum(lat.points ** 2, axis=1)
            g = (4 * np.pi * t) ** (-lat.d / 2) * np.exp(-r2 / (4 * t))
            errs.append(float(np.linalg.norm(u - g) / np.linalg.norm(g)))
        out["gaussian"] = errs
        centre = lat.nearest_nodes(np.zeros(lat.d))
        if len(centre) == 1:
            vals = [float(heat(D, src, t)[centre[0]] * t ** (alg.Q / 2)) for t in ts]
            spread = (max(vals) - min(vals)) / np.mean(vals)
            out["scaling"] = dict(values=vals, spread=float(spread), reference=(4 * np.pi) ** (-alg.Q / 2))
    interior = lat.interior_mask(4)
    for Amat in mats:
        Amat = np.asarray(Amat, float)
        LA = twisted_laplacian(lat, Amat)
        rec = dict(matrix=Amat.tolist(), errors=[])
        for t in ts:
            uA = heat(LA, src, t)
            u = heat(D, src, t)
            pre = lat.points[interior] @ np.linalg.inv(Amat).T
            inside = np.all(np.abs(pre) <= lat.L, axis=1)
            rhs = np.zeros(len(pre))
            rhs[inside] = abs(np.linalg.det(np.linalg.inv(Amat))) * interpolate(lat, u, pre[inside])
            lhs = uA[interior]
            rec["errors"].append(float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)))
        out["automorphisms"].append(rec)
    return out


# invariance


def shift_operator(lat: Lattice, x) -> sp.csr_matrix:
    """lambda_x f(y) = f(x^-1 y) on the grid, for grid-aligned abelian/central x."""
    alg = lat.alg
    x = np.asarray(x, float)
    steps = x / lat.h
    if np.any(np.abs(steps - np.round(steps)) > 1e-9):
        raise NonRepresentableShift("shift is not a multiple of the grid spacing")
    moving = np.nonzero(np.round(steps))[0]
    C = alg.structure
    for m in moving:
        if np.any(C[m]) or np.any(C[:, m]):
            raise NonRepresentableShift(f"coordinate {m + 1} is not central; translation is not a grid shift")
    k = np.round(steps).astype(int)
    idx = np.indices(lat.shape).reshape(lat.d, -1)
    src = idx - k[:, None]
    ok = np.all((src >= 0) & (src < lat.N), axis=0)
    rows = np.nonzero(ok)[0]
    cols = np.ravel_multi_index(tuple(src[:, ok]), lat.shape)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(lat.n, lat.n))


def riesz_kernel(lat: Lattice, k: int = 0, y=None, bounds=None) -> np.ndarray:
    """Column R_k delta_y on the output grid (sparse quadrature path)."""
    D = sub_laplacian(lat)
    v = inv_sqrt_apply(D, lat.delta(y), bounds=bounds)
    return lat.X(k) @ v


def kernel_dilation_error(lat: Lattice, r: float = 2.0, k: int = 0, rmin: float = 0.4, rmax: float = None) -> dict:
    """Compare r^Q K(delta_r x) with K(x) at output midpoints in an annulus."""
    alg = lat.alg
    K = riesz_kernel(lat, k)
    pts = lat.out_midpoints(k)
    rmax = lat.L / (r * 1.6) if rmax is None else rmax
    # output midpoints along axis k form a grid shifted by h/2 along k
    axes = []
    for a in range(lat.d):
        ax = np.concatenate([[lat.nodes[0] - lat.h], lat.nodes])
        if a == k:
            ax = ax + 0.5 * lat.h
        axes.append(ax)
    interp = RegularGridInterpolator(axes, K.reshape(lat.out_shape), method="linear")
    nrm = alg.norm(pts)
    sel = (nrm >= rmin) & (nrm <= rmax) & (np.abs(pts[:, k]) > 0.25 * nrm)
    x = pts[sel]
    lhs = r ** alg.Q * interp(alg.dilate(r, x))
    ratio = lhs / K[sel]
    return dict(
        ratios_min=float(ratio.min()),
        ratios_max=float(ratio.max()),
        error=float(np.sqrt(np.mean((ratio - 1) ** 2))),
        points=int(sel.sum()),
    )


def invariance_checks(lat: Lattice, f: Callable = None, shift=None) -> dict:
    """Shift conjugation of multipliers and kernel symmetry/scaling."""
    f = f or (lambda x: np.exp(-np.sum(x ** 2, axis=1)) * (1 + x[:, 0]))
    alg = lat.alg
    if shift is None:
        shift = np.zeros(lat.d)
        shift[-1] = 2 * lat.h
    S = shift_operator(lat, shift)
    P = sp.diags(np.asarray(S.sum(axis=1)).ravel())
    shifted_f = lambda y: f(alg.multiply(np.broadcast_to(-np.asarray(shift, float), y.shape), y))
    lhs = P @ lat.multiplier(shifted_f) @ P
    rhs = S @ lat.multiplier(f) @ S.T
    shift_err = float(abs(lhs - rhs).max())
    out = dict(shift_error=shift_err)
    if lat.d == 1:
        K = riesz_kernel(lat, 0)
        # output index i sits at node(i) + h/2; reflection about 0 maps i -> N-2-i
        out["antisymmetry_error"] = float(np.max(np.abs(K + K[::-1])))
    return out


# singular values


@dataclass
class SingularValueProfile:
    mu: np.ndarray

    @classmethod
    def of(cls, T):
        return cls(np.linalg.svd(_dense(T), compute_uv=False))

    def lp(self, p: float) -> float:
        return float(np.sum(self.mu ** p) ** (1.0 / p))

    def weak(self, p: float) -> float:
        k = np.arange(len(self.mu))
        return float(np.max((k + 1) ** (1.0 / p) * self.mu))

    def decay_ratio(self, n: Optional[int] = None) -> float:
        n = len(self.mu) if n is None else n
        return float(self.mu[n // 4] / self.mu[0]) if self.mu[0] > 0 else 0.0


def compactness_profile(T, cap: int = DEFAULT_CAP) -> SingularValueProfile:
    if max(T.shape) > cap:
        raise CapExceeded(f"matrix of shape {T.shape} exceeds cap {cap}")
    return SingularValueProfile.of(T)


def commutator_with_riesz(lat: Lattice, f: Callable, k: int = 0, w=None) -> np.ndarray:
    """[M_f, R_k] = M_f^{out} R_k - R_k M_f."""
    w = np.eye(lat.alg.n1) if w is None else w
    R = quasi_riesz(lat, w, k)
    fo = f(lat.out_centers)
    fi = f(lat.points)
    return fo[:, None] * R - R * fi[None, :]


# conjugation by maps


def transfer_matrix(lat: Lattice, phi: SmoothMap, rows: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """U_Phi g(x) = |det J_Phi(x)|^{1/2} g(Phi x) with cubic interpolation, rows restricted to ``rows``."""
    rows = np.arange(lat.n) if rows is None else rows
    x = lat.points[rows]
    y = phi(x)
    J = np.abs(np.linalg.det(phi.jacobian(x))) ** 0.5
    return sp.diags(J) @ cubic_interpolation_matrix(lat, y)


def farc_ratio(trials: int = 200, size: int = 30, seed: int = 0) -> dict:
    """max over random SPD pairs of ||(A^{1/2}-B^{1/2})A^{-1/2}|| / ||B^{-1/4}(B-A)A^{-3/4}||."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(trials):
        def spd():
            G = rng.standard_normal((size, size))
            return G @ G.T / size + rng.uniform(0.05, 1.0) * np.eye(size)

        A, B = spd(), spd()
        a, Va = np.linalg.eigh(A)
        b, Vb = np.linalg.eigh(B)
        A12, Am12, Am34 = [(Va * a ** p) @ Va.T for p in (0.5, -0.5, -0.75)]
        B12, Bm14 = [(Vb * b ** p) @ Vb.T for p in (0.5, -0.25)]
        num = np.linalg.norm((A12 - B12) @ Am12, 2)
        den = np.linalg.norm(Bm14 @ (B - A) @ Am34, 2)
        ratios.append(num / den)
    ratios = np.array(ratios)
    return dict(max=float(ratios.max()), mean=float(ratios.mean()), trials=trials, size=size)


def conjugation_checks(lat: Lattice, phi: SmoothMap, f: Callable = None, g: Callable = None,
                       sub_box: float = None, farc: bool = True) -> dict:
    """Multiplier conjugation with the discrete U_Phi and the field conjugation
    identity U^-1 X_k U = Phi_*(X_k) + a_k at interior points."""
    from .fields import conjugation_correction, pushforward_field

    alg = lat.alg
    f = f or (lambda x: np.exp(-0.5 * np.sum(x ** 2, axis=1)))
    g = g or (lambda x: np.exp(-np.sum(x ** 2, axis=1)) * (1 + 0.5 * x[:, 0]))
    sub = 0.5 * lat.L if sub_box is None else sub_box
    rows = np.nonzero(np.all(np.abs(lat.points) <= sub + 1e-12, axis=1))[0]
    U = transfer_matrix(lat, phi, rows)
    gv = g(lat.points)
    x = lat.points[rows]
    y = phi(x)
    Jh = np.abs(np.linalg.det(phi.jacobian(x))) ** 0.5
    f_inv = lambda p: f(phi.inverse(p))
    Ug = U @ gv
    Ufg = U @ (gv * f_inv(lat.points))
    err_g = np.max(np.abs(Ug - Jh * g(y)))
    err_fg = np.max(np.abs(Ufg - Jh * f_inv(y) * g(y)))
    lhs = f(x) * Ug
    resid = float(np.max(np.abs(lhs - Ufg)))
    bound = float(err_fg + np.max(np.abs(f(x))) * err_g)
    # field conjugation at interior points, continuum evaluation
    fields = derive_left_invariant_fields(alg)
    rng = np.random.default_rng(0)
    ys = phi(rng.uniform(-0.5 * sub, 0.5 * sub, (64, alg.dim)))
    xs = phi.inverse(ys)
    detJ = lambda p: np.abs(np.linalg.det(phi.jacobian(p)))
    Ug_fn = lambda p: detJ(p) ** 0.5 * g(phi(p))
    ux = []
    for k in range(alg.n1):
        lhs_k = directional_derivative(Ug_fn, xs, fields[k].vector(xs)) / detJ(xs) ** 0.5
        push = pushforward_field(phi, fields[k]).apply(g, ys)
        a_k = conjugation_correction(phi, k, alg)(ys)
        ux.append(float(np.max(np.abs(lhs_k - (push + a_k * g(ys))))))
    out = dict(multiplier_residual=resid, interpolation_bound=bound, multiplier_ok=bool(resid <= bound + 1e-12),
               field_residual=max(ux), field_ok=bool(max(ux) <= 1e-3))
    if farc:
        out["farc"] = farc_ratio()
    return out
