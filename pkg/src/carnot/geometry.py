"""Strata automorphisms, G-diffeomorphism certification, atlases and coverings."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .fields import (
    NewtonInverse,
    OpaqueMap,
    SmoothMap,
    derive_left_invariant_fields,
    pushforward_field,
)
from .group import StratifiedAlgebra


class NotAdmissible(ValueError):
    pass


class EmptyBox(ValueError):
    pass


class DegenerateJacobian(ValueError):
    pass


class CoveringUnavailable(ValueError):
    pass


AUT_TOL = 1e-10


# automorphisms


@dataclass
class AutomorphismCertificate:
    valid: bool
    violations: List[str]
    block_residual: float
    bracket_residual: float
    min_singular: float

    def __bool__(self):
        return self.valid


def check_strata_automorphism(alg: StratifiedAlgebra, A, tol: float = AUT_TOL) -> AutomorphismCertificate:
    """Check that ``A`` is block diagonal along the strata and respects brackets."""
    A = np.asarray(A, float)
    d = alg.dim
    viol = []
    if A.shape != (d, d):
        return AutomorphismCertificate(False, [f"shape {A.shape} is not {(d, d)}"], np.inf, np.inf, 0.0)
    scale = max(1.0, np.max(np.abs(A)))
    same = alg.weights[:, None] == alg.weights[None, :]
    off = np.where(same, 0.0, A)
    block_res = float(np.max(np.abs(off)))
    if block_res > tol * scale:
        i, j = np.unravel_index(np.argmax(np.abs(off)), off.shape)
        viol.append(f"off-block entry A[{i + 1},{j + 1}]={A[i, j]:.3g} couples layers "
                    f"{alg.weights[i]} and {alg.weights[j]}")
    # A[e_i, e_j] - [A e_i, A e_j] for all basis pairs
    C = alg.structure
    lhs = np.einsum("ijm,km->ijk", C, A)
    rhs = np.einsum("ai,bj,abk->ijk", A, A, C)
    res = np.abs(lhs - rhs)
    bracket_res = float(np.max(res)) if res.size else 0.0
    if bracket_res > tol * scale ** 2:
        i, j, k = np.unravel_index(np.argmax(res), res.shape)
        viol.append(f"A[Z{i + 1},Z{j + 1}] and [AZ{i + 1},AZ{j + 1}] differ by {res[i, j, k]:.3g} along Z{k + 1}")
    smin = float(np.linalg.svd(A, compute_uv=False)[-1])
    if smin <= tol * scale:
        viol.append("matrix is singular")
    return AutomorphismCertificate(not viol, viol, block_res, bracket_res, smin)


class StrataAutomorphism:
    def __init__(self, alg: StratifiedAlgebra, matrix, check: bool = True):
        self.alg = alg
        self.matrix = np.array(matrix, dtype=float)
        if check:
            cert = check_strata_automorphism(alg, self.matrix)
            if not cert:
                raise NotAdmissible("; ".join(cert.violations))

    def block(self, s: int) -> np.ndarray:
        """Block of layer ``s`` (1-based)."""
        sl = self.alg.layer_slices[s - 1]
        return self.matrix[sl, sl]

    @property
    def first_block(self) -> np.ndarray:
        return self.block(1)

    def __matmul__(self, other):
        return StrataAutomorphism(self.alg, self.matrix @ other.matrix, check=False)

    def inverse(self):
        return StrataAutomorphism(self.alg, np.linalg.inv(self.matrix), check=False)


def extend_first_block(alg: StratifiedAlgebra, B, tol: float = 1e-8) -> np.ndarray:
    """Unique strata automorphism with first block ``B``, built layer by layer.

    Layer s+1 is spanned by brackets [e_a, e_b] with a in layer 1, b in layer s,
    so A_{s+1} is fixed by A_{s+1}[e_a, e_b] = [A e_a, A e_b].  Raises
    NotAdmissible when no such linear map exists.
    """
    B = np.asarray(B, float)
    d = alg.dim
    A = np.zeros((d, d))
    sl = alg.layer_slices
    A[sl[0], sl[0]] = B
    C = alg.structure
    for s in range(1, alg.step):
        lo, prev, cur = sl[0], sl[s - 1], sl[s]
        U, V = [], []
        for a in range(lo.start, lo.stop):
            for b in range(prev.start, prev.stop):
                u = C[a, b, cur]
                if not np.any(u):
                    continue
                v = np.einsum("i,j,ijk->k", A[:, a], A[:, b], C)[cur]
                U.append(u)
                V.append(v)
        U = np.array(U).T
        V = np.array(V).T
        X, *_ = np.linalg.lstsq(U.T, V.T, rcond=None)
        blk = X.T
        resid = np.max(np.abs(blk @ U - V)) if U.size else 0.0
        if resid > tol * max(1.0, np.max(np.abs(V))):
            raise NotAdmissible(f"first block does not extend to layer {s + 1} (residual {resid:.3g})")
        A[cur, cur] = blk
    return A


# frames and G-diffeomorphisms


def F_basis(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Rows h_j(x), j < n1: Euclidean components of the horizontal frame at x."""
    fields = derive_left_invariant_fields(alg)[: alg.n1]
    x = np.asarray(x, float)
    return np.stack([f.vector(x) for f in fields], axis=-2)


def frame_matrix(alg: StratifiedAlgebra, x) -> np.ndarray:
    """Columns Z_j(x) for all j."""
    fields = derive_left_invariant_fields(alg)
    return np.stack([f.vector(x) for f in fields], axis=-1)


@dataclass
class DiffeoReport:
    passed: bool
    criterion5: bool
    criterion6: bool
    residual5: float
    residual6: float
    agree: bool
    samples: int
    tol: float
    worst_point: Optional[List[float]] = None

    def as_dict(self):
        return dict(self.__dict__)


def horizontal_residuals(alg: StratifiedAlgebra, phi: SmoothMap, pts: np.ndarray):
    """Per-sample residuals of the two horizontal-preservation criteria.

    Criterion 5: the pushforward of each horizontal Z_k, written in the
    left-invariant frame at Phi(x), has no component beyond layer 1.
    Criterion 6: J_Phi(x) h_k(x) is orthogonal to the normals of F(Phi(x)).
    """
    n1 = alg.n1
    pts = np.atleast_2d(pts)
    fields = derive_left_invariant_fields(alg)
    y = phi(pts)
    frame_y = frame_matrix(alg, y)  # (m, d, d)
    r5 = np.zeros(len(pts))
    r6 = np.zeros(len(pts))
    J = phi.jacobian(pts)
    H = F_basis(alg, pts)  # (m, n1, d)
    Hy = F_basis(alg, y)
    # normals n_m = e_m - sum_{j<n1} (h_j(y))_m e_j for m >= n1
    normals = np.zeros((len(pts), alg.dim - n1, alg.dim))
    for idx, m in enumerate(range(n1, alg.dim)):
        normals[:, idx, m] = 1.0
        normals[:, idx, :n1] = -Hy[:, :, m]
    for k in range(n1):
        v = pushforward_field(phi, fields[k]).vector(y)
        coeffs = np.linalg.solve(frame_y, v[..., None])[..., 0]
        scale = 1.0 + np.linalg.norm(v, axis=-1)
        r5 = np.maximum(r5, np.max(np.abs(coeffs[:, n1:]), axis=-1, initial=0.0) / scale)
        w = np.einsum("nij,nj->ni", J, H[:, k])
        dots = np.einsum("nmi,ni->nm", normals, w)
        nrm = np.linalg.norm(normals, axis=-1)
        r6 = np.maximum(r6, np.max(np.abs(dots) / nrm, axis=-1, initial=0.0) / (1.0 + np.linalg.norm(w, axis=-1)))
    return r5, r6


def check_G_diffeomorphism(alg: StratifiedAlgebra, phi: SmoothMap, samples, tol: float = 1e-7) -> DiffeoReport:
    pts = np.atleast_2d(np.asarray(samples, float))
    r5, r6 = horizontal_residuals(alg, phi, pts)
    ok5 = bool(np.all(r5 <= tol))
    ok6 = bool(np.all(r6 <= tol))
    worst = int(np.argmax(np.maximum(r5, r6)))
    return DiffeoReport(ok5 and ok6, ok5, ok6, float(r5.max()), float(r6.max()), ok5 == ok6,
                        len(pts), tol, pts[worst].tolist())


def admissibility_matrix(alg: StratifiedAlgebra, phi: SmoothMap, x, tol: float = 1e-7) -> np.ndarray:
    """H^Phi(x): first block (X_j Phi_i)(x), higher blocks induced by brackets."""
    x = np.asarray(x, float)
    J = phi.jacobian(x)
    H = F_basis(alg, x)
    n1 = alg.n1
    Jh = (J @ H.T)  # columns J h_j(x)
    B = Jh[:n1, :]
    A = extend_first_block(alg, B)
    # the induced map must reproduce the full horizontal image J h_j = sum_i B_ij h_i(Phi x)
    Hy = F_basis(alg, phi(x))
    resid = np.max(np.abs(Jh - Hy.T @ B)) / (1.0 + np.max(np.abs(Jh)))
    if resid > tol:
        raise NotAdmissible(f"{phi.label} is not horizontal at {x.tolist()} (residual {resid:.3g})")
    cert = check_strata_automorphism(alg, A, tol=max(tol, AUT_TOL))
    if not cert:
        raise NotAdmissible("; ".join(cert.violations))
    return A


# atlases


@dataclass
class Chart:
    name: str
    map: SmoothMap
    box: Optional[np.ndarray] = None  # (d, 2) domain in manifold coordinates


@dataclass
class Overlap:
    charts: tuple
    box: np.ndarray  # (d, 2)


@dataclass
class ChartAtlas:
    alg: StratifiedAlgebra
    charts: List[Chart]
    overlaps: List[Overlap] = field(default_factory=list)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.charts):
            if c.name == name:
                return i
        raise KeyError(name)

    def transition(self, i: int, j: int) -> SmoothMap:
        """Phi_{i,j} = h_j ∘ h_i^{-1}."""
        hi, hj = self.charts[i].map, self.charts[j].map
        if hi.inverse is None:
            hi.inverse = NewtonInverse(hi)
        return hj.compose(hi.inverse)


def sample_box(box, n: int, rng) -> np.ndarray:
    box = np.asarray(box, float)
    if np.any(box[:, 1] <= box[:, 0]):
        raise EmptyBox(f"degenerate box {box.tolist()}")
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, len(box)))


@dataclass
class AtlasReport:
    passed: bool
    pair_residual: float
    triple_residual: float
    inverse_residual: float
    transitions: Dict[str, dict]
    failures: List[str]


def verify_atlas(atlas: ChartAtlas, samples: int = 32, seed: int = 0, tol: float = 1e-8) -> AtlasReport:
    alg = atlas.alg
    rng = np.random.default_rng(seed)
    fails = []
    trans = {}
    pair_res = 0.0
    triple_res = 0.0
    inv_res = 0.0
    I = np.eye(alg.dim)
    for ov in atlas.overlaps:
        names = ov.charts
        idx = [atlas.index(n) for n in names]
        pts = sample_box(ov.box, samples, rng)
        images = {i: atlas.charts[i].map(pts) for i in idx}
        for i, j in itertools.permutations(idx, 2):
            key = f"{atlas.charts[i].name}->{atlas.charts[j].name}"
            if key in trans:
                continue
            phi = atlas.transition(i, j)
            rep = check_G_diffeomorphism(alg, phi, images[i], tol=1e-7)
            trans[key] = rep.as_dict()
            if not rep.passed:
                fails.append(f"transition {key} is not a G-diffeomorphism (residual "
                             f"{max(rep.residual5, rep.residual6):.3g})")
            back = atlas.transition(j, i)
            inv_res = max(inv_res, float(np.max(np.abs(back(phi(images[i])) - images[i]))))
        if len(idx) >= 2:
            for i, j in itertools.combinations(idx, 2):
                pij, pji = atlas.transition(i, j), atlas.transition(j, i)
                for n in range(len(pts)):
                    try:
                        P = admissibility_matrix(alg, pij, images[i][n]) @ admissibility_matrix(alg, pji, images[j][n])
                    except NotAdmissible as exc:
                        fails.append(str(exc))
                        continue
                    pair_res = max(pair_res, float(np.linalg.norm(P[: alg.n1, : alg.n1] - I[: alg.n1, : alg.n1], 2)))
        if len(idx) == 3:
            i, j, k = idx
            pij, pjk, pki = atlas.transition(i, j), atlas.transition(j, k), atlas.transition(k, i)
            for n in range(len(pts)):
                try:
                    P = (admissibility_matrix(alg, pki, images[k][n])
                         @ admissibility_matrix(alg, pjk, images[j][n])
                         @ admissibility_matrix(alg, pij, images[i][n]))
                except NotAdmissible as exc:
                    fails.append(str(exc))
                    continue
                triple_res = max(triple_res, float(np.linalg.norm(P[: alg.n1, : alg.n1] - I[: alg.n1, : alg.n1], 2)))
    if pair_res > tol:
        fails.append(f"pairwise cocycle residual {pair_res:.3g} exceeds {tol:g}")
    if triple_res > tol:
        fails.append(f"triple cocycle residual {triple_res:.3g} exceeds {tol:g}")
    if inv_res > 1e-8:
        fails.append(f"transitions are not mutually inverse (residual {inv_res:.3g})")
    return AtlasReport(not fails, pair_res, triple_res, inv_res, trans, fails)


# coverings


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u ** 2)


class CoveringSystem:
    """Dilated lattice of centres with a squared partition of unity.

    The base lattice is Z^d in Jacobian coordinates.  Two distinct lattice
    points are at gauge distance >= 1 (the first layer where they differ is
    central modulo higher layers), and every point is within ``cover_radius``
    < 1 of the lattice.  Raw bumps are flat on rho < R/2 and vanish for
    rho >= R with cover_radius < R < 1.
    """

    def __init__(self, alg: StratifiedAlgebra, eps: float, box=None):
        if not eps > 0:
            raise ValueError("scale must be positive")
        self.alg = alg
        self.eps = float(eps)
        p = 2 * np.prod(range(1, alg.step + 1))
        mass = sum(n * 2.0 ** (-p / s) for s, n in enumerate(alg.strata, start=1))
        if mass >= 1:
            raise CoveringUnavailable("unit lattice does not cover with gauge radius < 1 for this group")
        self.cover_radius = mass ** (1.0 / p)
        self.R = 0.5 * (1.0 + self.cover_radius)
        self.R0 = 0.5 * self.R
        self.box = None if box is None else np.asarray(box, float)
        if self.box is not None and np.any(self.box[:, 1] <= self.box[:, 0]):
            raise EmptyBox(f"degenerate box {self.box.tolist()}")
        self.M = None
        self.multiplicity = {}

    def raw_bump(self, rho):
        u = (np.asarray(rho) ** 2 - self.R0 ** 2) / (self.R ** 2 - self.R0 ** 2)
        return 1.0 - _smoothstep(u)

    def _candidates(self, y: np.ndarray, r: float):
        """Integer lattice points g with rho(g^-1 y) < r, for scaled points y.

        Returns (idx, gam) with idx the sample index of each pair.
        """
        alg = self.alg
        m = len(y)
        sl = alg.layer_slices
        gam = np.zeros((m, 1, alg.dim))
        for s, lay in enumerate(sl, start=1):
            if s == 1:
                w = y[:, None, :]
            else:
                w = alg.multiply(-gam, np.broadcast_to(y[:, None, :], gam.shape))
            rad = r ** s
            K = int(np.ceil(rad)) + 1
            offs = np.array(list(itertools.product(range(-K, K + 1), repeat=lay.stop - lay.start)), float)
            base = np.floor(w[..., lay])  # (m, c, n_s)
            new = base[:, :, None, :] + offs[None, None, :, :]
            keep = np.all(np.abs(w[..., lay][:, :, None, :] - new) < rad, axis=-1)
            c, o = gam.shape[1], len(offs)
            g = np.repeat(gam[:, :, None, :], o, axis=2)
            g[..., lay] = new
            g = g.reshape(m, c * o, alg.dim)
            keep = keep.reshape(m, c * o)
            width = max(int(keep.sum(axis=1).max()), 1)
            order = np.argsort(~keep, axis=1, kind="stable")[:, :width]
            g = np.take_along_axis(g, order[..., None], axis=1)
            valid = np.take_along_axis(keep, order, axis=1)
            g[~valid] = np.nan
            gam = g
        flat_idx = np.repeat(np.arange(m), gam.shape[1])
        flat = gam.reshape(-1, alg.dim)
        ok = ~np.isnan(flat[:, 0])
        flat_idx, flat = flat_idx[ok], flat[ok]
        rho = alg.norm(alg.multiply(-flat, y[flat_idx]))
        sel = rho < r
        return flat_idx[sel], flat[sel].astype(np.int64), rho[sel]

    def centers_near(self, x, radius: float = 1.0):
        """Centres gamma in Gamma_eps with x in B(gamma, radius * eps)."""
        x = np.atleast_2d(np.asarray(x, float))
        y = self.alg.dilate(1.0 / self.eps, x)
        idx, g, rho = self._candidates(y, radius)
        return idx, self.alg.dilate(self.eps, g.astype(float)), g

    def partition(self, x):
        """Sparse partition of unity at points x.

        Returns (point index, lattice index (int), value) triples with
        sum over gamma of value^2 = 1 at every point.
        """
        x = np.atleast_2d(np.asarray(x, float))
        y = self.alg.dilate(1.0 / self.eps, x)
        idx, g, rho = self._candidates(y, self.R)
        b = self.raw_bump(rho)
        tot = np.bincount(idx, weights=b ** 2, minlength=len(x))
        if np.any(tot <= 0):
            raise CoveringUnavailable("a sample point is not covered")
        return idx, g, b / np.sqrt(tot[idx])

    def eta(self, gamma_index, x):
        """eta^gamma_eps(x) for one lattice index."""
        x = np.atleast_2d(np.asarray(x, float))
        idx, g, val = self.partition(x)
        target = np.asarray(gamma_index, np.int64)
        hit = np.all(g == target, axis=1)
        out = np.zeros(len(x))
        out[idx[hit]] = val[hit]
        return out

    def center(self, gamma_index):
        return self.alg.dilate(self.eps, np.asarray(gamma_index, float))

    def audit(self, samples: int = 10000, seed: int = 0, Cs=(1, 2, 4), mult_samples: int = 400):
        if self.box is None:
            raise EmptyBox("covering audit needs a box")
        rng = np.random.default_rng(seed)
        pts = sample_box(self.box, samples, rng)
        idx, g, val = self.partition(pts)
        sq = np.bincount(idx, weights=val ** 2, minlength=len(pts))
        pou_err = float(np.max(np.abs(sq - 1.0)))
        # support and flatness
        cen = self.alg.dilate(self.eps, g.astype(float))
        dist = self.alg.norm(self.alg.multiply(-cen, pts[idx]))
        support_ok = bool(np.all(dist < self.eps))
        centres = np.unique(g, axis=0)[:50]
        at_centre = [self.eta(c, self.center(c))[0] for c in centres]
        centre_err = float(np.max(np.abs(np.array(at_centre) - 1.0)))
        mpts = pts[:mult_samples]
        counts = {}
        for C in Cs:
            i, _, _ = self.centers_near(mpts, C)
            counts[C] = int(np.bincount(i, minlength=len(mpts)).max())
        Q = self.alg.Q
        M = counts[Cs[0]] ** (1.0 / Q) / Cs[0]
        bounded = {C: counts[C] <= (M * C) ** Q * (1 + 1e-12) for C in Cs}
        self.M = M
        self.multiplicity = counts
        return dict(
            partition_error=pou_err,
            support_ok=support_ok,
            centre_error=centre_err,
            multiplicity=counts,
            M=M,
            bounded=bounded,
            monotone=all(counts[a] <= counts[b] for a, b in zip(Cs, Cs[1:])),
            samples=samples,
        )


def build_covering(alg: StratifiedAlgebra, eps: float, box) -> CoveringSystem:
    return CoveringSystem(alg, eps, box)


# localisation


def cutoff(t):
    """1 on [0, 1/2], 0 on [1, inf), smooth in between."""
    return 1.0 - _smoothstep(2.0 * np.asarray(t, float) - 1.0)


def localize_diffeomorphism(alg: StratifiedAlgebra, phi: SmoothMap, xi, r: float = 1.0, samples: int = 400,
                            seed: int = 0, max_halvings: int = 20) -> SmoothMap:
    """Glue Phi near xi to its affine tangent map away from xi.

    Phi_xi(z) = T(z) + psi(rho(xi^-1 z)/r) (Phi(z) - T(z)), T(z) = Phi(xi) + J(xi)(z - xi).
    Agrees with Phi on B(xi, r/2) and with T outside B(xi, r).  ``r`` is
    halved until det J of the glued map stays above a quarter of |det J(xi)|.
    """
    xi = np.asarray(xi, float)
    J0 = phi.jacobian(xi)
    det0 = np.linalg.det(J0)
    if abs(det0) < 1e-12:
        raise DegenerateJacobian(f"det J = {det0:.3g} at the localisation point")
    p0 = phi(xi)
    rng = np.random.default_rng(seed)

    def make(rad):
        def f(z):
            z = np.atleast_2d(z)
            T = p0 + (z - xi) @ J0.T
            t = alg.norm(alg.multiply(-xi, z)) / rad
            psi = cutoff(t)
            out = T.copy()
            act = psi > 0
            if np.any(act):
                out[act] += psi[act, None] * (phi(z[act]) - T[act])
            return out

        m = OpaqueMap(f, alg.dim, label=f"{phi.label}|loc")
        m.r1, m.r2, m.center, m.tangent = rad / 2, rad, xi, (p0, J0)
        m.inverse = NewtonInverse(m)
        return m

    rad = float(r)
    for _ in range(max_halvings):
        m = make(rad)
        # sample the gluing shell B(xi, rad)
        u = rng.standard_normal((samples, alg.dim))
        scale = rad * rng.random((samples, 1)) / alg.norm(u)[:, None]
        z = alg.multiply(np.broadcast_to(xi, u.shape), u * scale ** alg.weights)
        dets = np.linalg.det(m.jacobian(z))
        if np.all(np.sign(dets) == np.sign(det0)) and np.min(np.abs(dets)) >= 0.25 * abs(det0):
            return m
        rad /= 2
    raise DegenerateJacobian("could not find a radius keeping the glued map nondegenerate")


def diffeo_corpus(alg: StratifiedAlgebra) -> List[tuple]:
    """Labelled test maps on H^1: (label, map, expected G-diffeo flag)."""
    from .fields import dilation_map, left_translation, affine_map, PolynomialMap
    from .poly import Poly

    if alg.dim != 3 or alg.n1 != 2:
        raise ValueError("the bundled map corpus is written for H^1")
    v = lambda i: Poly.var(3, i)

    def paired(fwd, inv, label):
        m = PolynomialMap(fwd, PolynomialMap(inv, label=label + "^-1"), label=label)
        m.inverse.inverse = m
        return m

    contact = paired([v(0), v(1) + v(0) ** 2, v(2) + v(0) ** 3 / 6],
                     [v(0), v(1) - v(0) ** 2, v(2) - v(0) ** 3 / 6], "contact")
    trans = left_translation(alg, [1.0, -0.5, 0.25])
    dil = dilation_map(alg, 2.0)
    aut = affine_map(extend_first_block(alg, np.array([[1.0, 2.0], [0.5, 3.0]])), label="aut")
    good = [("translation", trans), ("dilation", dil), ("automorphism", aut),
            ("dilation∘translation", dil.compose(trans)), ("automorphism∘translation", aut.compose(trans)),
            ("contact", contact)]
    bad = [
        ("vertical shear", affine_map([[1, 0, 1], [0, 1, 0], [0, 0, 1]], label="vshear")),
        ("unbalanced scaling", affine_map(np.diag([1.0, 1.0, 2.0]), label="diag112")),
        ("vertical mixing", affine_map([[1, 0, 0], [0, 1, 1], [0, 0, 1]], label="vmix")),
        ("coordinate swap", affine_map([[0, 0, 1], [0, 1, 0], [1, 0, 0]], label="swap")),
        ("quadratic vertical", paired([v(0), v(1), v(2) + v(0) ** 2], [v(0), v(1), v(2) - v(0) ** 2], "qvert")),
        ("quadratic horizontal", paired([v(0) + v(1) ** 2, v(1), v(2)], [v(0) - v(1) ** 2, v(1), v(2)], "qhor")),
    ]
    return [(n, m, True) for n, m in good] + [(n, m, False) for n, m in bad]
