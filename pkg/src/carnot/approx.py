"""Local constant-matrix approximations of a matrix field and the patched
quasi-Riesz sums built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .geometry import CoveringSystem, _smoothstep, build_covering
from .group import StratifiedAlgebra
from .spectral import Lattice, MatrixField, inv_sqrt, twisted_fields


class EpsilonTooLarge(ValueError):
    pass


LOG_RADIUS = 0.5


def log_series(V, tol: float = 1e-17, max_terms: int = 200):
    """Principal log of matrices with ||V - 1|| <= 1/2 by the Mercator series (batched)."""
    V = np.asarray(V, float)
    n = V.shape[-1]
    E = V - np.eye(n)
    r = np.linalg.norm(E, ord=2, axis=(-2, -1))
    if np.any(r > LOG_RADIUS + 1e-12):
        raise EpsilonTooLarge(f"||V - 1|| = {float(np.max(r)):.3g} exceeds {LOG_RADIUS}")
    out = np.zeros_like(E)
    P = E.copy()
    for k in range(1, max_terms + 1):
        term = P / k * (1 if k % 2 else -1)
        out = out + term
        if np.max(np.abs(term)) < tol:
            break
        P = P @ E
    return out


def exp_matrix(X):
    return sla.expm(np.asarray(X, float))


def theta_profile(t):
    """1 for t <= 1, 0 for t >= 2, smooth in between (t a gauge ratio)."""
    return 1.0 - _smoothstep(np.asarray(t, float) - 1.0)


def sample_pairs(alg: StratifiedAlgebra, box, n: int, rng, scales=(1.0, 0.3, 0.1, 0.03)):
    box = np.asarray(box, float)
    x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, len(box)))
    ys = []
    per = n // len(scales)
    for i, s in enumerate(scales):
        u = rng.standard_normal((per, alg.dim))
        u = u * (s / alg.norm(u))[:, None] ** alg.weights
        ys.append(alg.multiply(x[i * per:(i + 1) * per], u))
    y = np.vstack(ys)
    return x[: len(y)], y


@dataclass
class FieldConstants:
    sup_w: float
    sup_winv: float
    sobolev: float  # sum_{k,j,l} sup |X_l w_kj|
    lipschitz: float
    C: float
    C_w: float
    eps_w: float


def field_constants(alg: StratifiedAlgebra, w: MatrixField, box, samples: int = 4000, seed: int = 0,
                    extra_points=None) -> FieldConstants:
    """Measured constants entering the approximation construction.

    The mean-value constant C is measured as
    sup ||w(x) - w(y)|| / (||w||_{W^{1,inf}} rho(y^-1 x)) over sampled pairs.
    Spectral norms are used for matrices throughout.
    """
    rng = np.random.default_rng(seed)
    box = np.asarray(box, float)
    pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, len(box)))
    if extra_points is not None:
        pts = np.vstack([pts, extra_points])
    W = w(pts)
    sup_w = float(np.max(np.linalg.norm(W, ord=2, axis=(-2, -1))))
    sup_winv = float(np.max(1.0 / np.linalg.svd(W, compute_uv=False)[..., -1]))
    sob = 0.0
    for l in range(alg.n1):
        dW = w.derivative(alg, l, pts)
        sob += float(np.sum(np.max(np.abs(dW), axis=0)))
    x, y = sample_pairs(alg, box, samples, rng)
    diff = np.linalg.norm(w(x) - w(y), ord=2, axis=(-2, -1))
    rho = alg.norm(alg.multiply(-y, x))
    lip = float(np.max(diff / rho))
    if sob > 1e-14:
        C = lip / sob
        C_w = max(C, 1.0) * sob * sup_winv
        eps_w = 1.0 / (2.0 * C_w)
    else:
        C, C_w, eps_w = 0.0, 0.0, math.inf
    return FieldConstants(sup_w, sup_winv, sob, lip, C, C_w, eps_w)


class ApproximationFamily:
    """w^gamma_eps(x) = Exp(theta((gamma^-1 x) / eps) log(w(x) w(gamma)^-1)) w(gamma)."""

    def __init__(self, alg: StratifiedAlgebra, w: MatrixField, eps: float, consts: FieldConstants):
        self.alg = alg
        self.w = w
        self.eps = float(eps)
        self.consts = consts
        if eps > consts.eps_w / 2 * (1 + 1e-12):
            raise EpsilonTooLarge(f"eps={eps:.3g} exceeds eps_w/2={consts.eps_w / 2:.3g}")

    def local(self, gamma, x):
        """Evaluate w^gamma_eps at points x (m, d) for one centre gamma (d,)."""
        x = np.atleast_2d(x)
        gamma = np.asarray(gamma, float)
        wg = self.w(gamma)
        out = np.broadcast_to(wg, (len(x),) + wg.shape).copy()
        t = self.alg.norm(self.alg.multiply(np.broadcast_to(-gamma, x.shape), x)) / self.eps
        th = theta_profile(t)
        act = th > 0
        if np.any(act):
            V = self.w(x[act]) @ np.linalg.inv(wg)
            xi = log_series(V)
            out[act] = exp_matrix(th[act, None, None] * xi) @ wg
        return out

    def field(self, gamma) -> MatrixField:
        return MatrixField(lambda x, g=np.asarray(gamma, float): self.local(g, x), self.w.n,
                           name=f"{self.w.name}^gamma")

    def audit(self, gammas, pts, sobolev_centres: int = 8) -> dict:
        """Items (1), (2), (3) and (5) at lattice points, item (4) as a proxy."""
        alg = self.alg
        c = self.consts
        agree = const = dev = 0.0
        up = up_inv = 0.0
        sob_proxy = 0.0
        varying = []
        for g in gammas:
            vals = self.local(g, pts)
            rho = alg.norm(alg.multiply(np.broadcast_to(-g, pts.shape), pts))
            inner = rho < self.eps
            outer = rho >= 2 * self.eps
            wg = self.w(g)
            if np.any(inner):
                agree = max(agree, float(np.max(np.abs(vals[inner] - self.w(pts[inner])))))
            if np.any(outer):
                const = max(const, float(np.max(np.abs(vals[outer] - wg))))
            dev = max(dev, float(np.max(np.linalg.norm(vals - wg, ord=2, axis=(-2, -1)))))
            up = max(up, float(np.max(np.linalg.norm(vals, ord=2, axis=(-2, -1)))))
            up_inv = max(up_inv, float(np.max(1.0 / np.linalg.svd(vals, compute_uv=False)[..., -1])))
            varying.append((float(np.max(np.abs(vals - wg))), tuple(g)))
        # the Sobolev proxy is costly; evaluate it where the local field varies most
        for _, g in sorted(varying, reverse=True)[:sobolev_centres]:
            sob_proxy = max(sob_proxy, self._sobolev_proxy(np.array(g)))
        bound = 6 * c.sup_w * c.C_w * self.eps
        return dict(
            eps=self.eps,
            centres=len(gammas),
            agree_error=agree,
            constant_error=const,
            deviation=dev,
            deviation_bound=bound,
            deviation_ok=bool(dev <= bound),
            sup_norm=up,
            sup_norm_bound=math.e * c.sup_w,
            sup_inv_norm=up_inv,
            sup_inv_bound=math.e * c.sup_winv,
            bounded_ok=bool(up <= math.e * c.sup_w and up_inv <= math.e * c.sup_winv),
            sobolev_proxy=sob_proxy,
        )

    def _sobolev_proxy(self, gamma, n: int = 400, seed: int = 0) -> float:
        """Monte Carlo ||X w^gamma_eps||_{L^Q} over B(gamma, 2 eps)."""
        alg = self.alg
        rng = np.random.default_rng(seed)
        u = rng.uniform(-1, 1, (n, alg.dim))
        box_scale = 2 * self.eps
        z = u * box_scale ** alg.weights
        x = alg.multiply(np.broadcast_to(gamma, z.shape), z)
        fld = self.field(gamma)
        tot = np.zeros(n)
        for l in range(alg.n1):
            tot += np.linalg.norm(fld.derivative(alg, l, x), ord=2, axis=(-2, -1)) ** 2
        vol = 2.0 ** alg.dim * box_scale ** alg.Q
        return float((np.mean(np.sqrt(tot) ** alg.Q) * vol) ** (1.0 / alg.Q))


def approximation_family(lat: Lattice, w: MatrixField, eps: float, consts: Optional[FieldConstants] = None,
                         seed: int = 0):
    alg = lat.alg
    box = np.array([[-lat.L, lat.L]] * lat.d)
    consts = consts or field_constants(alg, w, box, seed=seed, extra_points=lat.points)
    fam = ApproximationFamily(alg, w, eps, consts)
    cov = build_covering(alg, eps, box)
    _, g, _ = cov.partition(lat.points)
    gammas = alg.dilate(eps, np.unique(g, axis=0).astype(float))
    return fam, fam.audit(gammas, lat.points)


# patched sums


class _RieszCache:
    def __init__(self, lat: Lattice, k: int):
        self.lat = lat
        self.k = k
        self.store: Dict[bytes, np.ndarray] = {}

    def constant(self, A):
        key = np.round(np.asarray(A, float), 14).tobytes()
        if key not in self.store:
            self.store[key] = self.field(A)
        return self.store[key]

    def field(self, w):
        Xw = twisted_fields(self.lat, w)
        Lw = sum(X.T @ X for X in Xw)
        return np.asarray(Xw[self.k] @ inv_sqrt(Lw, method="eigh"))


def _sparse_partition(cov: CoveringSystem, pts):
    idx, g, val = cov.partition(pts)
    keys, inv = np.unique(g, axis=0, return_inverse=True)
    return keys, inv.ravel(), idx, val


def patched_riesz_sums(lat: Lattice, a: MatrixField, eps: float, k: int = 0, consts=None,
                       cache: Optional[_RieszCache] = None, covering: Optional[CoveringSystem] = None,
                       only=None) -> dict:
    """A = sum_gamma M_eta R^{a^gamma_eps}_k M_eta and R = sum_gamma M_eta R^{a(gamma)}_k M_eta.

    Only centres whose bumps meet both the node grid and the output grid
    contribute; R^{a^gamma} is recomputed only where a^gamma_eps differs from
    the constant a(gamma) at some output centre.
    """
    alg = lat.alg
    lat.require_dense()
    box = np.array([[-lat.L, lat.L]] * lat.d)
    consts = consts or field_constants(alg, a, box, extra_points=lat.points)
    fam = ApproximationFamily(alg, a, eps, consts)
    cov = covering or build_covering(alg, eps, box)
    cache = cache or _RieszCache(lat, k)
    kin, inv_in, idx_in, val_in = _sparse_partition(cov, lat.points)
    kout, inv_out, idx_out, val_out = _sparse_partition(cov, lat.out_centers)
    common = {tuple(r) for r in kin} & {tuple(r) for r in kout}
    if only is not None:
        common = {tuple(np.asarray(o, int)) for o in only} & common
    pos_in = {tuple(r): i for i, r in enumerate(kin)}
    pos_out = {tuple(r): i for i, r in enumerate(kout)}
    A_sum = np.zeros((lat.n_out, lat.n))
    R_sum = np.zeros((lat.n_out, lat.n))
    recomputed = 0
    outc = lat.out_centers
    for key in sorted(common):
        gamma = cov.center(key)
        e_in = np.zeros(lat.n)
        sel = inv_in == pos_in[key]
        e_in[idx_in[sel]] = val_in[sel]
        e_out = np.zeros(lat.n_out)
        sel = inv_out == pos_out[key]
        e_out[idx_out[sel]] = val_out[sel]
        ag = a(gamma)
        Rc = cache.constant(ag)
        term_R = e_out[:, None] * Rc * e_in[None, :]
        R_sum += term_R
        local_vals = fam.local(gamma, outc)
        if np.max(np.abs(local_vals - ag)) == 0.0:
            A_sum += term_R
            continue
        recomputed += 1
        Rg = cache.field(local_vals)
        A_sum += e_out[:, None] * Rg * e_in[None, :]
    dev = float(np.linalg.norm(A_sum - R_sum, 2))
    return dict(eps=eps, deviation=dev, centres=len(common), recomputed=recomputed, A=A_sum, R=R_sum)


def deviation_ladder(lat: Lattice, a: MatrixField, k: int = 0, factors=(2, 4, 8), eps_list=None) -> dict:
    alg = lat.alg
    box = np.array([[-lat.L, lat.L]] * lat.d)
    consts = field_constants(alg, a, box, extra_points=lat.points)
    if eps_list is None:
        eps_list = [consts.eps_w / f for f in factors]
    cache = _RieszCache(lat, k)
    devs = []
    for e in eps_list:
        r = patched_riesz_sums(lat, a, e, k, consts=consts, cache=cache)
        devs.append(dict(eps=e, deviation=r["deviation"], centres=r["centres"], recomputed=r["recomputed"]))
    vals = [d["deviation"] for d in devs]
    mono = all(b <= a_ + 1e-14 for a_, b in zip(vals, vals[1:]))
    return dict(eps_w=consts.eps_w, C_w=consts.C_w, ladder=devs, nonincreasing=mono)


def heisenberg_fixture_field(amp: float = 0.05, radius: float = 2.0) -> MatrixField:
    """GL(2)-valued field on H^1, constant (= identity) outside a Euclidean ball."""
    from .spectral import smooth_bump

    B = np.array([[1.0, 0.6], [-0.4, 0.8]])

    def f(x):
        b = smooth_bump(x, np.zeros(x.shape[1]), radius)
        return np.eye(2)[None] + amp * b[:, None, None] * B[None]

    return MatrixField(f, 2, "H1 fixture", radius=radius)
