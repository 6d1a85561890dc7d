"""Command-line driver: every subcommand builds a JSON report.

Exit codes: 0 when every asserted check passes, 1 when one fails, 2 on bad
input (unreadable or malformed files, invalid options).  INFO entries are
measurements without a stated bound and never change the exit code.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from . import io as cio
from .group import AlgebraError, StratifiedAlgebra, check_algebra, estimate_A0, validate_algebra

DEFAULT_TOLS = {
    "algebra": 1e-12,
    "associativity": 1e-10,
    "dilation": 1e-10,
    "closure": 1e-12,
    "left-invariance": 1e-10,
    "diffeo": 1e-7,
    "chain-rule": 1e-8,
    "automorphism": 1e-10,
    "cocycle": 1e-8,
    "partition": 1e-12,
    "psd": 1e-10,
    "norm-bound": 1e-8,
    "inv-sqrt": 1e-6,
    "riesz-identity": 1e-8,
    "gaussian": 2e-2,
    "heat-automorphism": 5e-2,
    "heat-scaling": 3e-2,
    "approx-exact": 1e-12,
    "compatibility": 1e-10,
    "symbol": 1e-12,
}


class UsageError(Exception):
    pass


def _tol(args, key: str) -> float:
    return args.tols.get(key, DEFAULT_TOLS[key])


def _parse_tols(items: Optional[List[str]]) -> Dict[str, float]:
    out = {}
    for item in items or []:
        name, _, val = item.partition("=")
        if name not in DEFAULT_TOLS or not val:
            raise UsageError(f"--tol expects NAME=VALUE with NAME in {sorted(DEFAULT_TOLS)}")
        v = float(val)
        if not v > 0:
            raise UsageError(f"tolerance {name} must be positive")
        out[name] = v
    return out


def _group(args, default: str = "heisenberg1.grp") -> StratifiedAlgebra:
    path = args.group or default
    return cio.load_group(path)


def _config(args, **extra) -> dict:
    base = dict(group=args.group, grid=args.grid, extent=args.extent, eps=args.eps, seed=args.seed,
                cap=args.cap, tol=dict(sorted(args.tols.items())))
    base.update(extra)
    return {k: v for k, v in base.items() if v is not None}


# subcommands


def cmd_verify_group(args) -> cio.Report:
    path = args.target or args.group or "heisenberg1.grp"
    rep = cio.Report("verify-group", _config(args, group=path))
    data = cio.parse_group_file(path)
    rep.add_input(cio.format_group(data))
    viol = check_algebra(data)
    rep.check("algebra-valid", "stratified Lie algebra axioms", len(viol), _tol(args, "algebra"), not viol,
              violations=[dict(kind=v.kind, indices=list(v.indices), detail=v.detail) for v in viol])
    if viol:
        return rep
    alg = validate_algebra(data)
    rep.check("homogeneous-dimension", "homogeneous dimension", alg.Q, strata=list(alg.strata), step=alg.step)
    rng = np.random.default_rng(args.seed)
    x, y, z = rng.standard_normal((3, 1000, alg.dim))
    assoc = float(np.max(np.abs(alg.multiply(alg.multiply(x, y), z) - alg.multiply(x, alg.multiply(y, z)))))
    rep.check("associativity", "group law associativity", assoc, _tol(args, "associativity"),
              assoc <= _tol(args, "associativity"), triples=1000)
    inv = float(np.max(np.abs(alg.multiply(x, alg.inverse(x)))))
    rep.check("inverse", "group inverse", inv, _tol(args, "associativity"), inv <= _tol(args, "associativity"))
    r = 1.7
    dil = float(np.max(np.abs(alg.dilate(r, alg.multiply(x, y)) - alg.multiply(alg.dilate(r, x), alg.dilate(r, y)))))
    rep.check("dilation-automorphism", "dilations are group automorphisms", dil, _tol(args, "dilation"),
              dil <= _tol(args, "dilation"))
    hom = float(np.max(np.abs(alg.norm(alg.dilate(r, x)) - r * alg.norm(x)) / (r * alg.norm(x))))
    rep.check("gauge-homogeneity", "homogeneous gauge", hom, _tol(args, "dilation"), hom <= _tol(args, "dilation"))
    rep.check("A0-estimate", "quasi-triangle constant of the gauge", estimate_A0(alg, 2000, args.seed))
    return rep


def cmd_fields(args) -> cio.Report:
    from .fields import bracket_closure_residual, derive_left_invariant_fields, left_invariance_residual

    alg = _group(args)
    rep = cio.Report("fields", _config(args))
    rep.add_input(cio.format_group(alg.to_data()))
    Z = derive_left_invariant_fields(alg)
    probes = np.random.default_rng(args.seed).uniform(-2, 2, (64, alg.dim))
    clo = bracket_closure_residual(alg, probes)
    rep.check("bracket-closure", "left-invariant frame closes under brackets", clo, _tol(args, "closure"),
              clo <= _tol(args, "closure"))
    bad = [m for z in Z for m in z.homogeneity_violations()]
    rep.check("homogeneity", "homogeneous polynomial coefficients", len(bad), _tol(args, "closure"), not bad,
              violations=bad[:10])
    li = left_invariance_residual(alg, 200, args.seed)
    rep.check("left-invariance", "left translations preserve the frame", li, _tol(args, "left-invariance"),
              li <= _tol(args, "left-invariance"), points=200)
    rep.check("fields", "explicit coefficients", None,
              fields={z.label: [repr(c) for c in z.coeffs] for z in Z})
    return rep


def cmd_check_diffeo(args) -> cio.Report:
    from .geometry import admissibility_matrix, check_G_diffeomorphism, check_strata_automorphism, diffeo_corpus

    alg = _group(args)
    rep = cio.Report("check-diffeo", _config(args))
    rep.add_input(cio.format_group(alg.to_data()))
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(-1, 1, (64, alg.dim))
    tol = _tol(args, "diffeo")
    corpus = diffeo_corpus(alg)
    disagree = 0
    wrong = 0
    auts_ok = True
    for name, phi, expected in corpus:
        r = check_G_diffeomorphism(alg, phi, pts, tol=tol)
        disagree += int(r.criterion5 != r.criterion6)
        wrong += int(r.passed != expected)
        if r.passed:
            for x in pts[:8]:
                H = admissibility_matrix(alg, phi, x)
                auts_ok &= bool(check_strata_automorphism(alg, H, _tol(args, "automorphism")).valid)
        rep.check(f"map:{name}", "horizontal criteria for G-diffeomorphisms", max(r.residual5, r.residual6),
                  tol, r.passed == expected, expected=expected, certified=r.passed,
                  criterion5=r.criterion5, criterion6=r.criterion6)
    rep.check("criteria-agree", "equivalence of the two horizontal criteria", disagree, tol, disagree == 0,
              maps=len(corpus))
    rep.check("admissibility-automorphisms", "admissibility matrices are strata automorphisms", int(not auts_ok),
              _tol(args, "automorphism"), auts_ok)
    # chain rule H^{phi psi}(x) = H^phi(psi x) H^psi(x)
    good = [m for _, m, e in corpus if e]
    worst = 0.0
    for phi in good[:4]:
        for psi in good[:4]:
            comp = phi.compose(psi)
            for x in pts[:4]:
                lhs = admissibility_matrix(alg, comp, x)
                rhs = admissibility_matrix(alg, phi, psi(x)) @ admissibility_matrix(alg, psi, x)
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    rep.check("chain-rule", "admissibility chain rule", worst, _tol(args, "chain-rule"),
              worst <= _tol(args, "chain-rule"))
    return rep


def cmd_check_atlas(args) -> cio.Report:
    from .geometry import verify_atlas

    path = args.target or "two_chart.atlas"
    atlas = cio.load_atlas(path, cio.load_group(args.group) if args.group else None)
    rep = cio.Report("check-atlas", _config(args, atlas=path))
    rep.add_input(cio.fixture_path(path).read_bytes())
    r = verify_atlas(atlas, samples=32, seed=args.seed, tol=_tol(args, "cocycle"))
    tol = _tol(args, "cocycle")
    rep.check("transitions", "transition maps are G-diffeomorphisms", len(r.failures), tol, not r.failures,
              failures=r.failures)
    rep.check("pair-cocycle", "pairwise cocycle of admissibility matrices", r.pair_residual, tol,
              r.pair_residual <= tol)
    rep.check("triple-cocycle", "triple cocycle of admissibility matrices", r.triple_residual, tol,
              r.triple_residual <= tol)
    rep.check("inverse-residual", "plumbing", r.inverse_residual, transitions=r.transitions)
    return rep


def cmd_covering(args) -> cio.Report:
    from .geometry import build_covering

    alg = _group(args)
    eps = args.eps or 0.5
    ext = args.extent or 2.0
    rep = cio.Report("covering", _config(args, eps=eps, extent=ext))
    rep.add_input(cio.format_group(alg.to_data()))
    cov = build_covering(alg, eps, np.array([[-ext, ext]] * alg.dim))
    a = cov.audit(samples=10000, seed=args.seed)
    tol = _tol(args, "partition")
    rep.check("partition-of-unity", "sum of squared bumps equals one", a["partition_error"], tol,
              a["partition_error"] <= tol, samples=a["samples"])
    rep.check("bump-support", "bumps supported in their balls", int(not a["support_ok"]), tol, a["support_ok"])
    for C in sorted(a["multiplicity"]):
        bound = (a["M"] * C) ** alg.Q
        rep.check(f"multiplicity-C{C}", "bounded covering multiplicity", a["multiplicity"][C], 1e-12,
                  a["bounded"][C], bound=bound, M=a["M"])
    rep.check("centre-flatness", "plumbing", a["centre_error"])
    return rep


def _lattice(args, alg, N, L):
    from .spectral import DEFAULT_CAP, Lattice

    return Lattice(alg, args.grid or N, args.extent or L, cap=args.cap or DEFAULT_CAP)


def cmd_riesz(args) -> cio.Report:
    from .spectral import (_dense, field_corpus, inv_sqrt, quasi_riesz_family, riesz_identity_residual,
                           sub_laplacian, twisted_laplacian, verify_norm_bounds)

    alg = _group(args)
    lat = _lattice(args, alg, 9, 3.0)
    rep = cio.Report("riesz", _config(args, grid=lat.N, extent=lat.L, field=args.field))
    rep.add_input(cio.format_group(alg.to_data()))
    corpus = field_corpus(alg.n1, alg.dim, seed=args.seed)
    if args.field != "all":
        corpus = [w for w in corpus if w.name == args.field]
        if not corpus:
            raise UsageError(f"unknown field {args.field!r}; choose from {[w.name for w in field_corpus(alg.n1, alg.dim)]}")
    tol_n = _tol(args, "norm-bound")
    psd = _tol(args, "psd")
    for w in corpus:
        r = verify_norm_bounds(lat, w, tol=tol_n)
        rep.check(f"psd[{w.name}]", "sub-Laplacian and twisted Laplacian are positive", min(r["min_eig_delta"],
                  r["min_eig_Lw"]), psd, min(r["min_eig_delta"], r["min_eig_Lw"]) >= -psd)
        rep.check(f"half-power-bound[{w.name}]", "half-power comparison with the twisted Laplacian",
                  r["half_norm"], tol_n, r["half_ok"], bound=r["half_bound"])
        rep.check(f"quarter-power-bound[{w.name}]", "quarter-power comparison with the twisted Laplacian",
                  r["quarter_norm"], tol_n, r["quarter_ok"], bound=r["quarter_bound"])
        rep.check(f"reverse-ratio[{w.name}]", "unspecified comparison constant", r["reverse_ratio"])
    w = corpus[-1]
    Lw = twisted_laplacian(lat, w)
    diff = float(np.max(np.abs(inv_sqrt(Lw, "quadrature") - inv_sqrt(Lw, "eigh"))))
    rep.check("inv-sqrt-quadrature", "inverse square root by quadrature", diff, _tol(args, "inv-sqrt"),
              diff <= _tol(args, "inv-sqrt"), field=w.name)
    res = riesz_identity_residual(quasi_riesz_family(lat, w))
    rep.check("riesz-identity", "sum of R*R is the identity", res, _tol(args, "riesz-identity"),
              res <= _tol(args, "riesz-identity"), field=w.name)
    return rep


def cmd_heat(args) -> cio.Report:
    from .spectral import Lattice, heat_checks

    alg = cio.load_group(args.group or "abelian2.grp")
    rep = cio.Report("heat", _config(args, group=args.group or "abelian2.grp"))
    rep.add_input(cio.format_group(alg.to_data()))
    t = 0.1
    if alg.dim == 2 and alg.step == 1:
        auts = [np.array([[1.2, 0.3], [0.0, 0.9]]), np.array([[0.8, -0.4], [0.4, 0.8]])]
    else:
        from .geometry import extend_first_block

        auts = [extend_first_block(alg, np.array([[1.2, 0.3], [0.0, 0.9]]))]
    lat = _lattice(args, alg, 64, 4.0)
    r = heat_checks(lat, auts, ts=(t,))
    if r["gaussian"] is not None:
        rep.check("gaussian", "heat kernel of the abelian group", r["gaussian"][0], _tol(args, "gaussian"),
                  r["gaussian"][0] <= _tol(args, "gaussian"), t=t, grid=lat.N, extent=lat.L)
    for i, a in enumerate(r["automorphisms"]):
        e = a["errors"][0]
        rep.check(f"heat-automorphism-{i + 1}", "heat semigroup of a twisted Laplacian", e,
                  _tol(args, "heat-automorphism"), e <= _tol(args, "heat-automorphism"), matrix=a["matrix"])
    if alg.step == 1:
        lat2 = Lattice(alg, 65, 3.0, cap=lat.cap)
        s = heat_checks(lat2, None, ts=(0.05, 0.1, 0.2))["scaling"]
        rep.check("heat-scaling", "t^(Q/2) scaling of the heat kernel at the origin", s["spread"],
                  _tol(args, "heat-scaling"), s["spread"] <= _tol(args, "heat-scaling"), values=s["values"])
    return rep


def cmd_approx(args) -> cio.Report:
    from .approx import approximation_family, deviation_ladder, field_constants, heisenberg_fixture_field

    alg = _group(args)
    lat = _lattice(args, alg, 7, 3.0)
    rep = cio.Report("approx", _config(args, grid=lat.N, extent=lat.L))
    rep.add_input(cio.format_group(alg.to_data()))
    if alg.dim != 3 or alg.n1 != 2:
        raise UsageError("approx uses the bundled H^1 fixture field")
    w = heisenberg_fixture_field()
    box = np.array([[-lat.L, lat.L]] * lat.d)
    c = field_constants(alg, w, box, seed=args.seed, extra_points=lat.points)
    rep.check("field-constants", "constants of the fixture field", c.eps_w, C_w=c.C_w, sup_w=c.sup_w,
              sup_winv=c.sup_winv, sobolev=c.sobolev)
    tol = _tol(args, "approx-exact")
    for f in (2, 4, 8):
        _, r = approximation_family(lat, w, c.eps_w / f, consts=c)
        exact = max(r["agree_error"], r["constant_error"])
        rep.check(f"exact-items[eps_w/{f}]", "local field agrees near and is constant far from the centre",
                  exact, tol, exact <= tol)
        rep.check(f"deviation[eps_w/{f}]", "sup deviation of the localised field", r["deviation"],
                  r["deviation_bound"], r["deviation_ok"], bound=r["deviation_bound"])
        rep.check(f"uniform-bounds[eps_w/{f}]", "uniform bounds of the localised field", r["sup_norm"],
                  r["sup_norm_bound"], r["bounded_ok"], sup_inv=r["sup_inv_norm"], sup_inv_bound=r["sup_inv_bound"])
        rep.check(f"sobolev-proxy[eps_w/{f}]", "unspecified smoothness constant", r["sobolev_proxy"])
    lad = deviation_ladder(lat, w)
    devs = [d["deviation"] for d in lad["ladder"]]
    rep.check("patched-deviation-ladder", "patched Riesz sums approach the twisted transform", devs[-1], 1e-14,
              lad["nonincreasing"], ladder=lad["ladder"])
    return rep


def cmd_symbol(args) -> cio.Report:
    from . import symbol as S
    from .spectral import Lattice, MatrixField, smooth_bump

    alg = _group(args)
    path = args.target or "sandwich.sym"
    text = cio.fixture_path(path).read_text(encoding="utf-8")
    rep = cio.Report("symbol", _config(args, expression=path))
    rep.add_input(text)
    e, probes, names = cio.load_expression(text, alg)
    s = S.symbol(e)
    rep.check("normal-form", "principal symbol in normal form", len(s.terms), symbol=s.to_json(), **names)
    tol = _tol(args, "symbol")
    rng = np.random.default_rng(args.seed)
    bad = random_word_audit(alg, 100, rng, probes)
    rep.check("homomorphism", "symbol map is a *-homomorphism killing compacts", bad, tol, bad == 0, words=100)
    atlas = cio.load_atlas("two_chart.atlas", alg)
    res = two_chart_globalization(atlas, rng)
    rep.check("globalize-compatibility", "symbol sections are compatible on overlaps", res,
              _tol(args, "compatibility"), res <= _tol(args, "compatibility"))
    lat = Lattice(cio.load_group("abelian1.grp"), 256, 8.0)
    a = MatrixField.scalar(lambda x: 1 + 0.5 * smooth_bump(x, np.zeros(1), 3.0), 1, "1+0.5bump", 3.0)
    echo = S.localization_echo(lat, a, [0.7])
    rep.check("localization-echo", "windowed deviation from the frozen symbol", echo["norms"][-1], tol,
              echo["decreasing"], norms=echo["norms"], widths=echo["widths"])
    return rep


def random_word_audit(alg, n: int, rng, probes) -> int:
    """Count failures of the homomorphism laws on n random pairs of words."""
    from . import symbol as S
    from .geometry import extend_first_block

    letters = random_alphabet(alg, rng)
    bad = 0
    for _ in range(n):
        e1, e2 = random_element(letters, rng), random_element(letters, rng)
        c = complex(rng.normal(), rng.normal())
        ok = (S.symbol(e1 * e2) == S.symbol(e1) * S.symbol(e2)
              and S.symbol(e1 + e2 * c) == S.symbol(e1) + S.symbol(e2) * c
              and S.symbol(e1.adjoint()) == S.symbol(e1).adjoint()
              and S.symbol(S.lift(S.symbol(e1))) == S.symbol(e1)
              and S.kernel_test(e1 * S.FormalElement.word(S.Compact()) * e2, probes))
        bad += int(not ok)
    return bad


def random_alphabet(alg, rng):
    from . import symbol as S
    from .geometry import extend_first_block

    f = S.gaussian("f", np.zeros(alg.dim))
    g = S.bump_function("g", np.full(alg.dim, 0.3), 2.0)
    A = extend_first_block(alg, np.eye(alg.n1) + np.triu(rng.uniform(-1, 1, (alg.n1, alg.n1)), 1))
    return [S.Mult(f), S.Mult(g), S.Riesz(0, A, "A"), S.RieszAdj(alg.n1 - 1, A, "A"), S.Compact()]


def random_element(letters, rng, max_terms: int = 3, max_len: int = 6):
    from . import symbol as S

    pool = [letters[i] for i in rng.choice(len(letters), size=min(4, len(letters)), replace=False)]
    out = S.FormalElement()
    for _ in range(rng.integers(1, max_terms + 1)):
        word = [pool[i] for i in rng.integers(0, len(pool), size=rng.integers(0, max_len + 1))]
        out = out + S.FormalElement.word(*word, coeff=complex(rng.normal(), rng.normal()))
    return out


def two_chart_globalization(atlas, rng, samples: int = 16) -> float:
    from . import symbol as S
    from .geometry import extend_first_block

    alg = atlas.alg
    A = extend_first_block(alg, np.array([[1.0, 0.5], [0.0, 1.0]]))
    f = S.gaussian("f", np.zeros(alg.dim))
    elems = {0: S.FormalElement.word(S.Mult(f), S.Riesz(0, A, "A")) + S.FormalElement.word(S.Compact()),
             1: S.FormalElement.word(S.RieszAdj(1, A, "A"), S.Mult(f))}
    lo = atlas.overlaps[0].box[0]
    phi0 = lambda p: np.clip((lo[1] - p[:, 0]) / (lo[1] - lo[0]), 0.0, 1.0)
    part = {0: phi0, 1: lambda p: 1.0 - phi0(p)}
    from .geometry import sample_box

    pts = sample_box(atlas.overlaps[0].box, samples, rng)
    sec = S.globalize(atlas, elems, part, samples=pts)
    return sec.compatibility_residual(samples=samples, seed=int(rng.integers(1 << 30)))


def cmd_report(args) -> cio.Report:
    if not args.all:
        raise UsageError("report needs --all")
    rep = cio.Report("report", _config(args, all=True))
    for name in ("verify-group", "fields", "check-diffeo", "check-atlas", "covering", "riesz", "heat", "approx",
                 "symbol"):
        sub = argparse.Namespace(**vars(args))
        sub.target = None
        # each section runs on its own fixture defaults
        sub.group = None
        sub.grid = sub.extent = sub.eps = None
        sub.field = "all"
        rep.merge(_run_safely(name, sub), name)
    return rep


COMMANDS: Dict[str, Callable] = {
    "verify-group": cmd_verify_group,
    "fields": cmd_fields,
    "check-diffeo": cmd_check_diffeo,
    "check-atlas": cmd_check_atlas,
    "covering": cmd_covering,
    "riesz": cmd_riesz,
    "heat": cmd_heat,
    "approx": cmd_approx,
    "symbol": cmd_symbol,
    "report": cmd_report,
}


def _run_safely(name: str, args) -> cio.Report:
    """Module errors become FAIL entries; input errors propagate."""
    try:
        return COMMANDS[name](args)
    except (UsageError, FileNotFoundError, SyntaxError, cio.DuplicateBracket, cio.IndexOutOfRange,
            cio.AtlasFormatError, cio.ExpressionError):
        raise
    except (AlgebraError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rep = cio.Report(name, {})
        rep.fail(name, "plumbing", exc)
        return rep


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carnot", description="Numerical checks on stratified Lie groups.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name in ("verify-group", "check-atlas", "symbol"):
            s.add_argument("target", nargs="?", help="group, atlas or expression file")
        s.add_argument("--group", help="group definition file or bundled fixture name")
        s.add_argument("--grid", type=int, help="lattice points per axis")
        s.add_argument("--extent", type=float, help="half-width of the lattice box")
        s.add_argument("--eps", type=float, help="covering scale")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")
        s.add_argument("--out", help="write the JSON report here (default: stdout)")
        s.add_argument("--cap", type=int, help="dense-grid unknowns cap")
        if name == "riesz":
            s.add_argument("--field", default="all", help="matrix field name from the corpus, or 'all'")
        if name == "report":
            s.add_argument("--all", action="store_true", help="run every subcommand on the bundled fixtures")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for attr in ("target", "field", "all"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    try:
        args.tols = _parse_tols(args.tol)
        if args.grid is not None and args.grid < 3:
            raise UsageError("--grid must be at least 3")
        if args.extent is not None and args.extent <= 0:
            raise UsageError("--extent must be positive")
        if args.eps is not None and args.eps <= 0:
            raise UsageError("--eps must be positive")
        rep = _run_safely(args.command, args)
    except (UsageError, FileNotFoundError, SyntaxError, cio.DuplicateBracket, cio.IndexOutOfRange,
            cio.AtlasFormatError, cio.ExpressionError) as exc:
        print(f"carnot: error: {exc}", file=sys.stderr)
        return 2
    doc = rep.to_dict()
    cio.validate_report(doc)
    if args.out:
        rep.write(args.out)
        for c in doc["checks"]:
            print(f"{c['status']:4s}  {c['name']}", file=sys.stderr)
        print(f"{doc['status']}: {sum(c['status'] == 'FAIL' for c in doc['checks'])} failed, "
              f"report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(rep.to_json())
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
