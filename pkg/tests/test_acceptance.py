"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with its measured values and wall
time, then asserts both the numerical criterion and the time budget.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from carnot.group import abelian, engel, heisenberg, validate_algebra
from carnot.io import parse_group_file, validate_report

from oracles import engel_product
from test_group import mutated_fixtures


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(n, title, ok, limit, **values):
        elapsed = time.perf_counter() - start
        ok_all = bool(ok) and elapsed < limit
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in values.items())
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok_all else 'FAIL'}  {title}: {shown}  "
                  f"({elapsed:.1f} s / {limit:g} s)")
        assert ok, f"criterion {n} numerical check failed: {shown}"
        assert elapsed < limit, f"criterion {n} took {elapsed:.1f} s (limit {limit} s)"

    return emit


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def test_criterion_01_algebra(verdict):
    accepted = all(validate_algebra(parse_group_file(f)) for f in ("heisenberg1.grp", "engel.grp"))
    classes = []
    for _, data, cls in mutated_fixtures():
        try:
            validate_algebra(data)
            classes.append(False)
        except Exception as exc:  # noqa: BLE001 - the class itself is checked
            classes.append(type(exc) is cls)
    alg = engel()
    rng = np.random.default_rng(0)
    x, y, z = rng.uniform(-2, 2, (3, 1000, 4))
    assoc = float(np.max(np.abs(alg.multiply(alg.multiply(x, y), z) - alg.multiply(x, alg.multiply(y, z)))))
    a, b = rng.uniform(-1, 1, (2, 50, 4))
    oracle = float(max(np.max(np.abs(alg.multiply(p, q) - engel_product(p, q))) for p, q in zip(a, b)))
    verdict(1, "algebra", accepted and all(classes) and len(classes) == 5 and assoc <= 1e-10 and oracle <= 1e-9,
            5, mutations_rejected=f"{sum(classes)}/5", associativity=assoc, oracle=oracle)


def test_criterion_02_fields(verdict):
    from carnot.fields import bracket_closure_residual, derive_left_invariant_fields, left_invariance_residual

    h = heisenberg()
    probes = np.random.default_rng(1).uniform(-3, 3, (100, 3))
    closure = bracket_closure_residual(h, probes)
    homog = sum(len(z.homogeneity_violations()) for alg in (h, engel()) for z in derive_left_invariant_fields(alg))
    li = left_invariance_residual(h, 200, seed=2)
    verdict(2, "fields", closure <= 1e-12 and homog == 0 and li <= 1e-10, 5,
            closure=closure, homogeneity_violations=homog, left_invariance=li)


def test_criterion_03_diffeos(verdict):
    from carnot.geometry import (admissibility_matrix, check_G_diffeomorphism, check_strata_automorphism,
                                 diffeo_corpus)

    h = heisenberg()
    pts = np.random.default_rng(3).uniform(-1, 1, (64, 3))
    corpus = diffeo_corpus(h)
    disagree = wrong = 0
    aut_ok = True
    for _, phi, expected in corpus:
        r = check_G_diffeomorphism(h, phi, pts)
        disagree += r.criterion5 != r.criterion6
        wrong += r.passed != expected
        if r.passed:
            aut_ok &= all(check_strata_automorphism(h, admissibility_matrix(h, phi, x)).valid for x in pts[:16])
    good = [m for _, m, e in corpus if e]
    chain = 0.0
    for phi in good:
        for psi in good:
            comp = phi.compose(psi)
            for x in pts[:3]:
                lhs = admissibility_matrix(h, comp, x)
                rhs = admissibility_matrix(h, phi, psi(x)) @ admissibility_matrix(h, psi, x)
                chain = max(chain, float(np.max(np.abs(lhs - rhs))))
    n_good, n_bad = len(good), len(corpus) - len(good)
    verdict(3, "G-diffeo corpus", n_good >= 6 and n_bad >= 6 and disagree == 0 and wrong == 0 and aut_ok
            and chain <= 1e-8, 10, maps=len(corpus), disagreements=disagree, misclassified=wrong,
            automorphisms=aut_ok, chain_rule=chain)


def test_criterion_04_atlas_covering(verdict):
    from carnot.geometry import build_covering, verify_atlas
    from carnot.io import load_atlas

    res = {}
    for name in ("two_chart.atlas", "three_chart.atlas"):
        r = verify_atlas(load_atlas(name))
        res[name] = (r.passed, r.pair_residual, r.triple_residual)
    cov = build_covering(heisenberg(), 0.5, np.array([[-2, 2]] * 3))
    a = cov.audit(samples=10000, seed=0, Cs=(1, 2, 4))
    Q = 4
    bounds = {C: (a["M"] * C) ** Q for C in (1, 2, 4)}
    ok = (all(p and pr <= 1e-8 and tr <= 1e-8 for p, pr, tr in res.values())
          and a["partition_error"] <= 1e-12 and all(a["bounded"].values()))
    verdict(4, "atlas and covering", ok, 10,
            cocycle=max(max(v[1], v[2]) for v in res.values()), partition=a["partition_error"],
            multiplicity=a["multiplicity"], bound_MCQ={C: round(b, 1) for C, b in bounds.items()})


def test_criterion_05_spectral(verdict):
    from carnot.spectral import (Lattice, field_corpus, inv_sqrt, quasi_riesz_family, riesz_identity_residual,
                                 twisted_laplacian, verify_norm_bounds)

    lat = Lattice(heisenberg(), 9, 3.0)
    corpus = field_corpus(2, 3)
    results = [verify_norm_bounds(lat, w) for w in corpus]
    psd = min(min(r["min_eig_delta"], r["min_eig_Lw"]) for r in results)
    bounds_ok = all(r["half_ok"] and r["quarter_ok"] for r in results)
    has_cId = any(w.name.endswith("*Id") or w.name == "Id" for w in corpus)
    w = corpus[-2]
    Lw = twisted_laplacian(lat, w)
    inv = float(np.max(np.abs(inv_sqrt(Lw, "quadrature") - inv_sqrt(Lw, "eigh"))))
    ident = max(riesz_identity_residual(quasi_riesz_family(lat, v)) for v in (corpus[0], w))
    verdict(5, "spectral", psd >= -1e-10 and bounds_ok and len(corpus) >= 10 and has_cId and inv <= 1e-6
            and ident <= 1e-8, 60, fields=len(corpus), min_eig=psd, norm_bounds=bounds_ok, inv_sqrt=inv,
            riesz_identity=ident)


def test_criterion_06_heat(verdict):
    from carnot.spectral import Lattice, heat_checks

    a2 = abelian(2)
    auts = [np.array([[1.2, 0.3], [0.0, 0.9]]), np.array([[0.8, -0.4], [0.4, 0.8]])]
    r = heat_checks(Lattice(a2, 64, 4.0), auts, ts=(0.1,))
    gauss = r["gaussian"][0]
    aut_err = [x["errors"][0] for x in r["automorphisms"]]
    s = heat_checks(Lattice(a2, 65, 3.0), None, ts=(0.05, 0.1, 0.2))["scaling"]
    verdict(6, "heat", gauss <= 2e-2 and max(aut_err) <= 5e-2 and s["spread"] <= 3e-2, 60,
            gaussian=gauss, automorphisms=aut_err, scaling_spread=s["spread"])


def test_criterion_07_approximation(verdict):
    from carnot.approx import approximation_family, deviation_ladder, field_constants, heisenberg_fixture_field
    from carnot.spectral import Lattice

    h = heisenberg()
    lat = Lattice(h, 7, 3.0)
    w = heisenberg_fixture_field()
    c = field_constants(h, w, np.array([[-3.0, 3.0]] * 3), extra_points=lat.points)
    exact, devs, ok = 0.0, [], True
    for f in (2, 4, 8):
        _, r = approximation_family(lat, w, c.eps_w / f, consts=c)
        exact = max(exact, r["agree_error"], r["constant_error"])
        devs.append(r["deviation"] / r["deviation_bound"])
        ok &= r["deviation_ok"]
    lad = deviation_ladder(lat, w)
    ladder = [d["deviation"] for d in lad["ladder"]]
    verdict(7, "approximation", exact <= 1e-12 and ok and lad["nonincreasing"], 120,
            exact_items=exact, deviation_over_bound=devs, patched_ladder=ladder, eps_w=c.eps_w)


def test_criterion_08_compactness(verdict):
    from carnot.spectral import Lattice, SingularValueProfile, commutator_with_riesz, kernel_dilation_error, \
        quasi_riesz_family

    lat = Lattice(abelian(1), 256, 8.0)
    comm = SingularValueProfile.of(commutator_with_riesz(lat, lambda x: np.exp(-x[:, 0] ** 2)))
    riesz = SingularValueProfile.of(quasi_riesz_family(lat, np.eye(1))[0])
    r_c, r_r = comm.decay_ratio(256), riesz.decay_ratio(256)
    a2 = abelian(2)
    coarse = kernel_dilation_error(Lattice(a2, 31, 3.0))["error"]
    fine = kernel_dilation_error(Lattice(a2, 61, 3.0))["error"]
    verdict(8, "compactness", r_c <= 0.2 and r_r >= 0.9 and fine < coarse, 60,
            commutator_ratio=r_c, riesz_ratio=r_r, dilation_error=[coarse, fine])


def test_criterion_09_symbol(verdict):
    from carnot import symbol as S
    from carnot.cli import random_word_audit, two_chart_globalization
    from carnot.fields import affine_map, left_translation
    from carnot.geometry import extend_first_block
    from carnot.io import load_atlas
    from carnot.spectral import Lattice, MatrixField, smooth_bump

    h = heisenberg()
    rng = np.random.default_rng(9)
    probes = rng.uniform(-2, 2, (24, 3))
    bad = random_word_audit(h, 250, rng, probes)  # two random elements per draw, 500 in total
    A = extend_first_block(h, np.array([[2.0, 1.0], [0.0, 1.0]]))
    B = extend_first_block(h, np.array([[0.0, 1.0], [-1.0, 0.0]]))
    f = S.gaussian("f", np.zeros(3))
    e = S.FormalElement.word(S.Mult(f), S.Riesz(0, B)) + S.FormalElement.word(S.RieszAdj(1, A))
    comp = 0.0
    for a in rng.uniform(-1, 1, (4, 3)):
        phi, psi = affine_map(A), left_translation(h, a)
        lhs = S.conjugate_by_diffeo(S.conjugate_by_diffeo(e, psi, h), phi, h)
        rhs = S.conjugate_by_diffeo(e, phi.compose(psi), h)
        comp = max(comp, max(lhs(y).distance(rhs(y)) for y in probes[:6]))
    glob = two_chart_globalization(load_atlas("two_chart.atlas", h), rng)
    lat = Lattice(abelian(1), 256, 8.0)
    a = MatrixField.scalar(lambda x: 1 + 0.5 * smooth_bump(x, np.zeros(1), 3.0), 1, "a", 3.0)
    echo = S.localization_echo(lat, a, [0.7])
    verdict(9, "symbol", bad == 0 and comp <= 1e-10 and glob == 0.0 and echo["decreasing"], 30,
            word_failures=bad, composition=comp, globalize_residual=glob, echo=echo["norms"])


def test_criterion_10_end_to_end(verdict, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"report{i}.json"
        proc = subprocess.run([sys.executable, "-m", "carnot.cli", "report", "--all", "--seed", "0", "--out",
                               str(path)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr[-2000:]
        outs.append(path.read_text())
    doc = json.loads(outs[0])
    validate_report(doc)
    identical = outs[0] == outs[1]
    verdict(10, "end-to-end report", doc["status"] == "PASS" and identical, 600,
            checks=len(doc["checks"]), identical_rerun=identical)
