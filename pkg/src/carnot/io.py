"""File formats: group definitions, atlases, symbol expressions and JSON reports.

Group file grammar (one statement per line, ``#`` starts a comment)::

    name <identifier>                      optional
    dimension <int>
    strata [<int>, <int>, ...]
    bracket <i> <j> -> {<k>: <coeff>, ...}  1-based, i < j or i > j

Coefficients may be integers, decimals or fractions such as ``1/2``.
Brackets not listed are zero.  A pair may be listed only once, in either
order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .group import GroupData, StratifiedAlgebra, validate_algebra

SCHEMA_VERSION = "1.0"


class GroupFileSyntaxError(SyntaxError):
    def __init__(self, msg: str, lineno: int, path: str = "<group>"):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno
        self.filename = path


class DuplicateBracket(ValueError):
    pass


class IndexOutOfRange(ValueError):
    pass


class ExpressionError(ValueError):
    pass


class AtlasFormatError(ValueError):
    pass


# fixture lookup


def fixture_path(name: str) -> Path:
    """A readable path for ``name``: an existing file, or a bundled fixture."""
    p = Path(name)
    if p.exists():
        return p
    base = resources.files("carnot") / "fixtures"
    for cand in (name, p.name, p.name + ".grp"):
        q = base / cand
        if q.is_file():
            return Path(str(q))
    raise FileNotFoundError(name)


# group files


_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?(?:/\d+)?"
_BRACKET = re.compile(r"^bracket\s+(\d+)\s+(\d+)\s*->\s*\{(.*)\}$")
_TARGET = re.compile(rf"^\s*(\d+)\s*:\s*({_NUM})\s*$")


def _number(tok: str) -> float:
    return float(Fraction(tok)) if "/" in tok else float(tok)


def parse_group_text(text: str, path: str = "<group>") -> GroupData:
    dim = None
    strata = None
    name = ""
    brackets: Dict[tuple, Dict[int, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.split(None, 1)[0]
        if key == "name":
            name = line[4:].strip()
        elif key == "dimension":
            m = re.fullmatch(r"dimension\s+(\d+)", line)
            if not m:
                raise GroupFileSyntaxError("expected 'dimension <int>'", lineno, path)
            dim = int(m.group(1))
        elif key == "strata":
            m = re.fullmatch(r"strata\s*\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]", line)
            if not m:
                raise GroupFileSyntaxError("expected 'strata [n1, n2, ...]'", lineno, path)
            strata = [int(t) for t in m.group(1).split(",")]
        elif key == "bracket":
            m = _BRACKET.match(line)
            if not m:
                raise GroupFileSyntaxError("expected 'bracket i j -> {k: c, ...}'", lineno, path)
            if dim is None:
                raise GroupFileSyntaxError("bracket before dimension", lineno, path)
            i, j = int(m.group(1)), int(m.group(2))
            targets: Dict[int, float] = {}
            body = m.group(3).strip()
            for part in filter(None, (s.strip() for s in body.split(","))):
                t = _TARGET.match(part)
                if not t:
                    raise GroupFileSyntaxError(f"bad bracket target '{part}'", lineno, path)
                k = int(t.group(1))
                if k in targets:
                    raise DuplicateBracket(f"{path}:{lineno}: target {k} repeated")
                targets[k] = _number(t.group(2))
            for idx in (i, j, *targets):
                if not 1 <= idx <= dim:
                    raise IndexOutOfRange(f"{path}:{lineno}: index {idx} outside [1, {dim}]")
            if (i, j) in brackets or (j, i) in brackets:
                raise DuplicateBracket(f"{path}:{lineno}: bracket ({i}, {j}) defined twice")
            brackets[(i, j)] = targets
        else:
            raise GroupFileSyntaxError(f"unknown statement '{key}'", lineno, path)
    if dim is None or strata is None:
        raise GroupFileSyntaxError("missing dimension or strata", 0, path)
    return GroupData(dim, strata, brackets, name or Path(path).stem)


def parse_group_file(path) -> GroupData:
    p = fixture_path(str(path))
    return parse_group_text(p.read_text(encoding="utf-8"), str(path))


def load_group(path) -> StratifiedAlgebra:
    return validate_algebra(parse_group_file(path))


def format_group(data: GroupData) -> str:
    lines = [f"name {data.name}" if data.name else None, f"dimension {data.dimension}",
             "strata [" + ", ".join(map(str, data.strata)) + "]"]
    for (i, j), t in sorted(data.brackets.items()):
        body = ", ".join(f"{k}: {c!r}" for k, c in sorted(t.items()))
        lines.append(f"bracket {i} {j} -> {{{body}}}")
    return "\n".join(l for l in lines if l) + "\n"


# atlases


def _poly_from_terms(d: int, terms):
    from .poly import Poly

    return Poly(d, {tuple(int(e) for e in exps): float(c) for c, exps in terms})


def build_map(alg: StratifiedAlgebra, desc: dict):
    from .fields import PolynomialMap, affine_map, dilation_map, identity_map, left_translation
    from .geometry import StrataAutomorphism, extend_first_block

    kind = desc.get("kind")
    d = alg.dim
    if kind == "identity":
        return identity_map(d)
    if kind == "translation":
        return left_translation(alg, desc["a"])
    if kind == "dilation":
        return dilation_map(alg, float(desc["r"]))
    if kind == "automorphism":
        if "matrix" in desc:
            M = StrataAutomorphism(alg, desc["matrix"]).matrix
        else:
            M = extend_first_block(alg, np.asarray(desc["first_block"], float))
        return affine_map(M, label=desc.get("label", "aut"))
    if kind == "polynomial":
        fwd = [_poly_from_terms(d, t) for t in desc["components"]]
        inv = None
        if "inverse" in desc:
            inv = PolynomialMap([_poly_from_terms(d, t) for t in desc["inverse"]], label="poly^-1")
        m = PolynomialMap(fwd, inv, label=desc.get("label", "poly"))
        if inv is not None:
            inv.inverse = m
        return m
    if kind == "compose":
        maps = [build_map(alg, s) for s in desc["of"]]
        out = maps[-1]
        for m in reversed(maps[:-1]):
            out = m.compose(out)
        return out
    raise AtlasFormatError(f"unknown chart kind {kind!r}")


def load_atlas(path, alg: Optional[StratifiedAlgebra] = None):
    from .geometry import Chart, ChartAtlas, Overlap

    p = fixture_path(str(path))
    try:
        desc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AtlasFormatError(f"{path}: {exc}") from exc
    if alg is None:
        g = desc.get("group", "heisenberg1.grp")
        gp = p.parent / g
        alg = load_group(gp if gp.exists() else g)
    charts = [Chart(c["name"], build_map(alg, c), np.asarray(c["box"], float) if "box" in c else None)
              for c in desc["charts"]]
    overlaps = [Overlap(tuple(o["charts"]), np.asarray(o["box"], float)) for o in desc.get("overlaps", [])]
    return ChartAtlas(alg, charts, overlaps)


# symbol expressions


def tokenize(text: str) -> List[str]:
    text = "\n".join(line.split(";", 1)[0] for line in text.splitlines())
    return re.findall(r"\(|\)|[^\s()]+", text)


def parse_sexpr(text: str):
    toks = tokenize(text)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise ExpressionError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            out = []
            while pos < len(toks) and toks[pos] != ")":
                out.append(read())
            if pos >= len(toks):
                raise ExpressionError("missing ')'")
            pos += 1
            return out
        if t == ")":
            raise ExpressionError("unexpected ')'")
        try:
            return _number(t)
        except ValueError:
            return t

    forms = []
    while pos < len(toks):
        forms.append(read())
    return forms


def _kv(form, key):
    for item in form:
        if isinstance(item, list) and item and item[0] == key:
            return item[1:]
    raise ExpressionError(f"missing ({key} ...)")


def load_expression(text: str, alg: StratifiedAlgebra):
    """Parse an expression file.  Returns (FormalElement, probes, names)."""
    from . import symbol as S

    autos: Dict[str, Any] = {}
    funcs: Dict[str, S.ScalarFunction] = {}
    nprobes = 32
    expr = None
    for form in parse_sexpr(text):
        if not isinstance(form, list) or not form:
            raise ExpressionError(f"top-level form expected, got {form!r}")
        head = form[0]
        if head == "automorphism":
            name, body = form[1], form[2]
            if body[0] == "first-block":
                from .geometry import extend_first_block

                autos[name] = extend_first_block(alg, np.array(body[1:], float))
            elif body[0] == "matrix":
                from .geometry import StrataAutomorphism

                autos[name] = StrataAutomorphism(alg, np.array(body[1:], float)).matrix
            else:
                raise ExpressionError(f"unknown automorphism form {body[0]!r}")
        elif head == "function":
            name, body = form[1], form[2]
            kind = body[0]
            if kind == "gaussian":
                funcs[name] = S.gaussian(name, _kv(body, "center"), float(_kv(body, "width")[0]))
            elif kind == "bump":
                funcs[name] = S.bump_function(name, _kv(body, "center"), float(_kv(body, "radius")[0]))
            elif kind == "const":
                funcs[name] = S.constant_function(name, float(body[1]))
            elif kind == "coord":
                funcs[name] = S.coordinate_function(name, int(body[1]) - 1)
            else:
                raise ExpressionError(f"unknown function kind {kind!r}")
        elif head == "probes":
            nprobes = int(form[1])
        elif head == "expr":
            expr = form[1]
        else:
            raise ExpressionError(f"unknown top-level form {head!r}")
    if expr is None:
        raise ExpressionError("no (expr ...) form")

    def build(node):
        if isinstance(node, float):
            return S.FormalElement.one() * node
        if not isinstance(node, list) or not node:
            raise ExpressionError(f"bad expression {node!r}")
        op, args = node[0], node[1:]
        if op == "*":
            out = S.FormalElement.one()
            for a in args:
                out = out * build(a)
            return out
        if op == "+":
            out = S.FormalElement()
            for a in args:
                out = out + build(a)
            return out
        if op == "-":
            if len(args) == 1:
                return -build(args[0])
            out = build(args[0])
            for a in args[1:]:
                out = out - build(a)
            return out
        if op == "adj":
            return build(args[0]).adjoint()
        if op == "mult":
            if args[0] not in funcs:
                raise ExpressionError(f"undeclared function {args[0]!r}")
            return S.FormalElement.word(S.Mult(funcs[args[0]]))
        if op in ("riesz", "rieszadj"):
            k = int(args[0])
            if not 1 <= k <= alg.n1:
                raise ExpressionError(f"Riesz index {k} outside the first stratum")
            if args[1] not in autos:
                raise ExpressionError(f"undeclared automorphism {args[1]!r}")
            make = S.Riesz if op == "riesz" else S.RieszAdj
            return S.FormalElement.word(make(k - 1, autos[args[1]], label=args[1]))
        if op == "compact":
            return S.FormalElement.word(S.Compact())
        raise ExpressionError(f"unknown operator {op!r}")

    rng = np.random.default_rng(0)
    probes = rng.uniform(-2, 2, (nprobes, alg.dim))
    return build(expr), probes, dict(automorphisms=sorted(autos), functions=sorted(funcs))


# reports


CHECK_SCHEMA = {
    "type": "object",
    "required": ["name", "anchor", "status", "tolerance", "value"],
    "properties": {
        "name": {"type": "string"},
        "anchor": {"type": "string", "minLength": 1},
        "status": {"enum": ["PASS", "FAIL", "INFO"]},
        "tolerance": {"type": ["number", "null"]},
        "value": {"type": ["number", "string", "boolean", "null"]},
        "details": {"type": "object"},
    },
    "if": {"properties": {"status": {"enum": ["PASS", "FAIL"]}}},
    "then": {"properties": {"tolerance": {"type": "number", "exclusiveMinimum": 0}}},
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "command", "config", "inputs_digest", "status", "checks"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"type": "string"},
        "config": {"type": "object"},
        "inputs_digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "status": {"enum": ["PASS", "FAIL"]},
        "checks": {"type": "array", "items": CHECK_SCHEMA},
        "sections": {"type": "object"},
    },
}


def jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    return obj


class Report:
    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = jsonable(config)
        self.checks: List[dict] = []
        self.sections: Dict[str, dict] = {}
        self.inputs: List[bytes] = []

    def add_input(self, data):
        self.inputs.append(data if isinstance(data, bytes) else str(data).encode())

    def check(self, name: str, anchor: str, value, tol: Optional[float] = None, passed=None, **details):
        """Asserted check when ``passed`` is given (tolerance required), INFO otherwise."""
        if passed is None:
            status = "INFO"
        else:
            if tol is None or not tol > 0:
                raise ValueError(f"asserted check {name} needs a positive tolerance")
            status = "PASS" if passed else "FAIL"
        self.checks.append(dict(name=name, anchor=anchor, status=status,
                                tolerance=None if tol is None else float(tol),
                                value=jsonable(value), details=jsonable(details)))
        return status

    def fail(self, name: str, anchor: str, exc: Exception):
        self.checks.append(dict(name=name, anchor=anchor, status="FAIL", tolerance=1.0, value=None,
                                details=dict(error=type(exc).__name__, message=str(exc))))

    def merge(self, other: "Report", section: str):
        for c in other.checks:
            self.checks.append(dict(c, name=f"{section}/{c['name']}"))
        self.sections[section] = dict(config=other.config, status=other.status)
        self.inputs.extend(other.inputs)

    @property
    def status(self) -> str:
        return "FAIL" if any(c["status"] == "FAIL" for c in self.checks) else "PASS"

    @property
    def exit_code(self) -> int:
        return 0 if self.status == "PASS" else 1

    def to_dict(self) -> dict:
        digest = hashlib.sha256(b"\0".join(self.inputs) + json.dumps(self.config, sort_keys=True).encode())
        out = dict(schema_version=SCHEMA_VERSION, command=self.command, config=self.config,
                   inputs_digest=digest.hexdigest(), status=self.status, checks=self.checks)
        if self.sections:
            out["sections"] = self.sections
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        write_atomic(path, self.to_json())


def validate_report(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, REPORT_SCHEMA)


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
