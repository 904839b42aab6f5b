"""Command-line front end: ``lpstab gen | eval | verify | sweep``.

Exit codes: 0 success, 1 check failure, 2 usage or specification error,
3 I/O error.  ``LPSTAB_RESOLUTION`` multiplies the default grid resolution
(numeric, at most 4).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import body as B
from . import bodyfile
from . import functionals as F
from . import generators as G
from . import harness as H
from . import sphere
from .errors import LpstabError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
ENV_RESOLUTION = "LPSTAB_RESOLUTION"
MAX_FACTOR = 4.0
CSV_COLUMNS = ["check", "body", "n", "p", "lhs", "rhs", "margin", "pass", "aux"]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    """Shortest round-trip decimal form of a number."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# resolution


def resolution_factor(env=None) -> float:
    env = os.environ if env is None else env
    raw = env.get(ENV_RESOLUTION, "").strip()
    if not raw:
        return 1.0
    try:
        f = float(raw)
    except ValueError:
        raise UsageError(f"{ENV_RESOLUTION} must be numeric, got {raw!r}")
    if not 0 < f <= MAX_FACTOR or not math.isfinite(f):
        raise UsageError(f"{ENV_RESOLUTION} must lie in (0, {MAX_FACTOR:g}]")
    return f


def resolve_resolution(n: int, explicit=None, env=None):
    """Explicit resolution, or the default scaled by the environment factor."""
    default = sphere.DEFAULT_RESOLUTION[n]
    if explicit:
        res = tuple(int(r) for r in explicit)
        if len(res) != len(default):
            raise UsageError(f"n={n} needs {len(default)} resolution value(s)")
    else:
        f = resolution_factor(env)
        if f == 1.0:
            return None
        if n == 2:
            res = (2 * max(8, round(default[0] * f / 2)),)
        else:
            L = max(8, round(default[0] * f))
            res = (L, 2 * L)
    if any(r > MAX_FACTOR * d for r, d in zip(res, default)):
        raise UsageError(f"resolution {res} exceeds {MAX_FACTOR:g}x the default {default}")
    sphere.make_grid(n, *res)  # validates
    return res


def _grid(n, resolution):
    return sphere.make_grid(n, *resolution) if resolution else sphere.make_grid(n)


def _floats(text_list):
    out = []
    for t in text_list or []:
        for part in str(t).split(","):
            part = part.strip()
            if part:
                try:
                    out.append(float(part))
                except ValueError:
                    raise UsageError(f"not a number: {part!r}")
    return out


def _names(text_list):
    out = []
    for t in text_list or []:
        out.extend(x.strip() for x in t.split(",") if x.strip())
    return out


# ---------------------------------------------------------------------------
# quantities


def _best_ball(K):
    r = sphere.integrate(K.grid, K.h) / sphere.sphere_area(K.n)
    return {"r": r, "value": B.l2_distance_to_ball(K, r)}


def _delta2_Br(K):
    r = math.sqrt(sphere.sphere_area(K.n) / sphere.integrate(K.grid, K.h ** -2.0))
    return {"r": r, "value": B.l2_distance_to_ball(K, r)}


def _width(K, p):
    W = F.width_E_p(K, p)
    return W.value


def _H(K):
    lo, hi = F.centro_affine_extremes(K)
    return {"min": lo, "max": hi}


QUANTITIES = {
    "volume": (False, lambda K: B.volume(K)),
    "diameter": (False, lambda K: B.diameter(K)),
    "polar_volume": (False, lambda K: B.polar_volume_at(K)),
    "santalo": (False, lambda K: B.santalo_point(K).point),
    "santalo_deficit": (False, F.santalo_deficit),
    "H": (False, _H),
    "R_-n": (False, lambda K: F.centro_affine_ratio(K)),
    "delta2": (False, lambda K: B.l2_distance_to_ball(K, 1.0)),
    "delta2_best": (False, _best_ball),
    "delta2_Br": (False, _delta2_Br),
    "asymmetry": (False, lambda K: B.relative_asymmetry_to_ball(K).value),
    "bm": (False, lambda K: B.banach_mazur_to_ball(K).value),
    "Rp": (True, lambda K, p: F.lp_ratio(K, p)),
    "Ep": (True, _width),
    "ep": (True, lambda K, p: F.width_E_p(K, p).point),
}


def evaluate(K, names, ps) -> dict:
    out = {}
    for q in names:
        if q not in QUANTITIES:
            raise UsageError(f"unknown quantity {q!r}; choose from {', '.join(QUANTITIES)}")
        needs_p, fn = QUANTITIES[q]
        if needs_p:
            if not ps:
                raise UsageError(f"quantity {q!r} needs --p")
            out[q] = {fmt(p): fn(K, p) for p in ps}
        else:
            out[q] = fn(K)
    return out


def _flatten(prefix, v, out):
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}[{k}]", x, out)
    elif isinstance(v, (list, tuple, np.ndarray)):
        for i, x in enumerate(v):
            _flatten(f"{prefix}[{i}]", x, out)
    else:
        out[prefix] = v


# ---------------------------------------------------------------------------
# commands


def _spec_from_args(a, resolution) -> G.BodySpec:
    fam = a.family
    if fam == "ball":
        params = {"r": a.r}
    elif fam == "ellipsoid":
        vals = _floats(a.A)
        if len(vals) == a.n:
            params = {"A": vals}
        elif len(vals) == a.n * a.n:
            params = {"A": [vals[i * a.n:(i + 1) * a.n] for i in range(a.n)]}
        else:
            raise UsageError(f"--A needs {a.n} or {a.n * a.n} numbers")
    elif fam == "harmonic":
        if a.eps is None or a.degree is None:
            raise UsageError("harmonic needs --eps and --degree")
        params = {"eps": a.eps, "degree": a.degree, "order": a.order}
    elif fam == "cap_cut":
        if a.eps is None:
            raise UsageError("cap_cut needs --eps")
        params = {"eps": a.eps}
        if a.s is not None:
            params["s"] = a.s
    else:
        params = {"seed": a.seed, "decay": a.decay}
    return G.BodySpec(fam, params, a.n, resolution)


def cmd_gen(a, out) -> int:
    res = resolve_resolution(a.n, a.resolution)
    spec = _spec_from_args(a, res)
    K = spec.build()
    text = bodyfile.dumps(K)
    if a.output in (None, "-"):
        out.write(text)
    else:
        with open(a.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def _load(path, resolution_args):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        n = int(json.loads(text)["dimension"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise bodyfile.BodyFileError(f"malformed body file: {exc}") from exc
    res = resolve_resolution(n, resolution_args)
    return bodyfile.loads(text, _grid(n, res))


def cmd_eval(a, out) -> int:
    K = _load(a.body, a.resolution)
    names = _names(a.q) or ["volume"]
    ps = _floats(a.p)
    for p in ps:
        if p < -K.n:
            raise UsageError(f"p = {p} is below -n")
    if a.normalize:
        K = B.normalize_volume(K)
    record = {"body": K.label, "n": K.n, "resolution": list(K.grid.resolution),
              "normalized": bool(a.normalize)}
    record.update(evaluate(K, names, ps))
    text = dump_json(record)
    _emit(a.output, text, out)
    return EXIT_OK


def _emit(path, text, out):
    if path in (None, "-"):
        out.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def report_rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        aux = dict(r.aux)
        if r.params:
            aux["params"] = r.params
        if r.error:
            aux["error"] = r.error
        passed = "" if r.is_trend else fmt(bool(r.passed))
        w.writerow([r.check, r.body, r.n, fmt(r.p), fmt(r.lhs), fmt(r.rhs), fmt(r.margin), passed,
                    json.dumps(_jsonable(aux), sort_keys=True)])
    return buf.getvalue()


def report_rows_json(rows, summary) -> str:
    recs = []
    for r in rows:
        recs.append({"check": r.check, "body": r.body, "n": r.n, "p": r.p, "lhs": r.lhs,
                     "rhs": r.rhs, "margin": r.margin, "pass": None if r.is_trend else r.passed,
                     "tol": r.tol, "kind": r.kind, "params": r.params, "aux": r.aux,
                     "error": r.error})
    return dump_json({"summary": summary, "rows": recs})


def _specs_for(a):
    specs = []
    for n in a.n:
        res = resolve_resolution(n, a.resolution if len(a.n) == 1 else None)
        if a.suite == "default":
            specs.extend(G.default_suite(n, res))
    for path in a.specs or []:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}: not valid JSON: {exc}")
        items = data if isinstance(data, list) else [data]
        for d in items:
            try:
                specs.append(G.BodySpec.from_dict(d))
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad body spec: {exc}")
    return specs


def cmd_verify(a, out) -> int:
    specs = _specs_for(a)
    ps = _floats(a.p) if a.p else None
    if ps is not None:
        lo = -max(a.n)
        if any(p < lo for p in ps):
            raise UsageError("p values must lie in [-n, inf)")
    if a.tol is not None and not a.tol > 0:
        raise UsageError("--tol must be positive")
    rows = H.run_suite(specs, ps, a.tol, a.maps, a.seed)
    summary = H.summarize(rows)
    _emit(a.csv, report_rows_csv(rows), out)
    if a.json:
        _emit(a.json, report_rows_json(rows, summary), out)
    if not summary["passed"]:
        print(f"lpstab: {summary['failed']} of {summary['mandatory']} mandatory checks failed",
              file=sys.stderr)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def _sweep_values(a):
    if a.range:
        parts = a.range.split(":")
        if len(parts) != 3:
            raise UsageError("--range takes start:stop:count")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"bad --range {a.range!r}")
        if num < 0:
            raise UsageError("--range count must be >= 0")
        return [float(x) for x in np.linspace(start, stop, num)]
    return _floats(a.values)


def cmd_sweep(a, out) -> int:
    values = _sweep_values(a)
    names = _names(a.q) or ["volume"]
    ps = _floats(a.p)
    for q in names:
        if q not in QUANTITIES:
            raise UsageError(f"unknown quantity {q!r}")
        if QUANTITIES[q][0] and not ps:
            raise UsageError(f"quantity {q!r} needs --p")
    res = resolve_resolution(a.n, a.resolution)
    fixed = {}
    for item in a.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        fixed[k] = json.loads(v) if v.strip() else v
    rows, columns = [], None
    for v in values:
        params = dict(fixed, **{a.param: int(v) if a.param in ("degree", "order", "seed") else v})
        record, err = {}, ""
        try:
            K = G.BodySpec(a.family, params, a.n, res).build()
            if a.normalize:
                K = B.normalize_volume(K)
            _flatten("", evaluate(K, names, ps), record)
        except UsageError:
            raise
        except Exception as exc:  # recorded in-row, sweep continues
            err = f"{type(exc).__name__}: {exc}"
        rows.append((v, record, err))
        if record and columns is None:
            columns = list(record)
    if columns is None:
        columns = [f"[{q}]" for q in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([a.param] + [c.strip("[]").replace("][", ":") for c in columns] + ["error"])
    for v, record, err in rows:
        w.writerow([fmt(v)] + [fmt(record[c]) if c in record else "" for c in columns] + [err])
    _emit(a.output, buf.getvalue(), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lpstab", description="Spectral convex bodies and L_p stability checks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def res_opt(p):
        p.add_argument("--resolution", type=int, nargs="+", metavar="R",
                       help="grid resolution: N (n=2) or L M (n=3); at most 4x the default")

    g = sub.add_parser("gen", help="generate a body file")
    g.add_argument("--family", required=True, choices=G.FAMILIES)
    g.add_argument("--n", type=int, default=2, choices=(2, 3))
    g.add_argument("--r", type=float, default=1.0, help="ball radius")
    g.add_argument("--A", nargs="+", help="ellipsoid axes (n numbers) or matrix (n*n, row-major)")
    g.add_argument("--eps", type=float, help="harmonic amplitude or cap height")
    g.add_argument("--degree", type=int)
    g.add_argument("--order", type=int, default=0)
    g.add_argument("--s", type=float, help="cap-cut smoothing (default: ladder)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--decay", type=float, default=2.5)
    g.add_argument("-o", "--output")
    res_opt(g)

    e = sub.add_parser("eval", help="evaluate functionals of a body file")
    e.add_argument("body")
    e.add_argument("--q", action="append", help="quantity name(s); repeat or comma-separate")
    e.add_argument("--p", action="append", help="exponent(s) for p-dependent quantities")
    e.add_argument("--normalize", action="store_true", help="rescale to the volume of the unit ball")
    e.add_argument("-o", "--output")
    res_opt(e)

    v = sub.add_parser("verify", help="run the stability checks")
    v.add_argument("--n", type=int, nargs="+", default=[2], choices=(2, 3))
    v.add_argument("--suite", choices=("default", "empty"), default="default")
    v.add_argument("--specs", action="append", help="JSON file with body spec(s)")
    v.add_argument("--p", action="append", help="override the exponent grid")
    v.add_argument("--tol", type=float, help="inequality/identity tolerance override")
    v.add_argument("--maps", type=int, default=10, help="SL(n) maps per body")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--csv", help="CSV report path (default: stdout)")
    v.add_argument("--json", help="JSON report path")
    res_opt(v)

    s = sub.add_parser("sweep", help="tabulate quantities along a generator parameter")
    s.add_argument("--family", required=True, choices=G.FAMILIES)
    s.add_argument("--param", required=True, help="parameter to vary, e.g. eps")
    grp = s.add_mutually_exclusive_group()
    grp.add_argument("--values", action="append", help="comma-separated values")
    grp.add_argument("--range", help="start:stop:count")
    s.add_argument("--set", action="append", help="fixed parameter key=value (JSON value)")
    s.add_argument("--q", action="append")
    s.add_argument("--p", action="append")
    s.add_argument("--n", type=int, default=2, choices=(2, 3))
    s.add_argument("--normalize", action="store_true")
    s.add_argument("-o", "--output")
    res_opt(s)
    return ap


COMMANDS = {"gen": cmd_gen, "eval": cmd_eval, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        a = build_parser().parse_args(argv)
        return COMMANDS[a.command](a, out)
    except UsageError as exc:
        print(f"lpstab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (bodyfile.BodyFileError, LpstabError, ValueError, KeyError) as exc:
        print(f"lpstab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"lpstab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
