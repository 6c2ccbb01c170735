"""Command-line front end: ``causet-qft <subcommand> [options]``.

Every subcommand writes one JSON document (to ``--output`` or stdout) and
optionally a CSV projection (``--csv``). Exit status is 0 on success, 2 on
invalid input and 3 on numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ValidationError(ValueError):
    pass


# --- helpers -------------------------------------------------------------

def _cplx(z):
    z = complex(z)
    return [z.real, z.imag]


def _cmatrix(M):
    M = np.asarray(M)
    return [[_cplx(v) for v in row] for row in M]


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def _parse_lattice(text):
    try:
        rows, cols = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise ValidationError(f"lattice size must look like 8x8, got {text!r}") from exc
    return rows, cols


def _parse_region(text):
    try:
        kind, nums = text.split(":")
        vals = tuple(float(v) for v in nums.split(","))
    except ValueError as exc:
        raise ValidationError(f"region must look like rect:t0,t1,x0,x1 or diamond:tp,xp,tq,xq, got {text!r}") from exc
    if kind not in ("rect", "diamond") or len(vals) != 4:
        raise ValidationError(f"bad region {text!r}")
    return (kind, *vals)


def _causet(args):
    from . import causet as cz
    if not args.input:
        raise ValidationError("--input is required")
    data = _load_json(args.input)
    if isinstance(data, dict) and "causet" in data:
        data = data["causet"]
    return cz.from_dict(data)


def _operator(cs, args):
    from .causet import choose_preferred_past
    from .operators import build_k_variant, build_plambda, build_sorkin, with_source
    if args.op == "sorkin":
        return build_sorkin(cs, args.k if args.k is not None else 3)
    if args.k not in (None, 2):
        raise ValidationError("the preferred-past operator has boundary depth 2")
    pp = choose_preferred_past(cs)
    op = build_plambda(cs, pp)
    if args.kvariant != "half":
        op = with_source(op, build_k_variant(cs, pp, args.kvariant))
    return op


def _greens(args):
    from .operators import greens
    cs = _causet(args)
    op = _operator(cs, args)
    return cs, op, greens(op)


def _vectors(args, n, count_default):
    if args.vectors:
        vecs = np.asarray(_load_json(args.vectors), dtype=float)
        if vecs.ndim != 2 or vecs.shape[1] != n:
            raise ValidationError(f"vectors must be a list of length-{n} lists")
        return vecs
    from .generators import make_rng
    rng = make_rng(args.seed)
    count = args.npoints if args.npoints is not None else count_default
    return rng.random((count, n)) * 2.0 - 1.0


def _write_csv(path, M):
    M = np.asarray(M)
    if np.iscomplexobj(M):
        M = np.hstack([M.real, M.imag])
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


# --- subcommands ------------------------------------------------------------

def cmd_gen(args):
    from .generators import LatticeSpec, SprinklingSpec, diamond_lattice, sprinkle
    if bool(args.lattice) == bool(args.sprinkle):
        raise ValidationError("give exactly one of --lattice or --sprinkle")
    if args.lattice:
        rows, cols = _parse_lattice(args.lattice)
        cs = diamond_lattice(LatticeSpec(rows, cols, args.ell, args.complete_past))
    else:
        cs = sprinkle(SprinklingSpec(_parse_region(args.sprinkle), args.density, args.seed))
    return cs.to_dict(), None


def cmd_analyze(args):
    from .causet import FUTURE, PAST, choose_preferred_past
    cs = _causet(args)
    ranks = cs.rank_matrix()
    infin = {}
    for n in range(1, args.depth + 1):
        infin[str(n)] = {"past": cs.infinity(n, PAST)[0].tolist(), "future": cs.infinity(n, FUTURE)[0].tolist()}
    pp = choose_preferred_past(cs)
    layer_counts = np.bincount(cs.proximity_matrix[cs.causal], minlength=1).tolist()
    out = {
        "causet": cs.to_dict(),
        "n": cs.size,
        "relations": int(cs.causal.sum()),
        "links": int(cs.link.sum()),
        "layer_histogram": layer_counts,
        "max_rank": int(ranks.max()) if cs.size and ranks.count() else 0,
        "infinity": infin,
        "rank_check": {"c2_equals_r2": bool(np.array_equal(cs.infinity(2, PAST)[0], cs.rank_infinity(2)))},
        "preferred_past": {
            "rule": pp.rule,
            "map": {str(k): v for k, v in sorted(pp.mapping.items())},
            "admissible": {str(k): v for k, v in sorted(pp.admissible.items())},
        },
    }
    return out, None


def cmd_green(args):
    cs, op, gs = _greens(args)
    out = {
        "n": cs.size,
        "operator": op.kind,
        "k": op.k,
        "kvariant": args.kvariant,
        "boundary": op.boundary.tolist(),
        "P": op.P.tolist(),
        "K": op.K.tolist(),
        "E_ret": gs.retarded.tolist(),
        "E_adv": gs.advanced.tolist(),
        "residual": gs.residual(),
        "antisymmetry": float(np.max(np.abs(gs.commutator + gs.commutator.T), initial=0.0)),
    }
    return out, gs.retarded


def cmd_spectrum(args):
    from .classical import kernel_diagnostics
    _, _, gs = _greens(args)
    rep = kernel_diagnostics(gs, args.tol if args.tol is not None else 1e-10)
    out = {
        "eigenvalues": np.sort(rep.eigenvalues).tolist(),
        "kernel_dimension": rep.kernel_dimension,
        "tolerance": rep.tolerance,
        "relative_tolerance": args.tol if args.tol is not None else 1e-10,
    }
    return out, np.sort(rep.eigenvalues)[None, :]


def cmd_sj(args):
    from .quantization import sj_two_point
    if args.matrix:
        E = np.asarray(_load_json(args.matrix), dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1] or not np.array_equal(E, -E.T):
            raise ValidationError("--matrix must be a square antisymmetric matrix")
        source = E
    else:
        _, _, source = _greens(args)
    tp = sj_two_point(source)
    res = tp.axiom_residuals()
    tol = args.tol if args.tol is not None else 1e-10
    out = {
        "W": _cmatrix(tp.W),
        "H": tp.H.tolist(),
        "residuals": res,
        "ok": bool(res["sj1"] == 0.0 and res["min_eig_rel"] >= -tol and res["sj3_rel"] <= tol),
    }
    return out, tp.W


def cmd_converge(args):
    import sympy as sp
    from .generators import LatticeSpec, diamond_lattice
    from .operators import continuum_residual
    u, v = sp.symbols("u v", real=True)
    try:
        expr = sp.sympify(args.f, locals={"u": u, "v": v})
    except (sp.SympifyError, TypeError) as exc:
        raise ValidationError(f"cannot parse --f {args.f!r}") from exc
    if expr.free_symbols - {u, v}:
        raise ValidationError("--f may only use the variables u and v")
    f = sp.lambdify((u, v), expr, "numpy")
    fuv = sp.lambdify((u, v), sp.diff(expr, u, v), "numpy")
    base = args.base
    delta0 = args.extent / base
    levels = []
    for k in range(args.levels):
        r = 2 ** k
        levels.append(diamond_lattice(LatticeSpec(base * r + 1, base * r + 1, delta0 / r / math.sqrt(2.0))))
    res = continuum_residual(levels, f, fuv, args.d, args.op)
    rows = []
    for k, lv in enumerate(res):
        ratio = res[k - 1].max_residual / lv.max_residual if k and lv.max_residual > 0 else None
        rows.append({"level": 2 ** k, "delta": lv.delta, "ell": lv.ell, "interior_points": lv.interior_points,
                     "max_residual": lv.max_residual, "ratio": ratio})
    table = np.array([[r["level"], r["delta"], r["max_residual"]] for r in rows])
    return {"f": args.f, "operator": args.op, "levels": rows}, table


def cmd_correlate(args):
    from .functionals import PolyFunctional
    from .quantization import omega0_at, quasifree_npoint, sj_two_point, star_chain, wick_rule
    _, _, gs = _greens(args)
    tp = sj_two_point(gs)
    vecs = _vectors(args, gs.size, 2)
    if len(vecs) % 2:
        return {"npoint": len(vecs), "value": _cplx(0.0), "note": "odd correlators vanish"}, None
    value = quasifree_npoint(vecs, tp)
    out = {"npoint": len(vecs), "value": _cplx(value)}
    if args.crosscheck:
        chain = star_chain([PolyFunctional.linear(f) for f in vecs], wick_rule(tp))
        out["star_product_value"] = _cplx(omega0_at(chain).get(0, 0j))
    return out, None


def cmd_interact(args):
    from .classical import local_interaction
    from .interacting import InteractingTheory, correlator_json, feynman
    from .quantization import sj_two_point
    _, op, gs = _greens(args)
    tp = sj_two_point(gs)
    fp = feynman(tp, gs)
    coupling = np.full(gs.size, args.coupling)
    coupling[op.boundary] = 0.0
    V = local_interaction(coupling, args.power, gs)
    theory = InteractingTheory(V, tp, fp, args.ohbar, args.olambda)
    vecs = _vectors(args, gs.size, 2)
    direct, pulled = theory.npoint(vecs)
    out = correlator_json(direct)
    out["composition_gap"] = direct.max_abs_diff(pulled)
    if args.lam is not None:
        total = sum(v * args.lam ** q for (p, q), v in direct.at_zero().items())
        out["value_at_lambda"] = {"lambda": args.lam, "hbar": 1.0, "value": _cplx(total)}
    return out, None


def cmd_rce(args):
    from .causet import FUTURE, choose_preferred_past
    from .generators import LatticeSpec, diamond_lattice, subdivided_lattice
    from .operators import build_plambda, cauchy_evolution, greens, match_coordinates, rce
    rows, cols = _parse_lattice(args.lattice)
    if rows < 4 or cols < 4:
        raise ValidationError("the rce experiment needs at least a 4x4 lattice")
    spec = LatticeSpec(rows, cols, args.ell)
    cell = (rows // 2 - 1, cols // 2 - 1)
    sets = [diamond_lattice(spec), subdivided_lattice(spec, cell)]
    ops = [build_plambda(c, choose_preferred_past(c)) for c in sets]
    gss = [greens(o) for o in ops]
    a, b = sets
    evs = [cauchy_evolution(o, g) for o, g in zip(ops, gss)]
    im = match_coordinates(a, b, evs[0].past, evs[1].past)
    ip = match_coordinates(a, b, evs[0].future, evs[1].future)
    same = rce(a, a, {int(x): int(x) for x in evs[0].past}, {int(x): int(x) for x in evs[0].future},
               ops[0], ops[0], gss[0], gss[0])
    pert = rce(a, b, im, ip, ops[0], ops[1], gss[0], gss[1])
    out = {
        "lattice": [rows, cols],
        "subdivided_cell": list(cell),
        "evolution": {"rank": evs[0].rank, "condition": evs[0].condition, "invertible": evs[0].invertible},
        "unperturbed_deviation": same.deviation(),
        "perturbed_deviation": pert.deviation(),
        "data_map": pert.data_map.tolist(),
    }
    return out, pert.data_map


def validate_file(path) -> dict:
    """Check a causal-set file; returns ``{"status": "ok"|"invalid", "violations": [...]}``."""
    from . import causet as cz
    violations = []
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return {"status": "invalid", "violations": [{"kind": "unreadable", "detail": str(exc)}]}
    try:
        n = int(data["n"])
        covers = [tuple(int(v) for v in c) for c in data.get("covers", [])]
    except (KeyError, TypeError, ValueError) as exc:
        return {"status": "invalid", "violations": [{"kind": "schema", "detail": str(exc)}]}
    bad = [list(c) for c in covers if len(c) != 2 or not all(0 <= v < n for v in c)]
    if bad:
        violations.append({"kind": "index-range", "detail": bad})
        return {"status": "invalid", "violations": violations}
    try:
        cs = cz.from_relations(n, covers)
    except cz.CycleError as exc:
        violations.append({"kind": "cycle", "cycle": exc.cycle, "detail": str(exc)})
        return {"status": "invalid", "violations": violations}
    unnatural = [list(c) for c in covers if c[0] >= c[1]]
    if unnatural:
        violations.append({"kind": "labelling", "detail": unnatural})
    redundant = [list(c) for c in covers if not cs.link[np.flatnonzero(cs.original_index == c[1])[0],
                                                        np.flatnonzero(cs.original_index == c[0])[0]]]
    if redundant:
        violations.append({"kind": "non-link-cover", "detail": redundant})
    want = data.get("c_checksum")
    if want is not None and want != cs.checksum():
        violations.append({"kind": "closure-mismatch",
                           "detail": f"stored checksum {want} differs from the closure of the covers ({cs.checksum()})"})
    coords = data.get("coords")
    if coords is not None and len(coords) != n:
        violations.append({"kind": "coords", "detail": f"{len(coords)} coordinate pairs for {n} elements"})
    return {"status": "ok" if not violations else "invalid", "violations": violations}


def cmd_validate(args):
    if not args.input:
        raise ValidationError("--input is required")
    rep = validate_file(args.input)
    return rep, None


COMMANDS = {
    "gen": cmd_gen, "analyze": cmd_analyze, "green": cmd_green, "spectrum": cmd_spectrum, "sj": cmd_sj,
    "converge": cmd_converge, "correlate": cmd_correlate, "interact": cmd_interact, "rce": cmd_rce,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causet-qft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="causal-set JSON file")
        p.add_argument("--output", help="write JSON here instead of stdout")
        p.add_argument("--csv", help="also write a CSV projection here")
        p.add_argument("--config", help="JSON file with option defaults for this subcommand")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None)
        return p

    def operator(p):
        p.add_argument("--op", choices=("plambda", "sorkin"), default="plambda")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--kvariant", choices=("half", "dsx", "trap"), default="half")
        return p

    p = common(sub.add_parser("gen", help="generate a lattice or sprinkling"))
    p.add_argument("--lattice", help="ROWSxCOLS diamond lattice")
    p.add_argument("--ell", type=float, default=1.0)
    p.add_argument("--complete-past", action="store_true", help="extend the lattice below a spacelike cut")
    p.add_argument("--sprinkle", help="rect:t0,t1,x0,x1 or diamond:tp,xp,tq,xq")
    p.add_argument("--density", type=float, default=1.0)

    p = common(sub.add_parser("analyze", help="layers, infinities and preferred pasts"))
    p.add_argument("--depth", type=int, default=3)
    operator(common(sub.add_parser("green", help="wave operator and Green functions")))
    operator(common(sub.add_parser("spectrum", help="spectrum of iE and kernel report")))
    p = operator(common(sub.add_parser("sj", help="SJ two-point function")))
    p.add_argument("--matrix", help="JSON file holding an antisymmetric E instead of a causal set")

    p = common(sub.add_parser("converge", help="continuum residual table"))
    p.add_argument("--f", required=True, help="field as an expression in u and v")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--base", type=int, default=4, help="lattice steps per side at the coarsest level")
    p.add_argument("--extent", type=float, default=1.0, help="side of the (u, v) square")
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--op", choices=("plambda", "sorkin"), default="plambda")

    for name, helptext in (("correlate", "free quasifree n-point functions"),
                           ("interact", "interacting correlators")):
        p = operator(common(sub.add_parser(name, help=helptext)))
        p.add_argument("--vectors", help="JSON list of smearing vectors")
        p.add_argument("--npoints", type=int, default=None, help="number of random smearing vectors")
        if name == "correlate":
            p.add_argument("--crosscheck", action="store_true")
        else:
            p.add_argument("--power", type=int, default=4)
            p.add_argument("--coupling", type=float, default=0.1)
            p.add_argument("--olambda", type=int, default=2)
            p.add_argument("--ohbar", type=int, default=2)
            p.add_argument("--lam", type=float, default=None, help="also sum the series at this coupling")

    p = common(sub.add_parser("rce", help="relative Cauchy evolution experiment"))
    p.add_argument("--lattice", default="6x6")
    p.add_argument("--ell", type=float, default=1.0)

    common(sub.add_parser("validate", help="check a causal-set file"))
    return parser


def _apply_config(parser, args, argv):
    if not args.config:
        return args
    cfg = _load_json(args.config)
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a JSON object")
    cfg = dict(cfg)
    if cfg.pop("command", args.command) != args.command:
        raise ValidationError("config command does not match the subcommand")
    known = set(vars(args)) - {"command", "config"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in cfg.items():
        if key not in given:
            setattr(args, key, val)
    return args


@contextlib.contextmanager
def _thread_limit():
    n = os.environ.get("CAUSET_QFT_THREADS")
    if not n:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=int(n)):
        yield


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        args = _apply_config(parser, args, argv)
        with _thread_limit():
            out, table = COMMANDS[args.command](args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        # before ValueError: LinAlgError subclasses it
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, KeyError, IndexError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = json.dumps(out, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv and table is not None:
        _write_csv(args.csv, table)
    if args.command == "validate" and out["status"] != "ok":
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
