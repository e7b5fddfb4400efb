"""Command line interface.  Exit codes: 0 ok, 2 validation error, 3 numerical failure."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

BETA_C_2D = 0.5 * math.log(1 + math.sqrt(2))

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ValidationError(ValueError):
    pass


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def _emit(obj: dict, out: Path | None = None, name: str | None = None) -> None:
    text = json.dumps(obj, default=_json_default, indent=2)
    if out is not None and name:
        (out / name).write_text(text + "\n")
    print(text)


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.replace(";", ",").replace(":", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad integer list '{text}'") from exc


def _pair(text: str, d: int) -> tuple:
    """'x1,x2:y1,y2' or flat 2d integers; a single leading 0 means the origin."""
    vals = _ints(text)
    if len(vals) == 2 * d:
        return tuple(vals[:d]), tuple(vals[d:])
    if len(vals) == d + 1 and vals[0] == 0:
        return (0,) * d, tuple(vals[1:])
    raise ValidationError(f"pair '{text}' needs {2 * d} coordinates")


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ValidationError(f"bad vector '{text}'") from exc


def _load_config(args):
    from .lattice import parse_config
    if not args.config:
        raise ValidationError("--config FILE is required")
    cfg = parse_config(Path(args.config).read_text())
    if not cfg.box:
        raise ValidationError("config needs a box")
    _check_subcritical(cfg.beta, cfg.couplings.is_nearest_neighbour() and cfg.dimension == 2, args)
    return cfg


def _check_subcritical(beta: float, nn2d: bool, args) -> None:
    if beta <= 0:
        raise ValidationError("beta must be positive")
    if nn2d:
        if beta >= BETA_C_2D:
            raise ValidationError(f"beta = {beta} is not below the critical value {BETA_C_2D:.5f}")
    elif not getattr(args, "assume_subcritical", False):
        raise ValidationError("critical point unknown for this coupling field; pass --assume-subcritical")


def _norm(kind: str, beta: float):
    from .lattice import NormModel
    if kind == "ising":
        return NormModel.ising2d(beta)
    if kind == "euclidean":
        return NormModel.euclidean(2)
    if kind == "l1":
        return NormModel.l1(2)
    raise ValidationError(f"unknown norm '{kind}'")


def _beta(args, default=0.3) -> float:
    if getattr(args, "config", None):
        return _load_config(args).beta
    beta = args.beta if args.beta is not None else default
    _check_subcritical(beta, True, args)
    return beta


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_exact_corr(args) -> int:
    from .gibbs import exact_two_point
    cfg = _load_config(args)
    tab = exact_two_point(cfg.graph(), cfg.beta)
    origin = tuple(lo for lo, _ in cfg.box)
    tab.write_csv(args.out / "corr.csv", origin=origin)
    _emit({"beta": cfg.beta, "vertices": len(cfg.graph().vertices), "file": str(args.out / "corr.csv")})
    return EXIT_OK


def cmd_strip(args) -> int:
    from .gibbs import strip_two_point
    beta = _beta(args)
    couplings = _load_config(args).couplings if args.config else None
    tab = strip_two_point(args.width, args.length, beta, couplings)
    tab.write_csv(args.out / "corr.csv", origin=(0, 0))
    _emit({"beta": beta, "width": args.width, "length": args.length, "file": str(args.out / "corr.csv")})
    return EXIT_OK


def cmd_mc(args) -> int:
    from .gibbs import monte_carlo_two_point
    beta = _beta(args, 0.35)
    tab = monte_carlo_two_point(args.side, beta, args.sweeps, args.seed, warmup=args.warmup,
                                rmax=args.rmax, chains=args.chains, threads=args.threads)
    tab.write_csv(args.out / "corr.csv", origin=(0, 0))
    _emit({"beta": beta, "side": args.side, "sweeps": args.sweeps, "chains": args.chains,
           "file": str(args.out / "corr.csv")})
    return EXIT_OK


def cmd_verify_rlr(args) -> int:
    from .gibbs import exact_two_point
    from .random_line import bk_check, representation_sum
    cfg = _load_config(args)
    g = cfg.graph()
    x, y = _pair(args.pair, cfg.dimension)
    if x not in g.vindex or y not in g.vindex:
        raise ValidationError("pair outside the box")
    exact = exact_two_point(g, cfg.beta).g(x, y)
    rep = representation_sum(g, x, y, cfg.beta)
    worst = 0.0
    for z in g.vertices:
        lhs, rhs, _ = bk_check(g, x, y, z, cfg.beta)
        worst = max(worst, lhs - rhs)
    _emit({"exact": exact, "representation_sum": rep, "defect": abs(exact - rep),
           "max_bk_violation": max(worst, 0.0)}, args.out, "rlr.json")
    return EXIT_OK


def cmd_skeleton(args) -> int:
    from .lattice import dual_vector
    from .random_line import enumerate_lines, line_weight
    from .skeleton import build_skeleton, surcharge_checks
    cfg = _load_config(args)
    g = cfg.graph()
    norm = _norm(args.norm, cfg.beta)
    x, y = _pair(args.pair, 2) if args.pair else (tuple(lo for lo, _ in cfg.box),
                                                   (cfg.box[0][1],) + tuple(lo for lo, _ in cfg.box[1:]))
    t = dual_vector(norm, _floats(args.t_direction))
    grouped: dict = {}
    for ln, _ in enumerate_lines(g, x, y, cfg.beta).values():
        sk = build_skeleton(ln, args.K, norm)
        grouped.setdefault(sk.points, [sk, 0.0])
        grouped[sk.points][1] += line_weight(g, ln, cfg.beta, validate=False).q
    path = args.out / "skeleton.csv"
    n_ok = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "n_back", "n_mark", "surcharge", "back_ok", "mark_ok", "weight", "weight_bound",
                    "weight_ok", "kbound_ok"])
        for pts, (sk, wt) in sorted(grouped.items()):
            rep = surcharge_checks(sk, t, args.delta, args.K, norm, R=cfg.couplings.range, weight=wt)
            kb = wt <= math.exp(-(sk.N - 1) * args.K) * (1 + 1e-9)
            n_ok += rep.ok and kb
            w.writerow([sk.N, rep.n_back, rep.n_mark, f"{rep.surcharge:.17g}", rep.back_ok, rep.mark_ok,
                        f"{wt:.17g}", f"{rep.weight_bound:.17g}", rep.weight_ok, kb])
    _emit({"skeletons": len(grouped), "all_bounds_ok": n_ok == len(grouped), "file": str(path)})
    return EXIT_OK


def cmd_decompose(args) -> int:
    from .decomposition import verify_irreducible_representation
    from .lattice import dual_vector
    cfg = _load_config(args)
    norm = _norm(args.norm, cfg.beta)
    x, y = _pair(args.pair, cfg.dimension)
    t = dual_vector(norm, np.subtract(y, x).astype(float))
    rc = verify_irreducible_representation(cfg.graph(), y, cfg.beta, t, args.K, args.delta, norm, origin=x)
    counts = {",".join(map(str, k)): v for k, v in sorted(rc.piece_counts.items())}
    _emit({"lhs": rc.lhs, "rhs": rc.rhs, "defect": rc.defect, "degenerate_mass": rc.degenerate_mass,
           "groups": len(rc.groups), "piece_counts": counts}, args.out, "decompose.json")
    return EXIT_OK


def _load_alphabet(args):
    from .ruelle import parse_alphabet
    if not args.alphabet:
        raise ValidationError("--alphabet FILE is required")
    _, op = parse_alphabet(Path(args.alphabet).read_text())
    if args.depth is not None:
        if args.depth < op.m:
            raise ValidationError(f"alphabet table has depth {op.m} > --depth {args.depth}")
        op = op.lift(args.depth)
    return op


def cmd_ruelle_spec(args) -> int:
    from .ruelle import off_axis_scan
    op = _load_alphabet(args)
    if args.tilt:
        op = op.tilted(_floats(args.tilt))
    sd = op.spectral_data()
    out = {"rho": sd.rho, "gap": sd.gap, "lambda2": sd.lam2, "residual": sd.residual,
           "h_min": float(sd.h.min()), "h_max": float(sd.h.max()), "beta_bar": op.beta_bar,
           "iterations": sd.iterations}
    if args.tau_scan is not None:
        scan = off_axis_scan(op.normalize(sd), args.tau_scan)
        out["off_axis_max"] = scan["max"]
        out["eta"] = scan["eta"]
    _emit(out, args.out, "ruelle.json")
    return EXIT_OK


def cmd_local_limit(args) -> int:
    from .local_limit import llt_errors
    op = _load_alphabet(args).normalize()
    res = llt_errors(op, None, args.n, args.nu)
    path = args.out / "llt.csv"
    d = op.alphabet.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"r{i + 1}" for i in range(d)] + ["q_exact", "q_gauss", "rel_err", "in_window"])
        for r, qe, qg, rel, inw in res["rows"]:
            w.writerow(list(r) + [f"{qe:.17g}", f"{qg:.17g}", f"{rel:.17g}", int(inw)])
    _emit({"n": args.n, "nu": args.nu, "max_rel_err_window": res["max_rel_err"], "file": str(path)})
    return EXIT_OK


def _write_wulff(path: Path, wb) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "s1", "s2", "kappa", "residual"])
        for i, s in enumerate(wb.samples):
            if wb.mode == "polar":
                ang = wb.params[i]
            else:
                p = wb.base - wb.frame[2] + s
                ang = math.atan2(p[1], p[0])
            k = wb.kappa[i] if wb.kappa is not None else float("nan")
            w.writerow([f"{ang:.17g}", f"{s[0]:.17g}", f"{s[1]:.17g}", f"{k:.17g}", f"{wb.residuals[i]:.17g}"])


def _model_operator(args):
    from .pipeline import build_alphabet, diagonal_walk_model, iid_steps_model
    if args.model == "iid":
        return iid_steps_model([(1, 0), (0, 1)], [0.5, 0.5]), None
    if args.model == "diagonal":
        return diagonal_walk_model(args.weight)
    if args.model == "ising":
        beta = _beta(args)
        alph = build_alphabet(beta, E=args.extent, depth=args.depth)
        return alph.operator, alph.t
    raise ValidationError(f"unknown model '{args.model}'")


def cmd_wulff(args) -> int:
    from .pipeline import curvature, ising_wulff_function, wulff_boundary, wulff_polar
    if args.model == "ising-exact":
        beta = _beta(args)
        ang = 2 * np.pi * np.arange(args.samples) / args.samples
        wb = curvature(wulff_polar(ising_wulff_function(beta), ang))
    else:
        op, t = _model_operator(args)
        grid = np.linspace(-args.span, args.span, args.samples)
        wb = curvature(wulff_boundary(op, grid, t=t, rebase=args.model == "ising"))
    _write_wulff(args.out / "wulff.csv", wb)
    _emit({"model": args.model, "samples": len(wb.samples), "kappa_min": wb.kappa_min,
           "radius_min": wb.radius_min, "max_residual": float(wb.residuals.max()),
           "file": str(args.out / "wulff.csv")})
    return EXIT_OK


def cmd_oz_fit(args) -> int:
    from .gibbs import directed_walk_table, inverse_correlation_length, monte_carlo_two_point, strip_two_point
    from .pipeline import oz_fit
    if args.source == "diagonal":
        tab = directed_walk_table(args.weight, args.nmax)
        direction = (1.0, 1.0)
        xi = -math.log(4 * args.weight ** 2) / math.sqrt(2)
        window = (args.rmin * math.sqrt(2), args.rmax * math.sqrt(2))
    elif args.source == "strip":
        beta = _beta(args)
        tab = strip_two_point(args.width, args.length, beta)
        direction = (1.0, 0.0)
        window = (args.rmin, args.rmax)
        xi = inverse_correlation_length(tab, direction, window).rate
    elif args.source == "mc":
        beta = _beta(args, 0.35)
        tab = monte_carlo_two_point(args.side, beta, args.sweeps, args.seed, rmax=int(args.rmax) + 2,
                                    chains=args.chains, threads=args.threads)
        direction = (1.0, 0.0)
        window = (args.rmin, args.rmax)
        xi = 0.0
    else:
        raise ValidationError(f"unknown source '{args.source}'")
    fit = oz_fit(tab, xi, 2, direction, window=window, joint=args.joint or args.source == "mc")
    _emit({"xi": fit.xi, "p_hat": fit.p_hat, "p_err": fit.p_err, "phi_hat": fit.phi_hat,
           "window": list(fit.window), "residual": fit.residual, "points": fit.n_points},
          args.out, "ozfit.json")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .lattice import NormModel
    from .pipeline import (build_alphabet, curvature, duality_direction, holder_profile, ising_wulff_function,
                           oz_prefactor, strict_triangle_check, wulff_boundary, wulff_polar)
    beta = _beta(args)
    alph = build_alphabet(beta, E=args.extent, depth=args.depth)
    op = alph.operator
    sd = op.spectral_data()
    grid = np.linspace(-args.span, args.span, args.samples)
    wb = curvature(wulff_boundary(op, grid, t=alph.t, rebase=True))
    _write_wulff(args.out / "wulff.csv", wb)
    shifted = op.tilted(wb.frame[2])
    direction = duality_direction(shifted)
    pref = oz_prefactor(shifted, chi=1.0)
    exact = curvature(wulff_polar(ising_wulff_function(beta), 2 * np.pi * np.arange(720) / 720))
    tri = strict_triangle_check(NormModel.ising2d(beta), exact.radius_min)
    out = {"beta": beta, "alphabet_size": alph.size, "depth": alph.depth, "rho0": sd.rho, "gap": sd.gap,
           "c2": alph.c2, "weight_error": alph.weight_error, "base_shift": wb.frame[2],
           "kappa_min_alphabet": wb.kappa_min, "kappa_min_exact": exact.kappa_min,
           "radius_min_exact": exact.radius_min, "duality_direction": direction,
           "phi_trivial_boundary": pref["phi"], "strict_triangle_min_slack": tri["min_slack"]}
    if alph.depth >= 2:
        out["holder"] = holder_profile(alph, tuple(range(alph.depth)))
    _emit(out, args.out, "pipeline.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="model file (key = value lines)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--beta", type=float, default=None)
    common.add_argument("--assume-subcritical", action="store_true",
                        help="assert beta < beta_c for coupling fields without a known critical point")

    p = argparse.ArgumentParser(prog="ozlab", description="Ornstein-Zernike toolkit for the Ising two-point function")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("exact-corr", parents=[common], help="brute-force correlations on a small box")
    s.set_defaults(func=cmd_exact_corr)

    s = sub.add_parser("strip", parents=[common], help="transfer-matrix correlations on a strip")
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--length", type=int, required=True)
    s.set_defaults(func=cmd_strip)

    s = sub.add_parser("mc", parents=[common], help="cluster Monte Carlo on a periodic box")
    s.add_argument("--sweeps", type=int, required=True)
    s.add_argument("--side", type=int, default=128)
    s.add_argument("--warmup", type=int, default=200)
    s.add_argument("--rmax", type=int, default=None)
    s.add_argument("--chains", type=int, default=1)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("verify-rlr", parents=[common], help="random-line representation and BK check")
    s.add_argument("--pair", required=True)
    s.set_defaults(func=cmd_verify_rlr)

    s = sub.add_parser("skeleton", parents=[common], help="skeleton surcharge bounds on enumerated lines")
    s.add_argument("--K", type=float, required=True)
    s.add_argument("--t-direction", default="1,0")
    s.add_argument("--delta", type=float, default=0.25)
    s.add_argument("--pair", default=None)
    s.add_argument("--norm", default="ising")
    s.set_defaults(func=cmd_skeleton)

    s = sub.add_parser("decompose", parents=[common], help="irreducible decomposition regrouping")
    s.add_argument("--pair", required=True)
    s.add_argument("--K", type=float, default=1.0)
    s.add_argument("--delta", type=float, default=0.25)
    s.add_argument("--norm", default="ising")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("ruelle-spec", parents=[common], help="Perron data of a transfer operator")
    s.add_argument("--alphabet", required=True)
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--tilt", default=None)
    s.add_argument("--tau-scan", type=float, default=None)
    s.set_defaults(func=cmd_ruelle_spec)

    s = sub.add_parser("local-limit", parents=[common], help="exact vs Gaussian displacement law")
    s.add_argument("--alphabet", required=True)
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--nu", type=float, default=0.3)
    s.set_defaults(func=cmd_local_limit)

    s = sub.add_parser("wulff", parents=[common], help="trace the Wulff boundary and its curvature")
    s.add_argument("--model", default="iid", choices=["iid", "diagonal", "ising", "ising-exact"])
    s.add_argument("--weight", type=float, default=0.4)
    s.add_argument("--extent", type=float, default=3.0)
    s.add_argument("--depth", type=int, default=0)
    s.add_argument("--span", type=float, default=0.3)
    s.add_argument("--samples", type=int, default=61)
    s.set_defaults(func=cmd_wulff)

    s = sub.add_parser("oz-fit", parents=[common], help="fit the Ornstein-Zernike prefactor exponent")
    s.add_argument("--source", default="diagonal", choices=["diagonal", "strip", "mc"])
    s.add_argument("--weight", type=float, default=0.4)
    s.add_argument("--nmax", type=int, default=40)
    s.add_argument("--width", type=int, default=6)
    s.add_argument("--length", type=int, default=40)
    s.add_argument("--side", type=int, default=128)
    s.add_argument("--sweeps", type=int, default=4000)
    s.add_argument("--chains", type=int, default=4)
    s.add_argument("--rmin", type=float, default=10)
    s.add_argument("--rmax", type=float, default=40)
    s.add_argument("--joint", action="store_true")
    s.set_defaults(func=cmd_oz_fit)

    s = sub.add_parser("pipeline", parents=[common], help="Ising alphabet to Wulff, curvature and prefactor")
    s.add_argument("--extent", type=float, default=3.0)
    s.add_argument("--depth", type=int, default=0)
    s.add_argument("--span", type=float, default=0.3)
    s.add_argument("--samples", type=int, default=25)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    from .pipeline import PipelineError
    from .ruelle import RuelleError
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except (ValidationError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"ozlab: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuelleError, PipelineError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"ozlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
