"""Command-line front end.

Subcommands: classify | fit-shallow | fit-poly | compile | lower | sweep |
demo | eval.  Every run is a deterministic function of its flags and seed;
the only non-reproducible output line is the timestamp header, suppressed by
--no-timestamp.  A flat key=value config file can prefill any long option
(flags override the file).  Precondition violations exit nonzero with a
single machine-parsable line "error[CODE] message" on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone

import numpy as np

from . import verifier
from .activations import get_activation
from .blocks import (DEFAULT_H_SCHEDULE, block_error, conj_block, identity_block,
                     id_conj_pair_block, mul_block, pair_block, square_block)
from .core import (CompactBox, Cvnn, GridSpec, cvnn_from_json, cvnn_to_json,
                   depth_of, eval_cvnn, sample_box, width_of)
from .errors import (ConstructionError, DimensionMismatch, FitSingular,
                     InvalidActivationParams, StrategyMismatch, UnknownActivation)
from .fitting import FitConfig, fit_poly, fit_shallow
from .lowering import default_strategy, lower, STRATEGIES
from .register import (poly_from_json_dict, poly_to_json_dict, poly_to_register,
                       program_from_json, program_to_json, shallow_to_register,
                       eval_register)
from .verifier import (DEFAULT_SWEEP_SCHEDULE, SweepReport, h_sweep, named_target,
                       sup_error)
from .wirtinger import ToleranceProfile, classify_activation

_ERR_CODES = (
    (UnknownActivation, ("UNKNOWN_ACTIVATION", 2)),
    (InvalidActivationParams, ("BAD_PARAMS", 2)),
    (StrategyMismatch, ("STRATEGY_MISMATCH", 3)),
    (ConstructionError, ("CONSTRUCTION", 3)),
    (FitSingular, ("FIT_SINGULAR", 3)),
    (DimensionMismatch, ("DIMENSION", 2)),
    (KeyError, ("BAD_NAME", 2)),
    (ValueError, ("BAD_VALUE", 2)),
    (FileNotFoundError, ("IO", 2)),
)


def _parse_kv(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--param expects k=v, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _parse_box(text: str) -> CompactBox:
    """Coordinates separated by '|'; each coordinate 're_lo,re_hi;im_lo,im_hi'."""
    coords = []
    for part in text.split("|"):
        re_part, _, im_part = part.partition(";")
        re_lo, re_hi = (float(x) for x in re_part.split(","))
        if im_part:
            im_lo, im_hi = (float(x) for x in im_part.split(","))
        else:
            im_lo, im_hi = re_lo, re_hi
        coords.append((re_lo, re_hi, im_lo, im_hi))
    return CompactBox(tuple(coords))


def _box_or_default(args, n: int) -> CompactBox:
    if args.box:
        box = _parse_box(args.box)
        if box.n != n:
            raise DimensionMismatch(f"box has {box.n} coordinates, expected {n}")
        return box
    return CompactBox.square(n, 1.0)


def _profile(args) -> ToleranceProfile:
    kwargs = {}
    if getattr(args, "zero_tol", None) is not None:
        kwargs["zero_tol"] = args.zero_tol
    if getattr(args, "fd_step", None) is not None:
        kwargs["fd_step"] = args.fd_step
    if getattr(args, "probe_box", None):
        kwargs["probe_box"] = _parse_box(args.probe_box)
    return ToleranceProfile(**kwargs)


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_dump(doc: dict, timestamp: bool) -> str:
    if timestamp:
        doc = dict(doc, generated=datetime.now(timezone.utc).isoformat())
    return json.dumps(doc, sort_keys=True, indent=1)


def _schedule(args):
    if args.h == "auto":
        return DEFAULT_SWEEP_SCHEDULE
    return (float(args.h),)


def _target_fn(args):
    fn, m = named_target(args.target)
    return fn, m


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_classify(args):
    spec = get_activation(args.activation, _parse_kv(args.param))
    prof = _profile(args)
    result = classify_activation(spec, args.n, args.m, prof)
    doc = result.to_json_dict(prof)
    doc["activation"] = spec.name
    _write(args.out, _json_dump(doc, not args.no_timestamp))
    return 0


def _cmd_fit_shallow(args):
    spec = get_activation(args.activation, _parse_kv(args.param))
    fn, m = _target_fn(args)
    m = args.m or m
    box = _box_or_default(args, args.n)
    cfg = FitConfig(num_features=args.features, weight_scale=args.scale,
                    ridge=args.ridge, box=box, grid=GridSpec(args.grid), seed=args.seed)
    net, err = fit_shallow(fn, spec, args.n, m, cfg)
    _write(f"{args.out}.net.json" if args.out else None, cvnn_to_json(net))
    report = SweepReport([], {"sup_error": repr(err), "features": args.features,
                              "seed": args.seed, "activation": spec.name})
    _write(f"{args.out}.csv" if args.out else None, report.to_csv(not args.no_timestamp))
    print(f"fit-shallow sup_error={err:.6g} width={width_of(net)} depth={depth_of(net)}")
    return 0


def _cmd_fit_poly(args):
    fn, m = _target_fn(args)
    box = _box_or_default(args, args.n)
    polys = fit_poly(fn, args.n, args.degree, box, GridSpec(args.grid), m=m)
    doc = poly_to_json_dict(polys)
    _write(f"{args.out}.poly.json" if args.out else None,
           _json_dump(doc, not args.no_timestamp))
    err = sup_error(fn, lambda zs: np.column_stack([p(zs) for p in polys]),
                    box, GridSpec(2 * args.grid))
    print(f"fit-poly degree={args.degree} sup_error={err:.6g}")
    return 0


def _cmd_compile(args):
    spec = get_activation(args.activation, _parse_kv(args.param))
    prof = _profile(args)
    cls = classify_activation(spec, args.n, args.m, prof)
    if not cls.verdict.startswith("Universal"):
        raise StrategyMismatch(
            f"activation {spec.name!r} classified {cls.verdict}: networks over it "
            "are not universal, refusing to compile")
    strategy = args.strategy
    if strategy in (None, "auto"):
        strategy = default_strategy(cls.verdict, cls.witness_probe, prof)
    if strategy not in STRATEGIES:
        raise StrategyMismatch(f"unknown strategy {strategy!r}")

    fn, m = _target_fn(args)
    m = args.m or m
    box = _box_or_default(args, args.n)
    schedule = _schedule(args)
    if strategy.startswith("Poly"):
        net, report = verifier.end_to_end_poly(
            fn, spec, args.n, m, args.degree, strategy, box,
            fit_grid=GridSpec(args.grid), schedule=schedule, prof=prof)
    else:
        cfg = FitConfig(num_features=args.features, weight_scale=args.scale,
                        ridge=args.ridge, box=box, grid=GridSpec(args.grid),
                        seed=args.seed)
        net, report = verifier.end_to_end_nonpoly(
            fn, spec, args.n, m, cfg, strategy, box, schedule=schedule, prof=prof)
    report.extras.clear()
    best = report.best_row()
    _write(f"{args.out}.net.json" if args.out else None, cvnn_to_json(net))
    _write(f"{args.out}.sweep.csv" if args.out else None,
           report.to_csv(not args.no_timestamp))
    print(f"compile strategy={strategy} width={width_of(net)} depth={depth_of(net)} "
          f"h={best.h:g} sup_error={best.sup_error:.6g}")
    return 0


def _cmd_lower(args):
    with open(args.program) as fh:
        program = program_from_json(fh.read())
    spec = get_activation(args.activation, _parse_kv(args.param))
    prof = _profile(args)
    box = _box_or_default(args, program.input_dim)
    grid = GridSpec(args.grid)
    sigma = spec
    if args.strategy == "NonPoly_Conj_NMplus1":
        from .activations import conjugate_activation

        sigma = conjugate_activation(spec)
    reference = lambda zs: eval_register(program, zs, sigma.fn)
    report = h_sweep(lambda h: lower(program, spec, args.strategy, h, prof),
                     _schedule(args), box, grid, reference, spec,
                     metadata={"strategy": args.strategy, "activation": spec.name})
    best = report.best_row()
    net = report.extras["nets"][best.h]
    report.extras.clear()
    _write(f"{args.out}.net.json" if args.out else None, cvnn_to_json(net))
    _write(f"{args.out}.sweep.csv" if args.out else None,
           report.to_csv(not args.no_timestamp))
    print(f"lower strategy={args.strategy} width={width_of(net)} depth={depth_of(net)} "
          f"h={best.h:g} sup_error={best.sup_error:.6g}")
    return 0


_BLOCK_TARGETS = {
    "identity": lambda zs: zs,
    "conjugation": lambda zs: np.conj(zs),
    "pair": lambda zs: np.hstack([zs, np.conj(zs)]),
}


def _cmd_sweep(args):
    spec = get_activation(args.activation, _parse_kv(args.param))
    prof = _profile(args)
    z0 = complex(*[float(x) for x in args.z0.split(",")]) if args.z0 else 1.0
    box = _box_or_default(args, 1)
    grid = GridSpec(args.grid)
    builders = {
        "identity": lambda h: identity_block(spec, z0, h, prof),
        "conjugation": lambda h: conj_block(spec, z0, h, prof),
        "pair": lambda h: pair_block(spec, z0, h, prof),
        "square": lambda h: square_block(spec, z0, h, prof)[0],
        "mul": lambda h: mul_block(spec, z0, h, prof)[0],
    }
    if args.block not in builders:
        raise ValueError(f"unknown block {args.block!r}; known: {sorted(builders)}")
    rows = []
    for h in _schedule(args) if args.h else DEFAULT_H_SCHEDULE:
        blk = builders[args.block](h)
        if args.block == "square":
            which = square_block(spec, z0, h, prof)[1]
            target = {"zzbar": lambda zs: zs * np.conj(zs),
                      "z2": lambda zs: zs**2,
                      "zbar2": lambda zs: np.conj(zs) ** 2}[which]
        elif args.block == "mul":
            kind = mul_block(spec, z0, h, prof)[1]
            bibox = CompactBox(tuple(box.intervals) * 2)
            err = block_error(blk, spec,
                              lambda zs: verifier.TARGETS["z1zbar2"][0](zs)[:, None]
                              if kind == "mul2" else (
                                  (zs[:, 0] * zs[:, 1])[:, None] if kind == "mul1"
                                  else np.conj(zs[:, 0] * zs[:, 1])[:, None]),
                              bibox, grid)
            rows.append(verifier.SweepRow(h, err, blk.post_scale, 2, blk.width))
            continue
        else:
            target = _BLOCK_TARGETS[args.block]
        err = block_error(blk, spec, target, box, grid)
        rows.append(verifier.SweepRow(h, err, blk.post_scale, 2, blk.width))
    report = SweepReport(rows, {"block": args.block, "activation": spec.name,
                                "z0": repr(z0)})
    _write(args.out, report.to_csv(not args.no_timestamp))
    return 0


def _cmd_demo(args):
    name = args.name
    if name == "lower-bound":
        spec = get_activation("tanh_re")
        rep = verifier.kernel_invariance_demo(spec, args.n, seed=args.seed,
                                              mc_samples=args.mc_samples)
        doc = {
            "demo": name,
            "nullspace_found": rep.nullspace_found,
            "invariance_residual": rep.invariance_residual,
            "l1_estimate": None if rep.l1_estimate is None else
            {"value": rep.l1_estimate.value, "stderr": rep.l1_estimate.stderr},
            "l1_threshold": rep.l1_threshold,
            "passed": rep.passed,
            "note": rep.note,
        }
    elif name == "hyperplane-floor":
        rep = verifier.affine_subspace_floor_demo()
        doc = {"demo": name, "vertex_floor": rep.vertex_floor,
               "degenerate_floor": rep.degenerate_floor,
               "net_errors": rep.net_errors, "passed": rep.passed}
    elif name == "holo-floor":
        rep = verifier.holo_floor_demo()
        doc = {"demo": name, "floor": rep.floor, "passed": rep.passed,
               "attempts": len(rep.floor_errors),
               "note": "true sup-distance on the closed unit disk is 1; the finite "
                       "box grid only certifies the 0.5 level robustly"}
    elif name == "affine-closure":
        rep = verifier.affine_closure_demo()
        doc = {"demo": name, "affinity_residual": rep.affinity_residual,
               "passed": rep.passed}
    elif name == "nowhere-diff":
        rep = verifier.nowhere_diff_demo()
        doc = {"demo": name, "best": {"h": rep.best[0], "k": rep.best[1],
                                      "sup_error": rep.best[2]},
               "cells": [{"h": h, "k": k, "sup_error": e} for h, k, e in rep.rows],
               "passed": rep.passed}
    else:
        raise ValueError(f"unknown demo {name!r}")
    _write(args.out, _json_dump(doc, not args.no_timestamp))
    return 0


def _cmd_eval(args):
    with open(args.net) as fh:
        net = cvnn_from_json(fh.read())
    if args.at:
        pts = []
        for part in args.at.split("|"):
            pts.append([complex(*[float(x) for x in c.split(",")])
                        for c in part.split(";")])
        zs = np.asarray(pts, dtype=np.complex128)
    else:
        box = _box_or_default(args, net.input_dim)
        zs = sample_box(box, GridSpec(args.grid), args.seed)
    vals = eval_cvnn(net, zs)
    lines = []
    if not args.no_timestamp:
        lines.append(f"# generated={datetime.now(timezone.utc).isoformat()}")
    header = [f"z{i}_{p}" for i in range(net.input_dim) for p in ("re", "im")]
    header += [f"out{i}_{p}" for i in range(net.output_dim) for p in ("re", "im")]
    lines.append(",".join(header))
    for z, v in zip(zs, vals):
        row = []
        for c in z:
            row += [repr(float(c.real)), repr(float(c.imag))]
        for c in v:
            row += [repr(float(c.real)), repr(float(c.imag))]
        lines.append(",".join(row))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p, activation=True):
    if activation:
        p.add_argument("--activation", required=True)
        p.add_argument("--param", action="append", metavar="K=V")
    p.add_argument("--box", help="per coordinate 're_lo,re_hi;im_lo,im_hi', '|'-separated")
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--no-timestamp", action="store_true")
    p.add_argument("--zero-tol", type=float, default=None)
    p.add_argument("--fd-step", type=float, default=None)
    p.add_argument("--probe-box", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepnarrow",
        description="Classify complex activations, compile deep narrow "
                    "complex-valued networks, and verify them numerically.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="Wirtinger decision tree for one activation")
    _add_common(p)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--m", type=int, default=1)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("fit-shallow", help="random-feature ridge fit of a named target")
    _add_common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--features", type=int, default=200)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.set_defaults(fn=_cmd_fit_shallow)

    p = sub.add_parser("fit-poly", help="least-squares polynomial in z and conj(z)")
    _add_common(p, activation=False)
    p.add_argument("--target", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--degree", type=int, required=True)
    p.set_defaults(fn=_cmd_fit_poly)

    p = sub.add_parser("compile", help="end-to-end target -> narrow network")
    _add_common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--strategy", default="auto",
                   help="auto or one of " + ", ".join(STRATEGIES))
    p.add_argument("--h", default="auto")
    p.add_argument("--features", type=int, default=120)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.set_defaults(fn=_cmd_compile)

    p = sub.add_parser("lower", help="lower a serialized register program")
    _add_common(p)
    p.add_argument("--program", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--h", default="auto")
    p.set_defaults(fn=_cmd_lower)

    p = sub.add_parser("sweep", help="h-sweep one building block")
    _add_common(p)
    p.add_argument("--block", required=True,
                   help="identity | conjugation | pair | square | mul")
    p.add_argument("--z0", default=None, metavar="RE,IM")
    p.add_argument("--h", default=None)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("demo", help="necessity and robustness demos")
    _add_common(p, activation=False)
    p.add_argument("--name", required=True,
                   help="lower-bound | hyperplane-floor | holo-floor | "
                        "affine-closure | nowhere-diff")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.set_defaults(fn=_cmd_demo)

    p = sub.add_parser("eval", help="evaluate a serialized network")
    _add_common(p, activation=False)
    p.add_argument("--net", required=True)
    p.add_argument("--at", default=None,
                   help="points 're,im' (coords ';'-separated, points '|'-separated)")
    p.set_defaults(fn=_cmd_eval)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv):
    """Flat key=value file prefills defaults; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition("=")
            overrides[k.strip().replace("-", "_")] = v.strip()
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        keyed = {}
        for act in action._actions:  # noqa: SLF001
            if act.dest in overrides:
                raw = overrides[act.dest]
                if act.type is not None:
                    keyed[act.dest] = act.type(raw)
                elif isinstance(act.const, bool) or raw in ("true", "false"):
                    keyed[act.dest] = raw == "true"
                else:
                    keyed[act.dest] = raw
                act.required = False
        action.set_defaults(**keyed)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001
        for klass, (code, status) in _ERR_CODES:
            if isinstance(exc, klass):
                print(f"error[{code}] {exc}", file=sys.stderr)
                return status
        print(f"error[INTERNAL] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
