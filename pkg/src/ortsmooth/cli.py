"""Command-line front end.

Subcommands::

    ortsmooth synth          render a preset or spec file, add noise, write it
    ortsmooth denoise        grow the tree and smooth an image or tensor
    ortsmooth metrics        compare an estimate with the truth
    ortsmooth partition-map  write leaf ids as a 16-bit image
    ortsmooth bench          replications x noise levels x resolutions table

Every run writes a JSON manifest with the flags it was given and the values
resolved at run time (estimated sigma, r_n, min_leaf, ...). Passing that file
back with ``--manifest`` repeats the run; flags given on the command line
override the recorded ones.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .io import FormatError, read_field, write_field, write_image
from .lattice import LatticeError, LatticeField
from .metrics import UndefinedMetricError, d_kq, detect_edges, format_report, psnr, remse, rmse
from .smoother import SmootherConfig, denoise, estimate_sigma
from .synth import PRESETS, NoiseModel, add_noise, parse_spec, render
from .tree import TreeConfig, format_split_log, grow_tree, parse_split_log, partition_from_split_log

MANIFEST_VERSION = 1
MAX_LEAVES_DEFAULT = 4096
# flags that never change what a run computes
_NOT_RECORDED = {"manifest", "manifest_out", "func"}


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}; expected e.g. 100x100") from None
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"bad dims {text!r}; sides must be >= 1")
    return dims


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--manifest", metavar="PATH", help="replay a recorded manifest")
    p.add_argument("--manifest-out", metavar="PATH",
                   help="where to write this run's manifest (default: next to the output)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")


def _add_smoother(p: argparse.ArgumentParser):
    g = p.add_argument_group("smoother")
    g.add_argument("--estimator", choices=["leaf_mean", "local_weighted"], default="local_weighted")
    g.add_argument("--sigma", type=float, help="noise s.d. (default: estimated from the data)")
    g.add_argument("--r-n", type=float, help="split threshold (default: 1e-4 * sigma^2)")
    g.add_argument("--h-n", type=float, help="window half-width in domain units (default: 3/n)")
    g.add_argument("--kappa", type=float, default=5.0, help="similarity kernel sharpness")
    g.add_argument("--min-leaf", type=int, help="smallest admissible child (default: resolution-dependent)")
    g.add_argument("--max-leaves", type=int, default=MAX_LEAVES_DEFAULT)
    g.add_argument("--random-dirs", type=int, help="random directions per node (default: 64 in 2-D, 128 above)")
    g.add_argument("--refine-steps", type=int, default=20)
    g.add_argument("--seed", type=int, default=0, help="tree search seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ortsmooth", description="Oblique-tree jump-preserving smoothing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="render a synthetic surface and add noise")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--spec", metavar="FILE", help="region spec file")
    p.add_argument("--dims", type=_dims, help="grid size, e.g. 100x100")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("-o", "--output", help="noisy field (.pgm/.png image, anything else ORTF tensor)")
    p.add_argument("--truth", metavar="PATH", help="also write the noise-free field here")
    p.add_argument("--depth", type=int, choices=[8, 16], default=8)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("denoise", help="smooth an image or tensor")
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    p.add_argument("--depth", type=int, choices=[8, 16], default=8)
    p.add_argument("--partition-map", metavar="PATH", help="write leaf ids as a 16-bit image (2-D only)")
    p.add_argument("--split-log", metavar="PATH", help="write the accepted splits, one per line")
    _add_smoother(p)
    _add_common(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("metrics", help="compare an estimate with the truth")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("--remse", action="store_true", help="root summed squared error")
    p.add_argument("--rmse", action="store_true", help="root mean squared error per point")
    p.add_argument("--psnr", action="store_true")
    p.add_argument("--dkq", action="store_true", help="edge-set distance in pixels (2-D only)")
    p.add_argument("--edge-bandwidth", type=int, default=2)
    p.add_argument("-o", "--output", help="also write the results here")
    _add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("partition-map", help="write the leaf partition of an image as a 16-bit image")
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    p.add_argument("--from-split-log", metavar="PATH", help="replay a recorded split log instead of growing")
    _add_smoother(p)
    _add_common(p)
    p.set_defaults(func=cmd_partition_map)

    p = sub.add_parser("bench", help="replicated simulation study with mean and SE rows")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="triangle")
    src.add_argument("--spec", metavar="FILE")
    p.add_argument("--sizes", type=_int_list, default=[100], help="grid sides, e.g. 200,400")
    p.add_argument("--sigmas", type=_float_list, default=[0.1, 0.2, 0.3])
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--noise-seed", type=int, default=1, help="replication r uses noise seed noise_seed + r")
    p.add_argument("--delimiter", default="\t")
    p.add_argument("-o", "--output", help="report file (default: stdout only)")
    _add_smoother(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)
    return parser


# ---------------------------------------------------------------------------
# helpers


class UsageError(Exception):
    pass


def _require(args, *names):
    for name in names:
        val = getattr(args, name, None)
        if val is None or (isinstance(val, str) and not val):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _smoother_config(args) -> SmootherConfig:
    for name in ("sigma", "r_n", "h_n"):
        v = getattr(args, name)
        if v is not None and not v > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if args.max_leaves is not None and args.max_leaves < 1:
        raise UsageError("--max-leaves must be >= 1")
    try:
        tree = TreeConfig(
            n_random_dirs=args.random_dirs,
            refine_steps=args.refine_steps,
            max_leaves=args.max_leaves,
            seed=args.seed,
        )
        return SmootherConfig(
            r_n=args.r_n, h_n=args.h_n, kappa_n=args.kappa, sigma=args.sigma,
            estimator=args.estimator, min_leaf=args.min_leaf, tree=tree,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _resolved_record(cfg: SmootherConfig, field: LatticeField) -> dict:
    return {
        "dims": list(field.dims),
        "sigma": cfg.sigma,
        "r_n": cfg.r_n,
        "h_n": cfg.h_n,
        "kappa_n": cfg.kappa_n,
        "min_leaf": cfg.min_leaf,
        "max_leaves": cfg.tree.max_leaves,
        "random_dirs": cfg.tree.random_dirs_for(field.p),
        "refine_steps": cfg.tree.refine_steps,
        "seed": cfg.tree.seed,
        "estimator": cfg.estimator,
    }


def _spec_from(args):
    if getattr(args, "spec", None):
        return parse_spec(Path(args.spec).read_text())
    preset = getattr(args, "preset", None)
    if preset is None:
        raise UsageError("one of --preset or --spec is required")
    return PRESETS[preset]()


def _write_manifest(args, resolved: dict, default_path):
    path = args.manifest_out or default_path
    if path is None:
        return
    record = {
        "tool": "ortsmooth",
        "version": __version__,
        "manifest_version": MANIFEST_VERSION,
        "command": args.command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED},
        "resolved": resolved,
    }
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (tuple, np.ndarray)):
        return list(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot record {type(obj).__name__} in a manifest")


def _manifest_path(output) -> str | None:
    return None if output is None else str(output) + ".manifest.json"


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    _require(args, "output", "dims")
    spec = _spec_from(args)
    if spec.p is not None and spec.p != len(args.dims):
        raise UsageError(f"spec is {spec.p}-D but --dims has {len(args.dims)} sides")
    if not args.sigma >= 0:
        raise UsageError("--sigma must be non-negative")
    truth = render(spec, args.dims)
    noisy = add_noise(truth, NoiseModel(args.sigma, args.seed))
    write_field(noisy, args.output, args.depth)
    if args.truth:
        write_field(truth, args.truth, args.depth)
    resolved = {"dims": list(truth.dims)}
    if noisy.dims[0] >= 2:
        # measured before any export clipping
        resolved["sigma_hat"] = estimate_sigma(noisy)
        print(f"sigma_hat {resolved['sigma_hat']:.6g}")
    _write_manifest(args, resolved, _manifest_path(args.output))
    return 0


def cmd_denoise(args) -> int:
    _require(args, "input", "output")
    cfg = _smoother_config(args)
    field = read_field(args.input)
    cfg = cfg.resolve(field)
    t0 = time.perf_counter()
    est, part = denoise(field, cfg, threads=args.threads)
    elapsed = time.perf_counter() - t0
    write_field(est, args.output, args.depth)
    if args.partition_map:
        write_image(partition_image(part.leaf_id, field.dims), args.partition_map, depth=16)
    if args.split_log:
        Path(args.split_log).write_text(format_split_log(part.split_log))
    resolved = _resolved_record(cfg, field)
    resolved["leaves"] = part.leaf_count
    resolved["seconds"] = round(elapsed, 3)
    print(f"leaves {part.leaf_count}  sigma {cfg.sigma:.6g}  r_n {cfg.r_n:.6g}  min_leaf {cfg.min_leaf}")
    _write_manifest(args, resolved, _manifest_path(args.output))
    return 0


def partition_image(leaf_id: np.ndarray, dims) -> LatticeField:
    """Leaf ids modulo 65536, scaled so a 16-bit export stores the id itself."""
    if len(dims) != 2:
        raise LatticeError("partition maps are 2-D images")
    return LatticeField(tuple(dims), (np.asarray(leaf_id) % 65536) / 65535.0)


def cmd_partition_map(args) -> int:
    _require(args, "input", "output")
    base_cfg = _smoother_config(args)
    field = read_field(args.input)
    if field.p != 2:
        raise UsageError("partition maps need a 2-D input")
    resolved = {"dims": list(field.dims)}
    if args.from_split_log:
        records = parse_split_log(Path(args.from_split_log).read_text())
        node_of = partition_from_split_log(field, records)
        # number leaves by first member, as grow_tree does
        _, first, inverse = np.unique(node_of, return_index=True, return_inverse=True)
        leaf_id = np.argsort(np.argsort(first))[inverse]
        resolved["splits"] = len(records)
    else:
        cfg = base_cfg.resolve(field)
        leaf_id = grow_tree(field, cfg.tree, threads=args.threads).leaf_id
        resolved.update(_resolved_record(cfg, field))
    resolved["leaves"] = int(leaf_id.max()) + 1
    write_image(partition_image(leaf_id, field.dims), args.output, depth=16)
    print(f"leaves {resolved['leaves']}")
    _write_manifest(args, resolved, _manifest_path(args.output))
    return 0


def _format_value(v: float) -> str:
    if v == 0:
        return "0"
    return format(v, ".10g")


def cmd_metrics(args) -> int:
    est = read_field(args.estimate)
    truth = read_field(args.truth)
    if est.dims != truth.dims:
        raise LatticeError(f"dims differ: {est.dims} vs {truth.dims}")
    wanted = [m for m in ("remse", "rmse", "psnr", "dkq") if getattr(args, m)]
    if not wanted:
        wanted = ["remse", "rmse", "psnr"] + (["dkq"] if truth.p == 2 else [])
    results = {}
    for m in wanted:
        if m == "remse":
            results[m] = remse(est, truth)
        elif m == "rmse":
            results[m] = rmse(est, truth)
        elif m == "psnr":
            results[m] = psnr(est, truth)
        else:
            if truth.p != 2:
                raise UsageError("--dkq needs 2-D fields")
            results[m] = d_kq(detect_edges(est, args.edge_bandwidth),
                              detect_edges(truth, args.edge_bandwidth), scale=max(truth.dims))
    if len(wanted) == 1 and any(getattr(args, m) for m in wanted):
        text = _format_value(results[wanted[0]]) + "\n"
    else:
        text = "".join(f"{m}\t{_format_value(v)}\n" for m, v in results.items())
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    default = _manifest_path(args.output) or "ortsmooth-metrics.manifest.json"
    _write_manifest(args, {k: (None if math.isinf(v) else v) for k, v in results.items()}, default)
    return 0


def cmd_bench(args) -> int:
    if args.replications < 1:
        raise UsageError("--replications must be >= 1")
    if not args.sizes or any(n < 2 for n in args.sizes):
        raise UsageError("--sizes must list grid sides >= 2")
    if not args.sigmas or any(not s >= 0 for s in args.sigmas):
        raise UsageError("--sigmas must list non-negative values")
    spec = _spec_from(args)
    p = spec.p or 2
    base_cfg = _smoother_config(args)
    rows = []
    for n in args.sizes:
        dims = (n,) * p
        truth = render(spec, dims)
        truth_edges = detect_edges(truth) if p == 2 else None
        for sigma in args.sigmas:
            for r in range(args.replications):
                noisy = add_noise(truth, NoiseModel(sigma, args.noise_seed + r))
                t0 = time.perf_counter()
                est, part = denoise(noisy, base_cfg, threads=args.threads)
                row = {
                    "n": n, "sigma": sigma, "replication": r,
                    "remse": remse(est, truth),
                    "rmse_x1e3": 1e3 * rmse(est, truth),
                    "noisy_rmse_x1e3": 1e3 * rmse(noisy, truth),
                    "leaves": part.leaf_count,
                    "seconds": time.perf_counter() - t0,
                }
                if truth_edges is not None:
                    try:
                        row["dkq"] = d_kq(detect_edges(est), truth_edges, scale=n)
                    except UndefinedMetricError:
                        row["dkq"] = math.nan
                rows.append(row)
                print(f"n={n} sigma={sigma} rep={r} rmse_x1e3={row['rmse_x1e3']:.2f} "
                      f"leaves={row['leaves']} {row['seconds']:.1f}s", file=sys.stderr)
    columns = ["n", "sigma", "replication", "remse", "rmse_x1e3", "noisy_rmse_x1e3"]
    columns += (["dkq"] if p == 2 else []) + ["leaves", "seconds"]
    table = format_report(rows, columns, delimiter=args.delimiter, group_by=("n", "sigma"))
    sys.stdout.write(table)
    if args.output:
        Path(args.output).write_text(table)
    default = _manifest_path(args.output) or "ortsmooth-bench.manifest.json"
    _write_manifest(args, {"rows": len(rows)}, default)
    return 0


# ---------------------------------------------------------------------------


def _apply_manifest(parser, argv, args):
    try:
        record = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    if record.get("command") != args.command:
        raise UsageError(f"manifest is for '{record.get('command')}', not '{args.command}'")
    recorded = dict(record.get("args", {}))
    recorded.pop("command", None)
    if "dims" in recorded and recorded["dims"] is not None:
        recorded["dims"] = tuple(recorded["dims"])
    # recorded values become defaults so explicit flags still win
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**recorded)
    try:
        return parser.parse_args(argv)
    except SystemExit as exc:
        raise UsageError("invalid arguments after manifest replay") from exc


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.manifest:
            args = _apply_manifest(parser, argv, args)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ortsmooth {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, LatticeError, UndefinedMetricError, ValueError, OSError) as exc:
        print(f"ortsmooth {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
